"""Fixed-step classical Runge-Kutta propagation of the coupled (x, psi) system.

Events are localized inside a step: boundary contact by bisection on the
step fraction down to |g| < boundary_tol, target proximity by the vertex of
the parabola through the three samples bracketing a local minimum of the
distance to the target.

``rk4_step`` is the generic single-step method over arbitrary right-hand
sides; the arc integrators run the compiled kernels, which apply the same
tableau to the solver's own dynamics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .dynamics import ExtendedState
from .errors import NontrivialityError, NumericalFailureError, RegularityError
from .flows import FlowField
from .geometry import Vector3
from .surfaces import Surface, g_value

# |g| above this after a boundary step triggers projection back onto g = 0.
BOUNDARY_DRIFT_TOL = 1e-7


@dataclass(frozen=True, slots=True)
class IntegrationConfig:
    """Step size, horizon and event tolerances."""

    step: float = 1e-3
    t_max: float = 10.0
    boundary_tol: float = 1e-9
    target_tol: float = 1e-3

    def __post_init__(self):
        if not (self.step > 0 and self.t_max > 0 and self.boundary_tol > 0
                and self.target_tol > 0):
            raise ValueError("step, t_max and tolerances must be positive")
        if self.step > self.t_max:
            raise ValueError(f"step {self.step} exceeds horizon {self.t_max}")


class EventKind(enum.Enum):
    TARGET_REACHED = "target-reached"
    BOUNDARY_CONTACT = "boundary-contact"
    HORIZON_EXPIRED = "horizon-expired"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass(frozen=True, slots=True)
class TerminalEvent:
    kind: EventKind
    t: float
    x: Vector3 | None = None
    psi: Vector3 | None = None
    reason: str = ""


INTERIOR_PHASE = 0
BOUNDARY_PHASE = 1


@dataclass(frozen=True, slots=True)
class ArcResult:
    """Samples of one arc plus how it ended.

    ``samples`` columns: t, x1, x2, x3, psi1, psi2, psi3, mu.  Sample times
    are strictly increasing with spacing at most the configured step.
    """

    samples: np.ndarray
    phase: int
    terminal: TerminalEvent

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def t_first(self) -> float:
        return float(self.samples[0, 0])

    @property
    def t_last(self) -> float:
        return float(self.samples[-1, 0])

    def state_at(self, i: int) -> ExtendedState:
        row = self.samples[i]
        return ExtendedState(Vector3(row[1], row[2], row[3]),
                             Vector3(row[4], row[5], row[6]),
                             float(row[7]),
                             on_boundary=self.phase == BOUNDARY_PHASE)


RhsMap = Callable[[float, ExtendedState], tuple[Vector3, Vector3]]


def rk4_step(rhs: RhsMap, t: float, st: ExtendedState, h: float) -> ExtendedState:
    """One classical 4-stage Runge-Kutta update of (x, psi); mu and phase pass through.

    Raises:
        NumericalFailureError: if any stage produces non-finite values.
    """

    def shift(dx: Vector3, dpsi: Vector3, s: float) -> ExtendedState:
        return ExtendedState(
            Vector3(st.x.c1 + s * dx.c1, st.x.c2 + s * dx.c2, st.x.c3 + s * dx.c3),
            Vector3(st.psi.c1 + s * dpsi.c1, st.psi.c2 + s * dpsi.c2,
                    st.psi.c3 + s * dpsi.c3),
            st.mu, st.on_boundary)

    try:
        k1 = rhs(t, st)
        k2 = rhs(t + 0.5 * h, shift(k1[0], k1[1], 0.5 * h))
        k3 = rhs(t + 0.5 * h, shift(k2[0], k2[1], 0.5 * h))
        k4 = rhs(t + h, shift(k3[0], k3[1], h))
    except ValueError as exc:
        raise NumericalFailureError(f"stage evaluation failed: {exc}") from exc
    dx = Vector3(
        k1[0].c1 + 2.0 * (k2[0].c1 + k3[0].c1) + k4[0].c1,
        k1[0].c2 + 2.0 * (k2[0].c2 + k3[0].c2) + k4[0].c2,
        k1[0].c3 + 2.0 * (k2[0].c3 + k3[0].c3) + k4[0].c3,
    )
    dpsi = Vector3(
        k1[1].c1 + 2.0 * (k2[1].c1 + k3[1].c1) + k4[1].c1,
        k1[1].c2 + 2.0 * (k2[1].c2 + k3[1].c2) + k4[1].c2,
        k1[1].c3 + 2.0 * (k2[1].c3 + k3[1].c3) + k4[1].c3,
    )
    for v in (dx.c1, dx.c2, dx.c3, dpsi.c1, dpsi.c2, dpsi.c3):
        if not math.isfinite(v):
            raise NumericalFailureError("non-finite stage combination")
    return shift(dx, dpsi, h / 6.0)


def _buffer(t0: float, t_end: float, h: float) -> np.ndarray:
    n = int(math.ceil(max(t_end - t0, h) / h)) + 8
    return np.empty((n, 8), dtype=np.float64)


_STATUS_REASONS = {
    _kernels.STATUS_FAIL: "non-finite values",
    _kernels.STATUS_NONTRIVIAL: "nontriviality floor reached",
    _kernels.STATUS_OUTWARD: "departed the boundary outward",
}


def _interior_terminal(status: int, t_ev: float, state) -> TerminalEvent:
    if status == _kernels.STATUS_HIT:
        return TerminalEvent(EventKind.TARGET_REACHED, t_ev)
    if status == _kernels.STATUS_CONTACT:
        return TerminalEvent(EventKind.BOUNDARY_CONTACT, t_ev,
                             Vector3(state[0], state[1], state[2]),
                             Vector3(state[3], state[4], state[5]))
    if status == _kernels.STATUS_HORIZON:
        return TerminalEvent(EventKind.HORIZON_EXPIRED, t_ev)
    return TerminalEvent(EventKind.NUMERICAL_FAILURE, t_ev,
                         reason=_STATUS_REASONS.get(status, f"status {status}"))


def integrate_interior(s: Surface, f: FlowField, st0: ExtendedState,
                       cfg: IntegrationConfig, target: Vector3,
                       t0: float = 0.0, from_boundary: bool = False) -> ArcResult:
    """Interior-phase arc with frozen mu, from t0 until an event or the horizon.

    Stops on the first of: boundary contact (g sign change, bisected to
    |g| < boundary_tol), target proximity (local minimum of |x - target|
    below target_tol, refined by parabolic interpolation), t >= t_max.
    NumericalFailure outcomes are recorded on the result, not raised.
    """
    if not from_boundary and g_value(s, st0.x) >= 0.0:
        raise ValueError("interior integration requires a strictly interior start")
    engine = _kernels.get_engine(f)
    buf = _buffer(t0, cfg.t_max, cfg.step)
    res = engine.interior_core(
        int(s.kind), s.major_radius,
        st0.x.c1, st0.x.c2, st0.x.c3, st0.psi.c1, st0.psi.c2, st0.psi.c3,
        st0.mu, t0, cfg.step, cfg.t_max,
        target.c1, target.c2, target.c3, cfg.target_tol, cfg.boundary_tol,
        from_boundary, True, buf,
    )
    status, n_stored, t_ev = res[0], res[1], res[2]
    return ArcResult(buf[:n_stored].copy(), INTERIOR_PHASE,
                     _interior_terminal(status, t_ev, res[3:9]))


def integrate_boundary(s: Surface, f: FlowField, st0: ExtendedState,
                       cfg: IntegrationConfig, target: Vector3,
                       t0: float = 0.0) -> ArcResult:
    """Boundary-phase arc; mu is recomputed at every stage from the closed form.

    After each step the position is projected back onto g = 0 whenever |g|
    drifts above BOUNDARY_DRIFT_TOL.  Ends at the horizon (or at the target
    if the target lies on the boundary).

    Raises:
        RegularityError: |<grad g, v>| reached |grad g| along the arc.
        NontrivialityError: the control direction collapsed.
    """
    g0 = g_value(s, st0.x)
    if abs(g0) > 1e-6:
        raise ValueError(f"boundary integration requires |g(x0)| <= 1e-6, got {g0:.3e}")
    engine = _kernels.get_engine(f)
    buf = _buffer(t0, cfg.t_max, cfg.step)
    status, n_stored, t_ev = engine.boundary_record(
        int(s.kind), s.major_radius,
        st0.x.c1, st0.x.c2, st0.x.c3, st0.psi.c1, st0.psi.c2, st0.psi.c3,
        t0, cfg.step, cfg.t_max,
        target.c1, target.c2, target.c3, cfg.target_tol, BOUNDARY_DRIFT_TOL, buf,
    )
    if status == _kernels.STATUS_REGULARITY:
        raise RegularityError(f"regularity lost on boundary arc at t = {t_ev:.6f}")
    if status == _kernels.STATUS_NONTRIVIAL:
        raise NontrivialityError(f"nontriviality lost on boundary arc at t = {t_ev:.6f}")
    if status == _kernels.STATUS_HIT:
        terminal = TerminalEvent(EventKind.TARGET_REACHED, t_ev)
    elif status == _kernels.STATUS_HORIZON:
        terminal = TerminalEvent(EventKind.HORIZON_EXPIRED, t_ev)
    else:
        terminal = TerminalEvent(EventKind.NUMERICAL_FAILURE, t_ev,
                                 reason=_STATUS_REASONS.get(status, f"status {status}"))
    return ArcResult(buf[:n_stored].copy(), BOUNDARY_PHASE, terminal)
