"""Scenario admission checks and post-hoc verification of computed extremals.

Everything here is observational: margins are estimated by deterministic
sampling, and extremal checks recompute the maximum-principle quantities
from stored samples without touching solver state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .dynamics import ExtendedState, hamiltonian_level
from .errors import MalformedExtremalError
from .flows import FlowField
from .geometry import Vector3, norm
from .surfaces import (Surface, boundary_samples, g_gradient, g_value,
                       interior_samples)

if TYPE_CHECKING:
    from .config import Scenario
    from .shooting import Extremal

# Arc joins are declared malformed above this discontinuity.
JOIN_TOL = 1e-6


def check_regularity(s: Surface, f: FlowField, n_samples: int,
                     x3_range: tuple[float, float] = (-1.0, 1.0)) -> float:
    """Minimum of 2 - |<grad g, v>| over a quasi-uniform boundary sample.

    Positive means the flow respects the regularity condition at every
    sampled boundary point (|grad g| = 2 on all three surfaces); negative
    reports a violation.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 boundary samples")
    margin = math.inf
    for x in boundary_samples(s, n_samples, x3_range):
        grad = g_gradient(s, x)
        v = f.evaluator(x)
        coupling = abs(grad.c1 * v.c1 + grad.c2 * v.c2 + grad.c3 * v.c3)
        margin = min(margin, 2.0 - coupling)
    return margin


@dataclass(frozen=True)
class FeasibilityReport:
    """Interior speed margin and endpoint admission flags."""

    speed_margin: float     # min over interior samples of 1 - |v|
    sup_speed: float        # max sampled |v|
    a_feasible: bool        # g(A) <= 0
    b_feasible: bool

    @property
    def ok(self) -> bool:
        return self.a_feasible and self.b_feasible and self.speed_margin > 0.0

    def to_dict(self) -> dict:
        return {
            "speed_margin": self.speed_margin,
            "sup_speed": self.sup_speed,
            "a_feasible": self.a_feasible,
            "b_feasible": self.b_feasible,
        }


def check_feasibility(s: Surface, f: FlowField, a: Vector3, b: Vector3,
                      n_samples: int = 2000,
                      x3_range: tuple[float, float] = (-1.0, 1.0)) -> FeasibilityReport:
    """Sample-based check of the solution-existence hypotheses.

    A negative speed margin (|v| >= 1 somewhere inside) is reported, not
    fatal: the hypothesis is sufficient, not necessary, and scenarios with
    locally fast flows can still be solvable.  Connectivity of A and B is
    not checked.
    """
    sup = 0.0
    for x in interior_samples(s, n_samples, x3_range=x3_range):
        sup = max(sup, norm(f.evaluator(x)))
    return FeasibilityReport(
        speed_margin=1.0 - sup,
        sup_speed=sup,
        a_feasible=g_value(s, a) <= 0.0,
        b_feasible=g_value(s, b) <= 0.0,
    )


@dataclass(frozen=True)
class ExtremalCheck:
    """Residuals of the maximum-principle conditions along one extremal."""

    total_time: float
    classification: str
    hamiltonian_mean: float
    hamiltonian_drift: float
    control_norm_max_dev: float   # max | |u| - 1 |
    control_max_dev: float        # vs stored control samples (0 when none given)
    nontriviality_min: float
    mu_interior_max_dev: float    # deviation from constancy on interior arcs
    mu_junction_jumps: tuple[float, ...]
    mu_monotone_on_boundary: bool
    g_max: float                  # max g over all samples
    endpoint_miss: float

    def to_dict(self) -> dict:
        return {
            "total_time": self.total_time,
            "classification": self.classification,
            "hamiltonian_mean": self.hamiltonian_mean,
            "hamiltonian_drift": self.hamiltonian_drift,
            "control_norm_max_dev": self.control_norm_max_dev,
            "control_max_dev": self.control_max_dev,
            "nontriviality_min": self.nontriviality_min,
            "mu_interior_max_dev": self.mu_interior_max_dev,
            "mu_junction_jumps": list(self.mu_junction_jumps),
            "mu_monotone_on_boundary": self.mu_monotone_on_boundary,
            "g_max": self.g_max,
            "endpoint_miss": self.endpoint_miss,
        }


@dataclass(frozen=True)
class DiagnosticsReport:
    """Scenario margins plus per-extremal condition residuals."""

    regularity_margin: float
    feasibility: FeasibilityReport
    extremal_checks: tuple[ExtremalCheck, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "regularity_margin": self.regularity_margin,
            "feasibility": self.feasibility.to_dict(),
            "extremals": [c.to_dict() for c in self.extremal_checks],
        }


def control_samples(s: Surface, samples: np.ndarray) -> np.ndarray:
    """Recompute the control at every sample row from (x, psi, mu)."""
    n_rows = samples.shape[0]
    u = np.empty((n_rows, 3))
    for k in range(n_rows):
        x = Vector3(samples[k, 1], samples[k, 2], samples[k, 3])
        grad = g_gradient(s, x)
        mu = samples[k, 7]
        n1 = samples[k, 4] - mu * grad.c1
        n2 = samples[k, 5] - mu * grad.c2
        n3 = samples[k, 6] - mu * grad.c3
        nn = math.sqrt(n1 * n1 + n2 * n2 + n3 * n3)
        if nn < 1e-300:
            nn = 1e-300  # degenerate row; nontriviality_min reports it
        u[k, 0] = n1 / nn
        u[k, 1] = n2 / nn
        u[k, 2] = n3 / nn
    return u


def verify_extremal(scenario: "Scenario", e: "Extremal",
                    stored_u: np.ndarray | None = None) -> ExtremalCheck:
    """Recompute the maximum-principle quantities along a stored extremal.

    Raises:
        MalformedExtremalError: arcs are not time-contiguous or the state
            jumps across an arc join.
    """
    s, f = scenario.surface, scenario.flow
    _check_contiguity(e)
    samples, phases = e.all_samples()
    n_rows = samples.shape[0]

    levels = np.empty(n_rows)
    nontriv = np.empty(n_rows)
    u = control_samples(s, samples)
    for k in range(n_rows):
        st = ExtendedState(Vector3(samples[k, 1], samples[k, 2], samples[k, 3]),
                           Vector3(samples[k, 4], samples[k, 5], samples[k, 6]),
                           float(samples[k, 7]))
        levels[k] = hamiltonian_level(s, f, st)
        grad = g_gradient(s, st.x)
        nontriv[k] = math.sqrt((st.psi.c1 - st.mu * grad.c1) ** 2
                               + (st.psi.c2 - st.mu * grad.c2) ** 2
                               + (st.psi.c3 - st.mu * grad.c3) ** 2)
    h_mean = float(np.mean(levels))
    h_drift = float(np.max(np.abs(levels - h_mean)))
    u_norm_dev = float(np.max(np.abs(np.sqrt((u * u).sum(axis=1)) - 1.0)))
    u_dev = 0.0
    if stored_u is not None:
        u_dev = float(np.max(np.abs(u - stored_u)))

    mu_dev = 0.0
    jumps: list[float] = []
    monotone = True
    prev_arc = None
    for arc in e.arcs:
        mu_col = arc.samples[:, 7]
        if arc.phase == 0 and mu_col.size:
            mu_dev = max(mu_dev, float(np.max(np.abs(mu_col - mu_col[0]))))
        if arc.phase == 1 and mu_col.size > 1:
            if np.any(np.diff(mu_col) > 1e-9):
                monotone = False
        if prev_arc is not None:
            jumps.append(abs(float(arc.samples[0, 7]) - float(prev_arc.samples[-1, 7])))
        prev_arc = arc

    g_max = -math.inf
    for k in range(n_rows):
        g_max = max(g_max, g_value(s, Vector3(samples[k, 1], samples[k, 2],
                                              samples[k, 3])))
    last = samples[-1]
    miss = math.dist((last[1], last[2], last[3]), scenario.b.as_tuple())
    return ExtremalCheck(
        total_time=float(last[0]),
        classification=e.classification,
        hamiltonian_mean=h_mean,
        hamiltonian_drift=h_drift,
        control_norm_max_dev=u_norm_dev,
        control_max_dev=u_dev,
        nontriviality_min=float(np.min(nontriv)),
        mu_interior_max_dev=mu_dev,
        mu_junction_jumps=tuple(jumps),
        mu_monotone_on_boundary=monotone,
        g_max=float(g_max),
        endpoint_miss=miss,
    )


def _check_contiguity(e: "Extremal") -> None:
    for arc in e.arcs:
        t = arc.samples[:, 0]
        if t.size > 1 and np.any(np.diff(t) <= 0.0):
            raise MalformedExtremalError("sample times are not strictly increasing")
    for prev, nxt in zip(e.arcs, e.arcs[1:]):
        dt = abs(nxt.samples[0, 0] - prev.samples[-1, 0])
        dx = float(np.max(np.abs(nxt.samples[0, 1:7] - prev.samples[-1, 1:7])))
        if dt > JOIN_TOL or dx > JOIN_TOL:
            raise MalformedExtremalError(
                f"arc join discontinuity: dt = {dt:.3e}, dstate = {dx:.3e}")


def scenario_report(scenario: "Scenario",
                    extremals: tuple = (),
                    n_samples: int = 2000) -> DiagnosticsReport:
    """Admission margins plus checks of any provided extremals."""
    window = scenario.x3_window()
    margin = check_regularity(scenario.surface, scenario.flow,
                              max(1000, n_samples // 2), window)
    feas = check_feasibility(scenario.surface, scenario.flow,
                             scenario.a, scenario.b, n_samples, window)
    checks = tuple(verify_extremal(scenario, e) for e in extremals)
    return DiagnosticsReport(margin, feas, checks)
