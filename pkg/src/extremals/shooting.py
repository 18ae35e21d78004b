"""Two-angle shooting search for the field of extremals.

The initial adjoint direction psi(0) lives on the unit sphere, parameterized
by theta in [0, pi] and phi in [0, 2 pi).  The search proceeds in stages:

1. scan: integrate every node of a coarse angular grid to its outcome
   (closest approach to B, or boundary contact with the multiplier formula
   value at contact);
2. interior extremals: refine local minima of the miss distance by
   alternating interval-halving sweeps in theta and phi;
3. junctions: along grid edges where the contact character changes, shrink
   onto trajectories that meet the boundary with |mu| below the junction
   tolerance (continuity of the multiplier);
4. boundary extremals: follow the boundary from each junction, spawn an
   interior continuation at boundary samples (frozen mu), and keep the
   departures that reach B; the junction set along the grazing fold is
   refined until a departure family meets the target tolerance.

All stages are deterministic: fixed iteration orders, no randomness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .config import Scenario
from .dynamics import ExtendedState
from .errors import (EmptyFieldError, NoConvergenceError, NontrivialityError,
                     RegularityError)
from .geometry import Vector3
from .integration import (ArcResult, BOUNDARY_PHASE, EventKind,
                          INTERIOR_PHASE, IntegrationConfig, TerminalEvent,
                          integrate_boundary, integrate_interior)

# Angular bracket below which a refinement is declared exhausted.
BRACKET_FLOOR = 1e-12
# Hard cap on alternating refinement cycles (halving 0.1 rad to the floor
# needs ~37; the rest absorbs sliding moves).
MAX_CYCLES = 120
# Duplicate threshold on (theta, phi, T).
DEDUP_TOL = 1e-6
# Largest number of junction points carried into the departure stage.
MAX_JUNCTIONS = 48
# Coarse stride target for departure scans during the search phase; the
# final trace of an accepted extremal always uses stride 1.
SEARCH_DEPART_SAMPLES = 256
# Caps on the fold-tracing stage: basin seeds attempted and basins traced.
MAX_FOLD_SEEDS = 16
MAX_BASINS = 8
# Half-width of the departure-time window a fold trace stays locked to.
BASIN_WINDOW = 0.35
# Two boundary extremals whose (T, entry, departure) all agree this closely
# are the same basin found twice; the search granularity cannot split them.
BASIN_MERGE_TOL = 5e-3
# Step divisor for the fine phase of junction localization.  Near a grazing
# contact the multiplier formula value resolves no finer than ~|d2g/dt2| h/4,
# so the base step can leave the junction-continuity floor above tolerance.
JUNCTION_STEP_DIV = 8.0


def psi_from_angles(theta: float, phi: float) -> Vector3:
    return Vector3(math.sin(theta) * math.cos(phi),
                   math.sin(theta) * math.sin(phi),
                   math.cos(theta))


@dataclass(frozen=True, slots=True)
class ContactRecord:
    """State at a localized boundary contact, with the multiplier formula value."""

    t: float
    x: Vector3
    psi: Vector3
    mu_value: float


@dataclass(frozen=True, slots=True)
class ShootingPoint:
    """One probed initial adjoint direction and its outcome."""

    theta: float
    phi: float
    psi0: Vector3
    miss: float
    t_at_miss: float
    status: str  # 'hit', 'contact', 'horizon', 'failed'
    contact: ContactRecord | None = None


@dataclass(frozen=True, slots=True)
class Junction:
    """Entry point of a boundary arc: |mu at contact| below the junction tolerance.

    ``fine`` records whether the entry trajectory was localized with the
    reduced junction step; the assembled extremal replays it identically.
    """

    theta: float
    phi: float
    contact: ContactRecord
    fine: bool = False


@dataclass(frozen=True)
class Extremal:
    """A complete candidate trajectory satisfying the terminal condition."""

    arcs: tuple[ArcResult, ...]
    theta: float
    phi: float
    total_time: float
    junction_times: tuple[tuple[float, float], ...]
    classification: str  # 'interior-only' | 'with-boundary-segment'
    final_miss: float

    def all_samples(self) -> tuple[np.ndarray, np.ndarray]:
        """Concatenated (n, 8) sample array and per-sample phase flags."""
        blocks = [a.samples for a in self.arcs]
        phases = [np.full(a.samples.shape[0], a.phase, dtype=np.int64)
                  for a in self.arcs]
        return np.vstack(blocks), np.concatenate(phases)

    @property
    def final_state(self) -> ExtendedState:
        return self.arcs[-1].state_at(self.arcs[-1].n_samples - 1)


@dataclass(frozen=True)
class ExtremalField:
    """All extremals found for one scenario, sorted by travel time."""

    extremals: tuple[Extremal, ...]
    scan_count: int = 0

    @property
    def optimal(self) -> Extremal:
        return self.extremals[0]

    @property
    def optimal_index(self) -> int:
        return 0


# --- probing -----------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class _Outcome:
    status: int
    miss: float
    t_at_miss: float
    t_event: float
    state: tuple[float, float, float, float, float, float]
    contact_mu: float  # nan when not a contact


class _Prober:
    """Single-trajectory probes of the (theta, phi) outcome map."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.engine = _kernels.get_engine(scenario.flow)
        self._dummy = np.empty((1, 8), dtype=np.float64)
        self._cache: dict[tuple, _Outcome] = {}

    def run(self, theta: float, phi: float, fine: bool = False,
            t_cap: float | None = None) -> _Outcome:
        key = (theta, phi, fine, t_cap)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        sc = self.sc
        step = sc.numerics.step / JUNCTION_STEP_DIV if fine else sc.numerics.step
        horizon = sc.numerics.t_max if t_cap is None else min(t_cap, sc.numerics.t_max)
        st = math.sin(theta)
        res = self.engine.interior_core(
            int(sc.surface.kind), sc.surface.major_radius,
            sc.a.c1, sc.a.c2, sc.a.c3,
            st * math.cos(phi), st * math.sin(phi), math.cos(theta),
            0.0, 0.0, step, horizon,
            sc.b.c1, sc.b.c2, sc.b.c3,
            sc.numerics.target_tol, sc.numerics.boundary_tol,
            False, False, self._dummy,
        )
        status = int(res[0])
        state = (res[3], res[4], res[5], res[6], res[7], res[8])
        mu = math.nan
        if status == _kernels.STATUS_CONTACT:
            v = self.sc.flow._scalar_v(state[0], state[1], state[2])
            m, _q, ok = _kernels.mu_on_boundary(
                int(sc.surface.kind), sc.surface.major_radius,
                state[0], state[1], state[2], state[3], state[4], state[5],
                v[0], v[1], v[2])
            mu = m if ok else math.inf
        out = _Outcome(status, float(res[9]), float(res[10]), float(res[2]), state, mu)
        self._cache[key] = out
        return out


_STATUS_NAMES = {
    _kernels.STATUS_HORIZON: "horizon",
    _kernels.STATUS_HIT: "hit",
    _kernels.STATUS_CONTACT: "contact",
}


def _grid_angles(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    n_t, n_p = scenario.grid_theta, scenario.grid_phi
    thetas = (np.arange(n_t) + 0.5) * math.pi / n_t
    phis = np.arange(n_p) * 2.0 * math.pi / n_p
    return thetas, phis


@dataclass(frozen=True)
class _ScanArrays:
    thetas: np.ndarray
    phis: np.ndarray
    miss: np.ndarray        # (n_t, n_p)
    t_at_miss: np.ndarray
    status: np.ndarray
    ev_t: np.ndarray
    ev_state: np.ndarray    # (n_t, n_p, 6)
    contact_mu: np.ndarray


def _scan(scenario: Scenario) -> _ScanArrays:
    engine = _kernels.get_engine(scenario.flow)
    thetas, phis = _grid_angles(scenario)
    total = thetas.size * phis.size
    miss = np.empty(total)
    t_at = np.empty(total)
    status = np.empty(total, dtype=np.int64)
    ev_t = np.empty(total)
    ev_state = np.empty((total, 6))
    contact_mu = np.empty(total)
    sc = scenario
    engine.scan_grid(
        int(sc.surface.kind), sc.surface.major_radius,
        sc.a.c1, sc.a.c2, sc.a.c3, thetas, phis,
        sc.numerics.step, sc.numerics.t_max,
        sc.b.c1, sc.b.c2, sc.b.c3,
        sc.numerics.target_tol, sc.numerics.boundary_tol,
        miss, t_at, status, ev_t, ev_state, contact_mu,
    )
    shape = (thetas.size, phis.size)
    return _ScanArrays(thetas, phis,
                       miss.reshape(shape), t_at.reshape(shape),
                       status.reshape(shape), ev_t.reshape(shape),
                       ev_state.reshape(shape + (6,)), contact_mu.reshape(shape))


def _point_from_arrays(arrays: _ScanArrays, i: int, j: int) -> ShootingPoint:
    theta = float(arrays.thetas[i])
    phi = float(arrays.phis[j])
    status = int(arrays.status[i, j])
    contact = None
    if status == _kernels.STATUS_CONTACT:
        st = arrays.ev_state[i, j]
        contact = ContactRecord(float(arrays.ev_t[i, j]),
                                Vector3(st[0], st[1], st[2]),
                                Vector3(st[3], st[4], st[5]),
                                float(arrays.contact_mu[i, j]))
    return ShootingPoint(theta, phi, psi_from_angles(theta, phi),
                         float(arrays.miss[i, j]), float(arrays.t_at_miss[i, j]),
                         _STATUS_NAMES.get(status, "failed"), contact)


def scan_interior(scenario: Scenario) -> list[ShootingPoint]:
    """Integrate every grid node to its outcome; sorted by miss distance."""
    arrays = _scan(scenario)
    points = [_point_from_arrays(arrays, i, j)
              for i in range(arrays.thetas.size)
              for j in range(arrays.phis.size)]
    points.sort(key=lambda p: (p.miss, p.theta, p.phi))
    return points


# --- interior refinement -------------------------------------------------------

def _probe_miss(prober: _Prober, theta: float, phi: float) -> float:
    theta = min(max(theta, 0.0), math.pi)
    out = prober.run(theta, phi % (2.0 * math.pi))
    if out.status in (_kernels.STATUS_FAIL, _kernels.STATUS_NONTRIVIAL):
        return math.inf
    return out.miss


def refine_hit(scenario: Scenario, seed: ShootingPoint) -> Extremal:
    """Shrink onto a local minimum of the miss distance; build the extremal.

    Alternating interval-halving sweeps in theta and phi; the search runs to
    bracket exhaustion so that every seed of one basin lands on the same
    minimizer, then succeeds iff the best miss is below the target tolerance.

    Raises:
        NoConvergenceError: bracket exhausted above the target tolerance.
    """
    prober = _Prober(scenario)
    w_theta = math.pi / scenario.grid_theta
    w_phi = 2.0 * math.pi / scenario.grid_phi
    c_theta, c_phi = seed.theta, seed.phi
    f_c = _probe_miss(prober, c_theta, c_phi)
    best = (f_c, c_theta, c_phi)
    for _ in range(MAX_CYCLES):
        if max(w_theta, w_phi) < BRACKET_FLOOR:
            break
        for axis in (0, 1):
            w = w_theta if axis == 0 else w_phi
            if axis == 0:
                lo = (c_theta - 0.5 * w, c_phi)
                hi = (c_theta + 0.5 * w, c_phi)
            else:
                lo = (c_theta, c_phi - 0.5 * w)
                hi = (c_theta, c_phi + 0.5 * w)
            f_lo = _probe_miss(prober, *lo)
            f_hi = _probe_miss(prober, *hi)
            for f, (t, p) in ((f_lo, lo), (f_hi, hi)):
                if f < best[0]:
                    best = (f, min(max(t, 0.0), math.pi), p % (2.0 * math.pi))
            if f_c <= f_lo and f_c <= f_hi:
                if axis == 0:
                    w_theta *= 0.5
                else:
                    w_phi *= 0.5
            elif f_lo < f_hi:
                c_theta, c_phi = lo
                c_theta = min(max(c_theta, 0.0), math.pi)
                c_phi %= 2.0 * math.pi
                f_c = f_lo
            else:
                c_theta, c_phi = hi
                c_theta = min(max(c_theta, 0.0), math.pi)
                c_phi %= 2.0 * math.pi
                f_c = f_hi
    if not best[0] < scenario.numerics.target_tol:
        raise NoConvergenceError(
            f"miss {best[0]:.3e} above tolerance after bracket exhaustion")
    return _build_interior_extremal(scenario, best[1], best[2])


def _build_interior_extremal(scenario: Scenario, theta: float, phi: float) -> Extremal:
    arc = integrate_interior(scenario.surface, scenario.flow,
                             ExtendedState(scenario.a, psi_from_angles(theta, phi)),
                             scenario.numerics, scenario.b)
    if arc.terminal.kind != EventKind.TARGET_REACHED:
        raise NoConvergenceError(
            f"refined aim did not reproduce a target hit ({arc.terminal.kind.value})")
    last = arc.samples[-1]
    miss = math.dist((last[1], last[2], last[3]), scenario.b.as_tuple())
    return Extremal(arcs=(arc,), theta=theta, phi=phi,
                    total_time=arc.terminal.t, junction_times=(),
                    classification="interior-only", final_miss=miss)


# --- junction refinement --------------------------------------------------------

def _segment_mu(prober: _Prober, a: tuple[float, float], b: tuple[float, float],
                s: float, fine: bool = False, t_cap: float | None = None,
                ) -> tuple[float, _Outcome]:
    theta = a[0] + s * (b[0] - a[0])
    phi = a[1] + s * (b[1] - a[1])
    out = prober.run(min(max(theta, 0.0), math.pi), phi % (2.0 * math.pi),
                     fine, t_cap)
    if out.status != _kernels.STATUS_CONTACT or not math.isfinite(out.contact_mu):
        return math.inf, out
    return abs(out.contact_mu), out


def _mu_halving(prober: _Prober, a: tuple[float, float], b: tuple[float, float],
                n_sweep: int, tol: float, fine: bool, t_cap: float | None,
                ) -> tuple[float, float, _Outcome, tuple[float, float]]:
    """Interval halving of |mu at contact| along the segment a-b.

    Returns (best |mu|, best s, outcome at best, final bracket).  Non-contact
    probes count as +inf, which drives the search onto the grazing fold from
    the contact side; the initial sweep density resolves segments crossing
    several folds.
    """
    sweep = np.linspace(0.0, 1.0, max(3, n_sweep))
    svals = []
    souts = []
    for s in sweep:
        m, out = _segment_mu(prober, a, b, float(s), fine, t_cap)
        svals.append(m)
        souts.append(out)
    k = int(np.argmin(svals))
    lo = max(0, k - 1)
    hi = min(len(sweep) - 1, k + 1)
    if hi - lo < 2:
        lo = max(0, hi - 2)
        hi = min(len(sweep) - 1, lo + 2)
    pts = [float(sweep[lo]), float(sweep[(lo + hi) // 2]), float(sweep[hi])]
    vals = [svals[lo], svals[(lo + hi) // 2], svals[hi]]
    outs = [souts[lo], souts[(lo + hi) // 2], souts[hi]]
    for _ in range(80):
        k = int(np.argmin(vals))
        if vals[k] < tol or pts[2] - pts[0] < 1e-14:
            return vals[k], pts[k], outs[k], (pts[0], pts[2])
        if all(math.isinf(v) for v in vals):
            return math.inf, pts[1], outs[1], (pts[0], pts[2])
        grid = [pts[0], 0.5 * (pts[0] + pts[1]), pts[1],
                0.5 * (pts[1] + pts[2]), pts[2]]
        gvals = [vals[0], math.inf, vals[1], math.inf, vals[2]]
        gouts = [outs[0], outs[1], outs[1], outs[1], outs[2]]
        for idx in (1, 3):
            m, out = _segment_mu(prober, a, b, grid[idx], fine, t_cap)
            gvals[idx] = m
            gouts[idx] = out
        k = int(np.argmin(gvals))
        lo = max(0, k - 1)
        hi = min(4, k + 1)
        if hi - lo < 2:
            lo = max(0, hi - 2)
            hi = min(4, lo + 2)
        pts = [grid[lo], grid[(lo + hi) // 2], grid[hi]]
        vals = [gvals[lo], gvals[(lo + hi) // 2], gvals[hi]]
        outs = [gouts[lo], gouts[(lo + hi) // 2], gouts[hi]]
    k = int(np.argmin(vals))
    return vals[k], pts[k], outs[k], (pts[0], pts[2])


def _refine_junction_segment(scenario: Scenario, prober: _Prober,
                             a: tuple[float, float], b: tuple[float, float],
                             n_sweep: int = 3) -> Junction | None:
    """Shrink |mu at contact| to the junction tolerance along the segment a-b.

    Two phases: interval halving at the scenario step localizes the grazing
    fold; if the multiplier bottoms out above tolerance there, a second pass
    around the fold re-probes with the step divided by JUNCTION_STEP_DIV and
    the horizon capped past the observed contact time.
    """
    tol = scenario.junction_tol
    best, s_best, out, bracket = _mu_halving(prober, a, b, n_sweep, tol,
                                             False, None)
    fine = False
    if not best < tol:
        if not best < 64.0 * tol or not math.isfinite(out.t_event):
            return None
        t_cap = min(scenario.numerics.t_max, 2.0 * out.t_event + 0.5)
        # The fine-step fold sits a graze-detection offset away from the
        # coarse one; re-probe a small surrounding stretch, not the
        # exhausted bracket.
        width = max(4.0 * (bracket[1] - bracket[0]), 0.02)
        lo = max(0.0, s_best - width)
        hi = min(1.0, s_best + width)
        aa = (a[0] + lo * (b[0] - a[0]), a[1] + lo * (b[1] - a[1]))
        bb = (a[0] + hi * (b[0] - a[0]), a[1] + hi * (b[1] - a[1]))
        best, s_best, out, bracket = _mu_halving(prober, aa, bb, 9, tol,
                                                 True, t_cap)
        if not best < tol:
            return None
        a, b = aa, bb
        fine = True
    theta = a[0] + s_best * (b[0] - a[0])
    phi = (a[1] + s_best * (b[1] - a[1])) % (2.0 * math.pi)
    contact = ContactRecord(out.t_event,
                            Vector3(*out.state[:3]), Vector3(*out.state[3:]),
                            out.contact_mu)
    return Junction(min(max(theta, 0.0), math.pi), phi, contact, fine)


def refine_junction(scenario: Scenario, seed: ShootingPoint) -> Junction:
    """Refine a boundary-contact seed to a junction with |mu| below tolerance.

    Tries the four angular directions around the seed; the refinement
    segment must reach across the grazing fold (a non-contact neighbor, a
    contact-time jump, or a sign change of mu).

    Raises:
        NoConvergenceError: no direction produced a junction.
    """
    if seed.contact is None:
        raise NoConvergenceError("seed has no boundary contact")
    if abs(seed.contact.mu_value) < scenario.junction_tol:
        return Junction(seed.theta, seed.phi, seed.contact)
    prober = _Prober(scenario)
    w_theta = math.pi / scenario.grid_theta
    w_phi = 2.0 * math.pi / scenario.grid_phi
    here = (seed.theta, seed.phi)
    for d_theta, d_phi in ((w_theta, 0.0), (-w_theta, 0.0), (0.0, w_phi), (0.0, -w_phi)):
        other = (seed.theta + d_theta, seed.phi + d_phi)
        if not 0.0 <= other[0] <= math.pi:
            continue
        junction = _refine_junction_segment(scenario, prober, here, other)
        if junction is not None:
            return junction
    raise NoConvergenceError("no junction with continuous mu near the seed")


# --- boundary arcs and departures ------------------------------------------------

def _entry_numerics(scenario: Scenario, junction: Junction) -> IntegrationConfig:
    if not junction.fine:
        return scenario.numerics
    return replace(scenario.numerics,
                   step=scenario.numerics.step / JUNCTION_STEP_DIV)


def _entry_arc(scenario: Scenario, junction: Junction) -> ArcResult | None:
    arc = integrate_interior(scenario.surface, scenario.flow,
                             ExtendedState(scenario.a,
                                           psi_from_angles(junction.theta, junction.phi)),
                             _entry_numerics(scenario, junction), scenario.b)
    if arc.terminal.kind != EventKind.BOUNDARY_CONTACT:
        return None
    return arc


def _boundary_for(scenario: Scenario, junction: Junction,
                  cache: dict) -> ArcResult | None:
    """Boundary arc started at a junction's contact state, cached by angles."""
    key = (junction.theta, junction.phi)
    if key in cache:
        return cache[key]
    st = ExtendedState(junction.contact.x, junction.contact.psi,
                       junction.contact.mu_value, on_boundary=True)
    try:
        arc = integrate_boundary(scenario.surface, scenario.flow,
                                 st, scenario.numerics, scenario.b,
                                 t0=junction.contact.t)
        if arc.n_samples < 2:
            arc = None
    except (RegularityError, NontrivialityError):
        arc = None
    cache[key] = arc
    return arc


def _depart_scan(scenario: Scenario, boundary: ArcResult,
                 idxs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    engine = _kernels.get_engine(scenario.flow)
    sc = scenario
    out_miss = np.empty(idxs.size)
    out_time = np.empty(idxs.size)
    out_status = np.empty(idxs.size, dtype=np.int64)
    engine.depart_batch(
        int(sc.surface.kind), sc.surface.major_radius,
        boundary.samples, idxs, sc.numerics.step, sc.numerics.t_max,
        sc.b.c1, sc.b.c2, sc.b.c3,
        sc.numerics.target_tol, sc.numerics.boundary_tol,
        out_miss, out_time, out_status,
    )
    return out_miss, out_time, out_status


def _departure_quality(scenario: Scenario, boundary: ArcResult) -> tuple[float, int]:
    """Best achievable miss over a coarse-then-local departure-time scan.

    Returns (best miss, boundary sample index of the best departure).
    Deterministic in the boundary arc alone.
    """
    n = boundary.n_samples
    if n < 2:
        return math.inf, 0
    stride = max(1, n // SEARCH_DEPART_SAMPLES)
    idxs = np.arange(1, n, stride, dtype=np.int64)
    miss, _t, _s = _depart_scan(scenario, boundary, idxs)
    k = int(np.argmin(miss))
    best_miss = float(miss[k])
    best_idx = int(idxs[k])
    if stride > 1:
        lo = max(1, best_idx - stride)
        hi = min(n, best_idx + stride + 1)
        fine = np.arange(lo, hi, dtype=np.int64)
        fmiss, _ft, _fs = _depart_scan(scenario, boundary, fine)
        kf = int(np.argmin(fmiss))
        if float(fmiss[kf]) < best_miss:
            best_miss = float(fmiss[kf])
            best_idx = int(fine[kf])
    return best_miss, best_idx


@dataclass(frozen=True, slots=True)
class _BasinDepth:
    """Departure quality of one junction within one departure-time window."""

    miss: float
    t_entry: float
    t_depart: float


def _admissible_horizon(scenario: Scenario, boundary: ArcResult) -> int:
    """Samples usable as departure points under the decreasing-mu condition.

    The multiplier of a true extremal is non-increasing along a boundary
    arc; once it has risen by more than the junction tolerance the remaining
    stretch cannot belong to one, so departures from there are not searched.
    """
    mu = boundary.samples[:, 7]
    rise = mu - np.minimum.accumulate(mu)
    bad = np.nonzero(rise > scenario.junction_tol)[0]
    return int(bad[0]) if bad.size else boundary.n_samples


def _window_minima(scenario: Scenario, boundary: ArcResult,
                   cap: float = 0.1) -> list[tuple[float, float]]:
    """All local minima (miss, t_depart) of the departure-miss profile."""
    n = _admissible_horizon(scenario, boundary)
    if n < 4:
        return []
    stride = max(1, n // SEARCH_DEPART_SAMPLES)
    idxs = np.arange(1, n, stride, dtype=np.int64)
    miss, _t, _s = _depart_scan(scenario, boundary, idxs)
    out = []
    for k in range(len(idxs)):
        left = miss[k - 1] if k > 0 else math.inf
        right = miss[k + 1] if k < len(idxs) - 1 else math.inf
        if miss[k] <= left and miss[k] <= right and miss[k] < cap:
            out.append((float(miss[k]), float(boundary.samples[idxs[k], 0])))
    return out


def _windowed_depth(scenario: Scenario, junction: Junction, cache: dict,
                    t_center: float, half_width: float) -> _BasinDepth:
    """Best departure miss restricted to |t_depart - t_center| <= half_width."""
    boundary = _boundary_for(scenario, junction, cache)
    if boundary is None:
        return _BasinDepth(math.inf, math.nan, math.nan)
    t = boundary.samples[:, 0]
    n = _admissible_horizon(scenario, boundary)
    lo = max(1, int(np.searchsorted(t, t_center - half_width)))
    hi = min(n, int(np.searchsorted(t, t_center + half_width)))
    if hi - lo < 2:
        return _BasinDepth(math.inf, junction.contact.t, math.nan)
    stride = max(1, (hi - lo) // SEARCH_DEPART_SAMPLES)
    idxs = np.arange(lo, hi, stride, dtype=np.int64)
    miss, _tt, _s = _depart_scan(scenario, boundary, idxs)
    k = int(np.argmin(miss))
    best_miss = float(miss[k])
    best_idx = int(idxs[k])
    if stride > 1:
        flo = max(1, best_idx - stride)
        fhi = min(n, best_idx + stride + 1)
        fine = np.arange(flo, fhi, dtype=np.int64)
        fmiss, _ft, _fs = _depart_scan(scenario, boundary, fine)
        kf = int(np.argmin(fmiss))
        if float(fmiss[kf]) < best_miss:
            best_miss = float(fmiss[kf])
            best_idx = int(fine[kf])
    return _BasinDepth(best_miss, junction.contact.t,
                       float(boundary.samples[best_idx, 0]))


# --- fold tracing ----------------------------------------------------------------

def _fold_point(scenario: Scenario, prober: _Prober,
                base: tuple[float, float], tangent: tuple[float, float],
                s: float, width: float) -> Junction | None:
    """Junction on the grazing fold near base + s * tangent.

    Refines |mu| along a short segment perpendicular to the fold direction;
    the segment is widened a few times if it misses the fold.
    """
    tt = (base[0] + s * tangent[0], base[1] + s * tangent[1])
    normal = (-tangent[1], tangent[0])
    w = max(width, 1e-9)
    for _ in range(5):
        p = (tt[0] - w * normal[0], tt[1] - w * normal[1])
        q = (tt[0] + w * normal[0], tt[1] + w * normal[1])
        j = _refine_junction_segment(scenario, prober, p, q, n_sweep=9)
        if j is not None:
            return j
        w *= 4.0
    return None


def _fold_tangent(scenario: Scenario, prober: _Prober, j: Junction,
                  radius: float) -> tuple[float, float] | None:
    """Local direction of the grazing fold at a junction, by probing."""
    for ang in np.linspace(0.0, math.pi, 8, endpoint=False):
        d = (math.cos(ang), math.sin(ang))
        j1 = _fold_point(scenario, prober, (j.theta, j.phi), d, radius,
                         0.25 * radius)
        if j1 is not None:
            n = math.hypot(j1.theta - j.theta, j1.phi - j.phi)
            if n > 1e-12:
                return ((j1.theta - j.theta) / n, (j1.phi - j.phi) / n)
    return None


def _fold_minimize(scenario: Scenario, prober: _Prober, seed: Junction,
                   t_depart0: float, arc_cache: dict, step0: float,
                   ) -> tuple[Junction, _BasinDepth] | None:
    """Shrink onto one departure basin along the grazing fold.

    One-dimensional interval halving over the fold arclength, walking from
    the seed junction; the departure scan stays locked to a window around
    the basin's departure time (re-centered whenever the best point
    improves) so that other basins of the same junction do not capture the
    search.  Succeeds as soon as the best miss drops below the target
    tolerance; gives up on bracket exhaustion.
    """
    tol = scenario.numerics.target_tol
    tangent = _fold_tangent(scenario, prober, seed, 0.35 * step0)
    window = [t_depart0]

    def depth_of(j: Junction) -> _BasinDepth:
        return _windowed_depth(scenario, j, arc_cache, window[0], BASIN_WINDOW)

    d_seed = depth_of(seed)
    if d_seed.miss < tol:
        return seed, d_seed
    if tangent is None:
        return None
    points: dict[float, Junction] = {0.0: seed}

    def at(s: float) -> Junction | None:
        if s in points:
            return points[s]
        # Predict from the nearest resolved fold point to follow curvature.
        s_near = min(points, key=lambda v: abs(v - s))
        base = points[s_near]
        j = _fold_point(scenario, prober, (base.theta, base.phi), tangent,
                        s - s_near, 0.25 * max(abs(s - s_near), 0.02 * step0))
        if j is not None:
            points[s] = j
        return j

    best = [d_seed.miss, seed, d_seed]

    def val(s: float) -> float:
        j = at(s)
        if j is None:
            return math.inf
        d = depth_of(j)
        if d.miss < best[0]:
            best[0], best[1], best[2] = d.miss, j, d
            if math.isfinite(d.t_depart):
                window[0] = d.t_depart
        return d.miss

    tri = [-step0, 0.0, step0]
    vals = [val(s) for s in tri]
    for _ in range(34):
        if best[0] < tol:
            return best[1], best[2]
        k = int(np.argmin(vals))
        if k == 0 or k == 2:
            # Slide and expand toward the descending edge.
            width = tri[2] - tri[0]
            if width > 8.0 * step0:
                return None
            c = tri[k]
            tri = [c - width, c, c + width]
            vals = [val(s) for s in tri]
            continue
        if tri[2] - tri[0] < 1e-10:
            return None
        grid = [tri[0], 0.5 * (tri[0] + tri[1]), tri[1],
                0.5 * (tri[1] + tri[2]), tri[2]]
        gvals = [vals[0], val(grid[1]), vals[1], val(grid[3]), vals[2]]
        k = int(np.argmin(gvals))
        lo = max(0, k - 1)
        hi = min(4, k + 1)
        if hi - lo < 2:
            lo = max(0, hi - 2)
            hi = min(4, lo + 2)
        tri = [grid[lo], grid[(lo + hi) // 2], grid[hi]]
        vals = [gvals[lo], gvals[(lo + hi) // 2], gvals[hi]]
    return (best[1], best[2]) if best[0] < tol else None


# --- boundary extremal assembly ----------------------------------------------------

def trace_boundary_and_depart(scenario: Scenario, junction: Junction) -> list[Extremal]:
    """Follow the boundary from a junction and assemble every reaching departure.

    A continuation leaves the boundary at each boundary sample with the
    multiplier frozen at its sample value.  Contiguous runs of reaching
    departure times approximate one extremal each; the best-miss member of
    each run represents it.
    """
    entry = _entry_arc(scenario, junction)
    if entry is None:
        return []
    boundary = _boundary_for(scenario, junction, {})
    if boundary is None or boundary.n_samples < 2:
        return []
    n = _admissible_horizon(scenario, boundary)
    if n < 2:
        return []
    idxs = np.arange(1, n, dtype=np.int64)
    miss, times, status = _depart_scan(scenario, boundary, idxs)
    reaching = status == _kernels.STATUS_HIT
    extremals = []
    k = 0
    while k < idxs.size:
        if not reaching[k]:
            k += 1
            continue
        run_start = k
        while k < idxs.size and reaching[k]:
            k += 1
        run = slice(run_start, k)
        kk = run_start + int(np.argmin(miss[run]))
        e = _assemble_boundary_extremal(scenario, entry, boundary, int(idxs[kk]))
        if e is not None:
            extremals.append(e)
    extremals.sort(key=lambda e: e.total_time)
    return extremals


def _assemble_boundary_extremal(scenario: Scenario, entry: ArcResult,
                                boundary: ArcResult, i_bar: int) -> Extremal | None:
    t1 = entry.t_last
    t_bar = float(boundary.samples[i_bar, 0])
    row = boundary.samples[i_bar]
    depart_state = ExtendedState(Vector3(row[1], row[2], row[3]),
                                 Vector3(row[4], row[5], row[6]),
                                 float(row[7]), on_boundary=False)
    depart = integrate_interior(scenario.surface, scenario.flow, depart_state,
                                scenario.numerics, scenario.b,
                                t0=t_bar, from_boundary=True)
    if depart.terminal.kind != EventKind.TARGET_REACHED:
        return None
    bnd_slice = ArcResult(
        boundary.samples[:i_bar + 1].copy(), BOUNDARY_PHASE,
        TerminalEvent(EventKind.BOUNDARY_CONTACT, t_bar,
                      depart_state.x, depart_state.psi))
    last = depart.samples[-1]
    miss = math.dist((last[1], last[2], last[3]), scenario.b.as_tuple())
    theta, phi = _entry_angles(entry)
    return Extremal(arcs=(entry, bnd_slice, depart),
                    theta=theta, phi=phi,
                    total_time=depart.terminal.t,
                    junction_times=((t1, t_bar),),
                    classification="with-boundary-segment",
                    final_miss=miss)


def _entry_angles(entry: ArcResult) -> tuple[float, float]:
    p = entry.samples[0, 4:7]
    theta = math.acos(max(-1.0, min(1.0, p[2])))
    phi = math.atan2(p[1], p[0]) % (2.0 * math.pi)
    return theta, phi


# --- solve --------------------------------------------------------------------

def _local_minima(miss: np.ndarray) -> list[tuple[int, int]]:
    """Grid nodes not exceeded by any 4-neighbor (phi wraps, theta clamps)."""
    n_t, n_p = miss.shape
    out = []
    for i in range(n_t):
        for j in range(n_p):
            m = miss[i, j]
            if not math.isfinite(m):
                continue
            neighbors = [miss[i, (j - 1) % n_p], miss[i, (j + 1) % n_p]]
            if i > 0:
                neighbors.append(miss[i - 1, j])
            if i < n_t - 1:
                neighbors.append(miss[i + 1, j])
            if all(m <= v for v in neighbors):
                out.append((i, j))
    return out


def _junction_candidates(arrays: _ScanArrays, step: float,
                         ) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Grid edges that cross the grazing fold.

    An edge qualifies when the contact character changes across it: one end
    contacts and the other does not, the contact times jump by much more
    than one step, or the contact multiplier changes sign.
    """
    n_t, n_p = arrays.status.shape
    is_contact = arrays.status == _kernels.STATUS_CONTACT
    edges = []

    def check(i1, j1, i2, j2):
        c1, c2 = is_contact[i1, j1], is_contact[i2, j2]
        if not (c1 or c2):
            return
        a = (float(arrays.thetas[i1]), float(arrays.phis[j1]))
        b = (float(arrays.thetas[i2]), float(arrays.phis[j2]))
        if j2 == 0 and j1 == n_p - 1:
            b = (b[0], b[1] + 2.0 * math.pi)
        if c1 != c2:
            edges.append((a, b))
            return
        mu1, mu2 = arrays.contact_mu[i1, j1], arrays.contact_mu[i2, j2]
        if math.isfinite(mu1) and math.isfinite(mu2) and mu1 * mu2 < 0.0:
            edges.append((a, b))
            return
        dt = abs(arrays.ev_t[i1, j1] - arrays.ev_t[i2, j2])
        if dt > 20.0 * step:
            edges.append((a, b))

    for i in range(n_t):
        for j in range(n_p):
            check(i, j, i, (j + 1) % n_p)
            if i + 1 < n_t:
                check(i, j, i + 1, j)
    return edges


def _phi_dist(a: float, b: float) -> float:
    d = abs(a - b) % (2.0 * math.pi)
    return min(d, 2.0 * math.pi - d)


def _dedup_junctions(junctions: list[Junction], w_theta: float, w_phi: float,
                     ) -> list[Junction]:
    kept: list[Junction] = []
    for j in sorted(junctions, key=lambda u: abs(u.contact.mu_value)):
        close = any(abs(j.theta - k.theta) < 0.25 * w_theta
                    and _phi_dist(j.phi, k.phi) < 0.25 * w_phi
                    for k in kept)
        if not close:
            kept.append(j)
    return kept


def solve(scenario: Scenario, force: bool = False) -> ExtremalField:
    """Compute the field of extremals for one scenario.

    Raises:
        ValueError: an endpoint lies outside the constraint set.
        RegularityError: the flow violates the regularity margin on the
            boundary (override with force=True).
        EmptyFieldError: no extremal found within the horizon.
    """
    from . import diagnostics
    from .surfaces import g_value

    if g_value(scenario.surface, scenario.a) > 0.0:
        raise ValueError("start point A lies outside the constraint set")
    if g_value(scenario.surface, scenario.b) > 0.0:
        raise ValueError("target point B lies outside the constraint set")
    margin = diagnostics.check_regularity(scenario.surface, scenario.flow,
                                          1000, scenario.x3_window())
    if margin <= 0.0 and not force:
        raise RegularityError(
            f"regularity margin {margin:.3f} <= 0 on the boundary; "
            "pass force=True (--force) to attempt the solve anyway")

    arrays = _scan(scenario)
    extremals: list[Extremal] = []

    seeds = _local_minima(arrays.miss)
    seeds.sort(key=lambda ij: arrays.miss[ij])
    for (i, j) in seeds:
        point = _point_from_arrays(arrays, i, j)
        try:
            extremals.append(refine_hit(scenario, point))
        except NoConvergenceError:
            continue

    extremals.extend(_boundary_stage(scenario, arrays))

    extremals = _dedup(extremals)
    if not extremals:
        raise EmptyFieldError("no extremal found within the horizon")
    extremals.sort(key=lambda e: (e.total_time, e.theta, e.phi))
    return ExtremalField(tuple(extremals), scan_count=arrays.miss.size)


def _boundary_stage(scenario: Scenario, arrays: _ScanArrays) -> list[Extremal]:
    prober = _Prober(scenario)
    w_theta = math.pi / scenario.grid_theta
    w_phi = 2.0 * math.pi / scenario.grid_phi

    edges = _junction_candidates(arrays, scenario.numerics.step)
    junctions: list[Junction] = []
    for a, b in edges:
        j = _refine_junction_segment(scenario, prober, a, b)
        if j is not None:
            junctions.append(j)
    junctions = _dedup_junctions(junctions, w_theta, w_phi)
    if not junctions:
        return []
    if len(junctions) > MAX_JUNCTIONS:
        # Thin evenly in angle order, keeping fold coverage.
        junctions.sort(key=lambda u: (u.phi, u.theta))
        keep = np.linspace(0, len(junctions) - 1, MAX_JUNCTIONS).astype(int)
        junctions = [junctions[int(k)] for k in sorted(set(keep.tolist()))]

    # Enumerate candidate basins: every local minimum of every junction's
    # departure-miss profile, collapsed by (entry, departure) proximity.
    arc_cache: dict = {}
    candidates: list[tuple[float, float, float, Junction]] = []
    for j in junctions:
        boundary = _boundary_for(scenario, j, arc_cache)
        if boundary is None:
            continue
        for miss, t_depart in _window_minima(scenario, boundary):
            candidates.append((miss, j.contact.t, t_depart, j))
    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    distinct: list[tuple[float, float, float, Junction]] = []
    for c in candidates:
        merged = False
        for d in distinct:
            # Same basin only when entry, departure AND the junction itself
            # are close; distinct fold branches can share similar windows.
            if (abs(c[1] - d[1]) < 1.5 * BASIN_WINDOW
                    and abs(c[2] - d[2]) < BASIN_WINDOW
                    and abs(c[3].theta - d[3].theta) < 0.15
                    and _phi_dist(c[3].phi, d[3].phi) < 0.15):
                merged = True
                break
        if not merged:
            distinct.append(c)

    step0 = max(w_theta, w_phi)
    winners: list[tuple[Junction, _BasinDepth]] = []
    for miss, t_entry, t_depart, j in distinct[:MAX_FOLD_SEEDS]:
        if len(winners) >= MAX_BASINS:
            break
        won = _fold_minimize(scenario, prober, j, t_depart, arc_cache, step0)
        if won is not None and not any(_same_basin(won, w) for w in winners):
            winners.append(won)

    extremals: list[Extremal] = []
    for w, _d in winners:
        try:
            extremals.extend(trace_boundary_and_depart(scenario, w))
        except (RegularityError, NontrivialityError):
            continue
    return _merge_basin_duplicates(extremals)


def _same_basin(a: tuple[Junction, _BasinDepth],
                b: tuple[Junction, _BasinDepth]) -> bool:
    ja, da = a
    jb, db = b
    if not (math.isfinite(da.t_entry) and math.isfinite(db.t_entry)):
        return False
    return (abs(da.t_entry - db.t_entry) < 30.0 * BASIN_MERGE_TOL
            and abs(da.t_depart - db.t_depart) < 30.0 * BASIN_MERGE_TOL
            and abs(ja.theta - jb.theta) < 0.15
            and _phi_dist(ja.phi, jb.phi) < 0.15)


def _merge_basin_duplicates(extremals: list[Extremal]) -> list[Extremal]:
    """Collapse boundary extremals that are one basin found along two paths."""
    kept: list[Extremal] = []
    for e in sorted(extremals, key=lambda e: (e.final_miss, e.total_time)):
        dup = False
        for k in kept:
            if not e.junction_times or not k.junction_times:
                continue
            (e1, e2), (k1, k2) = e.junction_times[0], k.junction_times[0]
            if (abs(e.total_time - k.total_time) < BASIN_MERGE_TOL
                    and abs(e1 - k1) < BASIN_MERGE_TOL
                    and abs(e2 - k2) < BASIN_MERGE_TOL):
                dup = True
                break
        if not dup:
            kept.append(e)
    kept.sort(key=lambda e: e.total_time)
    return kept


def _dedup(extremals: list[Extremal]) -> list[Extremal]:
    """Collapse duplicates: equal angles and travel time within DEDUP_TOL."""
    kept: list[Extremal] = []
    for e in sorted(extremals, key=lambda e: (e.final_miss, e.total_time)):
        dup = any(abs(e.theta - k.theta) < DEDUP_TOL
                  and _phi_dist(e.phi, k.phi) < DEDUP_TOL
                  and abs(e.total_time - k.total_time) < DEDUP_TOL
                  for k in kept)
        if not dup:
            kept.append(e)
    return kept
