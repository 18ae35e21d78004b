"""Machine-compiled integration core shared by the solver's hot paths.

The formulas here mirror ``dynamics`` exactly but operate on scalars so
numba can compile them; a parity test pins the two representations
against each other.  Flow-independent pieces (surface geometry, multiplier,
right-hand side given v and Dv) are module-level and disk-cached; the
integration loops close over a specific flow's compiled evaluator/Jacobian
and are built per flow by :func:`make_engine`.

Sample buffers have 8 columns: t, x1, x2, x3, psi1, psi2, psi3, mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit, prange

CYLINDER, SPHERE, TORUS = 0, 1, 2

STATUS_HORIZON = 0     # reached the time horizon
STATUS_HIT = 1         # local minimum of |x - B| below target tolerance
STATUS_CONTACT = 2     # g crossed zero; state localized to |g| < boundary tol
STATUS_FAIL = 3        # non-finite values
STATUS_NONTRIVIAL = 4  # |psi - mu grad g| collapsed
STATUS_REGULARITY = 5  # |<grad g, v>| too close to |grad g| on the boundary
STATUS_OUTWARD = 6     # departure candidate left the boundary outward

_NONTRIVIALITY_FLOOR = 1e-12
_REGULARITY_MARGIN = 1e-9


@njit(cache=True)
def surface_g(kind, big_r, x1, x2, x3):
    if kind == CYLINDER:
        return x1 * x1 + x2 * x2 - 1.0
    if kind == SPHERE:
        return x1 * x1 + x2 * x2 + x3 * x3 - 1.0
    rho = math.sqrt(x1 * x1 + x2 * x2)
    d = rho - big_r
    return d * d + x3 * x3 - 1.0


@njit(cache=True)
def surface_grad(kind, big_r, x1, x2, x3):
    if kind == CYLINDER:
        return (2.0 * x1, 2.0 * x2, 0.0)
    if kind == SPHERE:
        return (2.0 * x1, 2.0 * x2, 2.0 * x3)
    rho = math.sqrt(x1 * x1 + x2 * x2)
    w = (rho - big_r) / rho
    return (2.0 * w * x1, 2.0 * w * x2, 2.0 * x3)


@njit(cache=True)
def surface_hess_apply(kind, big_r, x1, x2, x3, a1, a2, a3):
    """Hessian of g applied to (a1, a2, a3)."""
    if kind == CYLINDER:
        return (2.0 * a1, 2.0 * a2, 0.0)
    if kind == SPHERE:
        return (2.0 * a1, 2.0 * a2, 2.0 * a3)
    rho2 = x1 * x1 + x2 * x2
    rho = math.sqrt(rho2)
    w = (rho - big_r) / rho
    c = big_r / (rho2 * rho)
    h11 = 2.0 * w + 2.0 * x1 * x1 * c
    h22 = 2.0 * w + 2.0 * x2 * x2 * c
    h12 = 2.0 * x1 * x2 * c
    return (h11 * a1 + h12 * a2, h12 * a1 + h22 * a2, 2.0 * a3)


@njit(cache=True)
def surface_project(kind, big_r, x1, x2, x3):
    """Exact nearest-point projection onto g = 0."""
    if kind == CYLINDER:
        rho = math.sqrt(x1 * x1 + x2 * x2)
        return (x1 / rho, x2 / rho, x3)
    if kind == SPHERE:
        r = math.sqrt(x1 * x1 + x2 * x2 + x3 * x3)
        return (x1 / r, x2 / r, x3 / r)
    rho = math.sqrt(x1 * x1 + x2 * x2)
    dr = rho - big_r
    d = math.sqrt(dr * dr + x3 * x3)
    f = (big_r + dr / d) / rho
    return (x1 * f, x2 * f, x3 / d)


@njit(cache=True)
def mu_on_boundary(kind, big_r, x1, x2, x3, p1, p2, p3, v1, v2, v3):
    """Boundary multiplier.  Returns (mu, q, ok); ok=False flags a regularity failure."""
    g1, g2, g3 = surface_grad(kind, big_r, x1, x2, x3)
    p = 0.5 * (g1 * p1 + g2 * p2 + g3 * p3)
    q = 0.5 * (g1 * v1 + g2 * v2 + g3 * v3)
    if abs(q) >= 1.0 - _REGULARITY_MARGIN:
        return (0.0, q, False)
    disc = p1 * p1 + p2 * p2 + p3 * p3 - p * p
    if disc < 0.0:
        disc = 0.0
    mu = 0.5 * p + 0.5 * q * math.sqrt(disc / (1.0 - q * q))
    return (mu, q, True)


@njit(cache=True)
def rhs_terms(kind, big_r, mu,
              x1, x2, x3, p1, p2, p3,
              v1, v2, v3,
              j11, j12, j13, j21, j22, j23, j31, j32, j33):
    """(dx, dpsi, ok) given the flow value and Jacobian at x.

    dx = n/|n| + v,  dpsi = -(Dv)^T n + mu * Hess(g) dx,  n = psi - mu grad g.
    """
    g1, g2, g3 = surface_grad(kind, big_r, x1, x2, x3)
    n1 = p1 - mu * g1
    n2 = p2 - mu * g2
    n3 = p3 - mu * g3
    nn = math.sqrt(n1 * n1 + n2 * n2 + n3 * n3)
    if nn <= _NONTRIVIALITY_FLOOR:
        return (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False)
    w1 = n1 / nn + v1
    w2 = n2 / nn + v2
    w3 = n3 / nn + v3
    a1 = -(j11 * n1 + j21 * n2 + j31 * n3)
    a2 = -(j12 * n1 + j22 * n2 + j32 * n3)
    a3 = -(j13 * n1 + j23 * n2 + j33 * n3)
    if mu != 0.0:
        h1, h2, h3 = surface_hess_apply(kind, big_r, x1, x2, x3, w1, w2, w3)
        a1 += mu * h1
        a2 += mu * h2
        a3 += mu * h3
    return (w1, w2, w3, a1, a2, a3, True)


@dataclass(frozen=True)
class Engine:
    """Flow-specialized compiled kernels."""

    interior_core: Callable
    scan_grid: Callable
    boundary_record: Callable
    depart_batch: Callable


_ENGINES: dict[tuple, Engine] = {}


def get_engine(flow) -> Engine:
    """Engine for a FlowField, compiled once per flow signature per process."""
    key = flow.signature
    engine = _ENGINES.get(key)
    if engine is None:
        engine = make_engine(*flow.njit_pair())
        _ENGINES[key] = engine
    return engine


def make_engine(flow_v, flow_jac) -> Engine:
    """Compile the integration kernels around one flow's scalar evaluator/Jacobian."""

    @njit(cache=False)
    def rhs_interior(kind, big_r, mu, x1, x2, x3, p1, p2, p3):
        v1, v2, v3 = flow_v(x1, x2, x3)
        j = flow_jac(x1, x2, x3)
        return rhs_terms(kind, big_r, mu, x1, x2, x3, p1, p2, p3, v1, v2, v3,
                         j[0], j[1], j[2], j[3], j[4], j[5], j[6], j[7], j[8])

    @njit(cache=False)
    def rk4_interior(kind, big_r, mu, y1, y2, y3, y4, y5, y6, h):
        a1, a2, a3, a4, a5, a6, ok = rhs_interior(kind, big_r, mu, y1, y2, y3, y4, y5, y6)
        if not ok:
            return (y1, y2, y3, y4, y5, y6, False)
        hh = 0.5 * h
        b1, b2, b3, b4, b5, b6, ok = rhs_interior(
            kind, big_r, mu,
            y1 + hh * a1, y2 + hh * a2, y3 + hh * a3,
            y4 + hh * a4, y5 + hh * a5, y6 + hh * a6)
        if not ok:
            return (y1, y2, y3, y4, y5, y6, False)
        c1, c2, c3, c4, c5, c6, ok = rhs_interior(
            kind, big_r, mu,
            y1 + hh * b1, y2 + hh * b2, y3 + hh * b3,
            y4 + hh * b4, y5 + hh * b5, y6 + hh * b6)
        if not ok:
            return (y1, y2, y3, y4, y5, y6, False)
        d1, d2, d3, d4, d5, d6, ok = rhs_interior(
            kind, big_r, mu,
            y1 + h * c1, y2 + h * c2, y3 + h * c3,
            y4 + h * c4, y5 + h * c5, y6 + h * c6)
        if not ok:
            return (y1, y2, y3, y4, y5, y6, False)
        s = h / 6.0
        return (y1 + s * (a1 + 2.0 * (b1 + c1) + d1),
                y2 + s * (a2 + 2.0 * (b2 + c2) + d2),
                y3 + s * (a3 + 2.0 * (b3 + c3) + d3),
                y4 + s * (a4 + 2.0 * (b4 + c4) + d4),
                y5 + s * (a5 + 2.0 * (b5 + c5) + d5),
                y6 + s * (a6 + 2.0 * (b6 + c6) + d6),
                True)

    @njit(cache=False)
    def interior_core(kind, big_r,
                      y1, y2, y3, y4, y5, y6, mu,
                      t0, h, t_end,
                      bx, by, bz, target_tol, boundary_tol,
                      from_boundary, store, buf):
        """Interior-phase integration with event localization.

        Returns (status, n_stored, t_event,
                 e1..e6 = state at the event, best_miss, t_at_best).
        """
        t = t0
        n_stored = 0
        if store:
            buf[0, 0] = t
            buf[0, 1] = y1
            buf[0, 2] = y2
            buf[0, 3] = y3
            buf[0, 4] = y4
            buf[0, 5] = y5
            buf[0, 6] = y6
            buf[0, 7] = mu
            n_stored = 1
        g_prev = surface_g(kind, big_r, y1, y2, y3)
        dxb = y1 - bx
        dyb = y2 - by
        dzb = y3 - bz
        d_mid = math.sqrt(dxb * dxb + dyb * dyb + dzb * dzb)
        best_miss = d_mid
        best_t = t
        if d_mid < target_tol:
            return (STATUS_HIT, n_stored, t, y1, y2, y3, y4, y5, y6, d_mid, t)
        have_two = False
        t_old = t
        d_old = d_mid
        first = True
        while t_end - t > 1e-12:
            hk = h if t + h <= t_end else t_end - t
            z1, z2, z3, z4, z5, z6, ok = rk4_interior(
                kind, big_r, mu, y1, y2, y3, y4, y5, y6, hk)
            if not ok:
                return (STATUS_NONTRIVIAL, n_stored, t, y1, y2, y3, y4, y5, y6,
                        best_miss, best_t)
            if not (math.isfinite(z1) and math.isfinite(z2) and math.isfinite(z3)
                    and math.isfinite(z4) and math.isfinite(z5) and math.isfinite(z6)):
                return (STATUS_FAIL, n_stored, t, y1, y2, y3, y4, y5, y6,
                        best_miss, best_t)
            t_new = t + hk
            g_new = surface_g(kind, big_r, z1, z2, z3)
            if first and from_boundary:
                if g_new >= 0.0:
                    return (STATUS_OUTWARD, n_stored, t_new, z1, z2, z3, z4, z5, z6,
                            best_miss, best_t)
            elif g_prev < 0.0 and g_new >= 0.0:
                # Localize the crossing by bisection on the step fraction.
                lo = 0.0
                hi = hk
                c1, c2, c3, c4, c5, c6 = z1, z2, z3, z4, z5, z6
                gc = g_new
                tc = t_new
                for _ in range(90):
                    if abs(gc) < boundary_tol:
                        break
                    mid = 0.5 * (lo + hi)
                    m1, m2, m3, m4, m5, m6, okm = rk4_interior(
                        kind, big_r, mu, y1, y2, y3, y4, y5, y6, mid)
                    if not okm:
                        break
                    gm = surface_g(kind, big_r, m1, m2, m3)
                    if gm >= 0.0:
                        hi = mid
                        c1, c2, c3, c4, c5, c6 = m1, m2, m3, m4, m5, m6
                        gc = gm
                        tc = t + mid
                    else:
                        lo = mid
                dc = math.sqrt((c1 - bx) ** 2 + (c2 - by) ** 2 + (c3 - bz) ** 2)
                if dc < best_miss:
                    best_miss = dc
                    best_t = tc
                if store and tc > buf[n_stored - 1, 0] and n_stored < buf.shape[0]:
                    buf[n_stored, 0] = tc
                    buf[n_stored, 1] = c1
                    buf[n_stored, 2] = c2
                    buf[n_stored, 3] = c3
                    buf[n_stored, 4] = c4
                    buf[n_stored, 5] = c5
                    buf[n_stored, 6] = c6
                    buf[n_stored, 7] = mu
                    n_stored += 1
                return (STATUS_CONTACT, n_stored, tc, c1, c2, c3, c4, c5, c6,
                        best_miss, best_t)
            d_new = math.sqrt((z1 - bx) ** 2 + (z2 - by) ** 2 + (z3 - bz) ** 2)
            if d_new < best_miss:
                best_miss = d_new
                best_t = t_new
            if have_two and d_mid <= d_old and d_mid <= d_new:
                # Interior local minimum of the distance: refine by the vertex
                # of the parabola through the three bracketing samples.
                s1 = t - t_old
                s2 = t - t_new
                q1 = d_mid - d_old
                q2 = d_mid - d_new
                den = s1 * q2 - s2 * q1
                if abs(den) > 1e-300:
                    tv = t - 0.5 * (s1 * s1 * q2 - s2 * s2 * q1) / den
                else:
                    tv = t
                if tv < t_old:
                    tv = t_old
                if tv > t_new:
                    tv = t_new
                dtv = tv - t
                w1, w2, w3, w4, w5, w6, okv = rk4_interior(
                    kind, big_r, mu, y1, y2, y3, y4, y5, y6, dtv)
                if okv and math.isfinite(w1):
                    dv = math.sqrt((w1 - bx) ** 2 + (w2 - by) ** 2 + (w3 - bz) ** 2)
                    if dv < best_miss:
                        best_miss = dv
                        best_t = tv
                    if dv < target_tol:
                        if store and n_stored < buf.shape[0]:
                            row = n_stored - 1 if dtv < 0.0 else n_stored
                            buf[row, 0] = tv
                            buf[row, 1] = w1
                            buf[row, 2] = w2
                            buf[row, 3] = w3
                            buf[row, 4] = w4
                            buf[row, 5] = w5
                            buf[row, 6] = w6
                            buf[row, 7] = mu
                            n_stored = row + 1
                        return (STATUS_HIT, n_stored, tv, w1, w2, w3, w4, w5, w6,
                                dv, tv)
            t_old = t
            d_old = d_mid
            d_mid = d_new
            g_prev = g_new
            y1, y2, y3, y4, y5, y6 = z1, z2, z3, z4, z5, z6
            t = t_new
            have_two = True
            first = False
            if store:
                if n_stored >= buf.shape[0]:
                    return (STATUS_FAIL, n_stored, t, y1, y2, y3, y4, y5, y6,
                            best_miss, best_t)
                buf[n_stored, 0] = t
                buf[n_stored, 1] = y1
                buf[n_stored, 2] = y2
                buf[n_stored, 3] = y3
                buf[n_stored, 4] = y4
                buf[n_stored, 5] = y5
                buf[n_stored, 6] = y6
                buf[n_stored, 7] = mu
                n_stored += 1
        return (STATUS_HORIZON, n_stored, t, y1, y2, y3, y4, y5, y6,
                best_miss, best_t)

    @njit(cache=False, parallel=True)
    def scan_grid(kind, big_r, ax, ay, az, thetas, phis, h, t_max,
                  bx, by, bz, target_tol, boundary_tol,
                  miss, t_at_best, status, ev_t, ev_state, contact_mu):
        n_phi = phis.shape[0]
        total = thetas.shape[0] * n_phi
        for idx in prange(total):
            i = idx // n_phi
            j = idx - i * n_phi
            st = math.sin(thetas[i])
            p1 = st * math.cos(phis[j])
            p2 = st * math.sin(phis[j])
            p3 = math.cos(thetas[i])
            dummy = np.empty((1, 8))
            res = interior_core(kind, big_r, ax, ay, az, p1, p2, p3, 0.0,
                                0.0, h, t_max, bx, by, bz,
                                target_tol, boundary_tol, False, False, dummy)
            status[idx] = res[0]
            ev_t[idx] = res[2]
            ev_state[idx, 0] = res[3]
            ev_state[idx, 1] = res[4]
            ev_state[idx, 2] = res[5]
            ev_state[idx, 3] = res[6]
            ev_state[idx, 4] = res[7]
            ev_state[idx, 5] = res[8]
            miss[idx] = res[9]
            t_at_best[idx] = res[10]
            if res[0] == STATUS_CONTACT:
                v1, v2, v3 = flow_v(res[3], res[4], res[5])
                m, q, okm = mu_on_boundary(kind, big_r, res[3], res[4], res[5],
                                           res[6], res[7], res[8], v1, v2, v3)
                contact_mu[idx] = m if okm else np.inf
            else:
                contact_mu[idx] = np.nan

    @njit(cache=False)
    def rhs_boundary(kind, big_r, x1, x2, x3, p1, p2, p3):
        """Boundary-phase right-hand side; recomputes mu.  code: 0 ok, 1 nontrivial, 2 regularity."""
        v1, v2, v3 = flow_v(x1, x2, x3)
        mu, q, okr = mu_on_boundary(kind, big_r, x1, x2, x3, p1, p2, p3, v1, v2, v3)
        if not okr:
            return (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, mu, 2)
        j = flow_jac(x1, x2, x3)
        d1, d2, d3, d4, d5, d6, ok = rhs_terms(
            kind, big_r, mu, x1, x2, x3, p1, p2, p3, v1, v2, v3,
            j[0], j[1], j[2], j[3], j[4], j[5], j[6], j[7], j[8])
        if not ok:
            return (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, mu, 1)
        return (d1, d2, d3, d4, d5, d6, mu, 0)

    @njit(cache=False)
    def rk4_boundary(kind, big_r, y1, y2, y3, y4, y5, y6, h):
        a1, a2, a3, a4, a5, a6, _, code = rhs_boundary(kind, big_r, y1, y2, y3, y4, y5, y6)
        if code != 0:
            return (y1, y2, y3, y4, y5, y6, code)
        hh = 0.5 * h
        b1, b2, b3, b4, b5, b6, _, code = rhs_boundary(
            kind, big_r,
            y1 + hh * a1, y2 + hh * a2, y3 + hh * a3,
            y4 + hh * a4, y5 + hh * a5, y6 + hh * a6)
        if code != 0:
            return (y1, y2, y3, y4, y5, y6, code)
        c1, c2, c3, c4, c5, c6, _, code = rhs_boundary(
            kind, big_r,
            y1 + hh * b1, y2 + hh * b2, y3 + hh * b3,
            y4 + hh * b4, y5 + hh * b5, y6 + hh * b6)
        if code != 0:
            return (y1, y2, y3, y4, y5, y6, code)
        d1, d2, d3, d4, d5, d6, _, code = rhs_boundary(
            kind, big_r,
            y1 + h * c1, y2 + h * c2, y3 + h * c3,
            y4 + h * c4, y5 + h * c5, y6 + h * c6)
        if code != 0:
            return (y1, y2, y3, y4, y5, y6, code)
        s = h / 6.0
        return (y1 + s * (a1 + 2.0 * (b1 + c1) + d1),
                y2 + s * (a2 + 2.0 * (b2 + c2) + d2),
                y3 + s * (a3 + 2.0 * (b3 + c3) + d3),
                y4 + s * (a4 + 2.0 * (b4 + c4) + d4),
                y5 + s * (a5 + 2.0 * (b5 + c5) + d5),
                y6 + s * (a6 + 2.0 * (b6 + c6) + d6),
                0)

    @njit(cache=False)
    def boundary_record(kind, big_r,
                        y1, y2, y3, y4, y5, y6,
                        t0, h, t_end,
                        bx, by, bz, target_tol, drift_tol, buf):
        """Boundary-phase integration, recording (t, x, psi, mu) samples.

        Drift control: after each step the position is projected back onto
        g = 0 whenever |g| exceeds drift_tol.  Returns (status, n_stored, t_event).
        """
        t = t0
        v1, v2, v3 = flow_v(y1, y2, y3)
        mu0, q0, okr = mu_on_boundary(kind, big_r, y1, y2, y3, y4, y5, y6, v1, v2, v3)
        if not okr:
            return (STATUS_REGULARITY, 0, t)
        buf[0, 0] = t
        buf[0, 1] = y1
        buf[0, 2] = y2
        buf[0, 3] = y3
        buf[0, 4] = y4
        buf[0, 5] = y5
        buf[0, 6] = y6
        buf[0, 7] = mu0
        n_stored = 1
        d_mid = math.sqrt((y1 - bx) ** 2 + (y2 - by) ** 2 + (y3 - bz) ** 2)
        best_t = t
        if d_mid < target_tol:
            return (STATUS_HIT, n_stored, t)
        have_two = False
        t_old = t
        d_old = d_mid
        while t_end - t > 1e-12:
            hk = h if t + h <= t_end else t_end - t
            z1, z2, z3, z4, z5, z6, code = rk4_boundary(
                kind, big_r, y1, y2, y3, y4, y5, y6, hk)
            if code == 1:
                return (STATUS_NONTRIVIAL, n_stored, t)
            if code == 2:
                return (STATUS_REGULARITY, n_stored, t)
            if not (math.isfinite(z1) and math.isfinite(z2) and math.isfinite(z3)
                    and math.isfinite(z4) and math.isfinite(z5) and math.isfinite(z6)):
                return (STATUS_FAIL, n_stored, t)
            g = surface_g(kind, big_r, z1, z2, z3)
            if abs(g) > drift_tol:
                z1, z2, z3 = surface_project(kind, big_r, z1, z2, z3)
            t_new = t + hk
            v1, v2, v3 = flow_v(z1, z2, z3)
            mu_new, q, okr = mu_on_boundary(kind, big_r, z1, z2, z3, z4, z5, z6,
                                            v1, v2, v3)
            if not okr:
                return (STATUS_REGULARITY, n_stored, t)
            d_new = math.sqrt((z1 - bx) ** 2 + (z2 - by) ** 2 + (z3 - bz) ** 2)
            if have_two and d_mid <= d_old and d_mid <= d_new and d_mid < target_tol:
                return (STATUS_HIT, n_stored, t)
            if n_stored >= buf.shape[0]:
                return (STATUS_FAIL, n_stored, t)
            buf[n_stored, 0] = t_new
            buf[n_stored, 1] = z1
            buf[n_stored, 2] = z2
            buf[n_stored, 3] = z3
            buf[n_stored, 4] = z4
            buf[n_stored, 5] = z5
            buf[n_stored, 6] = z6
            buf[n_stored, 7] = mu_new
            n_stored += 1
            t_old = t
            d_old = d_mid
            d_mid = d_new
            y1, y2, y3, y4, y5, y6 = z1, z2, z3, z4, z5, z6
            t = t_new
            have_two = True
        return (STATUS_HORIZON, n_stored, t)

    @njit(cache=False, parallel=True)
    def depart_batch(kind, big_r, samples, idxs, h, t_end,
                     bx, by, bz, target_tol, boundary_tol,
                     out_miss, out_time, out_status):
        """Interior continuations leaving the boundary at selected samples.

        For sample i the continuation starts at (x, psi) = samples[i] with mu
        frozen at samples[i, 7]; out_time holds the arrival time for hits.
        """
        k = idxs.shape[0]
        for ii in prange(k):
            i = idxs[ii]
            dummy = np.empty((1, 8))
            res = interior_core(kind, big_r,
                                samples[i, 1], samples[i, 2], samples[i, 3],
                                samples[i, 4], samples[i, 5], samples[i, 6],
                                samples[i, 7],
                                samples[i, 0], h, t_end,
                                bx, by, bz, target_tol, boundary_tol,
                                True, False, dummy)
            out_status[ii] = res[0]
            out_miss[ii] = res[9]
            out_time[ii] = res[2] if res[0] == STATUS_HIT else np.nan

    return Engine(interior_core, scan_grid, boundary_record, depart_batch)
