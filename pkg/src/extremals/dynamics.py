"""Extremal control law, boundary measure multiplier, and the coupled (x, psi) dynamics.

One set of formulas covers all three constraint surfaces: everywhere the
surface enters only through grad g and its Hessian.

Notation used throughout: n = psi - mu * grad g(x) is the control-defining
vector, p = <grad g, psi> / 2 and q = <grad g, v> / 2 are the adjoint and
flow components along the unit outward normal (|grad g| = 2 on the boundary
for all three surfaces).

The boundary multiplier is the root of

    mu^2 - mu p + (p^2 - |psi|^2 q^2) / (4 (1 - q^2)) = 0

selected so that the induced control is tangent to the boundary:
mu = p/2 + (q/2) sqrt((|psi|^2 - p^2) / (1 - q^2)), with the sign of the
second term following q.  Taking the magnitude of the second term regardless
of the sign of q -- the other root of the same quadratic -- makes the
trajectory leave the boundary whenever q < 0, so it cannot be the multiplier
of a boundary arc; tangency is re-checked after every substitution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import NontrivialityError, RegularityError
from .flows import FlowField
from .geometry import Vector3, dot, mat_apply, mat_transpose_apply, norm, scale, sub
from .surfaces import Surface, g_gradient, g_hessian, g_value

# |n| at or below this is a non-triviality violation: the control is undefined.
NONTRIVIALITY_FLOOR = 1e-12
# |q| at or above 1 - this margin degenerates the multiplier formula.
REGULARITY_MARGIN = 1e-9
# A point counts as "on the boundary" for the multiplier formula within this.
BOUNDARY_G_TOL = 1e-9
# Tangency residual allowed after substituting the multiplier back.
TANGENCY_TOL = 1e-9


@dataclass(frozen=True, slots=True)
class ExtendedState:
    """Position, adjoint, frozen multiplier value, and phase flag."""

    x: Vector3
    psi: Vector3
    mu: float = 0.0
    on_boundary: bool = False

    def with_mu(self, mu: float) -> "ExtendedState":
        return replace(self, mu=mu)


def control_vector(s: Surface, st: ExtendedState) -> Vector3:
    """The unnormalized control direction n = psi - mu * grad g(x)."""
    return sub(st.psi, scale(g_gradient(s, st.x), st.mu))


def extremal_control(s: Surface, st: ExtendedState) -> Vector3:
    """Unit control maximizing <psi - mu grad g, u> over the closed unit ball.

    Raises:
        NontrivialityError: when |psi - mu grad g| is at or below the floor.
    """
    n = control_vector(s, st)
    nn = norm(n)
    if nn <= NONTRIVIALITY_FLOOR:
        raise NontrivialityError(
            f"|psi - mu grad g| = {nn:.3e} at x = {st.x.as_tuple()}"
        )
    return Vector3(n.c1 / nn, n.c2 / nn, n.c3 / nn)


def tangency(s: Surface, x: Vector3, u: Vector3, v: Vector3) -> float:
    """Time derivative of g along the dynamics: <grad g(x), u + v>."""
    grad = g_gradient(s, x)
    return grad.c1 * (u.c1 + v.c1) + grad.c2 * (u.c2 + v.c2) + grad.c3 * (u.c3 + v.c3)


def boundary_mu(s: Surface, x: Vector3, psi: Vector3, v: Vector3) -> float:
    """Measure multiplier on the boundary, from the tangency-selected quadratic root.

    Raises:
        RegularityError: when |<grad g, v>| / 2 is within REGULARITY_MARGIN of 1.
        ValueError: when x is not on the boundary within BOUNDARY_G_TOL.
    """
    g = g_value(s, x)
    if abs(g) > BOUNDARY_G_TOL:
        raise ValueError(f"boundary_mu requires |g(x)| <= {BOUNDARY_G_TOL}, got {g:.3e}")
    grad = g_gradient(s, x)
    p = 0.5 * dot(grad, psi)
    q = 0.5 * dot(grad, v)
    if abs(q) >= 1.0 - REGULARITY_MARGIN:
        raise RegularityError(f"|<grad g, v>| = {2 * abs(q):.6f} at x = {x.as_tuple()}")
    # Non-negative by Cauchy-Schwarz against the unit normal; clamp rounding.
    disc = dot(psi, psi) - p * p
    if disc < 0.0:
        disc = 0.0
    return 0.5 * p + 0.5 * q * math.sqrt(disc / (1.0 - q * q))


def interior_rhs(s: Surface, f: FlowField, st: ExtendedState) -> tuple[Vector3, Vector3]:
    """Right-hand side of the coupled system with the multiplier frozen.

    dx = u* + v(x)
    dpsi = -(Dv)^T (psi - mu grad g) + mu * Hess(g) (u* + v)
    """
    u = extremal_control(s, st)
    v = f.evaluator(st.x)
    jac = f.jacobian(st.x)
    dx = Vector3(u.c1 + v.c1, u.c2 + v.c2, u.c3 + v.c3)
    n = control_vector(s, st)
    dpsi = scale(mat_transpose_apply(jac, n), -1.0)
    if st.mu != 0.0:
        h = mat_apply(g_hessian(s, st.x), dx)
        dpsi = Vector3(dpsi.c1 + st.mu * h.c1,
                       dpsi.c2 + st.mu * h.c2,
                       dpsi.c3 + st.mu * h.c3)
    return dx, dpsi


def boundary_rhs(s: Surface, f: FlowField, x: Vector3, psi: Vector3,
                 ) -> tuple[Vector3, Vector3, float]:
    """Right-hand side on a boundary arc; the multiplier is recomputed here.

    Returns (dx, dpsi, mu).  The induced velocity is tangent to the boundary
    by construction; the residual is checked and a failure indicates a
    transcription bug, not a data problem.
    """
    v = f.evaluator(x)
    mu = boundary_mu(s, x, psi, v)
    st = ExtendedState(x, psi, mu, on_boundary=True)
    dx, dpsi = interior_rhs(s, f, st)
    gamma = tangency(s, x, extremal_control(s, st), v)
    if abs(gamma) > TANGENCY_TOL:
        raise RuntimeError(
            f"boundary tangency residual {gamma:.3e} exceeds {TANGENCY_TOL}"
        )
    return dx, dpsi, mu


def hamiltonian_level(s: Surface, f: FlowField, st: ExtendedState) -> float:
    """Maximized extended Hamiltonian <psi, u* + v> - mu * Gamma(x, u*).

    At the maximizing control this collapses to |n| + <n, v> with
    n = psi - mu grad g; along a true extremal the value is constant.
    """
    n = control_vector(s, st)
    v = f.evaluator(st.x)
    return norm(n) + dot(n, v)
