"""Steady flow fields v(x): the two built-in experimental flows plus parsed expressions.

A FlowField bundles a point evaluator, its Jacobian, and scalar machine-code
versions of both (numba-compiled) that the integration kernels close over.
Jacobians of parsed flows come from exact symbolic differentiation of the
expression trees by default; central finite differences are available as an
alternative mode and serve as the test oracle.
"""

from __future__ import annotations

import linecache
import math
from dataclasses import dataclass, field
from typing import Callable

from numba import njit

from . import expressions as ex
from .geometry import Matrix3, Vector3

FD_JACOBIAN_STEP = 1e-6


@dataclass(frozen=True, slots=True)
class FlowExpression:
    """Three parsed component expressions over x1, x2, x3."""

    components: tuple[ex.Node, ex.Node, ex.Node]
    sources: tuple[str, str, str]


def parse_flow(src1: str, src2: str, src3: str) -> FlowExpression:
    """Parse the three component expressions of a flow field."""
    nodes = (ex.parse(src1), ex.parse(src2), ex.parse(src3))
    return FlowExpression(nodes, (src1, src2, src3))


@dataclass(frozen=True)
class FlowField:
    """Steady velocity field with analytic Jacobian.

    ``signature`` identifies the field for kernel-compilation caching;
    two FlowField instances with equal signatures are interchangeable.
    """

    label: str
    evaluator: Callable[[Vector3], Vector3]
    jacobian: Callable[[Vector3], Matrix3]
    signature: tuple
    _scalar_v: Callable = field(repr=False, compare=False)
    _scalar_jac: Callable = field(repr=False, compare=False)

    def njit_pair(self):
        """Scalar (x1, x2, x3) -> tuple implementations for the kernels."""
        return self._scalar_v, self._scalar_jac

    def echo(self) -> dict:
        """Config-style description for run summaries."""
        kind, *rest = self.signature
        if kind == "builtin":
            return {"builtin": rest[0]}
        return {"v1": rest[0], "v2": rest[1], "v3": rest[2], "jacobian": rest[3]}


# --- built-in flows ----------------------------------------------------------

@njit(cache=True)
def _shear_v(x1, x2, x3):
    return (0.0, 0.0, x1 * x1 + x2 * x2)


@njit(cache=True)
def _shear_jac(x1, x2, x3):
    return (0.0, 0.0, 0.0,
            0.0, 0.0, 0.0,
            2.0 * x1, 2.0 * x2, 0.0)


@njit(cache=True)
def _vortex_v(x1, x2, x3):
    return (4.0 / (1.0 + math.exp(-6.0 * x2)) - 2.0,
            -4.0 / (1.0 + math.exp(-6.0 * x1)) + 2.0,
            0.0)


@njit(cache=True)
def _vortex_jac(x1, x2, x3):
    s1 = 1.0 / (1.0 + math.exp(-6.0 * x1))
    s2 = 1.0 / (1.0 + math.exp(-6.0 * x2))
    return (0.0, 24.0 * s2 * (1.0 - s2), 0.0,
            -24.0 * s1 * (1.0 - s1), 0.0, 0.0,
            0.0, 0.0, 0.0)


def _wrap_scalar(scalar_v, scalar_jac):
    def evaluator(x: Vector3) -> Vector3:
        return Vector3(*scalar_v(x.c1, x.c2, x.c3))

    def jacobian(x: Vector3) -> Matrix3:
        j = scalar_jac(x.c1, x.c2, x.c3)
        return Matrix3(*j)

    return evaluator, jacobian


def builtin_shear() -> FlowField:
    """Axial flow (0, 0, x1^2 + x2^2): fastest on the unit-cylinder boundary."""
    evaluator, jacobian = _wrap_scalar(_shear_v.py_func, _shear_jac.py_func)
    return FlowField("shear-paraboloid", evaluator, jacobian,
                     ("builtin", "shear-paraboloid"), _shear_v, _shear_jac)


def builtin_vortex() -> FlowField:
    """Horizontal sigmoid vortex; each component saturates at magnitude 2."""
    evaluator, jacobian = _wrap_scalar(_vortex_v.py_func, _vortex_jac.py_func)
    return FlowField("sigmoid-vortex", evaluator, jacobian,
                     ("builtin", "sigmoid-vortex"), _vortex_v, _vortex_jac)


# --- expression-backed flows ---------------------------------------------------

_GENERATED_COUNT = 0


def _compile_scalar(srcs: tuple[str, ...], name: str):
    """Build an njit (x1, x2, x3) -> tuple function from python expression sources."""
    global _GENERATED_COUNT
    _GENERATED_COUNT += 1
    filename = f"<flow-{name}-{_GENERATED_COUNT}>"
    body = ",\n            ".join(srcs)
    source = (
        f"def {name}(x1, x2, x3):\n"
        f"    return ({body},)\n"
    )
    linecache.cache[filename] = (len(source), None, source.splitlines(True), filename)
    namespace = {fn: getattr(math, fn) for fn in ex.FUNCTIONS}
    exec(compile(source, filename, "exec"), namespace)
    return njit(cache=False)(namespace[name])


def expression_flow(e: FlowExpression, jac_mode: str = "analytic") -> FlowField:
    """Build a FlowField from parsed expressions.

    ``jac_mode`` selects the Jacobian: "analytic" differentiates the trees
    symbolically; "finite-difference" uses central differences of the
    evaluator with step ``FD_JACOBIAN_STEP``.
    """
    if jac_mode not in ("analytic", "finite-difference"):
        raise ValueError(f"unknown jac_mode {jac_mode!r}")
    c1, c2, c3 = e.components

    def evaluator(x: Vector3) -> Vector3:
        return Vector3(ex.evaluate(c1, x.c1, x.c2, x.c3),
                       ex.evaluate(c2, x.c1, x.c2, x.c3),
                       ex.evaluate(c3, x.c1, x.c2, x.c3))

    scalar_v = _compile_scalar(
        tuple(ex.to_python_source(c) for c in e.components), "flow_v")

    if jac_mode == "analytic":
        partials = tuple(ex.differentiate(c, j) for c in e.components for j in range(3))

        def jacobian(x: Vector3) -> Matrix3:
            return Matrix3(*(ex.evaluate(p, x.c1, x.c2, x.c3) for p in partials))

        scalar_jac = _compile_scalar(
            tuple(ex.to_python_source(p) for p in partials), "flow_jac")
    else:
        jacobian = _fd_jacobian_python(evaluator)
        scalar_jac = _fd_jacobian_scalar(scalar_v)

    label = f"expr({e.sources[0]}; {e.sources[1]}; {e.sources[2]})"
    return FlowField(label, evaluator, jacobian,
                     ("expr", *e.sources, jac_mode), scalar_v, scalar_jac)


def _fd_jacobian_python(evaluator):
    step = FD_JACOBIAN_STEP

    def jacobian(x: Vector3) -> Matrix3:
        cols = []
        for j in range(3):
            d = [0.0, 0.0, 0.0]
            d[j] = step
            hi = evaluator(Vector3(x.c1 + d[0], x.c2 + d[1], x.c3 + d[2]))
            lo = evaluator(Vector3(x.c1 - d[0], x.c2 - d[1], x.c3 - d[2]))
            cols.append(((hi.c1 - lo.c1) / (2 * step),
                         (hi.c2 - lo.c2) / (2 * step),
                         (hi.c3 - lo.c3) / (2 * step)))
        return Matrix3.from_rows((cols[0][0], cols[1][0], cols[2][0]),
                                 (cols[0][1], cols[1][1], cols[2][1]),
                                 (cols[0][2], cols[1][2], cols[2][2]))

    return jacobian


def _fd_jacobian_scalar(scalar_v):
    step = FD_JACOBIAN_STEP

    @njit(cache=False)
    def scalar_jac(x1, x2, x3):
        a1, b1, c1 = scalar_v(x1 + step, x2, x3)
        a0, b0, c0 = scalar_v(x1 - step, x2, x3)
        d1, e1, f1 = scalar_v(x1, x2 + step, x3)
        d0, e0, f0 = scalar_v(x1, x2 - step, x3)
        g1, h1, i1 = scalar_v(x1, x2, x3 + step)
        g0, h0, i0 = scalar_v(x1, x2, x3 - step)
        inv = 0.5 / step
        return ((a1 - a0) * inv, (d1 - d0) * inv, (g1 - g0) * inv,
                (b1 - b0) * inv, (e1 - e0) * inv, (h1 - h0) * inv,
                (c1 - c0) * inv, (f1 - f0) * inv, (i1 - i0) * inv)

    return scalar_jac


def from_config(builtin: str | None = None,
                sources: tuple[str, str, str] | None = None) -> FlowField:
    """Resolve the flow named or defined by a scenario configuration."""
    if (builtin is None) == (sources is None):
        raise ValueError("exactly one of builtin / expression sources must be given")
    if builtin is not None:
        name = builtin.strip().lower()
        if name == "shear-paraboloid":
            return builtin_shear()
        if name == "sigmoid-vortex":
            return builtin_vortex()
        raise ValueError(f"unknown builtin flow {builtin!r}")
    return expression_flow(parse_flow(*sources))
