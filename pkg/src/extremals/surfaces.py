"""State-constraint geometries: cylinder, unit sphere, torus.

Each surface is the zero level set of a scalar function g with the sign
convention g < 0 strictly inside, g = 0 on the boundary.  All three g are
scaled so that |grad g| = 2 everywhere on the boundary, which is what the
multiplier formulas assume.

The torus has minor radius fixed at 1; only the major radius R is
configurable.  Its geometry is singular on the x3-axis, which lies outside
the feasible tube for any valid R; evaluating there is a hard error.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .errors import TorusAxisError
from .geometry import Matrix3, Vector3

# Squared cylindrical radius below which the torus factor w is treated as singular.
_TORUS_AXIS_EPS2 = 1e-20


class SurfaceKind(enum.IntEnum):
    CYLINDER = 0
    SPHERE = 1
    TORUS = 2


@dataclass(frozen=True, slots=True)
class Surface:
    """One of the three supported constraint geometries.

    ``major_radius`` is meaningful for the torus only and must exceed the
    (unit) minor radius so the tube does not self-intersect.
    """

    kind: SurfaceKind
    major_radius: float = 0.0

    def __post_init__(self):
        if self.kind == SurfaceKind.TORUS:
            if not self.major_radius > 1.0:
                raise ValueError(
                    f"torus major radius must exceed 1, got {self.major_radius}"
                )
        elif self.major_radius != 0.0:
            raise ValueError(f"{self.kind.name.lower()} takes no major radius")

    @classmethod
    def cylinder(cls) -> "Surface":
        return cls(SurfaceKind.CYLINDER)

    @classmethod
    def sphere(cls) -> "Surface":
        return cls(SurfaceKind.SPHERE)

    @classmethod
    def torus(cls, major_radius: float) -> "Surface":
        return cls(SurfaceKind.TORUS, float(major_radius))

    @classmethod
    def from_config(cls, kind: str, major_radius: float | None = None) -> "Surface":
        kind = kind.strip().lower()
        if kind == "cylinder":
            return cls.cylinder()
        if kind == "sphere":
            return cls.sphere()
        if kind == "torus":
            if major_radius is None:
                raise ValueError("torus requires surface.major_radius")
            return cls.torus(major_radius)
        raise ValueError(f"unknown surface kind {kind!r}")


def _torus_rho(x: Vector3) -> float:
    rho2 = x.c1 * x.c1 + x.c2 * x.c2
    if rho2 < _TORUS_AXIS_EPS2:
        raise TorusAxisError(
            f"torus geometry is singular on the x3-axis (x1^2+x2^2 = {rho2:.3e})"
        )
    return math.sqrt(rho2)


def g_value(s: Surface, x: Vector3) -> float:
    """Constraint function; negative inside, zero on the boundary, positive outside."""
    if s.kind == SurfaceKind.CYLINDER:
        return x.c1 * x.c1 + x.c2 * x.c2 - 1.0
    if s.kind == SurfaceKind.SPHERE:
        return x.c1 * x.c1 + x.c2 * x.c2 + x.c3 * x.c3 - 1.0
    rho = _torus_rho(x)
    d = rho - s.major_radius
    return d * d + x.c3 * x.c3 - 1.0


def g_gradient(s: Surface, x: Vector3) -> Vector3:
    """Analytic gradient of ``g_value``."""
    if s.kind == SurfaceKind.CYLINDER:
        return Vector3(2.0 * x.c1, 2.0 * x.c2, 0.0)
    if s.kind == SurfaceKind.SPHERE:
        return Vector3(2.0 * x.c1, 2.0 * x.c2, 2.0 * x.c3)
    w = w_factor(s, x)
    return Vector3(2.0 * w * x.c1, 2.0 * w * x.c2, 2.0 * x.c3)


def g_hessian(s: Surface, x: Vector3) -> Matrix3:
    """Analytic second derivative of ``g_value`` (symmetric)."""
    if s.kind == SurfaceKind.CYLINDER:
        return Matrix3.from_rows((2, 0, 0), (0, 2, 0), (0, 0, 0))
    if s.kind == SurfaceKind.SPHERE:
        return Matrix3.from_rows((2, 0, 0), (0, 2, 0), (0, 0, 2))
    rho = _torus_rho(x)
    w = (rho - s.major_radius) / rho
    r_rho3 = s.major_radius / rho**3
    h11 = 2.0 * w + 2.0 * x.c1 * x.c1 * r_rho3
    h22 = 2.0 * w + 2.0 * x.c2 * x.c2 * r_rho3
    h12 = 2.0 * x.c1 * x.c2 * r_rho3
    return Matrix3.from_rows((h11, h12, 0.0), (h12, h22, 0.0), (0.0, 0.0, 2.0))


def w_factor(s: Surface, x: Vector3) -> float:
    """Cylindrical-radius factor (sqrt(x1^2+x2^2) - R) / sqrt(x1^2+x2^2).

    The factor appears in all torus formulas; it equals 1 for the cylinder
    and the sphere, which makes the torus formulas specialize to theirs.
    """
    if s.kind != SurfaceKind.TORUS:
        return 1.0
    rho = _torus_rho(x)
    return (rho - s.major_radius) / rho


def project_to_boundary(s: Surface, x: Vector3) -> Vector3:
    """Nearest-point projection onto g = 0 (exact for all three geometries)."""
    if s.kind == SurfaceKind.CYLINDER:
        rho = math.hypot(x.c1, x.c2)
        if rho < 1e-300:
            raise ZeroDivisionError("cylinder projection undefined on the axis")
        return Vector3(x.c1 / rho, x.c2 / rho, x.c3)
    if s.kind == SurfaceKind.SPHERE:
        r = math.sqrt(x.c1 * x.c1 + x.c2 * x.c2 + x.c3 * x.c3)
        if r < 1e-300:
            raise ZeroDivisionError("sphere projection undefined at the origin")
        return Vector3(x.c1 / r, x.c2 / r, x.c3 / r)
    rho = _torus_rho(x)
    # Meridian-plane rescaling about the tube center circle.
    dr = rho - s.major_radius
    d = math.hypot(dr, x.c3)
    if d < 1e-300:
        raise ZeroDivisionError("torus projection undefined on the tube center circle")
    rho_new = s.major_radius + dr / d
    f = rho_new / rho
    return Vector3(x.c1 * f, x.c2 * f, x.c3 / d)


def boundary_point(s: Surface, a: float, b: float) -> Vector3:
    """Boundary parameterization used by samplers.

    Cylinder: ``a`` is the azimuth, ``b`` the height.  Sphere: ``a`` is the
    polar angle, ``b`` the azimuth.  Torus: ``a`` is the azimuth, ``b`` the
    tube angle.
    """
    if s.kind == SurfaceKind.CYLINDER:
        return Vector3(math.cos(a), math.sin(a), b)
    if s.kind == SurfaceKind.SPHERE:
        sa = math.sin(a)
        return Vector3(sa * math.cos(b), sa * math.sin(b), math.cos(a))
    rho = s.major_radius + math.cos(b)
    return Vector3(rho * math.cos(a), rho * math.sin(a), math.sin(b))


def boundary_samples(s: Surface, n: int, x3_range: tuple[float, float] = (-1.0, 1.0),
                     ) -> list[Vector3]:
    """Quasi-uniform deterministic boundary sample of size >= n.

    The cylinder boundary is unbounded in x3, so its sample is restricted to
    the given height window; the window is ignored for the other surfaces.
    """
    golden = math.pi * (3.0 - math.sqrt(5.0))
    points = []
    if s.kind == SurfaceKind.SPHERE:
        # Fibonacci sphere: near-uniform area coverage.
        for k in range(n):
            z = 1.0 - 2.0 * (k + 0.5) / n
            a = math.acos(max(-1.0, min(1.0, z)))
            points.append(boundary_point(s, a, (k * golden) % (2.0 * math.pi)))
        return points
    lo, hi = x3_range
    n_a = max(8, int(math.sqrt(n) * 2))
    n_b = max(4, (n + n_a - 1) // n_a)
    for i in range(n_a):
        a = 2.0 * math.pi * (i + 0.5) / n_a
        for j in range(n_b):
            if s.kind == SurfaceKind.CYLINDER:
                b = lo + (hi - lo) * (j + 0.5) / n_b
            else:
                b = 2.0 * math.pi * (j + 0.5) / n_b
            points.append(boundary_point(s, a, b))
    return points


def interior_samples(s: Surface, n: int, seed: int = 20210,
                     x3_range: tuple[float, float] = (-1.0, 1.0)) -> list[Vector3]:
    """Deterministic rejection sample of n strictly interior points."""
    import numpy as np

    rng = np.random.default_rng(seed)
    lo, hi = x3_range
    if s.kind == SurfaceKind.CYLINDER:
        box_lo = (-1.0, -1.0, lo)
        box_hi = (1.0, 1.0, hi)
    elif s.kind == SurfaceKind.SPHERE:
        box_lo = (-1.0, -1.0, -1.0)
        box_hi = (1.0, 1.0, 1.0)
    else:
        r = s.major_radius + 1.0
        box_lo = (-r, -r, -1.0)
        box_hi = (r, r, 1.0)
    points: list[Vector3] = []
    while len(points) < n:
        draw = rng.uniform(box_lo, box_hi, size=(4 * n, 3))
        for row in draw:
            x = Vector3(row[0], row[1], row[2])
            try:
                inside = g_value(s, x) < 0.0
            except TorusAxisError:
                continue
            if inside:
                points.append(x)
                if len(points) == n:
                    break
    return points
