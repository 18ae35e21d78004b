"""Immutable 3-vector / 3x3-matrix value types and the small algebra the solver needs.

Everything here is plain double precision. The types reject NaN/Inf on
construction so that non-finite values cannot leak into the dynamics
unnoticed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ZeroVectorError

# Below this norm a vector is treated as zero and cannot be normalized.
ZERO_NORM_THRESHOLD = 1e-12


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} requires finite components, got {values}")


@dataclass(frozen=True, slots=True)
class Vector3:
    """Point, velocity or adjoint vector in Euclidean 3-space."""

    c1: float
    c2: float
    c3: float

    def __post_init__(self):
        _require_finite("Vector3", self.c1, self.c2, self.c3)

    @classmethod
    def from_iter(cls, values) -> "Vector3":
        a, b, c = values
        return cls(float(a), float(b), float(c))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.c1, self.c2, self.c3)


@dataclass(frozen=True, slots=True)
class Matrix3:
    """3x3 matrix, row-major: row i holds the gradient of component i."""

    m11: float
    m12: float
    m13: float
    m21: float
    m22: float
    m23: float
    m31: float
    m32: float
    m33: float

    def __post_init__(self):
        _require_finite(
            "Matrix3",
            self.m11, self.m12, self.m13,
            self.m21, self.m22, self.m23,
            self.m31, self.m32, self.m33,
        )

    @classmethod
    def from_rows(cls, r1, r2, r3) -> "Matrix3":
        (a, b, c), (d, e, f), (g, h, i) = r1, r2, r3
        return cls(float(a), float(b), float(c),
                   float(d), float(e), float(f),
                   float(g), float(h), float(i))

    @classmethod
    def identity(cls) -> "Matrix3":
        return cls(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)

    @classmethod
    def zero(cls) -> "Matrix3":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    def rows(self) -> tuple[tuple[float, float, float], ...]:
        return ((self.m11, self.m12, self.m13),
                (self.m21, self.m22, self.m23),
                (self.m31, self.m32, self.m33))


def dot(a: Vector3, b: Vector3) -> float:
    """Euclidean inner product."""
    return a.c1 * b.c1 + a.c2 * b.c2 + a.c3 * b.c3


def norm(a: Vector3) -> float:
    """Euclidean norm."""
    return math.sqrt(a.c1 * a.c1 + a.c2 * a.c2 + a.c3 * a.c3)


def normalize(a: Vector3) -> Vector3:
    """Rescale to unit norm.

    Raises:
        ZeroVectorError: if ``norm(a)`` is below ``ZERO_NORM_THRESHOLD``.
    """
    n = norm(a)
    if n < ZERO_NORM_THRESHOLD:
        raise ZeroVectorError(f"cannot normalize vector of norm {n:.3e}")
    return Vector3(a.c1 / n, a.c2 / n, a.c3 / n)


def add(a: Vector3, b: Vector3) -> Vector3:
    return Vector3(a.c1 + b.c1, a.c2 + b.c2, a.c3 + b.c3)


def sub(a: Vector3, b: Vector3) -> Vector3:
    return Vector3(a.c1 - b.c1, a.c2 - b.c2, a.c3 - b.c3)


def scale(a: Vector3, s: float) -> Vector3:
    return Vector3(a.c1 * s, a.c2 * s, a.c3 * s)


def mat_apply(m: Matrix3, a: Vector3) -> Vector3:
    """Matrix-vector product ``m @ a``."""
    return Vector3(
        m.m11 * a.c1 + m.m12 * a.c2 + m.m13 * a.c3,
        m.m21 * a.c1 + m.m22 * a.c2 + m.m23 * a.c3,
        m.m31 * a.c1 + m.m32 * a.c2 + m.m33 * a.c3,
    )


def mat_transpose_apply(m: Matrix3, a: Vector3) -> Vector3:
    """Product with the transposed matrix: component i = sum_j m[j][i] * a[j]."""
    return Vector3(
        m.m11 * a.c1 + m.m21 * a.c2 + m.m31 * a.c3,
        m.m12 * a.c1 + m.m22 * a.c2 + m.m32 * a.c3,
        m.m13 * a.c1 + m.m23 * a.c2 + m.m33 * a.c3,
    )
