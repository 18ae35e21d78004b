"""Exception types shared across the solver."""


class ExtremalsError(Exception):
    """Base class for all errors raised by this package."""


class ZeroVectorError(ExtremalsError):
    """Normalization of a vector whose norm is below the zero threshold."""


class TorusAxisError(ExtremalsError):
    """Torus geometry evaluated too close to the symmetry axis (x1 = x2 = 0)."""


class NontrivialityError(ExtremalsError):
    """|psi - mu * grad g| collapsed below threshold; the control law is undefined."""


class RegularityError(ExtremalsError):
    """|<grad g, v>| too close to |grad g| on the boundary; the multiplier formula degenerates."""


class NumericalFailureError(ExtremalsError):
    """Non-finite values appeared during integration."""


class NoConvergenceError(ExtremalsError):
    """An angular refinement exhausted its bracket without meeting tolerance."""


class EmptyFieldError(ExtremalsError):
    """No extremal was found within the integration horizon."""


class MalformedExtremalError(ExtremalsError):
    """An ingested extremal has non-contiguous arcs or inconsistent sample layout."""


class ConfigError(ExtremalsError):
    """Scenario configuration is missing, malformed, or inconsistent."""

    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"{key}: {reason}")


class FlowSyntaxError(ExtremalsError):
    """Malformed flow expression; ``position`` is a 0-based index into the source."""

    def __init__(self, position: int, message: str):
        self.position = position
        super().__init__(f"syntax error at position {position}: {message}")


class UnknownIdentifierError(FlowSyntaxError):
    """Expression references a symbol other than x1, x2, x3 or a known function."""


class EvalError(ExtremalsError):
    """Runtime failure while evaluating a flow expression (division by zero, domain error)."""
