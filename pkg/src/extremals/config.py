"""Scenario files: flat ``key = value`` text with dotted keys.

Example::

    # time-optimal crossing of the unit cylinder in a shear flow
    surface.kind = cylinder
    flow.builtin = shear-paraboloid
    endpoints.A = 0.2, -0.5, 0
    endpoints.B = 0, 0.5, 5
    numerics.t_max = 10
    output.dir = out

Vectors are comma-separated triples.  Exactly one of ``flow.builtin`` /
``flow.v1``+``flow.v2``+``flow.v3`` must be present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, FlowSyntaxError
from .flows import FlowField, from_config as flow_from_config
from .geometry import Vector3, norm, sub
from .integration import IntegrationConfig
from .surfaces import Surface, interior_samples

_KNOWN_KEYS = {
    "surface.kind", "surface.major_radius",
    "flow.builtin", "flow.v1", "flow.v2", "flow.v3",
    "endpoints.A", "endpoints.B",
    "numerics.step", "numerics.t_max", "numerics.target_tol", "numerics.junction_tol",
    "search.grid_theta", "search.grid_phi",
    "output.dir",
}

DEFAULT_STEP = 1e-3
DEFAULT_TARGET_TOL = 1e-3
DEFAULT_JUNCTION_TOL = 1e-3
DEFAULT_BOUNDARY_TOL = 1e-9
DEFAULT_GRID_THETA = 64
DEFAULT_GRID_PHI = 128
MIN_GRID_THETA = 8
MIN_GRID_PHI = 16


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated raw configuration with defaults applied."""

    surface_kind: str
    major_radius: float | None
    flow_builtin: str | None
    flow_sources: tuple[str, str, str] | None
    a: tuple[float, float, float]
    b: tuple[float, float, float]
    step: float = DEFAULT_STEP
    t_max: float | None = None
    target_tol: float = DEFAULT_TARGET_TOL
    junction_tol: float = DEFAULT_JUNCTION_TOL
    grid_theta: int = DEFAULT_GRID_THETA
    grid_phi: int = DEFAULT_GRID_PHI
    out_dir: str | None = None

    def build(self) -> "Scenario":
        return build_scenario(self)


@dataclass(frozen=True)
class Scenario:
    """Fully constructed problem instance."""

    surface: Surface
    flow: FlowField
    a: Vector3
    b: Vector3
    numerics: IntegrationConfig
    junction_tol: float = DEFAULT_JUNCTION_TOL
    grid_theta: int = DEFAULT_GRID_THETA
    grid_phi: int = DEFAULT_GRID_PHI
    out_dir: str | None = None
    config: ScenarioConfig | None = field(default=None, compare=False)

    def x3_window(self) -> tuple[float, float]:
        """Height window covering the endpoints; used by cylinder samplers."""
        lo = min(self.a.c3, self.b.c3) - 1.0
        hi = max(self.a.c3, self.b.c3) + 1.0
        return (lo, hi)

    def echo(self) -> dict:
        """Configuration echo embedded in run summaries."""
        surface: dict = {"kind": self.surface.kind.name.lower()}
        if self.surface.major_radius:
            surface["major_radius"] = self.surface.major_radius
        return {
            "surface": surface,
            "flow": self.flow.echo(),
            "endpoints": {"A": list(self.a.as_tuple()), "B": list(self.b.as_tuple())},
            "numerics": {
                "step": self.numerics.step,
                "t_max": self.numerics.t_max,
                "target_tol": self.numerics.target_tol,
                "junction_tol": self.junction_tol,
            },
            "search": {"grid_theta": self.grid_theta, "grid_phi": self.grid_phi},
        }


def _parse_lines(text: str, origin: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}", "expected 'key = value'")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(key, f"unknown key ({origin}:{lineno})")
        if key in values:
            raise ConfigError(key, f"duplicate key ({origin}:{lineno})")
        values[key] = value
    return values


def _get_float(values: dict, key: str, default: float | None) -> float | None:
    if key not in values:
        return default
    try:
        out = float(values[key])
    except ValueError:
        raise ConfigError(key, f"not a number: {values[key]!r}") from None
    if not math.isfinite(out):
        raise ConfigError(key, "must be finite")
    return out


def _get_int(values: dict, key: str, default: int) -> int:
    if key not in values:
        return default
    try:
        return int(values[key])
    except ValueError:
        raise ConfigError(key, f"not an integer: {values[key]!r}") from None


def _get_vector(values: dict, key: str) -> tuple[float, float, float]:
    if key not in values:
        raise ConfigError(key, "missing required key")
    parts = [p.strip() for p in values[key].split(",")]
    if len(parts) != 3:
        raise ConfigError(key, f"expected three comma-separated numbers, got {values[key]!r}")
    try:
        x, y, z = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(key, f"not a numeric triple: {values[key]!r}") from None
    return (x, y, z)


def parse_scenario(path: str | Path) -> ScenarioConfig:
    """Parse and validate a scenario file; defaults are applied here."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_scenario_text(text, origin=str(path))


def parse_scenario_text(text: str, origin: str = "<scenario>") -> ScenarioConfig:
    values = _parse_lines(text, origin)

    kind = values.get("surface.kind")
    if kind is None:
        raise ConfigError("surface.kind", "missing required key")
    kind = kind.strip().lower()
    if kind not in ("cylinder", "sphere", "torus"):
        raise ConfigError("surface.kind", f"unknown surface kind {kind!r}")
    major_radius = _get_float(values, "surface.major_radius", None)
    if kind != "torus" and major_radius is not None:
        raise ConfigError("surface.major_radius", f"not applicable to {kind}")
    if kind == "torus" and major_radius is None:
        raise ConfigError("surface.major_radius", "required for torus")

    builtin = values.get("flow.builtin")
    expr_keys = [k for k in ("flow.v1", "flow.v2", "flow.v3") if k in values]
    if builtin is not None and expr_keys:
        raise ConfigError("flow.builtin", "give either flow.builtin or flow.v1/v2/v3, not both")
    if builtin is None and len(expr_keys) != 3:
        if not expr_keys:
            raise ConfigError("flow.builtin", "no flow given (flow.builtin or flow.v1/v2/v3)")
        missing = sorted({"flow.v1", "flow.v2", "flow.v3"} - set(expr_keys))
        raise ConfigError(missing[0], "missing flow component")
    sources = None
    if builtin is None:
        sources = (values["flow.v1"], values["flow.v2"], values["flow.v3"])

    a = _get_vector(values, "endpoints.A")
    b = _get_vector(values, "endpoints.B")
    if a == b:
        raise ConfigError("endpoints.B", "A and B must differ")

    step = _get_float(values, "numerics.step", DEFAULT_STEP)
    if step <= 0:
        raise ConfigError("numerics.step", "must be positive")
    t_max = _get_float(values, "numerics.t_max", None)
    if t_max is not None and t_max <= 0:
        raise ConfigError("numerics.t_max", "must be positive")
    target_tol = _get_float(values, "numerics.target_tol", DEFAULT_TARGET_TOL)
    if target_tol <= 0:
        raise ConfigError("numerics.target_tol", "must be positive")
    junction_tol = _get_float(values, "numerics.junction_tol", DEFAULT_JUNCTION_TOL)
    if junction_tol <= 0:
        raise ConfigError("numerics.junction_tol", "must be positive")

    grid_theta = _get_int(values, "search.grid_theta", DEFAULT_GRID_THETA)
    grid_phi = _get_int(values, "search.grid_phi", DEFAULT_GRID_PHI)
    if grid_theta < MIN_GRID_THETA:
        raise ConfigError("search.grid_theta", f"minimum is {MIN_GRID_THETA}")
    if grid_phi < MIN_GRID_PHI:
        raise ConfigError("search.grid_phi", f"minimum is {MIN_GRID_PHI}")

    return ScenarioConfig(
        surface_kind=kind, major_radius=major_radius,
        flow_builtin=builtin, flow_sources=sources,
        a=a, b=b, step=step, t_max=t_max,
        target_tol=target_tol, junction_tol=junction_tol,
        grid_theta=grid_theta, grid_phi=grid_phi,
        out_dir=values.get("output.dir"),
    )


def default_horizon(surface: Surface, flow: FlowField, a: Vector3, b: Vector3) -> float:
    """Generous horizon: 4 |B - A| / (1 - sup|v|), clamped to [1, 100].

    sup|v| is estimated on a deterministic interior sample; if the flow speed
    reaches unit control authority anywhere the bound degenerates and the
    clamp ceiling is used.
    """
    lo = min(a.c3, b.c3) - 1.0
    hi = max(a.c3, b.c3) + 1.0
    top = 0.0
    for x in interior_samples(surface, 512, x3_range=(lo, hi)):
        top = max(top, norm(flow.evaluator(x)))
    gap = 1.0 - top
    if gap <= 1e-6:
        return 100.0
    return min(100.0, max(1.0, 4.0 * norm(sub(b, a)) / gap))


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    """Materialize surfaces, flows and numeric settings from a parsed config."""
    try:
        surface = Surface.from_config(cfg.surface_kind, cfg.major_radius)
    except ValueError as exc:
        raise ConfigError("surface.kind", str(exc)) from None
    try:
        flow = flow_from_config(cfg.flow_builtin, cfg.flow_sources)
    except FlowSyntaxError as exc:
        raise ConfigError("flow.v1/v2/v3", str(exc)) from None
    except ValueError as exc:
        raise ConfigError("flow.builtin", str(exc)) from None
    a = Vector3(*cfg.a)
    b = Vector3(*cfg.b)
    t_max = cfg.t_max if cfg.t_max is not None else default_horizon(surface, flow, a, b)
    numerics = IntegrationConfig(step=cfg.step, t_max=t_max,
                                 boundary_tol=DEFAULT_BOUNDARY_TOL,
                                 target_tol=cfg.target_tol)
    return Scenario(surface=surface, flow=flow, a=a, b=b, numerics=numerics,
                    junction_tol=cfg.junction_tol,
                    grid_theta=cfg.grid_theta, grid_phi=cfg.grid_phi,
                    out_dir=cfg.out_dir, config=cfg)
