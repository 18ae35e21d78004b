"""Field-of-extremals solver for time-optimal motion in steady 3-D flow fields
inside cylinder, sphere and torus state constraints."""

__version__ = "0.1.0"

from .config import Scenario, ScenarioConfig, build_scenario, parse_scenario
from .diagnostics import (DiagnosticsReport, check_feasibility, check_regularity,
                          scenario_report, verify_extremal)
from .dynamics import (ExtendedState, boundary_mu, boundary_rhs, extremal_control,
                       hamiltonian_level, interior_rhs)
from .flows import (FlowExpression, FlowField, builtin_shear, builtin_vortex,
                    expression_flow, parse_flow)
from .geometry import Matrix3, Vector3, dot, mat_transpose_apply, norm, normalize
from .integration import (ArcResult, IntegrationConfig, integrate_boundary,
                          integrate_interior, rk4_step)
from .shooting import (Extremal, ExtremalField, ShootingPoint, refine_hit,
                       refine_junction, scan_interior, solve,
                       trace_boundary_and_depart)
from .surfaces import Surface, SurfaceKind, g_gradient, g_hessian, g_value, w_factor

__all__ = [
    "__version__",
    "Scenario", "ScenarioConfig", "build_scenario", "parse_scenario",
    "DiagnosticsReport", "check_feasibility", "check_regularity",
    "scenario_report", "verify_extremal",
    "ExtendedState", "boundary_mu", "boundary_rhs", "extremal_control",
    "hamiltonian_level", "interior_rhs",
    "FlowExpression", "FlowField", "builtin_shear", "builtin_vortex",
    "expression_flow", "parse_flow",
    "Matrix3", "Vector3", "dot", "mat_transpose_apply", "norm", "normalize",
    "ArcResult", "IntegrationConfig", "integrate_boundary",
    "integrate_interior", "rk4_step",
    "Extremal", "ExtremalField", "ShootingPoint", "refine_hit",
    "refine_junction", "scan_interior", "solve", "trace_boundary_and_depart",
    "Surface", "SurfaceKind", "g_gradient", "g_hessian", "g_value", "w_factor",
]
