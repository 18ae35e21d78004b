"""Command-line driver: solve scenario files, check them, verify stored output.

Exit codes: 0 success, 1 configuration or I/O error, 2 empty extremal field.
Outputs per run: one trajectory CSV per extremal (ids by ascending travel
time), a field summary JSON and a diagnostics JSON.  Outputs are byte-stable
across runs of the same solver version, except the wall-clock field of the
summary.

The output directory resolves in this order: --out flag, the
EXTREMALS_OUT_DIR environment variable, the scenario's output.dir key,
then ./extremals-out.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import Scenario, build_scenario, parse_scenario
from .diagnostics import (DiagnosticsReport, control_samples, scenario_report,
                          verify_extremal)
from .errors import (ConfigError, EmptyFieldError, ExtremalsError,
                     MalformedExtremalError, RegularityError)
from .geometry import Vector3
from .integration import (ArcResult, BOUNDARY_PHASE, EventKind, INTERIOR_PHASE,
                          TerminalEvent)
from .shooting import Extremal, ExtremalField, solve

ENV_OUT_DIR = "EXTREMALS_OUT_DIR"

CSV_HEADER = "t,x1,x2,x3,psi1,psi2,psi3,mu,u1,u2,u3,phase"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_extremal_csv(path: Path, scenario: Scenario, e: Extremal) -> None:
    samples, phases = e.all_samples()
    u = control_samples(scenario.surface, samples)
    lines = [CSV_HEADER]
    for k in range(samples.shape[0]):
        row = samples[k]
        lines.append(",".join(
            [_fmt(row[0]), _fmt(row[1]), _fmt(row[2]), _fmt(row[3]),
             _fmt(row[4]), _fmt(row[5]), _fmt(row[6]), _fmt(row[7]),
             _fmt(u[k, 0]), _fmt(u[k, 1]), _fmt(u[k, 2]), str(int(phases[k]))]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_extremal_csv(path: Path, b: Vector3) -> tuple[Extremal, np.ndarray]:
    """Rebuild an Extremal (and its stored control columns) from a trajectory CSV."""
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not text or text[0] != CSV_HEADER:
        raise MalformedExtremalError(f"{path}: missing or unexpected header")
    rows = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    if rows.ndim != 2 or rows.shape[1] != 12:
        raise MalformedExtremalError(f"{path}: expected 12 columns")
    samples = rows[:, :8]
    stored_u = rows[:, 8:11]
    phases = rows[:, 11].astype(int)
    arcs = []
    junctions = []
    start = 0
    for k in range(1, rows.shape[0] + 1):
        if k == rows.shape[0] or phases[k] != phases[start]:
            block = samples[start:k]
            phase = int(phases[start])
            terminal = TerminalEvent(EventKind.TARGET_REACHED, float(block[-1, 0]))
            arcs.append(ArcResult(block.copy(), phase, terminal))
            if phase == BOUNDARY_PHASE:
                junctions.append((float(block[0, 0]), float(block[-1, 0])))
            start = k
    psi0 = samples[0, 4:7]
    theta = math.acos(max(-1.0, min(1.0, psi0[2])))
    phi = math.atan2(psi0[1], psi0[0]) % (2.0 * math.pi)
    last = samples[-1]
    miss = math.dist((last[1], last[2], last[3]), b.as_tuple())
    classification = ("with-boundary-segment" if junctions else "interior-only")
    extremal = Extremal(arcs=tuple(arcs), theta=theta, phi=phi,
                        total_time=float(last[0]),
                        junction_times=tuple(junctions),
                        classification=classification, final_miss=miss)
    return extremal, stored_u


def _summary_dict(scenario: Scenario, field: ExtremalField,
                  report: DiagnosticsReport, wall_clock: float) -> dict:
    extremals = []
    for i, e in enumerate(field.extremals):
        check = report.extremal_checks[i] if i < len(report.extremal_checks) else None
        extremals.append({
            "id": i,
            "classification": e.classification,
            "T": e.total_time,
            "theta": e.theta,
            "phi": e.phi,
            "junction_times": [list(j) for j in e.junction_times],
            "endpoint_miss": e.final_miss,
            "lambda_estimate": check.hamiltonian_mean if check else None,
        })
    return {
        "solver_version": __version__,
        "scenario": scenario.echo(),
        "extremals": extremals,
        "optimal_id": 0,
        "scan_count": field.scan_count,
        "diagnostics": report.to_dict(),
        "wall_clock_seconds": wall_clock,
    }


def _resolve_out_dir(args_out: str | None, scenario: Scenario) -> Path:
    if args_out:
        return Path(args_out)
    env = os.environ.get(ENV_OUT_DIR)
    if env:
        return Path(env)
    if scenario.out_dir:
        return Path(scenario.out_dir)
    return Path("extremals-out")


def cmd_solve(args) -> int:
    t_start = time.perf_counter()
    scenario = build_scenario(parse_scenario(args.scenario))
    feas = scenario_report(scenario).feasibility
    if not feas.a_feasible or not feas.b_feasible:
        print("error: endpoint outside the constraint set "
              f"(A feasible: {feas.a_feasible}, B feasible: {feas.b_feasible})",
              file=sys.stderr)
        return 1
    if feas.speed_margin <= 0.0:
        print(f"warning: flow speed reaches {feas.sup_speed:.3f} >= 1 inside the "
              "domain; existence hypothesis violated, continuing", file=sys.stderr)
    try:
        field = solve(scenario, force=args.force)
    except RegularityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except EmptyFieldError as exc:
        print(f"no extremals: {exc}", file=sys.stderr)
        return 2
    report = scenario_report(scenario, field.extremals)
    wall = time.perf_counter() - t_start

    out_dir = _resolve_out_dir(args.out, scenario)
    written: list[Path] = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, e in enumerate(field.extremals):
            p = out_dir / f"extremal_{i}.csv"
            write_extremal_csv(p, scenario, e)
            written.append(p)
        summary = out_dir / "summary.json"
        summary.write_text(
            json.dumps(_summary_dict(scenario, field, report, wall), indent=2)
            + "\n", encoding="utf-8")
        written.append(summary)
        diag = out_dir / "diagnostics.json"
        diag.write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                        encoding="utf-8")
        written.append(diag)
    except OSError as exc:
        for p in written:
            try:
                p.unlink()
            except OSError:
                pass
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return 1

    for i, e in enumerate(field.extremals):
        tag = "optimal" if i == 0 else f"#{i}"
        print(f"extremal {i} ({tag}): T = {e.total_time:.4f}, "
              f"{e.classification}, miss = {e.final_miss:.2e}")
    print(f"wrote {len(written)} files to {out_dir}")
    return 0


def cmd_check(args) -> int:
    scenario = build_scenario(parse_scenario(args.scenario))
    report = scenario_report(scenario)
    print(json.dumps(report.to_dict(), indent=2))
    ok = report.feasibility.a_feasible and report.feasibility.b_feasible \
        and report.regularity_margin > 0.0
    if not ok:
        print("scenario check failed (see report above)", file=sys.stderr)
    return 0 if ok else 1


# Verification thresholds, from the solver's own guarantees.
VERIFY_LIMITS = {
    "control_norm_max_dev": 1e-12,
    "hamiltonian_drift": 1e-2,
    "endpoint_miss": 1e-3,
    "g_max": 1e-7,
}


def cmd_verify(args) -> int:
    summary = json.loads(Path(args.summary).read_text(encoding="utf-8"))
    scenario = _scenario_from_echo(summary["scenario"])
    all_ok = True
    for csv_path in args.csv:
        extremal, stored_u = read_extremal_csv(Path(csv_path), scenario.b)
        check = verify_extremal(scenario, extremal, stored_u)
        failures = [name for name, limit in VERIFY_LIMITS.items()
                    if getattr(check, name) >= limit]
        if check.mu_junction_jumps and max(check.mu_junction_jumps) >= scenario.junction_tol:
            failures.append("mu_junction_jumps")
        status = "ok" if not failures else "FAIL(" + ",".join(failures) + ")"
        print(f"{csv_path}: T = {check.total_time:.4f}, "
              f"H drift = {check.hamiltonian_drift:.2e}, "
              f"nontriviality >= {check.nontriviality_min:.2e}, "
              f"miss = {check.endpoint_miss:.2e} -> {status}")
        all_ok &= not failures
    return 0 if all_ok else 1


def _scenario_from_echo(echo: dict) -> Scenario:
    from .flows import from_config as flow_from_config
    from .integration import IntegrationConfig
    from .surfaces import Surface

    surface = Surface.from_config(echo["surface"]["kind"],
                                  echo["surface"].get("major_radius"))
    flow_echo = echo["flow"]
    if "builtin" in flow_echo:
        flow = flow_from_config(builtin=flow_echo["builtin"])
    else:
        flow = flow_from_config(
            sources=(flow_echo["v1"], flow_echo["v2"], flow_echo["v3"]))
    numerics = IntegrationConfig(step=echo["numerics"]["step"],
                                 t_max=echo["numerics"]["t_max"],
                                 target_tol=echo["numerics"]["target_tol"])
    return Scenario(surface=surface, flow=flow,
                    a=Vector3(*echo["endpoints"]["A"]),
                    b=Vector3(*echo["endpoints"]["B"]),
                    numerics=numerics,
                    junction_tol=echo["numerics"]["junction_tol"],
                    grid_theta=echo["search"]["grid_theta"],
                    grid_phi=echo["search"]["grid_phi"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extremals",
        description="Field-of-extremals solver for path-constrained "
                    "time-optimal motion in steady 3-D flows.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a scenario file")
    p_solve.add_argument("scenario", help="path to a .scn scenario file")
    p_solve.add_argument("--out", help="output directory (overrides scenario)")
    p_solve.add_argument("--force", action="store_true",
                         help="run even if feasibility checks warn")
    p_solve.set_defaults(func=cmd_solve)

    p_check = sub.add_parser("check", help="run scenario diagnostics only")
    p_check.add_argument("scenario")
    p_check.set_defaults(func=cmd_check)

    p_verify = sub.add_parser("verify",
                              help="re-run condition checks on stored output")
    p_verify.add_argument("summary", help="summary.json of a previous run")
    p_verify.add_argument("csv", nargs="+", help="extremal_*.csv files")
    p_verify.set_defaults(func=cmd_verify)

    p_version = sub.add_parser("version", help="print the solver version")
    p_version.set_defaults(func=lambda args: (print(__version__), 0)[1])

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, ExtremalsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
