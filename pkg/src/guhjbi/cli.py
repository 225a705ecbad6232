"""Command line front end.

Every subcommand reads a JSON config (--config), writes its artifacts
into --out, and finishes by writing manifest.json there.  Exit codes:
0 success, 1 input error, 2 solver failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, GuhjbiError, InputError, SolverError
from .hamiltonian import exact_sup_delta, first_order_G, optimal_drift_perturbation
from .mc_oracle import McConfig, feynman_kac_v1
from .nonlinear import solve_full_1d
from .perturbation import (
    assemble_value,
    compute_h2,
    compute_u1,
    feedback_control,
    quadratic_value,
    sensitivity_sweep,
    solve_v1,
    solve_v2,
)
from .riccati import solve_robust_are
from .types import Grid, ParsedConfig, load_config

FLOAT_FMT = "%.17g"

# Parameter lattice behind the sensitivity figure.
FIG2_ETAS = (0.1, 0.2, 0.3)
FIG2_EPSILONS = (0.0, 0.25, 0.5, 0.75)

SWEEP_HEADER = ["eta", "epsilon", "p0_trace", "a_eff_norm", "u1_sup", "V_at_0", "V_at_3"]


# ---------------------------------------------------------------------------
# output plumbing


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]):
    n_rows = len(columns[0])
    for col in columns:
        if len(col) != n_rows:
            raise ValueError("ragged CSV columns")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n_rows):
            fh.write(",".join(FLOAT_FMT % float(c[i]) for c in columns) + "\n")


def _write_manifest(out_dir: Path, command: str, config_path: str):
    digest = hashlib.sha256(Path(config_path).read_bytes()).hexdigest()
    _write_json(
        out_dir / "manifest.json",
        {
            "command": command,
            "config_path": str(config_path),
            "output_dir": str(out_dir),
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "tool_version": __version__,
            "input_hash": digest,
        },
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> ParsedConfig:
    parsed = load_config(args.config)
    geometry = parsed.geometry
    grid = parsed.grid
    if getattr(args, "epsilon", None) is not None:
        geometry = replace(geometry, epsilon=args.epsilon)
    points = getattr(args, "grid_points", None)
    half_width = getattr(args, "domain_half_width", None)
    if points is not None or half_width is not None:
        bounds = grid.bounds
        n_points = grid.n_points
        if half_width is not None:
            bounds = ((-half_width, half_width),) * grid.dim
        if points is not None:
            n_points = (points,) * grid.dim
        grid = Grid(bounds=bounds, n_points=n_points)
    return ParsedConfig(
        problem=parsed.problem, geometry=geometry, grid=grid, sweep=parsed.sweep
    )


# ---------------------------------------------------------------------------
# field table assembly


def _solution_columns(parsed: ParsedConfig, convention: str, order: int):
    """Grid columns for the solution table.

    order 1 leaves the second-order column at zero; order 2 solves for it.
    Returns (header, columns, context) with context carrying the pieces the
    nonlinear table needs again.
    """
    problem, geometry, grid = parsed.problem, parsed.geometry, parsed.grid
    eps = geometry.epsilon
    ric = solve_robust_are(problem)
    v1 = solve_v1(problem, ric, grid)
    u1 = compute_u1(problem, ric, v1, convention=convention)
    h2 = compute_h2(problem, ric, v1)
    v2 = solve_v2(problem, ric, grid, h2.simplified) if order >= 2 else None

    v0 = quadratic_value(ric, grid)
    u0 = feedback_control(problem, ric, grid)
    v_total = assemble_value(ric, v1, eps, v2)
    u_total = u0.point_values() + eps * u1.point_values()

    header: list[str] = []
    columns: list[np.ndarray] = []
    pts = grid.points()
    if grid.dim == 1:
        header.append("x")
        columns.append(pts[:, 0])
    else:
        for j in range(grid.dim):
            header.append(f"x{j + 1}")
            columns.append(pts[:, j])

    header += ["V0", "V1", "V2", "V_total"]
    columns += [
        v0.values,
        v1.values,
        np.zeros(grid.n_total) if v2 is None else v2.values,
        v_total.values,
    ]

    k = problem.k
    for name, field in (("u0", u0.point_values()), ("u1", u1.point_values()),
                        ("u_total", u_total)):
        if k == 1:
            header.append(name)
            columns.append(field[:, 0])
        else:
            for j in range(k):
                header.append(f"{name}_{j + 1}")
                columns.append(field[:, j])

    header.append("H2")
    columns.append(h2.simplified.values)
    context = {"riccati": ric, "v1": v1, "u1": u1, "h2": h2, "v2": v2}
    return header, columns, context


def _sweep_columns(rows):
    cols = [
        np.array([r.eta for r in rows]),
        np.array([r.epsilon for r in rows]),
        np.array([r.p0_trace for r in rows]),
        np.array([r.a_eff_norm for r in rows]),
        np.array([r.u1_sup for r in rows]),
        np.array([r.v_at_0 for r in rows]),
        np.array([r.v_at_3 for r in rows]),
    ]
    return SWEEP_HEADER, cols


def _parse_vector(text: str, name: str) -> np.ndarray:
    try:
        return np.array([float(tok) for tok in text.split(",") if tok.strip() != ""])
    except ValueError:
        raise ConfigError(f"{name} must be comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_solve_are(args):
    parsed = _load(args)
    out = _out_dir(args)
    ric = solve_robust_are(parsed.problem)
    payload = ric.to_jsonable()
    if parsed.problem.n == 1:
        payload["p0"] = float(ric.P0[0, 0])
        payload["a_eff"] = float(ric.A_eff[0, 0])
    else:
        payload["p0"] = ric.P0.tolist()
        payload["a_eff"] = ric.A_eff.tolist()
    _write_json(out / "riccati.json", payload)
    _write_manifest(out, "solve-are", args.config)
    return 0


def _cmd_solve_v1(args):
    parsed = _load(args)
    out = _out_dir(args)
    header, columns, _ = _solution_columns(parsed, args.u1_convention, order=1)
    _write_csv(out / "solution.csv", header, columns)
    _write_manifest(out, "solve-v1", args.config)
    return 0


def _cmd_solve_v2(args):
    parsed = _load(args)
    out = _out_dir(args)
    header, columns, _ = _solution_columns(parsed, args.u1_convention, order=2)
    _write_csv(out / "solution.csv", header, columns)
    _write_manifest(out, "solve-v2", args.config)
    return 0


def _full_table(parsed: ParsedConfig, convention: str):
    header, columns, _ = _solution_columns(parsed, convention, order=2)
    nl = solve_full_1d(parsed.problem, parsed.geometry, parsed.grid)
    header += ["V_nl", "u_nl"]
    columns += [nl.v.values, nl.u.values]
    return header, columns


def _cmd_solve_full(args):
    parsed = _load(args)
    out = _out_dir(args)
    header, columns = _full_table(parsed, args.u1_convention)
    _write_csv(out / "solution.csv", header, columns)
    _write_manifest(out, "solve-full", args.config)
    return 0


def _cmd_ham_eval(args):
    parsed = _load(args)
    out = _out_dir(args)
    problem, geometry = parsed.problem, parsed.geometry
    f = _parse_vector(args.f_vec, "--f-vec")
    p = _parse_vector(args.p_vec, "--p-vec")
    res = exact_sup_delta(f, problem.Sigma, p, problem.eta, geometry)
    payload = {
        "value": res.value,
        "delta_star": res.delta_star.tolist(),
        "multiplier": res.multiplier,
        "on_boundary": res.on_boundary,
        "first_order": first_order_G(f, problem.Sigma, p, problem.eta, geometry),
        "h_star": optimal_drift_perturbation(
            problem.Sigma, p, res.delta_star, problem.eta
        ).tolist(),
    }
    print(json.dumps(payload))
    _write_json(out / "ham_eval.json", payload)
    _write_manifest(out, "ham-eval", args.config)
    return 0


def _cmd_mc_check(args):
    parsed = _load(args)
    out = _out_dir(args)
    problem = parsed.problem
    cfg = McConfig(
        n_paths=args.n_paths, dt=args.dt, horizon=args.horizon, seed=args.seed
    )
    ric = solve_robust_are(problem)
    x = np.full(problem.n, args.x)
    result = feynman_kac_v1(x, problem, ric, cfg, method=args.method)
    payload = result.to_jsonable()
    print(json.dumps(payload))
    _write_json(out / "mc_check.json", payload)
    _write_manifest(out, "mc-check", args.config)
    return 0


def _sweep_workers() -> int:
    raw = os.environ.get("GUHJBI_THREADS", "")
    if not raw:
        return 1
    try:
        val = int(raw)
    except ValueError:
        raise ConfigError(f"GUHJBI_THREADS must be an integer, got {raw!r}") from None
    return max(val, 1)


def _cmd_sweep(args):
    parsed = _load(args)
    out = _out_dir(args)
    if parsed.sweep is None:
        raise ConfigError("config has no sweep block (keys sweep.eta, sweep.epsilon)")
    rows = sensitivity_sweep(
        parsed.problem,
        parsed.grid,
        parsed.sweep.eta,
        parsed.sweep.epsilon,
        u1_convention=args.u1_convention,
        max_workers=_sweep_workers(),
    )
    header, columns = _sweep_columns(rows)
    _write_csv(out / "sweep.csv", header, columns)
    _write_manifest(out, "sweep", args.config)
    return 0


def _cmd_fig1(args):
    parsed = _load(args)
    out = _out_dir(args)
    header, columns = _full_table(parsed, args.u1_convention)
    _write_csv(out / "fig1.csv", header, columns)
    _write_manifest(out, "reproduce-fig1", args.config)
    return 0


def _cmd_fig2(args):
    parsed = _load(args)
    out = _out_dir(args)
    problem, grid = parsed.problem, parsed.grid
    rows = sensitivity_sweep(
        problem,
        grid,
        FIG2_ETAS,
        FIG2_EPSILONS,
        u1_convention=args.u1_convention,
        max_workers=_sweep_workers(),
    )
    header, columns = _sweep_columns(rows)
    _write_csv(out / "fig2.csv", header, columns)

    # Companion profiles so both panels can be plotted without recomputation:
    # u1(x) per eta (left), assembled V(x) per epsilon at the config eta (right).
    curve_header = ["x"]
    curve_columns = [grid.axis(0)]
    for eta in FIG2_ETAS:
        prob = replace(problem, eta=eta)
        ric = solve_robust_are(prob)
        v1 = solve_v1(prob, ric, grid)
        u1 = compute_u1(prob, ric, v1, convention=args.u1_convention)
        curve_header.append(f"u1_eta{eta:g}")
        curve_columns.append(u1.values.copy())
    ric = solve_robust_are(problem)
    v1 = solve_v1(problem, ric, grid)
    for eps in FIG2_EPSILONS:
        curve_header.append(f"V_eps{eps:g}")
        curve_columns.append(assemble_value(ric, v1, eps).values)
    _write_csv(out / "fig2_curves.csv", curve_header, curve_columns)
    _write_manifest(out, "reproduce-fig2", args.config)
    return 0


def _cmd_fig3(args):
    parsed = _load(args)
    out = _out_dir(args)
    header, columns, _ = _solution_columns(parsed, args.u1_convention, order=2)
    _write_csv(out / "fig3.csv", header, columns)
    _write_manifest(out, "reproduce-fig3", args.config)
    return 0


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON problem config")
    common.add_argument("--out", required=True, help="output directory")

    field = argparse.ArgumentParser(add_help=False)
    field.add_argument("--grid-points", type=int, help="override points per axis")
    field.add_argument(
        "--domain-half-width", type=float, help="override bounds to (-L, L) per axis"
    )
    field.add_argument("--epsilon", type=float, help="override geometry epsilon")
    field.add_argument(
        "--u1-convention",
        choices=("maintext", "appendixe"),
        default="maintext",
        help="first-order control convention",
    )

    parser = argparse.ArgumentParser(
        prog="guhjbi",
        description="Robust LQ solvers: Riccati base solution, perturbation "
        "corrections, Monte Carlo cross-checks, and the nonlinear 1D equation.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser(
        "solve-are", parents=[common, field], help="robust Riccati solution to JSON"
    ).set_defaults(func=_cmd_solve_are)
    sub.add_parser(
        "solve-v1", parents=[common, field], help="first-order field table to CSV"
    ).set_defaults(func=_cmd_solve_v1)
    sub.add_parser(
        "solve-v2", parents=[common, field], help="second-order field table to CSV"
    ).set_defaults(func=_cmd_solve_v2)
    sub.add_parser(
        "solve-full",
        parents=[common, field],
        help="first+second order table plus the nonlinear 1D solution",
    ).set_defaults(func=_cmd_solve_full)

    ham = sub.add_parser(
        "ham-eval", parents=[common, field], help="exact inner sup at one (f, p) pair"
    )
    ham.add_argument("--f-vec", required=True, help="drift vector, comma separated")
    ham.add_argument("--p-vec", required=True, help="gradient vector, comma separated")
    ham.set_defaults(func=_cmd_ham_eval)

    mc = sub.add_parser(
        "mc-check", parents=[common, field], help="Monte Carlo estimate of V1 at one x"
    )
    mc.add_argument("--x", type=float, default=0.0, help="probe state (same value per axis)")
    mc.add_argument("--n-paths", type=int, default=10000)
    mc.add_argument("--dt", type=float, default=1e-3)
    mc.add_argument("--horizon", type=float, default=80.0)
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--method", choices=("euler", "exact"), default="euler")
    mc.set_defaults(func=_cmd_mc_check)

    sub.add_parser(
        "sweep", parents=[common, field], help="eta/epsilon sensitivity table to CSV"
    ).set_defaults(func=_cmd_sweep)
    sub.add_parser(
        "reproduce-fig1",
        parents=[common, field],
        help="1D value/control profiles with the nonlinear solution",
    ).set_defaults(func=_cmd_fig1)
    sub.add_parser(
        "reproduce-fig2",
        parents=[common, field],
        help="sensitivity sweep over the standard eta/epsilon lattice",
    ).set_defaults(func=_cmd_fig2)
    sub.add_parser(
        "reproduce-fig3",
        parents=[common, field],
        help="2D field table for the contour/vector-field study",
    ).set_defaults(func=_cmd_fig3)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that slot belongs to solver
        # failures here, so remap (and let --help/--version keep 0).
        return 0 if not exc.code else 1
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except GuhjbiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
