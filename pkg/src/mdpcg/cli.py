"""Command-line entry point ``mdpcg``.

Exit codes: 0 success, 2 configuration error, 3 a solver hit its iteration
cap (outputs are still written and flagged), 4 infeasible constraints.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, config_to_dict, load_config
from .constraints import constraint_matrix
from .errors import ConfigError, InfeasibleConstraints
from .frank_wolfe import METHODS, STEP_RULES, EquilibriumResult, solve_equilibrium
from .mdp_core import flow_residual
from .potential import potential, rewards_at
from .tolling import solve_constrained, verify_tolled_equilibrium
from .welfare import payouts, social_objective, welfare_curve

log = logging.getLogger("mdpcg")

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_INFEASIBLE = 0, 2, 3, 4
EQUILIBRIUM_COLUMNS = ("t", "s", "a", "y", "reward", "q", "v", "toll")
WELFARE_COLUMNS = ("eps_gen", "n_constraints", "J_equilibrium", "J_constrained", "J_social", "gap_ratio",
                   "h_driv", "h_plan", "h_net")


def _eps_list(text):
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None
    if not vals or any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError("eps grid needs positive thresholds")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mdpcg", description="MDP congestion game equilibria, tolls and welfare.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML run configuration")
    common.add_argument("-v", "--verbose", action="store_true")

    solving = argparse.ArgumentParser(add_help=False)
    solving.add_argument("--out", required=True, help="output directory")
    solving.add_argument("--eps", type=float, help="reward-change stopping threshold")
    solving.add_argument("--max-iters", type=int, help="solver iteration cap")
    solving.add_argument("--step", choices=STEP_RULES)
    solving.add_argument("--method", choices=METHODS, help="equilibrium solver, also used for the tolled solves")
    solving.add_argument("--seed", type=int, default=0, help="recorded in the manifest")

    sub.add_parser("solve", parents=[common, solving], help="solve for the Wardrop equilibrium")
    p = sub.add_parser("constrain", parents=[common, solving], help="compute constraint-enforcing tolls")
    p.add_argument("--verify", action="store_true", help="re-solve the tolled game from scratch and compare")
    p = sub.add_parser("welfare", parents=[common, solving], help="welfare gap versus generated constraints")
    p.add_argument("--eps-grid", type=_eps_list, help="comma separated constraint-generation thresholds")
    sub.add_parser("validate", parents=[common], help="check a config without solving")
    return parser


def _overrides(args) -> dict:
    keys = ("eps", "max_iters", "step", "method", "eps_grid")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    solver = {k: overrides[k] for k in ("eps", "max_iters", "step", "method") if k in overrides}
    inner = {k: solver[k] for k in ("step", "method") if k in solver}
    try:
        if solver:
            cfg = replace(cfg, solver=replace(cfg.solver, **solver))
        if inner:
            cfg = replace(cfg, planner=replace(cfg.planner, inner=replace(cfg.planner.inner, **inner)))
    except ValueError as err:
        raise ConfigError(str(err)) from err
    if "eps_grid" in overrides:
        cfg = replace(cfg, eps_grid=list(overrides["eps_grid"]))
    return cfg


def _fmt(x):
    return repr(float(x))


def write_equilibrium_csv(path, eq: EquilibriumResult, model, tolls=None):
    """One row per ``(t, s, a)`` in t-major order.  ``reward`` is what agents
    see at the equilibrium, congestion and tolls included."""
    y = eq.y
    reward = rewards_at(model, y) + eq.offsets
    tolls = np.zeros_like(y) if tolls is None else tolls
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EQUILIBRIUM_COLUMNS)
        for t, s, a in np.ndindex(y.shape):
            w.writerow([t, s, a, _fmt(y[t, s, a]), _fmt(reward[t, s, a]), _fmt(eq.Q[t, s, a]),
                        _fmt(eq.V[t, s]), _fmt(tolls[t, s, a])])


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n")


def _eq_summary(spec, model, eq: EquilibriumResult) -> dict:
    return {
        "potential": potential(model, eq.y),
        "social_welfare": social_objective(model, eq.y),
        "wardrop_gap": eq.wardrop_gap,
        "fw_gap": eq.fw_gap,
        "iterations": eq.iterations,
        "stop_reason": eq.stop_reason,
        "converged": eq.converged,
        "flow_residual": flow_residual(spec, eq.y),
        "total_mass": spec.total_mass,
    }


def _manifest(args, argv, cfg: RunConfig, out: Path) -> dict:
    return {
        "command": args.command,
        "argv": list(argv),
        "config_path": str(args.config),
        "overrides": _overrides(args),
        "out_dir": str(out),
        "seed": args.seed,
        "version": __version__,
        "config": config_to_dict(cfg),
    }


def cmd_solve(spec, cfg, out, args) -> int:
    model = spec.rewards
    opts = replace(cfg.solver, raise_not_converged=False)
    eq = solve_equilibrium(spec, opts=opts)
    write_equilibrium_csv(out / "equilibrium.csv", eq, model)
    _write_json(out / "summary.json", {"name": cfg.name, "equilibrium": _eq_summary(spec, model, eq)})
    return EXIT_OK if eq.converged else EXIT_NOT_CONVERGED


def cmd_constrain(spec, cfg, out, args) -> int:
    constraints = cfg.build_constraints(spec)
    if not constraints:
        raise ConfigError("constrain needs at least one constraint in the config")
    model = spec.rewards
    res = solve_constrained(spec, constraints, cfg.planner)
    eq = res.equilibrium
    toll = res.tolls.tensor
    write_equilibrium_csv(out / "equilibrium.csv", eq, model, toll)
    with open(out / "tolls.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "s", "a", "toll"))
        for t, s, a in np.ndindex(toll.shape):
            w.writerow([t, s, a, _fmt(toll[t, s, a])])
    with open(out / "constraints.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("index", "name", "bound", "tau", "slack"))
        for i, (con, tau, g) in enumerate(zip(constraints, res.tolls.tau_dual, res.slacks)):
            w.writerow([i, con.name, _fmt(con.bound), _fmt(tau), _fmt(g)])
    h_driv, h_plan, h_net = payouts(res.y, toll)
    summary = {
        "name": cfg.name,
        "equilibrium": _eq_summary(spec, model, eq),
        "constraints": {
            "count": len(constraints),
            "converged": res.converged,
            "outer_iterations": res.outer_iterations,
            "max_violation": res.max_violation,
            "min_slack": float(res.slacks.min()),
            "cs_residual": res.cs_residual,
            "active": int(np.sum(res.tolls.tau_dual > 0)),
            "tau": [float(v) for v in res.tolls.tau_dual],
            "slacks": [float(v) for v in res.slacks],
        },
        "payouts": {"h_driv": h_driv, "h_plan": h_plan, "h_net": h_net},
    }
    code = EXIT_OK if res.converged else EXIT_NOT_CONVERGED
    if args.verify:
        opts = replace(cfg.solver, max_iters=max(cfg.solver.max_iters, 20000), eps=min(cfg.solver.eps, 1e-14),
                       raise_not_converged=False, record_trace=False)
        rep = verify_tolled_equilibrium(spec, constraints, res, opts=opts)
        summary["verification"] = {"max_abs_diff": rep.max_abs_diff, "worst_slack": rep.worst_slack,
                                   "passed": rep.passed}
        if not rep.passed:
            print(f"warning: tolled re-solve differs from the constrained optimum by {rep.max_abs_diff:.3g}",
                  file=sys.stderr)
    _write_json(out / "summary.json", summary)
    return code


def cmd_welfare(spec, cfg, out, args) -> int:
    if not cfg.eps_grid:
        raise ConfigError("welfare needs an eps grid (config welfare.eps_grid or --eps-grid)")
    opts = replace(cfg.solver, raise_not_converged=False, record_trace=False)
    curve = welfare_curve(spec, cfg.eps_grid, cfg.planner, solver_opts=opts)
    with open(out / "welfare_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(WELFARE_COLUMNS)
        for eps, r in zip(cfg.eps_grid, curve.rows):
            w.writerow([_fmt(eps), r.n_constraints, _fmt(r.J_equilibrium), _fmt(r.J_constrained),
                        _fmt(r.J_social), _fmt(r.gap_ratio), _fmt(r.h_driv), _fmt(r.h_plan), _fmt(r.h_net)])
    converged = curve.equilibrium.converged and curve.social.converged and all(
        (r.constrained is None or r.constrained.converged) and r.tolled.converged for r in curve.rows)
    _write_json(out / "summary.json", {
        "name": cfg.name,
        "J_equilibrium": curve.J_equilibrium,
        "J_social": curve.J_social,
        "equilibrium": _eq_summary(spec, spec.rewards, curve.equilibrium),
        "social_optimum": {"iterations": curve.social.iterations, "stop_reason": curve.social.stop_reason},
        "converged": converged,
    })
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_validate(spec, cfg, args) -> int:
    constraints = cfg.build_constraints(spec)
    T, S, A = spec.shape
    if constraints:
        constraint_matrix(constraints, spec.shape)
    print(f"ok: {cfg.name or args.config}: T={T} S={S} A={A}, mass {spec.total_mass:g}, "
          f"{len(constraints)} constraints")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "constrain": cmd_constrain, "welfare": cmd_welfare}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = apply_overrides(load_config(args.config), _overrides(args))
        spec = cfg.build_spec()
        if args.command == "validate":
            return cmd_validate(spec, cfg, args)
        cfg.build_constraints(spec)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "manifest.json", _manifest(args, argv, cfg, out))
    try:
        code = COMMANDS[args.command](spec, cfg, out, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleConstraints as err:
        print(f"infeasible constraints: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if code == EXIT_NOT_CONVERGED:
        print("warning: iteration cap reached, outputs flagged as not converged", file=sys.stderr)
    return code


def rerun(manifest_path, out=None) -> int:
    """Replay the command recorded in a manifest, optionally into another directory."""
    manifest = json.loads(Path(manifest_path).read_text())
    argv = list(manifest["argv"])
    if out is not None:
        i = argv.index("--out")
        argv[i + 1] = str(out)
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
