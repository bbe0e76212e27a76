"""Command-line scenario runner.

    storage-screening <subcommand> --config FILE [--out DIR] [--seed N]
                      [--tol X] [--max-iter N] [--quiet]

Exit status: 0 on success, 2 if the configuration (or an override) is
invalid, 3 if a policy solve fails to converge.  Output files are only
written once the whole subcommand has succeeded; on non-convergence the
only file written is ``<case>-residuals.csv``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import export
from .config import ConfigError, ScenarioConfig, load_config
from .hedging import HedgePortfolio, collar_only_residual, settlement_table
from .investment import optimal_storage_capacity, solve_storage_case
from .montecarlo import simulate, summary
from .policy import ConvergenceError, complementarity_gap

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 2, 3

logger = logging.getLogger("storage_screening")


def _tag(pct: float) -> str:
    return f"{pct:g}"


def _case(cfg: ScenarioConfig, pct: float):
    return solve_storage_case(cfg.curve, cfg.loads, cfg.capacity(pct), s_min=cfg.s_min,
                              **cfg.solver.kwargs())


def cmd_solve(cfg):
    files = {}
    for pct in cfg.capacity_pct:
        case = _case(cfg, pct)
        sol = case.solution
        stem = f"{cfg.name}-Smax{_tag(pct)}"
        files[f"{stem}.csv"] = export.per_state_csv(sol)
        files[f"{stem}-policy.csv"] = export.policy_csv(sol)
        files[f"{stem}-solve.txt"] = export.write_report({
            "case": cfg.name, "capacity_pct": pct, "capacity_mwh": case.capacity,
            "discount": sol.discount, "iterations": sol.iterations, "residual": sol.residual,
            "max_complementarity_gap": float(complementarity_gap(sol).max()),
            "ep_min": sol.ep_min, "ep_max": sol.ep_max,
            "floor_events": int(sol.floor_events.sum()),
        })
    return files


def cmd_stationary(cfg):
    files = {}
    for pct in cfg.capacity_pct:
        case = _case(cfg, pct)
        files[f"{cfg.name}-Smax{_tag(pct)}-sd.csv"] = export.stationary_csv(case.solution, case.stationary)
    return files


def cmd_pd_curve(cfg):
    files = {}
    for pct in cfg.capacity_pct:
        case = _case(cfg, pct)
        files[f"{cfg.name}-Smax{_tag(pct)}-pd.csv"] = export.pd_csv(case.solution, case.stationary)
    return files


def cmd_marginal_benefit(cfg):
    mbs = [_case(cfg, pct).marginal_benefit for pct in cfg.sweep_pct]
    return {f"{cfg.name}-mb.csv": export.sweep_csv(cfg.sweep_pct, mbs)}


def cmd_optimal_capacity(cfg):
    if cfg.fixed_cost is None:
        raise ConfigError("[storage] fixed_cost is required for optimal-capacity")
    lo, hi = (cfg.capacity(p) for p in cfg.search_pct)
    res = optimal_storage_capacity(
        cfg.curve, cfg.loads, cfg.fixed_cost, bounds=(lo, hi),
        capacity_tol=cfg.capacity(cfg.search_tol_pct), s_min=cfg.s_min, **cfg.solver.kwargs(),
    )
    unit = cfg.capacity(100.0)
    return {f"{cfg.name}-optimal.txt": export.write_report({
        "case": cfg.name, "fixed_cost": cfg.fixed_cost, "discount": cfg.solver.discount,
        "capacity_mwh": res.capacity, "capacity_pct": 100.0 * res.capacity / unit,
        "marginal_benefit": res.marginal_benefit, "flag": res.flag or "none",
        "probes": len(res.probes),
    })}


def _hedge_pct(cfg):
    return cfg.hedge_pct if cfg.hedge_pct is not None else cfg.capacity_pct[0]


def cmd_hedge_demo(cfg):
    pct = _hedge_pct(cfg)
    sol = _case(cfg, pct).solution
    traj = simulate(sol, cfg.intervals, cfg.seed)
    rows = settlement_table(traj, sol)
    hp = HedgePortfolio(sol)
    nets = [r.hedged_net for r in rows]
    stem = f"{cfg.name}-Smax{_tag(pct)}"
    return {
        f"{stem}-settlement.csv": export.settlement_csv(rows),
        f"{stem}-hedge.txt": export.write_report({
            "case": cfg.name, "capacity_pct": pct, "seed": cfg.seed, "rng": cfg.rng,
            "intervals": len(rows), "cap_strike": hp.cap_strike, "floor_strike": hp.floor_strike,
            "max_abs_hedged_net": max(abs(v) for v in nets),
            "max_abs_cashflow": max(abs(r.pi) for r in rows),
            "collar_only_variance": collar_only_residual(traj, sol),
        }),
    }


def cmd_simulate(cfg):
    files = {}
    for pct in cfg.capacity_pct:
        sol = _case(cfg, pct).solution
        traj = simulate(sol, cfg.intervals, cfg.seed)
        stem = f"{cfg.name}-Smax{_tag(pct)}"
        files[f"{stem}-trajectory.csv"] = export.trajectory_csv(traj)
        report = {"case": cfg.name, "capacity_pct": pct}
        report.update(summary(traj, sol))
        files[f"{stem}-summary.txt"] = export.write_report(report)
    return files


COMMANDS = {
    "solve": cmd_solve,
    "stationary": cmd_stationary,
    "pd-curve": cmd_pd_curve,
    "marginal-benefit": cmd_marginal_benefit,
    "optimal-capacity": cmd_optimal_capacity,
    "hedge-demo": cmd_hedge_demo,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="storage-screening", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="scenario file")
    parser.add_argument("--out", default=".", help="output directory (created if missing)")
    parser.add_argument("--seed", type=int, help="override [simulation] seed")
    parser.add_argument("--tol", type=float, help="override [solver] tol")
    parser.add_argument("--max-iter", type=int, help="override [solver] max_iter")
    parser.add_argument("--quiet", action="store_true", help="only report errors")
    return parser


def _apply_overrides(cfg: ScenarioConfig, args) -> None:
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg.seed = args.seed
    if args.tol is not None:
        if not args.tol > 0:
            raise ConfigError("--tol must be > 0")
        cfg.solver.tol = args.tol
    if args.max_iter is not None:
        if args.max_iter < 1:
            raise ConfigError("--max-iter must be >= 1")
        cfg.solver.max_iter = args.max_iter


def _write(out_dir, files: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, body in files.items():
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as fh:
            fh.write(body)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        files = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _write(args.out, {f"{cfg.name}-residuals.csv": export.residual_csv(exc.residual_history)})
        return EXIT_CONVERGENCE
    _write(args.out, files)
    if not args.quiet:
        for name in files:
            print(os.path.join(args.out, name))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
