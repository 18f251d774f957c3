"""Batch experiment runner.

    fbconsensus simulate --config exp.json --out results/
    fbconsensus verify   --config exp.json
    fbconsensus sweep    --config exp.json --param mu --values 0.1,0.2,0.3
    fbconsensus fig2     --out results/ --seed 3

Exit codes: 0 success, 1 configuration error, 2 the simulated state
diverged (``simulate``) or a hypothesis did not pass (``verify``).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .analysis import contraction_check, linearize, lipschitz_near_consensus, rate_fit
from .config import ExperimentConfig, build_config, bundled_raw, load_raw
from .dynamics import find_fixed_point, simulate, simulate_lure
from .errors import ConfigError, NoConvergenceError, NoSignChangeError, NotConvergedError
from .optimizer import mu_bound, optimal_consensus
from .stochastic import VERDICT_ERGODIC, VERDICT_NON_ERGODIC, ergodicity_report

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2
SWEEP_PARAMS = {"mu": float, "n": int, "seed": int, "horizon": int}
CONVERGED_TOL = 1e-6


def _interval(cfg: ExperimentConfig):
    lo, hi = cfg.verify.get("interval", [-100.0, 100.0])
    return float(lo), float(hi)


def reference_fixed_point(cfg: ExperimentConfig):
    """``y*`` for the configured system, or ``None`` if none is found."""
    if cfg.family is not None:
        return optimal_consensus(cfg.family)
    lo, hi = _interval(cfg)
    rep = contraction_check(cfg.system, (lo, hi), samples=int(cfg.verify.get("samples", 2001)))
    if rep.y_star is not None:
        return rep.y_star
    try:
        return find_fixed_point(cfg.system, (lo, hi))
    except (NoSignChangeError, NoConvergenceError):
        return None


def run_analyses(cfg: ExperimentConfig, traj, y_star) -> dict:
    out = {}
    if "ergodicity" in cfg.analyses:
        hz = int(cfg.verify.get("ergodicity_horizon", min(max(cfg.horizon, 1), 2000)))
        out["ergodicity"] = ergodicity_report(cfg.sequence, hz).to_dict()
    if "contraction" in cfg.analyses:
        out["contraction"] = contraction_check(
            cfg.system, _interval(cfg), samples=int(cfg.verify.get("samples", 2001))
        ).to_dict()
    if "linearize" in cfg.analyses and y_star is not None:
        out["linearize"] = linearize(cfg.sequence.matrix(0), cfg.system, y_star).to_dict()
    if "rate_fit" in cfg.analyses and y_star is not None:
        try:
            out["rate_fit"] = rate_fit(traj, y_star).to_dict()
        except NotConvergedError as exc:
            out["rate_fit"] = {"error": str(exc)}
    return out


def _plotdata(traj) -> dict:
    return {
        "k": traj.k.tolist(),
        "x": traj.x.T.tolist(),
        "mean": traj.mean.tolist(),
        "V": traj.V.tolist(),
        "dist_E": traj.dist_E.tolist(),
    }


def run_simulate(cfg: ExperimentConfig, out_dir: str) -> tuple:
    """Simulate ``cfg`` and write its artifacts; returns ``(exit_code, report)``."""
    os.makedirs(out_dir, exist_ok=True)
    traj = simulate(cfg.sequence, cfg.system, cfg.x0, cfg.horizon)
    y_star = reference_fixed_point(cfg)
    base = os.path.join(out_dir, cfg.name)
    traj.to_csv(base + ".csv")

    lure = simulate_lure(cfg.system, float(np.mean(cfg.x0)), cfg.horizon)
    report = {
        "name": cfg.name,
        "seed": cfg.seed,
        "n": cfg.n,
        "horizon": cfg.horizon,
        "status": traj.status,
        "steps_recorded": len(traj),
        "y_star": y_star,
        "final_error": float(traj.error_to(y_star)[-1]) if y_star is not None else None,
        "final_V": float(traj.V[-1]),
        "lure_check": {"status": lure.status, "final": float(lure.y[-1])},
    }
    if cfg.family is not None:
        bound = mu_bound(cfg.family)
        report["mu"] = cfg.system.mu
        report["mu_upper"] = bound.upper
        report["mu_admissible"] = bound.admits(cfg.system.mu)
    report["analyses"] = run_analyses(cfg, traj, y_star)
    if "rate_fit" in report["analyses"] and "error" not in report["analyses"]["rate_fit"]:
        with open(base + ".fit.json", "w") as fh:
            json.dump(report["analyses"]["rate_fit"], fh, indent=2)

    with open(base + ".report.json", "w") as fh:
        json.dump(report, fh, indent=2)
    with open(base + ".plotdata.json", "w") as fh:
        json.dump(_plotdata(traj), fh)
    code = EXIT_DIVERGED if traj.diverged else EXIT_OK
    return code, report


def run_verify(cfg: ExperimentConfig) -> tuple:
    """Check the convergence hypotheses; returns ``(all_pass, lines)``."""
    lines = []
    v = cfg.verify
    hz = int(v.get("ergodicity_horizon", min(max(cfg.horizon, 1), 2000)))
    erg = ergodicity_report(cfg.sequence, hz).tail(0)
    final = float(erg.row_diff_series[-1])
    status = {VERDICT_ERGODIC: "PASS", VERDICT_NON_ERGODIC: "FAIL"}.get(erg.verdict, "INCONCLUSIVE")
    lines.append(("ergodicity", status, f"verdict={erg.verdict} row_diff@{hz}={final:.3e}"))

    interval = _interval(cfg)
    c = contraction_check(cfg.system, interval, samples=int(v.get("samples", 2001)))
    lines.append(("contraction", "PASS" if c.is_contraction else "FAIL", f"c_hat={c.c_hat:.6g}"))
    if c.is_contraction and c.y_star is not None:
        if c.violations:
            b = "FAIL"
        elif c.grid_points_checked == 0:
            b = "INCONCLUSIVE"
        else:
            b = "PASS"
        detail = (
            f"y*={c.y_star:.6g} beta={c.beta:.6g} gamma={c.gamma:.6g} "
            f"violations={c.violations}/{c.grid_points_checked}"
        )
    else:
        b, detail = "INCONCLUSIVE", "no contraction constant to derive beta from"
    lines.append(("decrement", b, detail))

    eps = float(v.get("epsilon", 1.0))
    lip = lipschitz_near_consensus(cfg.system, eps, interval, samples=int(v.get("lipschitz_samples", 2000)))
    lines.append(
        (
            "lipschitz",
            "PASS" if np.isfinite(lip.L_hat) else "FAIL",
            f"L_hat={lip.L_hat:.6g} eps={eps:g} samples={lip.sample_count}",
        )
    )
    return all(s == "PASS" for _, s, _ in lines), lines


def sweep_rows(raw: dict, param: str, values, seed=None, horizon=None, workers: int = 1) -> list:
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {param!r}; choose from {sorted(SWEEP_PARAMS)}")
    cast = SWEEP_PARAMS[param]

    def one(value):
        value = cast(value)
        kw = {"seed": seed, "horizon": horizon}
        kw[param] = value
        cfg = build_config(raw, **kw)
        traj = simulate(cfg.sequence, cfg.system, cfg.x0, cfg.horizon)
        y_star = reference_fixed_point(cfg)
        if y_star is None or traj.diverged:
            return {"value": value, "converged": False, "final_error": None, "fitted_rho": None}
        err = float(traj.error_to(y_star)[-1])
        try:
            rho = rate_fit(traj, y_star).rho
        except NotConvergedError:
            rho = None
        return {"value": value, "converged": err < CONVERGED_TOL, "final_error": err, "fitted_rho": rho}

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, values))
    return [one(v) for v in values]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_sweep(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["value", "converged", "final_error", "fitted_rho"])
    for r in rows:
        w.writerow([_fmt(r["value"]), _fmt(r["converged"]), _fmt(r["final_error"]), _fmt(r["fitted_rho"])])


def _parse_values(text: str) -> list:
    return [t for t in (s.strip() for s in text.split(",")) if t]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--horizon", type=int, help="override the config horizon")

    parser = argparse.ArgumentParser(prog="fbconsensus", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate and write CSV/report/plot data")
    sub.add_parser("verify", parents=[common], help="check the convergence hypotheses")
    sp = sub.add_parser("sweep", parents=[common], help="sweep one parameter")
    sp.add_argument("--param", required=True)
    sp.add_argument("--values", default="", help="comma separated values")
    sp.add_argument("--workers", type=int, default=1)
    sub.add_parser("fig2", parents=[common], help="simulate the bundled 20-agent optimisation config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fig2":
            raw = load_raw(args.config) if args.config else bundled_raw("fig2")
        else:
            if not args.config:
                raise ConfigError("--config is required")
            raw = load_raw(args.config)

        if args.command in ("simulate", "fig2"):
            cfg = build_config(raw, seed=args.seed, horizon=args.horizon)
            code, report = run_simulate(cfg, args.out)
            if code == EXIT_DIVERGED:
                print(
                    f"divergence: state exceeded 1e12 after {report['steps_recorded'] - 1} steps "
                    f"(scalar system status: {report['lure_check']['status']})",
                    file=sys.stderr,
                )
            else:
                print(f"{cfg.name}: {report['status']}, final error {report['final_error']}")
            return code

        if args.command == "verify":
            cfg = build_config(raw, seed=args.seed, horizon=args.horizon)
            ok, lines = run_verify(cfg)
            for name, status, detail in lines:
                print(f"{name:<12} {status:<13} {detail}")
            return EXIT_OK if ok else EXIT_DIVERGED

        rows = sweep_rows(raw, args.param, _parse_values(args.values), args.seed, args.horizon, args.workers)
        if args.out and args.out != ".":
            os.makedirs(args.out, exist_ok=True)
            name = build_config(raw, seed=args.seed, horizon=args.horizon).name if rows else raw.get("name", "sweep")
            path = os.path.join(args.out, f"{name}.sweep_{args.param}.csv")
            with open(path, "w", newline="") as fh:
                write_sweep(rows, fh)
        else:
            write_sweep(rows, sys.stdout)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
