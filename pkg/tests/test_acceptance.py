"""Acceptance checks, one per criterion.

Each check returns ``(ok, detail)`` and prints a single PASS/FAIL line.
Run under pytest, or directly with ``python3 tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from fbconsensus import (
    FeedbackSpec,
    MatrixSequenceSpec,
    SwitchedSet,
    TopologySchedule,
    UtilityFamily,
    build_feedback,
    closed_form_quadratic,
    dobrushin_coefficient,
    ergodic_counterexample,
    ergodicity_report,
    from_topology,
    linearize,
    lyapunov_v,
    mu_bound,
    optimal_consensus,
    random_quadratic_family,
    rate_fit,
    run_fig2_experiment,
    simulate,
    simulate_lure,
    validate_stochastic,
)
from fbconsensus.cli import main as cli_main
from fbconsensus.config import bundled_raw

ROUNDOFF = 1e-12


def random_stochastic(rng, n, sparsity=0.0):
    A = rng.random((n, n))
    if sparsity:
        A *= rng.random((n, n)) >= sparsity
        A[np.arange(n), np.arange(n)] += 0.1
    return A / A.sum(axis=1, keepdims=True)


def fixture_family():
    return UtilityFamily.quadratic([0.5, 0.5, 0.5], [1.0, -2.0, 4.0], [0.0, 0.0, 0.0])


def check_lyapunov_contraction():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_v = worst_s = -np.inf
    for i in range(1000):
        n = (2, 5, 20)[i % 3]
        P = np.asarray(validate_stochastic(random_stochastic(rng, n, rng.uniform(0, 0.8))))
        x = rng.uniform(-100, 100, n) * 10.0 ** rng.integers(-3, 3)
        y = P @ x
        worst_v = max(worst_v, lyapunov_v(y) - lyapunov_v(x))
        worst_s = max(worst_s, x.min() - y.min(), y.max() - x.max())
    dt = time.perf_counter() - t0
    ok = worst_v <= ROUNDOFF and worst_s <= ROUNDOFF and dt < 5
    return ok, f"max V increase {worst_v:.2e}, max sandwich breach {worst_s:.2e}, {dt:.2f}s"


def _random_feedback(rng, n):
    kind = rng.integers(3)
    if kind == 0:
        fam = UtilityFamily.quadratic(rng.uniform(0.1, 2, n), rng.uniform(-3, 3, n))
        return build_feedback(fam, rng.uniform(0.1, 0.9) * mu_bound(fam).upper)
    if kind == 1:
        mu, r = rng.uniform(0.01, 0.5) / n, rng.uniform(-5, 5)
        return FeedbackSpec.output_regulation(n, mu, r, lambda x: float(np.sum(x)), lambda x: np.ones(len(x)))
    knots = np.sort(rng.uniform(-10, 10, 5))
    return FeedbackSpec.table(n, knots, rng.uniform(-2, 2, 5))


def check_lure_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(2, 8))
        if i % 2:
            seq = from_topology(TopologySchedule(n=n, period=int(rng.integers(1, 5)), eta=0.1), seed=i)
        else:
            seq = MatrixSequenceSpec.periodic([random_stochastic(rng, n, 0.5) for _ in range(3)])
        G = _random_feedback(rng, n)
        y0 = rng.uniform(-50, 50)
        traj = simulate(seq, G, np.full(n, y0), 200)
        ys = simulate_lure(G, y0, 200).y
        if len(traj) != len(ys):
            return False, f"config {i}: trajectory lengths differ"
        rel = np.abs(traj.x - ys[:, None]) / (1 + np.abs(ys[:, None]))
        worst = max(worst, rel.max())
    dt = time.perf_counter() - t0
    return worst <= 1e-10 and dt < 10, f"max scaled gap {worst:.2e}, {dt:.2f}s"


def check_consensus_under_feedback():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    accepted = tried = 0
    while accepted < 50:
        tried += 1
        n = int(rng.integers(3, 10))
        if tried % 2:
            seq = from_topology(TopologySchedule(n=n, period=int(rng.integers(2, 6)), eta=0.05), seed=tried)
        else:
            seq = MatrixSequenceSpec.periodic([random_stochastic(rng, n, 0.6) for _ in range(4)])
        if ergodicity_report(seq, 2000).verdict(0) != "apparently_ergodic":
            continue
        accepted += 1
        # bounded, not a contraction: |G| <= 3 everywhere
        c, w = rng.uniform(-5, 5), rng.uniform(0.5, 3)
        G = FeedbackSpec.from_callable(n, lambda x, c=c, w=w: float(w * np.sin(np.mean(x) - c) + np.cos(x[0])))
        traj = simulate(seq, G, rng.uniform(-100, 100, n), 2000)
        worst = max(worst, traj.dist_E[-1])
    dt = time.perf_counter() - t0
    return worst < 1e-8 and dt < 30, f"{accepted} sequences ({tried} drawn), max dist_E(2000) {worst:.2e}, {dt:.2f}s"


def check_fig2_analogue():
    t0 = time.perf_counter()
    worst_err = worst_dv = 0.0
    for seed in range(10):
        res = run_fig2_experiment(seed=seed, n=20, mu=0.01, horizon=10000)
        fam = res.family
        assert np.all((fam.params["a"] > 0) & (fam.params["a"] < 1))
        y_star = closed_form_quadratic(fam)
        if res.trajectory.status != "ok":
            return False, f"seed {seed} diverged"
        worst_err = max(worst_err, res.trajectory.error_to(y_star)[-1])
        worst_dv = max(worst_dv, np.diff(res.trajectory.V).max())
    dt = time.perf_counter() - t0
    ok = worst_err < 1e-6 and worst_dv <= ROUNDOFF and dt < 60
    return ok, f"max final error {worst_err:.2e}, max V increase {worst_dv:.2e}, {dt:.2f}s"


def check_lambda_cross_check():
    fam = fixture_family()
    G = build_feedback(fam, 0.1)
    y_star = optimal_consensus(fam)
    J = np.full((3, 3), 1.0 / 3.0)
    lam = linearize(J, G, y_star).lam
    h = G.lure()
    fd = (h(y_star + 1e-6) - h(y_star - 1e-6)) / 2e-6
    traj = simulate(MatrixSequenceSpec.constant(J), G, np.array([3.0, -1.0, 2.0]), 200)
    rho = rate_fit(traj, y_star).rho
    ok = abs(lam - 0.7) <= 1e-6 and abs(fd - lam) <= 1e-6 and abs(rho - abs(lam)) <= 0.05
    return ok, f"lambda {lam:.12f}, fd h' {fd:.9f}, fitted rho {rho:.4f}"


def check_mu_bound():
    fam = fixture_family()
    upper = mu_bound(fam).upper
    stable = simulate_lure(build_feedback(fam, 0.99 * upper), 0.0, 5000)
    unstable = simulate_lure(build_feedback(fam, 1.5 * upper), 0.0, 5000)
    conv = stable.status == "ok" and abs(stable.y[-1] - optimal_consensus(fam)) < 1e-6
    div = unstable.status == "non_finite" and abs(unstable.y[-1]) > 1e12
    ok = conv and div and upper == 2.0 / 3.0
    return ok, f"upper {upper!r}, 0.99x final {stable.y[-1]:.9f}, 1.5x final |y| {abs(unstable.y[-1]):.2e}"


def check_counterexample():
    seq = ergodic_counterexample(3)
    rep = ergodicity_report(seq, 200, tail_starts=(0, 1))
    v0, v1 = rep.verdict(0), rep.verdict(1)
    return v0 == "apparently_ergodic" and v1 == "apparently_non_ergodic", f"k0=0: {v0}, k0=1: {v1}"


def _scrambling_set(rng, n=5, count=3):
    mats = []
    while len(mats) < count:
        P = random_stochastic(rng, n, 0.4)
        if dobrushin_coefficient(P) < 1.0:
            mats.append(P)
    return mats


def check_switched_suite():
    rng = np.random.default_rng(8)
    mats = _scrambling_set(rng)
    fam = random_quadratic_family(8, 5)
    G = build_feedback(fam, 0.5 * mu_bound(fam).upper)
    y_star = optimal_consensus(fam)
    worst_err = worst_rho = 0.0
    runs = 0
    for rule in ("uniform_random", "round_robin"):
        seq = MatrixSequenceSpec.switched(SwitchedSet(mats, rule), seed=8)
        for _ in range(20):
            traj = simulate(seq, G, rng.uniform(-100, 100, 5), 3000)
            err = traj.error_to(y_star)[-1]
            worst_err = max(worst_err, err)
            worst_rho = max(worst_rho, rate_fit(traj, y_star).rho if err < 1e-6 else np.inf)
            runs += 1
    ok = worst_err < 1e-6 and worst_rho < 1
    return ok, f"{runs} runs, max final error {worst_err:.2e}, max fitted rho {worst_rho:.4f}"


def _golden(fam, y_star):
    w = 10.0 * (1.0 + abs(y_star))
    return minimize_scalar(fam.total, bracket=(y_star - w, y_star + w), method="golden", tol=1e-12).x


def check_oracle_equivalence():
    rng = np.random.default_rng(9)
    worst = 0.0
    for i in range(25):
        n = int(rng.integers(1, 10))
        if i % 2:
            fam = UtilityFamily.log_cosh(
                rng.uniform(0.05, 1, n), rng.uniform(-3, 3, n), rng.uniform(0, 3, n), rng.uniform(-3, 3, n)
            )
        else:
            fam = UtilityFamily.quadratic(rng.uniform(0.05, 1, n), rng.uniform(-3, 3, n), rng.uniform(-1, 1, n))
        y = optimal_consensus(fam)
        worst = max(worst, abs(y - _golden(fam, y)))
    return worst <= 1e-6, f"25 families, max |y* - golden| {worst:.2e}"


def check_reproducibility(tmp_dir):
    import json
    import os

    cfg = os.path.join(tmp_dir, "fig2.json")
    with open(cfg, "w") as fh:
        json.dump(bundled_raw("fig2"), fh)
    blobs = []
    for run in ("a", "b"):
        out = os.path.join(tmp_dir, run)
        code = cli_main(["simulate", "--config", cfg, "--out", out])
        with open(os.path.join(out, "fig2.csv"), "rb") as fh:
            blobs.append(fh.read())
        if code != 0:
            return False, f"simulate exited {code}"
    return blobs[0] == blobs[1], f"{len(blobs[0])} bytes, identical={blobs[0] == blobs[1]}"


CHECKS = [
    (1, "lyapunov contraction", check_lyapunov_contraction),
    (2, "lure equivalence", check_lure_equivalence),
    (3, "consensus under bounded feedback", check_consensus_under_feedback),
    (4, "20-agent optimisation", check_fig2_analogue),
    (5, "feedback eigenvalue", check_lambda_cross_check),
    (6, "gain bound", check_mu_bound),
    (7, "ergodicity counterexample", check_counterexample),
    (8, "switched systems", check_switched_suite),
    (9, "optimum oracle", check_oracle_equivalence),
    (10, "reproducibility", check_reproducibility),
]


def _line(num, name, ok, detail):
    return f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"


@pytest.mark.parametrize("num,name,check", CHECKS, ids=[f"c{n}" for n, _, _ in CHECKS])
def test_acceptance(num, name, check, capsys, tmp_path):
    ok, detail = check(str(tmp_path)) if num == 10 else check()
    with capsys.disabled():
        print("\n" + _line(num, name, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    import sys
    import tempfile

    failures = 0
    for num, name, check in CHECKS:
        with tempfile.TemporaryDirectory() as tmp:
            ok, detail = check(tmp) if num == 10 else check()
        failures += not ok
        print(_line(num, name, ok, detail), flush=True)
    sys.exit(1 if failures else 0)
