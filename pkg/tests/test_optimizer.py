import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from fbconsensus import (
    UtilityFamily,
    build_feedback,
    closed_form_quadratic,
    mu_bound,
    optimal_consensus,
    random_quadratic_family,
    run_fig2_experiment,
    simulate_lure,
)
from fbconsensus.errors import BracketExpansionFailedError


def golden(fam, y_star):
    # independent oracle: derivative-free minimisation of the summed utility
    w = 10.0 * (1.0 + abs(y_star))
    res = minimize_scalar(fam.total, bracket=(y_star - w, y_star + w), method="golden", tol=1e-12)
    return res.x


class TestMuBound:
    def test_fixture(self, quad_family):
        assert mu_bound(quad_family).upper == pytest.approx(2.0 / 3.0)

    def test_single_agent(self):
        assert mu_bound(UtilityFamily.quadratic([1.0], [0.0])).upper == pytest.approx(1.0)

    def test_twenty_agents_admit_fig2_gain(self):
        for seed in range(10):
            fam = random_quadratic_family(seed, 20)
            b = mu_bound(fam)
            assert b.upper > 0.01 and b.admits(0.01)

    def test_open_interval(self, quad_family):
        b = mu_bound(quad_family)
        assert not b.admits(b.upper) and not b.admits(0.0)

    def test_log_cosh_uses_curvature_ceiling(self):
        fam = UtilityFamily.log_cosh([0.5, 1.0], [0.0, 0.0], [2.0, 0.0], [0.0, 0.0])
        assert mu_bound(fam).upper == pytest.approx(2.0 / (3.0 + 2.0))

    def test_sharpness(self, quad_family):
        # for quadratics h' = 1 - mu sum d_max, so the bound is exact
        upper = mu_bound(quad_family).upper
        inside = simulate_lure(build_feedback(quad_family, 0.99 * upper), 5.0, 3000)
        outside = simulate_lure(build_feedback(quad_family, 1.01 * upper), 5.0, 3000)
        assert inside.status == "ok" and abs(inside.y[-1] + 1.0) < 1e-6
        assert outside.status == "non_finite"


class TestOptimalConsensus:
    def test_fixture(self, quad_family):
        assert optimal_consensus(quad_family) == pytest.approx(-1.0, abs=1e-14)
        assert closed_form_quadratic(quad_family) == -1.0

    def test_constants_do_not_matter(self):
        f1 = UtilityFamily.quadratic([1.0, 2.0], [3.0, -1.0], [0.0, 0.0])
        f2 = UtilityFamily.quadratic([1.0, 2.0], [3.0, -1.0], [50.0, -7.0])
        assert optimal_consensus(f1) == optimal_consensus(f2)

    def test_far_minimiser(self):
        fam = UtilityFamily.quadratic([1e-3, 1e-3], [5.0, 5.0])
        assert optimal_consensus(fam) == pytest.approx(-2500.0, rel=1e-12)

    def test_root_exactly_on_bracket(self):
        fam = UtilityFamily.quadratic([0.5], [-1.0])
        assert optimal_consensus(fam) == 1.0

    def test_log_cosh_matches_golden_section(self):
        fam = UtilityFamily.log_cosh([0.2, 0.1, 0.4], [1.0, -3.0, 0.5], [1.0, 2.0, 0.3], [0.5, -1.0, 2.0])
        y = optimal_consensus(fam)
        assert abs(fam.gradient_sum(y)) < 1e-8
        assert y == pytest.approx(golden(fam, y), abs=1e-6)

    def test_no_root(self):
        fam = UtilityFamily.custom(
            [lambda x: 2 * x + x * np.arctan(x)], [lambda x: 2.0 + np.arctan(x)], d_min=[1e-9], d_max=[1.0]
        )
        with pytest.raises(BracketExpansionFailedError):
            optimal_consensus(fam)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.floats(0.01, 10), min_size=1, max_size=8),
        st.data(),
    )
    def test_first_order_condition(self, a, data):
        b = data.draw(st.lists(st.floats(-10, 10), min_size=len(a), max_size=len(a)))
        fam = UtilityFamily.quadratic(a, b)
        y = optimal_consensus(fam)
        assert abs(fam.gradient_sum(y)) < 1e-8 * (1 + np.abs(b).sum())
        assert y == pytest.approx(closed_form_quadratic(fam), abs=1e-10 * (1 + abs(y)))


class TestFeedback:
    def test_consensus_value(self, quad_family):
        G = build_feedback(quad_family, 0.1)
        for y in (-3.0, 0.0, 2.0):
            assert G(np.full(3, y)) == pytest.approx(-0.1 * (3 * y + 3))

    def test_only_aggregate_is_broadcast(self, quad_family):
        G = build_feedback(quad_family, 0.1)
        out = G(np.array([1.0, -2.0, 0.5]))
        assert np.ndim(out) == 0

    def test_gain_must_be_positive(self, quad_family):
        for mu in (0.0, -0.1):
            with pytest.raises(ValueError):
                build_feedback(quad_family, mu)

    def test_invalid_family(self):
        with pytest.raises(ValueError):
            UtilityFamily.quadratic([0.0, 1.0], [1.0, 2.0])


class TestRandomFamily:
    def test_open_range_and_determinism(self):
        a = random_quadratic_family(4, 20)
        b = random_quadratic_family(4, 20)
        assert np.array_equal(a.params["a"], b.params["a"])
        for key in "abc":
            v = a.params[key]
            assert np.all((v > 0) & (v < 1))

    def test_seeds_differ(self):
        assert not np.array_equal(random_quadratic_family(0, 5).params["b"], random_quadratic_family(1, 5).params["b"])


@pytest.fixture(scope="module")
def fig2_result():
    return run_fig2_experiment(seed=0, horizon=3000)


class TestFig2:
    @pytest.fixture
    def result(self, fig2_result):
        return fig2_result

    def test_converges_to_closed_form(self, result):
        r = result.report
        assert r["status"] == "ok"
        assert r["y_star"] == pytest.approx(r["y_star_closed_form"], abs=1e-12)
        assert r["final_consensus_error"] < 1e-6
        assert r["mu_admissible"]

    def test_optimum_is_negative(self, result):
        # positive a_i and b_i give y* = -sum b / (2 sum a) < 0
        assert result.report["y_star"] < 0

    def test_optimum_above_minus_one_for_twenty_agents(self):
        # sum b < 2 sum a is typical at n = 20 but not guaranteed:
        # a single agent with a = 0.1, b = 0.9 sits at -4.5
        for seed in range(10):
            assert -1 < closed_form_quadratic(random_quadratic_family(seed, 20)) < 0
        assert closed_form_quadratic(UtilityFamily.quadratic([0.1], [0.9])) == pytest.approx(-4.5)

    def test_spread_nonincreasing(self, result):
        V = np.asarray(result.report["V_series"])
        assert np.all(np.diff(V) <= 1e-12)

    def test_rate_below_one(self, result):
        assert 0 < result.report["fitted_rho"] < 1

    def test_reproducible(self, result):
        again = run_fig2_experiment(seed=0, horizon=3000)
        assert np.array_equal(again.trajectory.x, result.trajectory.x)
