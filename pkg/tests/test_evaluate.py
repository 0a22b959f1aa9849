import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from expertrecon.continuous import ContinuousModelSpec, run_continuous
from expertrecon.evaluate import (
    CalibrationCurve,
    ScoredForecaster,
    avg_log_score,
    calibration_curve,
    equal_weights_cdf,
    equal_weights_pdf,
    fit_expert,
    paired_score_comparison,
    reconciled_density,
)
from expertrecon.judgements import QuantileJudgement
from expertrecon.simulate import PanelScenario, score_comparison_study
from expertrecon.sll import OrderingError, QuantileTriplet, sll_pdf, sll_quantile, solve_sll
from expertrecon.standardize import DecisionMakerPrior

from oracles import paired_mean_positive


def uniform(lo, hi):
    return lambda x: 1.0 / (hi - lo) if lo <= x <= hi else 0.0


# -- fitting and pooling -------------------------------------------------------

def test_fit_expert_delegates():
    t = QuantileTriplet(1, 2, 4)
    assert fit_expert(t) == solve_sll(t)
    with pytest.raises(OrderingError):
        fit_expert(QuantileTriplet(2, 2, 4))


def test_pool_single_and_duplicate():
    e = fit_expert(QuantileTriplet(1, 2, 4))
    x = np.linspace(0, 8, 17)
    np.testing.assert_allclose(equal_weights_pdf([e], x), sll_pdf(e, x))
    np.testing.assert_allclose(equal_weights_pdf([e, e], x), equal_weights_pdf([e], x))
    with pytest.raises(ValueError):
        equal_weights_pdf([], 1.0)


def test_pool_integrates_to_one():
    experts = [fit_expert(QuantileTriplet(*t)) for t in [(1, 2, 4), (0, 3, 5), (2, 2.5, 2.8)]]
    knots = sorted({sll_quantile(e, p) for e in experts
                    for p in (1e-12, 0.01, 0.25, 0.5, 0.75, 0.99, 1 - 1e-12)})
    total = sum(integrate.quad(lambda x: equal_weights_pdf(experts, x), a, b,
                               epsabs=1e-12, epsrel=1e-12, limit=200)[0]
                for a, b in zip(knots[:-1], knots[1:]))
    assert total == pytest.approx(1.0, abs=1e-6)
    assert equal_weights_cdf(experts, knots[-1]) == pytest.approx(1.0, abs=1e-9)


# -- log score -----------------------------------------------------------------

def test_uniform_log_scores():
    assert avg_log_score(ScoredForecaster("u", [uniform(0, 1)]), [0.5]) == 0.0
    assert avg_log_score(ScoredForecaster("u", [uniform(0, 10)]), [5]) == pytest.approx(-2.30259, abs=1e-5)


def test_zero_density_flagged_and_optionally_dropped():
    f = ScoredForecaster("u", [uniform(0, 1), uniform(0, 1)])
    assert avg_log_score(f, [0.5, 3.0]) == -np.inf
    assert f.flags and "[1]" in f.flags[0]
    g = ScoredForecaster("u", [uniform(0, 1), uniform(0, 1)])
    assert avg_log_score(g, [0.5, 3.0], drop_nonfinite=True) == 0.0
    assert "excluded" in g.flags[0]


def test_length_mismatch():
    with pytest.raises(ValueError):
        avg_log_score(ScoredForecaster("u", [uniform(0, 1)]), [0.1, 0.2])


@given(st.permutations(list(range(6))))
@settings(max_examples=30, deadline=None)
def test_score_invariant_to_quantity_order(perm):
    params = [fit_expert(QuantileTriplet(k, k + 1, k + 3)) for k in range(6)]
    x = [k + 0.7 for k in range(6)]
    base = avg_log_score(ScoredForecaster.from_sll("a", params), x)
    shuffled = avg_log_score(ScoredForecaster.from_sll("a", [params[i] for i in perm]),
                             [x[i] for i in perm])
    assert shuffled == pytest.approx(base, rel=1e-12)


def test_reconciled_mixture_density_normalised():
    prior = DecisionMakerPrior.uniform(0, 10)
    panel = [QuantileJudgement(f"x{i}", g, QuantileTriplet(*t)) for i, (t, g) in
             enumerate(zip([(1, 2, 4), (2, 3, 5), (1.5, 2.5, 6)], "aab"))]
    chain = run_continuous(panel, prior, ContinuousModelSpec(seed=1, warmup=300, kept=200,
                                                             chains=2))
    mix = reconciled_density(chain, prior)
    xs = np.linspace(-20, 30, 20001)
    assert integrate.trapezoid(mix.pdf(xs), xs) == pytest.approx(1.0, abs=5e-3)
    assert 0 < mix.cdf(2.5) < 1


def test_reconciled_beats_equal_weights_in_simulation():
    spec = ContinuousModelSpec(v_bar=1, v_bar_k=0.25, d1=0.5, d2=0.5)
    res = score_comparison_study(PanelScenario(groups=(7, 2, 2), n_quantities=10, spec=spec),
                                 replications=100, seed=1)
    assert res.reconciled.shape == (100,)
    assert res.reconciled_wins >= 0.6


# -- calibration -----------------------------------------------------------------

def test_perfect_calibration_on_diagonal():
    rng = np.random.default_rng(0)
    vals = rng.permutation(np.arange(1, 12) / 11)
    curve = calibration_curve(vals)
    for e, u in curve.points:
        assert e == pytest.approx(u, abs=1e-15)
    assert curve.max_deviation < 1e-15


def test_degenerate_calibration():
    curve = calibration_curve([0.99] * 11)
    assert curve.max_deviation == pytest.approx(0.99 - 1 / 11)
    assert curve.ks_statistic == pytest.approx(0.99)


def ks_oracle(values):
    v = np.sort(values)
    grid = np.unique(np.r_[0.0, v, 1.0])
    # ECDF jumps at the data; check both sides of every jump
    eps = 1e-12
    t = np.r_[grid, grid - eps, grid + eps]
    t = t[(t >= 0) & (t <= 1)]
    ecdf = np.searchsorted(v, t, side="right") / v.size
    return np.max(np.abs(ecdf - t))


@given(st.lists(st.floats(0.001, 0.999), min_size=1, max_size=40))
@settings(max_examples=100, deadline=None)
def test_ks_statistic_matches_direct_oracle(values):
    assert calibration_curve(values).ks_statistic == pytest.approx(ks_oracle(values), abs=1e-9)


def test_calibration_domain():
    with pytest.raises(ValueError):
        calibration_curve([0.2, 1.2])
    with pytest.raises(ValueError):
        calibration_curve([])


# -- paired comparison -------------------------------------------------------------

def test_identical_scores_give_half():
    a = np.random.default_rng(1).normal(size=45)
    assert paired_score_comparison(a, a) == 0.5


def test_overwhelming_difference():
    b = np.random.default_rng(2).normal(size=45)
    assert paired_score_comparison(b + 10, b) > 0.999


def test_small_shift_matches_oracle():
    rng = np.random.default_rng(3)
    b = rng.normal(-1.5, 0.6, 45)
    a = b + rng.normal(0.08, 0.5, 45)
    got = paired_score_comparison(a, b, seed=4)
    assert got == pytest.approx(paired_mean_positive(a - b), abs=0.01)


def test_swapping_sides_is_complementary():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=45), rng.normal(size=45)
    total = paired_score_comparison(a, b, seed=1) + paired_score_comparison(b, a, seed=1)
    assert total == pytest.approx(1.0, abs=0.01)


def test_paired_preconditions():
    with pytest.raises(ValueError):
        paired_score_comparison([1, 2], [1, 2])
    with pytest.raises(ValueError):
        paired_score_comparison([1, 2, 3], [1, 2])
    with pytest.raises(ValueError):
        paired_score_comparison([1, 2, -np.inf], [1, 2, 3])
