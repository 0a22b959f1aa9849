import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from expertrecon.diagnostics import mcse_mean
from expertrecon.events import (
    EventData,
    EventModelSpec,
    EventState,
    event_log_posterior,
    mwg_update,
    prior_correlation,
    prior_correlation_exact,
    reconcile_event,
    sample_events,
    sensitivity_curve,
)
from expertrecon.judgements import EventJudgement, PanelError

from oracles import beta_hierarchy_grid

G1 = [0.44, 0.49, 0.48, 0.39, 0.33, 0.35, 0.41, 0.41]
G2 = [0.09, 0.11]
FAST = dict(warmup=1000, kept=2000, chains=2)


def event_panel(g1=G1, g2=G2, labels=("g1", "g2")):
    out = [EventJudgement(f"e{i + 1}", labels[0], p) for i, p in enumerate(g1)]
    out += [EventJudgement(f"e{len(g1) + i + 1}", labels[1], p) for i, p in enumerate(g2)]
    return out


def pump_failure_data():
    return EventData.from_groups({"g1": G1, "g2": G2})


# -- log posterior ---------------------------------------------------------

def oracle_log_posterior(p, p_g, n_W, n_B, groups, spec):
    total = 0.0
    for pg, probs in zip(p_g, groups):
        total += stats.beta.logpdf(probs, n_W * pg, n_W * (1 - pg)).sum()
        total += stats.beta.logpdf(pg, n_B * p, n_B * (1 - p))
    total += stats.gamma.logpdf(n_W, spec.a_W, scale=1 / spec.b_W)
    total += stats.gamma.logpdf(n_B, spec.a_B, scale=1 / spec.b_B)
    total += stats.beta.logpdf(p, spec.dm_alpha, spec.dm_beta)
    return total


def test_log_posterior_matches_independent_oracle():
    spec = EventModelSpec()
    data = pump_failure_data()
    # canonical order puts the two-expert group first
    assert data.labels == ("g2", "g1")
    state = EventState(0.31, np.array([0.12, 0.42]), 7.3, 4.1)
    expected = oracle_log_posterior(0.31, [0.12, 0.42], 7.3, 4.1, [G2, G1], spec)
    assert event_log_posterior(state, data, spec) == pytest.approx(expected, abs=1e-10)


def test_uniform_group_term_is_zero():
    spec = EventModelSpec(fixed_n_W=3.0, fixed_n_B=2.0)
    data = EventData.from_groups({"g": [0.5]})
    state = EventState(0.5, np.array([0.5]), 3.0, 2.0)
    within = stats.beta.logpdf(0.5, 1.5, 1.5)
    assert event_log_posterior(state, data, spec) == pytest.approx(within, abs=1e-12)


def test_concentration_grows_without_bound():
    spec = EventModelSpec(fixed_n_W=1.0, fixed_n_B=2.0)
    data = EventData.from_groups({"g": [0.3]})
    vals = [event_log_posterior(EventState(0.5, np.array([0.3]), n, 2.0), data, spec)
            for n in (10.0, 1e3, 1e5, 1e7)]
    assert np.all(np.diff(vals) > 0) and vals[-1] > 5


def test_boundary_state_is_rejected():
    with pytest.raises(ValueError):
        event_log_posterior(EventState(1.0, np.array([0.5, 0.5]), 2, 2), pump_failure_data(),
                            EventModelSpec())


def test_boundary_probabilities_clamped_with_warning():
    data = EventData.from_groups({"a": [0.0, 0.2], "b": [1.0, 0.7]},
                                 {"a": ["x1", "x2"], "b": ["x4", "x3"]})
    assert data.warnings and min(min(v) for v in data.values) == pytest.approx(1e-4)
    assert any("x1" in w for w in data.warnings)


# -- kernel ----------------------------------------------------------------

def test_zero_scale_leaves_state_unchanged():
    data = pump_failure_data()
    state = EventState(0.3, np.array([0.1, 0.4]), 10.0, 10.0)
    new = mwg_update(state, data, EventModelSpec(), np.random.default_rng(1), scales=np.zeros(5))
    assert new.p == state.p and new.n_W == state.n_W and new.n_B == state.n_B
    np.testing.assert_array_equal(new.p_g, state.p_g)


def test_update_keeps_support():
    data = pump_failure_data()
    rng = np.random.default_rng(2)
    state = EventState(0.3, np.array([0.1, 0.4]), 10.0, 10.0)
    for _ in range(200):
        state = mwg_update(state, data, EventModelSpec(), rng, scales=np.full(5, 3.0))
        assert 0 < state.p < 1 and np.all((state.p_g > 0) & (state.p_g < 1))
        assert state.n_W > 0 and state.n_B > 0


def test_grid_oracle_two_experts_fixed_sizes():
    x, n_W, n_B = (0.3, 0.45), 10.0, 5.0
    spec = EventModelSpec(fixed_n_W=n_W, fixed_n_B=n_B, warmup=1000, kept=5000, chains=4,
                          seed=5)
    draws, _ = sample_events(EventData.from_groups({"g": list(x)}), spec)
    p = draws[:, :, 0]
    assert np.all(draws[:, :, -2] == n_W) and np.all(draws[:, :, -1] == n_B)
    assert abs(p.mean() - beta_hierarchy_grid(x, n_W, n_B)) < 3 * mcse_mean(p)


def test_adaptation_targets_acceptance():
    _, chain = reconcile_event(event_panel(), EventModelSpec(seed=1))
    acc = np.asarray(chain.meta["acceptance"])
    assert np.all((acc >= 0.25) & (acc <= 0.6)), acc


# -- reconcile ---------------------------------------------------------------

def test_pump_failure_reconciled():
    prob, chain = reconcile_event(event_panel(), EventModelSpec(seed=20240601))
    assert prob == pytest.approx(0.30, abs=0.03)
    assert chain.converged


def test_consensus_shrinks_to_shared_value():
    panel = event_panel([0.35] * 8, [0.35] * 2)
    prob, _ = reconcile_event(panel, EventModelSpec(seed=1, **FAST))
    assert 0.30 < prob < 0.40
    tight, _ = reconcile_event(panel, EventModelSpec(a_W=2000, a_B=2000, seed=1, **FAST))
    assert abs(tight - 0.35) < abs(prob - 0.35) + 1e-3 and abs(tight - 0.35) < 0.01


def test_single_group_is_closer_to_equal_weights():
    spec = EventModelSpec(seed=3, **FAST)
    two, _ = reconcile_event(event_panel(), spec)
    one, _ = reconcile_event(event_panel(labels=("g1", "g1")), spec)
    assert abs(one - 0.35) < abs(two - 0.35)


def test_label_symmetry_gives_identical_p_chain():
    spec = EventModelSpec(seed=4, warmup=200, kept=300, chains=2)
    _, a = reconcile_event(event_panel(), spec)
    _, b = reconcile_event(event_panel(labels=("zz", "aa")), spec)
    np.testing.assert_array_equal(a["p"], b["p"])


def test_determinism():
    spec = EventModelSpec(seed=4, warmup=200, kept=300, chains=2)
    np.testing.assert_array_equal(reconcile_event(event_panel(), spec)[1].draws,
                                  reconcile_event(event_panel(), spec)[1].draws)


def test_preconditions():
    with pytest.raises(PanelError):
        reconcile_event([EventJudgement("e1", "g", 0.4)])
    mixed = [EventJudgement("e1", "g", 0.4, quantity="a"), EventJudgement("e2", "g", 0.5, quantity="b")]
    with pytest.raises(PanelError):
        reconcile_event(mixed)


def test_uniform_prior_consistency_single_expert():
    for p_star in (0.2, 0.7):
        spec = EventModelSpec(a_W=500, a_B=500, seed=6, **FAST)
        draws, _ = sample_events(EventData.from_groups({"g": [p_star]}), spec)
        assert draws[:, :, 0].mean() == pytest.approx(p_star, abs=0.02)


def test_sensitivity_grid_small():
    grid = sensitivity_curve(event_panel(), EventModelSpec(seed=2, warmup=500, kept=1000,
                                                           chains=2),
                             a_values=[2, 200], dm_means=[0.05, 0.5])
    assert grid.values.shape == (2, 2)
    assert np.all(np.diff(grid.values, axis=1) >= 0)
    assert abs(grid.row(200)[1] - grid.row(200)[0]) < 0.05


# -- prior correlation -------------------------------------------------------

def test_same_group_large_a_W_tends_to_one():
    spec = EventModelSpec(a_W=1e6, b_W=1.0)
    assert prior_correlation(spec, True, rng=np.random.default_rng(0)) > 0.999
    assert prior_correlation_exact(spec, True) > 0.999


def test_different_group_correlation_increases_with_a():
    lo = EventModelSpec(a_W=2, a_B=2, b_W=2, b_B=2)
    hi = EventModelSpec(a_W=200, a_B=200, b_W=2, b_B=2)
    rng = np.random.default_rng
    assert prior_correlation(hi, False, rng=rng(1)) > prior_correlation(lo, False, rng=rng(1))
    assert prior_correlation_exact(hi, False) > prior_correlation_exact(lo, False)


def test_near_independent_case():
    spec = EventModelSpec(a_B=1e-3, b_B=1e3, dm_alpha=200, dm_beta=200)
    assert abs(prior_correlation(spec, False, rng=np.random.default_rng(2))) < 0.1


@pytest.mark.parametrize("rao_blackwell", [True, False])
@pytest.mark.parametrize("same", [True, False])
def test_monte_carlo_matches_closed_form(same, rao_blackwell):
    spec = EventModelSpec(a_W=4, b_W=2, a_B=6, b_B=2)
    mc = prior_correlation(spec, same, mc_draws=200000, rng=np.random.default_rng(3),
                           rao_blackwell=rao_blackwell)
    assert mc == pytest.approx(prior_correlation_exact(spec, same), abs=0.01)


def test_prior_correlation_needs_enough_draws():
    with pytest.raises(ValueError):
        prior_correlation(EventModelSpec(), False, mc_draws=10)


@given(st.floats(0.5, 50), st.floats(0.5, 50), st.floats(0.5, 5))
@settings(max_examples=30, deadline=None)
def test_correlation_bounds(a_W, a_B, b):
    spec = EventModelSpec(a_W=a_W, a_B=a_B, b_W=b, b_B=b)
    same, diff = prior_correlation_exact(spec, True), prior_correlation_exact(spec, False)
    assert -1e-12 <= diff <= same <= 1 + 1e-12
