"""Synthetic expert panels and calibration checks of the reconciliation models.

Panels are generated by running the hierarchies forwards.  The checks work on
the standardized scale, so that the decision-maker back-transform does not
mix into what is being tested.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml
from scipy import stats

from .continuous import (
    ContinuousData,
    ContinuousModelSpec,
    ContinuousState,
    sample_continuous,
)
from .events import EventData, EventModelSpec, EventState, beta_draw, sample_events
from .judgements import EventJudgement, QuantileJudgement
from .sll import QuantileTriplet, cdf_arrays, pdf_arrays, quantile_arrays, solve_sll_arrays
from .standardize import DecisionMakerPrior, back_transform

__all__ = [
    "PanelScenario",
    "draw_continuous_truth",
    "draw_standardized_panel",
    "generate_continuous_panel",
    "generate_event_panel",
    "CoverageResult",
    "coverage_study",
    "event_rank_study",
    "ScoreStudyResult",
    "score_comparison_study",
    "load_scenario",
]


@dataclass(frozen=True)
class PanelScenario:
    """Group sizes plus either a fixed truth or the prior to draw one from.

    With ``truth=None`` every quantity draws its top-level parameters from
    the model prior in ``spec``; otherwise the truth's top-level values are
    used and group-level parameters are drawn from them.
    """

    groups: tuple[int, ...]
    truth: ContinuousState | EventState | None = None
    spec: ContinuousModelSpec | EventModelSpec = field(default_factory=ContinuousModelSpec)
    n_quantities: int = 1
    dm_low: float = 0.0
    dm_high: float = 1.0
    p_low: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not self.groups or any(int(g) < 1 for g in self.groups):
            raise ValueError("every group needs at least one expert")
        if self.n_quantities < 1:
            raise ValueError("need at least one quantity")

    @property
    def n_experts(self) -> int:
        return int(sum(self.groups))

    @property
    def labels(self) -> list[str]:
        return [f"g{k + 1}" for k in range(len(self.groups))]

    @property
    def dm_prior(self) -> DecisionMakerPrior:
        return DecisionMakerPrior.uniform(self.dm_low, self.dm_high)


def draw_continuous_truth(
    spec: ContinuousModelSpec, n_groups: int, rng: np.random.Generator, batch: tuple = ()
) -> ContinuousState:
    """Draw every parameter of the continuous hierarchy from its prior."""
    shape3 = batch + (3,)
    shapeg = shape3 + (n_groups,)
    v_tilde = 1.0 / rng.gamma(spec.a_tilde, 1.0 / spec.b_tilde, shape3)
    mu = spec.prior_mean + np.sqrt(spec.prior_var) * rng.standard_normal(shape3)
    mu_g = mu[..., None] + np.sqrt(v_tilde)[..., None] * rng.standard_normal(shapeg)
    v_g = 1.0 / rng.gamma(spec.a_g, 1.0 / spec.b_g, shapeg)
    return ContinuousState(mu, mu_g, v_g, v_tilde)


def draw_standardized_panel(
    sizes: Sequence[int], truth: ContinuousState, rng: np.random.Generator
) -> list[np.ndarray]:
    """Per-group arrays ``(..., n_g, 3)`` of (median, log gap 1, log gap 2)."""
    out = []
    for g, n in enumerate(sizes):
        loc = truth.mu_g[..., :, g]
        sd = np.sqrt(truth.v_g[..., :, g])
        z = rng.standard_normal(loc.shape[:-1] + (int(n), 3))
        out.append(loc[..., None, :] + sd[..., None, :] * z)
    return out


def _truth_for(scenario: PanelScenario, rng) -> ContinuousState:
    G = len(scenario.groups)
    if scenario.truth is None:
        return draw_continuous_truth(scenario.spec, G, rng)
    t = scenario.truth
    mu = np.broadcast_to(np.asarray(t.mu, dtype=float), (3,))
    v_tilde = np.broadcast_to(np.asarray(t.v_tilde, dtype=float), (3,))
    v_g = np.broadcast_to(np.asarray(t.v_g, dtype=float).reshape(3, -1), (3, G))
    mu_g = mu[:, None] + np.sqrt(v_tilde)[:, None] * rng.standard_normal((3, G))
    return ContinuousState(mu, mu_g, v_g, v_tilde)


def generate_continuous_panel(
    scenario: PanelScenario, rng: np.random.Generator | None = None
) -> list[QuantileJudgement]:
    """Quantile judgements for every expert and quantity of the scenario.

    Standardized values are turned into triplets through the scenario's
    uniform decision-maker prior.
    """
    rng = rng if rng is not None else np.random.default_rng(scenario.seed)
    prior = scenario.dm_prior
    out = []
    for j in range(scenario.n_quantities):
        truth = _truth_for(scenario, rng)
        blocks = draw_standardized_panel(scenario.groups, truth, rng)
        k = 0
        for label, values in zip(scenario.labels, blocks):
            for zm, l1, l2 in values:
                low, med, high = back_transform(
                    prior, np.array([zm - np.exp(l1)]), np.array([zm]), np.array([zm + np.exp(l2)])
                )
                out.append(QuantileJudgement(
                    expert=f"x{k + 1}",
                    group=label,
                    triplet=QuantileTriplet(float(low[0]), float(med[0]), float(high[0]),
                                            scenario.p_low),
                    quantity=f"q{j + 1}",
                ))
                k += 1
    return out


def generate_event_panel(
    scenario: PanelScenario, rng: np.random.Generator | None = None
) -> list[EventJudgement]:
    rng = rng if rng is not None else np.random.default_rng(scenario.seed)
    spec = scenario.spec if isinstance(scenario.spec, EventModelSpec) else EventModelSpec()
    out = []
    for j in range(scenario.n_quantities):
        if isinstance(scenario.truth, EventState):
            p, n_W, n_B = scenario.truth.p, scenario.truth.n_W, scenario.truth.n_B
        else:
            p = float(beta_draw(rng, spec.dm_alpha, spec.dm_beta))
            n_W = rng.gamma(spec.a_W, 1.0 / spec.b_W)
            n_B = rng.gamma(spec.a_B, 1.0 / spec.b_B)
        k = 0
        for label, size in zip(scenario.labels, scenario.groups):
            p_g = float(beta_draw(rng, n_B * p, n_B * (1 - p)))
            probs = beta_draw(rng, np.full(size, n_W * p_g), np.full(size, n_W * (1 - p_g)))
            for v in probs:
                out.append(EventJudgement(f"x{k + 1}", label, float(v), quantity=f"e{j + 1}"))
                k += 1
    return out


@dataclass
class CoverageResult:
    coverage: float
    level: float
    ranks: np.ndarray
    n_rank_draws: int
    pit: np.ndarray
    chi2_pvalue: float
    rank_bins: int

    @property
    def rank_counts(self) -> np.ndarray:
        width = (self.n_rank_draws + 1) // self.rank_bins
        return np.bincount(self.ranks // width, minlength=self.rank_bins)


def _rank_uniformity(ranks, n_draws, bins):
    width = (n_draws + 1) // bins
    counts = np.bincount(np.asarray(ranks) // width, minlength=bins)
    return float(stats.chisquare(counts).pvalue)


def _thin_index(total: int, L: int) -> np.ndarray:
    return np.linspace(0, total - 1, L).round().astype(int)


def coverage_study(
    scenario: PanelScenario,
    replications: int = 500,
    level: float = 0.9,
    seed: int = 0,
    spec: ContinuousModelSpec | None = None,
    rank_draws: int = 199,
    rank_bins: int = 20,
) -> CoverageResult:
    """Simulation-based calibration of the continuous model.

    Each replication draws a truth from the prior, a panel from the truth and
    a realised value from the truth's reconciled-level distribution.  The
    posterior-predictive CDF at the realised value (averaged over draws) is
    checked against the central ``level`` band, and the rank of the true
    overall median among thinned posterior draws is collected.
    """
    if replications < 200:
        raise ValueError("use at least 200 replications")
    if not 0.0 < level <= 1.0:
        raise ValueError("level must lie in (0, 1]")
    if (rank_draws + 1) % rank_bins:
        raise ValueError("rank_draws + 1 must be a multiple of rank_bins")
    base = scenario.spec if isinstance(scenario.spec, ContinuousModelSpec) else ContinuousModelSpec()
    spec = spec or replace(base, warmup=500, kept=1000, chains=4)
    spec = replace(spec, seed=seed)
    rng = np.random.default_rng([seed, 104729])
    G = len(scenario.groups)
    R = replications

    truth = draw_continuous_truth(base, G, rng, batch=(R,))
    groups = draw_standardized_panel(scenario.groups, truth, rng)
    n = np.array(scenario.groups, dtype=float)
    ybar = np.stack([g.mean(axis=-2) for g in groups], axis=-1)
    ss = np.stack([((g - g.mean(axis=-2, keepdims=True)) ** 2).sum(axis=-2) for g in groups],
                  axis=-1)
    data = ContinuousData(n, ybar, ss, tuple(scenario.labels))

    draws = sample_continuous(data, spec, record_groups=False)["mu"]   # (C, K, R, 3)
    pooled = draws.reshape(-1, R, 3)

    # realised value from the truth's reconciled-level distribution
    t_mu, t_d1, t_d2 = truth.mu[:, 0], truth.mu[:, 1], truth.mu[:, 2]
    t_params = solve_sll_arrays(t_mu - np.exp(t_d1), t_mu, t_mu + np.exp(t_d2), scenario.p_low)
    theta = quantile_arrays(*t_params, rng.uniform(1e-12, 1 - 1e-12, R))

    mu, d1, d2 = pooled[..., 0], pooled[..., 1], pooled[..., 2]
    params = solve_sll_arrays(mu - np.exp(d1), mu, mu + np.exp(d2), scenario.p_low)
    pit = cdf_arrays(*params, theta[None, :]).mean(axis=0)
    tail = (1.0 - level) / 2.0
    inside = (pit >= tail) & (pit <= 1.0 - tail)

    idx = _thin_index(pooled.shape[0], rank_draws)
    ranks = (pooled[idx, :, 0] < truth.mu[None, :, 0]).sum(axis=0)
    return CoverageResult(
        coverage=float(inside.mean()),
        level=level,
        ranks=ranks,
        n_rank_draws=rank_draws,
        pit=pit,
        chi2_pvalue=_rank_uniformity(ranks, rank_draws, rank_bins),
        rank_bins=rank_bins,
    )


def event_rank_study(
    scenario: PanelScenario,
    replications: int = 200,
    seed: int = 0,
    spec: EventModelSpec | None = None,
    rank_draws: int = 99,
    rank_bins: int = 10,
) -> tuple[np.ndarray, float]:
    """Ranks of the true ``p`` among thinned posterior draws, and the
    chi-square uniformity p-value.

    Prior draws often land within the clamping margin of 0 or 1; the clamp
    warnings are expected here and are not logged.
    """
    base = scenario.spec if isinstance(scenario.spec, EventModelSpec) else EventModelSpec()
    spec = spec or replace(base, warmup=500, kept=1000, chains=2)
    rng = np.random.default_rng([seed, 7])
    ranks = np.empty(replications, dtype=int)
    events_log = logging.getLogger("expertrecon.events")
    level = events_log.level
    events_log.setLevel(logging.ERROR)
    try:
        _event_ranks(scenario, base, spec, rng, seed, ranks, rank_draws)
    finally:
        events_log.setLevel(level)
    return ranks, _rank_uniformity(ranks, rank_draws, rank_bins)


def _event_ranks(scenario, base, spec, rng, seed, ranks, rank_draws):
    for r in range(len(ranks)):
        p = float(beta_draw(rng, base.dm_alpha, base.dm_beta))
        n_W = rng.gamma(base.a_W, 1.0 / base.b_W)
        n_B = rng.gamma(base.a_B, 1.0 / base.b_B)
        groups = {}
        for label, size in zip(scenario.labels, scenario.groups):
            p_g = float(beta_draw(rng, n_B * p, n_B * (1 - p)))
            groups[label] = beta_draw(rng, np.full(size, n_W * p_g), np.full(size, n_W * (1 - p_g)))
        data = EventData.from_groups(groups)
        draws, _ = sample_events(data, replace(spec, seed=seed * 100_003 + r))
        pooled = draws[:, :, 0].reshape(-1)
        idx = _thin_index(pooled.size, rank_draws)
        ranks[r] = int((pooled[idx] < p).sum())


@dataclass
class ScoreStudyResult:
    """Per-replication mean log scores on the standardized scale."""

    reconciled: np.ndarray
    equal_weights: np.ndarray

    @property
    def reconciled_wins(self) -> float:
        """Fraction of replications where the reconciled score is at least as high."""
        return float(np.mean(self.reconciled >= self.equal_weights))


def _sll_from_z(m, l1, l2, p_low):
    return solve_sll_arrays(m - np.exp(l1), m, m + np.exp(l2), p_low)


def score_comparison_study(
    scenario: PanelScenario,
    replications: int = 100,
    seed: int = 0,
    spec: ContinuousModelSpec | None = None,
    n_draws: int = 400,
) -> ScoreStudyResult:
    """Log scores of the reconciled fit and the equal-weights pool.

    Each replication has ``scenario.n_quantities`` quantities.  Truth, panel
    and realised value are drawn as in :func:`coverage_study`; both
    forecasters are scored on the standardized scale, the reconciled one as a
    mixture over ``n_draws`` thinned posterior draws.
    """
    base = scenario.spec if isinstance(scenario.spec, ContinuousModelSpec) else ContinuousModelSpec()
    spec = spec or replace(base, warmup=500, kept=500, chains=2)
    spec = replace(spec, seed=seed)
    rng = np.random.default_rng([seed, 15485863])
    R, J = replications, scenario.n_quantities
    batch = (R * J,)
    truth = _truth_batch(scenario, base, rng, batch)
    groups = draw_standardized_panel(scenario.groups, truth, rng)
    n = np.array(scenario.groups, dtype=float)
    ybar = np.stack([g.mean(axis=-2) for g in groups], axis=-1)
    ss = np.stack([((g - g.mean(axis=-2, keepdims=True)) ** 2).sum(axis=-2) for g in groups],
                  axis=-1)
    data = ContinuousData(n, ybar, ss, tuple(scenario.labels))
    draws = sample_continuous(data, spec, record_groups=False)["mu"].reshape(-1, R * J, 3)
    draws = draws[_thin_index(draws.shape[0], n_draws)]

    p_low = scenario.p_low
    t_params = _sll_from_z(truth.mu[:, 0], truth.mu[:, 1], truth.mu[:, 2], p_low)
    theta = quantile_arrays(*t_params, rng.uniform(1e-12, 1 - 1e-12, R * J))

    rec = pdf_arrays(*_sll_from_z(draws[..., 0], draws[..., 1], draws[..., 2], p_low),
                     theta[None, :]).mean(axis=0)
    experts = np.concatenate(groups, axis=-2)                      # (R*J, I, 3)
    ew = pdf_arrays(*_sll_from_z(experts[..., 0], experts[..., 1], experts[..., 2], p_low),
                    theta[:, None]).mean(axis=-1)
    with np.errstate(divide="ignore"):
        rec_score = np.log(rec).reshape(R, J).mean(axis=1)
        ew_score = np.log(ew).reshape(R, J).mean(axis=1)
    return ScoreStudyResult(rec_score, ew_score)


def _truth_batch(scenario, base, rng, batch) -> ContinuousState:
    if scenario.truth is None:
        return draw_continuous_truth(base, len(scenario.groups), rng, batch)
    states = [_truth_for(scenario, rng) for _ in range(batch[0])]
    return ContinuousState(*(np.stack([getattr(s, k) for s in states])
                             for k in ("mu", "mu_g", "v_g", "v_tilde")))


def load_scenario(path) -> PanelScenario:
    """Read a scenario from a JSON or YAML mapping.

    Keys: ``groups`` (list of sizes, required), ``kind`` (continuous or
    event), ``n_quantities``, ``dm_low``, ``dm_high``, ``p_low``, ``seed`` and
    a ``continuous`` or ``event`` mapping of model settings, as in run
    configurations.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    doc = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    if not isinstance(doc, dict) or "groups" not in doc:
        raise ValueError(f"{path}: scenario needs a `groups` list")
    kind = doc.get("kind", "continuous")
    if kind == "event":
        spec = EventModelSpec(**doc.get("event", {}))
    elif kind == "continuous":
        spec = ContinuousModelSpec(**doc.get("continuous", {}))
    else:
        raise ValueError(f"{path}: unknown scenario kind {kind!r}")
    return PanelScenario(
        groups=tuple(int(g) for g in doc["groups"]),
        spec=spec,
        n_quantities=int(doc.get("n_quantities", 1)),
        dm_low=float(doc.get("dm_low", 0.0)),
        dm_high=float(doc.get("dm_high", 1.0)),
        p_low=float(doc.get("p_low", 0.05)),
        seed=int(doc.get("seed", 0)),
    )
