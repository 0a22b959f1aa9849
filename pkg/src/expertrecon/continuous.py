"""Hierarchical Normal reconciliation of quantile triplets.

Three parallel two-level Normal hierarchies are fitted on the standardized
scale: one to the expert medians and one to each log-gap
(``log(M - L)`` and ``log(U - M)``).  Within group ``g`` observations are
``N(mu_g, v_g)``; group means are ``N(mu, v_tilde)``; the overall mean has
a fixed Normal prior.  Precisions carry Gamma(shape, rate) priors, so every
full conditional is conjugate and the sampler is plain Gibbs.

Arrays follow one layout throughout: ``(..., 3)`` for top-level parameters
and ``(..., 3, G)`` for group-level ones, block 0 being the medians and
blocks 1 and 2 the lower and upper log-gaps.  Leading dimensions batch
independent problems sharing one group structure.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .diagnostics import PosteriorChain
from .judgements import PanelError, QuantileJudgement, group_by
from .sll import solve_sll_arrays, quantile_arrays
from .standardize import DecisionMakerPrior, back_transform, standardize_triplet

__all__ = [
    "ContinuousModelSpec",
    "ContinuousState",
    "ContinuousData",
    "gibbs_update",
    "sample_continuous",
    "run_continuous",
    "reconciled_quantiles",
    "draw_sll_params",
    "sample_theta",
    "proportion_event_probability",
    "BLOCKS",
]

log = logging.getLogger(__name__)

BLOCKS = ("mu", "delta1", "delta2")


@dataclass(frozen=True)
class ContinuousModelSpec:
    """Hyperparameters and run schedule for the continuous hierarchy.

    ``a_g, b_g`` are the Gamma shape/rate on within-group precisions and
    ``a_tilde, b_tilde`` those on the between-group precision; they apply to
    all three blocks.  ``group_priors`` overrides ``(a_g, b_g)`` for named
    groups.  ``d1, d2`` are prior medians of the two gaps (their logs are
    the prior means of the log-gap hierarchies).

    ``fixed_within`` / ``fixed_between`` pin the variances instead of
    sampling them; meant for checking the sampler against closed forms.
    """

    m: float = 0.0
    v_bar: float = 100.0
    a_g: float = 2.0
    b_g: float = 2.0
    a_tilde: float = 2.0
    b_tilde: float = 2.0
    d1: float = 1.0
    d2: float = 1.0
    v_bar_k: float = 100.0
    warmup: int = 2000
    kept: int = 2000
    chains: int = 4
    seed: int = 0
    group_priors: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    fixed_within: float | None = None
    fixed_between: float | None = None

    def __post_init__(self):
        positive = dict(
            v_bar=self.v_bar, a_g=self.a_g, b_g=self.b_g, a_tilde=self.a_tilde,
            b_tilde=self.b_tilde, d1=self.d1, d2=self.d2, v_bar_k=self.v_bar_k,
        )
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        for label, (a, b) in self.group_priors.items():
            if not (a > 0 and b > 0):
                raise ValueError(f"group {label!r}: Gamma prior must be positive")
        if self.chains < 1 or self.warmup < 0 or self.kept < 1:
            raise ValueError("need chains >= 1, warmup >= 0, kept >= 1")

    @property
    def prior_mean(self) -> np.ndarray:
        return np.array([self.m, np.log(self.d1), np.log(self.d2)])

    @property
    def prior_var(self) -> np.ndarray:
        return np.array([self.v_bar, self.v_bar_k, self.v_bar_k])

    def within_prior(self, labels: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        a = np.array([self.group_priors.get(g, (self.a_g, self.b_g))[0] for g in labels])
        b = np.array([self.group_priors.get(g, (self.a_g, self.b_g))[1] for g in labels])
        return a, b


@dataclass
class ContinuousState:
    mu: np.ndarray
    mu_g: np.ndarray
    v_g: np.ndarray
    v_tilde: np.ndarray

    def copy(self) -> "ContinuousState":
        return ContinuousState(*(np.array(a, copy=True) for a in
                                 (self.mu, self.mu_g, self.v_g, self.v_tilde)))


@dataclass
class ContinuousData:
    """Per-group sufficient statistics on the standardized scale.

    ``n`` has shape ``(G,)``; ``ybar`` and ``ss`` (centred sums of squares)
    have shape ``(..., 3, G)``.
    """

    n: np.ndarray
    ybar: np.ndarray
    ss: np.ndarray
    labels: tuple[str, ...] = ()

    @property
    def n_groups(self) -> int:
        return len(self.n)

    @classmethod
    def from_groups(cls, groups: Mapping[str, np.ndarray]) -> "ContinuousData":
        """Build from ``label -> (n_g, 3)`` arrays of (median, log gap 1, log gap 2).

        Values are sorted within each group and column and groups are ordered
        by their contents, so the statistics are bit-identical under expert
        permutations and group relabelling.
        """
        if not groups:
            raise PanelError("no groups supplied")
        canon = {}
        for label, values in groups.items():
            values = np.asarray(values, dtype=float)
            if values.ndim != 2 or values.shape[1] != 3 or values.shape[0] == 0:
                raise PanelError(f"group {label!r} is empty or malformed")
            canon[label] = np.sort(values, axis=0)
        order = sorted(canon, key=lambda g: (canon[g].shape[0], canon[g].T.tolist()))
        n = np.array([canon[g].shape[0] for g in order], dtype=float)
        ybar = np.stack([canon[g].mean(axis=0) for g in order], axis=-1)
        ss = np.stack([((canon[g] - canon[g].mean(axis=0)) ** 2).sum(axis=0)
                       for g in order], axis=-1)
        return cls(n, ybar, ss, tuple(order))


def initial_state(data: ContinuousData, spec: ContinuousModelSpec) -> ContinuousState:
    mu_g = np.array(data.ybar, copy=True)
    n = data.n
    with np.errstate(invalid="ignore", divide="ignore"):
        within = np.where(n > 1, data.ss / np.maximum(n - 1, 1), 0.0)
    v_g = np.maximum(within, 1e-6)
    if spec.fixed_within is not None:
        v_g = np.full_like(v_g, spec.fixed_within)
    mu = mu_g.mean(axis=-1)
    if data.n_groups > 1:
        v_tilde = np.maximum(mu_g.var(axis=-1, ddof=1), 1e-6)
    else:
        v_tilde = np.full_like(mu, 1e-6)
    if spec.fixed_between is not None:
        v_tilde = np.full_like(mu, spec.fixed_between)
    return ContinuousState(mu, mu_g, v_g, v_tilde)


def _check_finite(state: ContinuousState):
    for name in ("mu", "mu_g", "v_g", "v_tilde"):
        value = getattr(state, name)
        if not np.all(np.isfinite(value)):
            raise FloatingPointError(f"Gibbs update produced non-finite {name}")


def gibbs_update(
    state: ContinuousState,
    data: ContinuousData,
    spec: ContinuousModelSpec,
    rng: np.random.Generator,
    within_prior: tuple[np.ndarray, np.ndarray] | None = None,
) -> ContinuousState:
    """One full sweep: group means, overall mean, within then between variances."""
    n = data.n
    G = data.n_groups
    if within_prior is None:
        within_prior = spec.within_prior(data.labels or [""] * G)
    a_g, b_g = within_prior
    m0, v0 = spec.prior_mean, spec.prior_var

    mu, v_g, v_t = state.mu, state.v_g, state.v_tilde

    prec_g = n / v_g + 1.0 / v_t[..., None]
    mean_g = (n * data.ybar / v_g + (mu / v_t)[..., None]) / prec_g
    mu_g = mean_g + rng.standard_normal(mean_g.shape) / np.sqrt(prec_g)

    prec = G / v_t + 1.0 / v0
    mean = (mu_g.sum(axis=-1) / v_t + m0 / v0) / prec
    mu = mean + rng.standard_normal(mean.shape) / np.sqrt(prec)

    if spec.fixed_within is None:
        ss = data.ss + n * (data.ybar - mu_g) ** 2
        v_g = 1.0 / rng.gamma(a_g + 0.5 * n, 1.0 / (b_g + 0.5 * ss))
    if spec.fixed_between is None:
        ssb = ((mu_g - mu[..., None]) ** 2).sum(axis=-1)
        v_t = 1.0 / rng.gamma(spec.a_tilde + 0.5 * G, 1.0 / (spec.b_tilde + 0.5 * ssb))

    new = ContinuousState(mu, mu_g, v_g, v_t)
    _check_finite(new)
    return new


def _chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(chain)])


def sample_continuous(
    data: ContinuousData,
    spec: ContinuousModelSpec,
    record_groups: bool = True,
) -> dict[str, np.ndarray]:
    """Run ``spec.chains`` chains and return post-warmup draws.

    Returned arrays are shaped ``(chains, kept, ...)`` followed by the state
    layout: ``mu`` and ``v_tilde`` end in ``3``; group arrays end in ``(3, G)``.
    """
    within_prior = spec.within_prior(data.labels or [""] * data.n_groups)
    out: dict[str, list] = {"mu": [], "v_tilde": []}
    if record_groups:
        out.update(mu_g=[], v_g=[])
    for c in range(spec.chains):
        rng = _chain_rng(spec.seed, c)
        state = initial_state(data, spec)
        rec = {k: np.empty((spec.kept,) + getattr(state, k).shape) for k in out}
        for it in range(spec.warmup + spec.kept):
            state = gibbs_update(state, data, spec, rng, within_prior)
            k = it - spec.warmup
            if k >= 0:
                for name, buf in rec.items():
                    buf[k] = getattr(state, name)
        for name, buf in rec.items():
            out[name].append(buf)
    return {k: np.stack(v) for k, v in out.items()}


def _panel_data(panel, prior):
    groups = group_by(panel, min_experts=2)
    p_lows = {j.triplet.p_low for j in panel}
    if len(p_lows) != 1:
        raise PanelError(f"experts use different tail probabilities {sorted(p_lows)}")
    warnings = []
    values = {}
    for label, members in groups.items():
        rows = []
        for j in sorted(members, key=lambda j: j.expert):
            st = standardize_triplet(prior, j.triplet, expert=j.expert)
            if st.clamped:
                warnings.append(
                    f"expert {j.expert}: {'/'.join(st.clamped)} clamped to the "
                    f"decision-maker range"
                )
            rows.append((st.z_median, np.log(st.d1), np.log(st.d2)))
        values[label] = np.array(rows)
    return ContinuousData.from_groups(values), p_lows.pop(), warnings


def run_continuous(
    panel: Sequence[QuantileJudgement],
    prior: DecisionMakerPrior,
    spec: ContinuousModelSpec | None = None,
) -> PosteriorChain:
    """Standardize a one-quantity panel and sample the reconciled parameters.

    Non-convergence (split R-hat above 1.05 on ``mu``, ``delta1`` or
    ``delta2``) is reported through ``chain.converged`` and a warning rather
    than an exception.
    """
    spec = spec or ContinuousModelSpec()
    quantities = {j.quantity for j in panel}
    if len(quantities) > 1:
        raise PanelError(f"panel mixes quantities {sorted(quantities)}; reconcile each separately")
    data, p_low, warnings = _panel_data(panel, prior)
    raw = sample_continuous(data, spec)
    labels = data.labels
    cols = [raw["mu"][..., b] for b in range(3)]
    names = list(BLOCKS)
    cols += [raw["v_tilde"][..., b] for b in range(3)]
    names += [f"v_tilde_{b}" for b in BLOCKS]
    for b, block in enumerate(BLOCKS):
        for g, label in enumerate(labels):
            cols.append(raw["mu_g"][..., b, g])
            names.append(f"{block}[{label}]")
    for b, block in enumerate(BLOCKS):
        for g, label in enumerate(labels):
            cols.append(raw["v_g"][..., b, g])
            names.append(f"v_{block}[{label}]")
    chain = PosteriorChain(
        draws=np.stack(cols, axis=-1),
        names=names,
        seed=spec.seed,
        warmup=spec.warmup,
        kind="continuous",
        meta={"p_low": p_low, "groups": list(labels),
              "group_sizes": [int(n) for n in data.n]},
        warnings=warnings,
        reported=BLOCKS,
    )
    if not chain.converged:
        msg = "split R-hat above threshold: " + ", ".join(
            f"{k}={chain.diagnostics[k]['rhat']:.3f}" for k in BLOCKS
        )
        log.warning(msg)
        chain.warnings.append(msg)
    return chain


def reconciled_quantiles(chain: PosteriorChain):
    """Per-draw standardized ``(L, M, U)``: ``M = mu``, gaps ``exp(delta)``."""
    mu = chain["mu"]
    return mu - np.exp(chain["delta1"]), mu, mu + np.exp(chain["delta2"])


def draw_sll_params(chain: PosteriorChain, prior: DecisionMakerPrior, p_low: float | None = None):
    """Shifted log-logistic parameters for every posterior draw, original scale."""
    p_low = chain.meta.get("p_low", 0.05) if p_low is None else p_low
    zl, zm, zh = reconciled_quantiles(chain)
    low, med, high = back_transform(prior, zl, zm, zh)
    return solve_sll_arrays(low, med, high, p_low)


def sample_theta(
    chain: PosteriorChain,
    prior: DecisionMakerPrior,
    p_low: float | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """One posterior-predictive draw of the quantity per kept posterior draw."""
    p_low = chain.meta.get("p_low", 0.05) if p_low is None else p_low
    if not 0.0 < p_low < 0.5:
        raise ValueError(f"p_low must lie in (0, 0.5), got {p_low}")
    mu, sigma, gamma = draw_sll_params(chain, prior, p_low)
    rng = rng if rng is not None else np.random.default_rng([chain.seed, 7919])
    u = rng.random(mu.shape)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return quantile_arrays(mu, sigma, gamma, u)


def proportion_event_probability(theta_samples) -> float:
    """``Pr(X = 1) = E[theta]`` for a reconciled proportion."""
    theta = np.asarray(theta_samples, dtype=float)
    if theta.size == 0:
        raise ValueError("no samples")
    if np.any((theta < 0.0) | (theta > 1.0)):
        raise ValueError(
            "samples fall outside [0, 1]; set the decision-maker range within [0, 1] "
            "when reconciling a proportion"
        )
    return float(theta.mean())
