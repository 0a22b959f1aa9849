"""Hierarchical Beta reconciliation of one-off event probabilities.

Expert ``i`` in group ``g`` states ``p_ig ~ Beta(n_W p_g, n_W (1 - p_g))``;
group probabilities are ``p_g ~ Beta(n_B p, n_B (1 - p))``; the concentration
parameters ``n_W`` and ``n_B`` have Gamma(shape, rate) priors and the
decision maker holds a Beta prior on ``p``.  The reconciled probability of
the event is the posterior mean of ``p``.

The hierarchy is not conjugate, so sampling uses scalar random-walk
Metropolis updates on ``logit(p_g)``, ``logit(p)``, ``log n_W`` and
``log n_B`` in a fixed sweep, with proposal scales tuned during warmup only.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import integrate, special, stats

from .diagnostics import PosteriorChain
from .judgements import EventJudgement, PanelError, group_by

__all__ = [
    "EventModelSpec",
    "EventState",
    "EventData",
    "event_log_posterior",
    "mwg_update",
    "sample_events",
    "reconcile_event",
    "SensitivityGrid",
    "sensitivity_curve",
    "prior_correlation",
    "prior_correlation_exact",
    "beta_draw",
    "PROB_CLAMP",
    "TARGET_ACCEPT",
]

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-4
TARGET_ACCEPT = 0.44


@dataclass(frozen=True)
class EventModelSpec:
    """Gamma(shape, rate) priors on ``n_W`` / ``n_B`` and the Beta prior on ``p``."""

    a_W: float = 20.0
    b_W: float = 2.0
    a_B: float = 20.0
    b_B: float = 2.0
    dm_alpha: float = 1.0
    dm_beta: float = 1.0
    warmup: int = 2000
    kept: int = 2000
    chains: int = 4
    seed: int = 0
    fixed_n_W: float | None = None
    fixed_n_B: float | None = None

    def __post_init__(self):
        for name in ("a_W", "b_W", "a_B", "b_B", "dm_alpha", "dm_beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.chains < 1 or self.warmup < 0 or self.kept < 1:
            raise ValueError("need chains >= 1, warmup >= 0, kept >= 1")

    def with_dm_mean(self, mean: float, strength: float = 2.0) -> "EventModelSpec":
        """Beta prior on ``p`` with the given mean and ``alpha + beta = strength``."""
        if not 0.0 < mean < 1.0:
            raise ValueError("prior mean must lie in (0, 1)")
        return replace(self, dm_alpha=mean * strength, dm_beta=(1.0 - mean) * strength)

    @property
    def dm_mean(self) -> float:
        return self.dm_alpha / (self.dm_alpha + self.dm_beta)


@dataclass
class EventState:
    p: float
    p_g: np.ndarray
    n_W: float
    n_B: float

    def __post_init__(self):
        self.p_g = np.asarray(self.p_g, dtype=float)

    def copy(self) -> "EventState":
        return EventState(self.p, self.p_g.copy(), self.n_W, self.n_B)


@dataclass
class EventData:
    """Per-group counts and sums of ``log p`` and ``log(1 - p)``."""

    n: np.ndarray
    sum_log: np.ndarray
    sum_log1m: np.ndarray
    labels: tuple[str, ...] = ()
    values: tuple[tuple[float, ...], ...] = ()
    warnings: list[str] = field(default_factory=list)

    @property
    def n_groups(self) -> int:
        return len(self.n)

    @classmethod
    def from_groups(cls, groups: dict[str, Sequence[float]], experts: dict | None = None) -> "EventData":
        warnings = []
        canon = {}
        for label, probs in groups.items():
            probs = np.asarray(probs, dtype=float)
            if probs.size == 0:
                raise PanelError(f"group {label!r} is empty")
            if np.any((probs < 0) | (probs > 1)):
                raise PanelError(f"group {label!r}: probabilities must lie in [0, 1]")
            edge = (probs < PROB_CLAMP) | (probs > 1 - PROB_CLAMP)
            if edge.any():
                who = experts.get(label) if experts else None
                names = [who[i] for i in np.flatnonzero(edge)] if who else [str(label)]
                warnings.append(
                    f"probabilities at the boundary clamped to [{PROB_CLAMP}, "
                    f"{1 - PROB_CLAMP}]: {', '.join(names)}"
                )
            canon[label] = np.sort(np.clip(probs, PROB_CLAMP, 1 - PROB_CLAMP))
        order = sorted(canon, key=lambda g: (len(canon[g]), canon[g].tolist()))
        for w in warnings:
            log.warning(w)
        return cls(
            n=np.array([len(canon[g]) for g in order], dtype=float),
            sum_log=np.array([np.log(canon[g]).sum() for g in order]),
            sum_log1m=np.array([np.log1p(-canon[g]).sum() for g in order]),
            labels=tuple(order),
            values=tuple(tuple(canon[g].tolist()) for g in order),
            warnings=warnings,
        )


_lg = math.lgamma


def _beta_norm(a: float, b: float) -> float:
    """``log Gamma(a + b) - log Gamma(a) - log Gamma(b)``."""
    return _lg(a + b) - _lg(a) - _lg(b)


def _group_lik(n, s, t, n_W, p_g):
    a = n_W * p_g
    b = n_W * (1.0 - p_g)
    return n * _beta_norm(a, b) + (a - 1.0) * s + (b - 1.0) * t


def _group_prior(p_g, n_B, p):
    a = n_B * p
    b = n_B * (1.0 - p)
    return _beta_norm(a, b) + (a - 1.0) * math.log(p_g) + (b - 1.0) * math.log1p(-p_g)


def _gamma_logpdf(x, a, b):
    return a * math.log(b) - _lg(a) + (a - 1.0) * math.log(x) - b * x


def _beta_logpdf(x, a, b):
    return _beta_norm(a, b) + (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x)


def event_log_posterior(state: EventState, data: EventData, spec: EventModelSpec) -> float:
    """Unnormalised log posterior density in the natural parameters."""
    p, n_W, n_B = state.p, state.n_W, state.n_B
    if not (0.0 < p < 1.0) or np.any((state.p_g <= 0) | (state.p_g >= 1)):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    if not (n_W > 0 and n_B > 0):
        raise ValueError("prior sample sizes must be positive")
    total = 0.0
    for g in range(data.n_groups):
        pg = float(state.p_g[g])
        total += _group_lik(data.n[g], data.sum_log[g], data.sum_log1m[g], n_W, pg)
        total += _group_prior(pg, n_B, p)
    if spec.fixed_n_W is None:
        total += _gamma_logpdf(n_W, spec.a_W, spec.b_W)
    if spec.fixed_n_B is None:
        total += _gamma_logpdf(n_B, spec.a_B, spec.b_B)
    total += _beta_logpdf(p, spec.dm_alpha, spec.dm_beta)
    if not math.isfinite(total):
        raise FloatingPointError("log posterior is not finite")
    return total


def _logit(x):
    return math.log(x) - math.log1p(-x)


def _expit(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _log_jac_logit(x):
    return math.log(x) + math.log1p(-x)


class _Kernel:
    """Scalar random-walk Metropolis sweep with per-coordinate scales.

    Coordinates are the ``G`` group probabilities, then ``p``, ``n_W``,
    ``n_B``; fixed prior sample sizes are skipped.
    """

    def __init__(self, data: EventData, spec: EventModelSpec, scales=None):
        self.data = data
        self.spec = spec
        G = data.n_groups
        self.n_coords = G + 3
        if scales is None:
            scales = np.r_[np.full(G + 1, 1.0), 0.5, 0.5]
        self.log_scales = np.log(np.maximum(np.asarray(scales, dtype=float), 1e-300))
        self.zero = np.asarray(scales, dtype=float) == 0
        self.accepted = np.zeros(self.n_coords)
        self.tried = np.zeros(self.n_coords)

    def _accept(self, k, log_ratio, u):
        self.tried[k] += 1
        ok = math.log(u) < log_ratio if u > 0 else True
        if ok:
            self.accepted[k] += 1
        return ok

    def sweep(self, state: EventState, z: np.ndarray, u: np.ndarray) -> list[bool]:
        d, spec = self.data, self.spec
        G = d.n_groups
        p, p_g, n_W, n_B = state.p, state.p_g, state.n_W, state.n_B
        scale = np.where(self.zero, 0.0, np.exp(self.log_scales))
        acc = [False] * self.n_coords

        for g in range(G):
            if self.zero[g]:
                continue
            cur = float(p_g[g])
            prop = _expit(_logit(cur) + scale[g] * z[g])
            if not (0.0 < prop < 1.0):
                continue
            n, s, t = d.n[g], d.sum_log[g], d.sum_log1m[g]
            lr = (_group_lik(n, s, t, n_W, prop) + _group_prior(prop, n_B, p)
                  + _log_jac_logit(prop)
                  - _group_lik(n, s, t, n_W, cur) - _group_prior(cur, n_B, p)
                  - _log_jac_logit(cur))
            if self._accept(g, lr, u[g]):
                p_g[g] = prop
                acc[g] = True

        k = G
        prop = _expit(_logit(p) + scale[k] * z[k])
        if not self.zero[k] and 0.0 < prop < 1.0:
            lr = (_beta_logpdf(prop, spec.dm_alpha, spec.dm_beta) + _log_jac_logit(prop)
                  - _beta_logpdf(p, spec.dm_alpha, spec.dm_beta) - _log_jac_logit(p))
            for g in range(G):
                pg = float(p_g[g])
                lr += _group_prior(pg, n_B, prop) - _group_prior(pg, n_B, p)
            if self._accept(k, lr, u[k]):
                p = prop
                acc[k] = True

        k = G + 1
        if spec.fixed_n_W is None and not self.zero[k]:
            prop = n_W * math.exp(scale[k] * z[k])
            if 0.0 < prop < math.inf:
                lr = (_gamma_logpdf(prop, spec.a_W, spec.b_W) + math.log(prop)
                      - _gamma_logpdf(n_W, spec.a_W, spec.b_W) - math.log(n_W))
                for g in range(G):
                    n, s, t, pg = d.n[g], d.sum_log[g], d.sum_log1m[g], float(p_g[g])
                    lr += _group_lik(n, s, t, prop, pg) - _group_lik(n, s, t, n_W, pg)
                if self._accept(k, lr, u[k]):
                    n_W = prop
                    acc[k] = True

        k = G + 2
        if spec.fixed_n_B is None and not self.zero[k]:
            prop = n_B * math.exp(scale[k] * z[k])
            if 0.0 < prop < math.inf:
                lr = (_gamma_logpdf(prop, spec.a_B, spec.b_B) + math.log(prop)
                      - _gamma_logpdf(n_B, spec.a_B, spec.b_B) - math.log(n_B))
                for g in range(G):
                    pg = float(p_g[g])
                    lr += _group_prior(pg, prop, p) - _group_prior(pg, n_B, p)
                if self._accept(k, lr, u[k]):
                    n_B = prop
                    acc[k] = True

        state.p, state.n_W, state.n_B = p, n_W, n_B
        return acc

    def adapt(self, acc: list[bool], t: int):
        step = (t + 1.0) ** -0.6
        for k, a in enumerate(acc):
            if not self.zero[k]:
                self.log_scales[k] += step * ((1.0 if a else 0.0) - TARGET_ACCEPT)

    @property
    def acceptance(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.accepted / self.tried


def mwg_update(
    state: EventState,
    data: EventData,
    spec: EventModelSpec,
    rng: np.random.Generator,
    scales=None,
) -> EventState:
    """One Metropolis-within-Gibbs sweep with fixed proposal scales.

    ``scales`` holds one random-walk SD per coordinate (groups, ``p``,
    ``n_W``, ``n_B``) on the logit/log scale; a zero scale freezes the
    coordinate.
    """
    kernel = _Kernel(data, spec, scales)
    new = state.copy()
    n = kernel.n_coords
    kernel.sweep(new, rng.standard_normal(n), rng.random(n))
    return new


def initial_event_state(data: EventData, spec: EventModelSpec) -> EventState:
    p_g = np.array([np.mean(v) for v in data.values])
    n_W = spec.fixed_n_W if spec.fixed_n_W is not None else spec.a_W / spec.b_W
    n_B = spec.fixed_n_B if spec.fixed_n_B is not None else spec.a_B / spec.b_B
    return EventState(float(np.mean(p_g)), p_g, n_W, n_B)


def sample_events(data: EventData, spec: EventModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Draws shaped ``(chains, kept, G + 3)`` ordered ``p, p_g..., n_W, n_B``
    and post-warmup acceptance rates shaped ``(chains, G + 3)``."""
    G = data.n_groups
    draws = np.empty((spec.chains, spec.kept, G + 3))
    rates = np.empty((spec.chains, G + 3))
    for c in range(spec.chains):
        rng = np.random.default_rng([int(spec.seed), c])
        kernel = _Kernel(data, spec)
        state = initial_event_state(data, spec)
        total = spec.warmup + spec.kept
        z = rng.standard_normal((total, G + 3))
        u = rng.random((total, G + 3))
        for it in range(total):
            acc = kernel.sweep(state, z[it], u[it])
            if it < spec.warmup:
                kernel.adapt(acc, it)
                if it == spec.warmup - 1:
                    kernel.accepted[:] = 0
                    kernel.tried[:] = 0
            else:
                row = draws[c, it - spec.warmup]
                row[0] = state.p
                row[1:G + 1] = state.p_g
                row[G + 1] = state.n_W
                row[G + 2] = state.n_B
        rates[c] = kernel.acceptance
    return draws, rates


def _panel_data(panel: Sequence[EventJudgement]) -> EventData:
    groups = group_by(panel, min_experts=2)
    quantities = {j.quantity for j in panel}
    if len(quantities) > 1:
        raise PanelError(f"panel mixes events {sorted(quantities)}; reconcile each separately")
    probs = {}
    experts = {}
    for label, members in groups.items():
        members = sorted(members, key=lambda j: j.probability)
        probs[label] = [j.probability for j in members]
        experts[label] = [j.expert for j in members]
    return EventData.from_groups(probs, experts)


def reconcile_event(
    panel: Sequence[EventJudgement], spec: EventModelSpec | None = None
) -> tuple[float, PosteriorChain]:
    """Reconciled probability (posterior mean of ``p``) and the chain."""
    spec = spec or EventModelSpec()
    data = _panel_data(panel)
    draws, rates = sample_events(data, spec)
    names = ["p"] + [f"p_g[{g}]" for g in data.labels] + ["n_W", "n_B"]
    chain = PosteriorChain(
        draws=draws,
        names=names,
        seed=spec.seed,
        warmup=spec.warmup,
        kind="event",
        meta={
            "groups": list(data.labels),
            "group_sizes": [int(n) for n in data.n],
            "acceptance": rates.mean(axis=0).tolist(),
            "dm_prior": [spec.dm_alpha, spec.dm_beta],
        },
        warnings=list(data.warnings),
        reported=("p",),
    )
    if not chain.converged:
        msg = f"split R-hat for p is {chain.diagnostics['p']['rhat']:.3f}"
        log.warning(msg)
        chain.warnings.append(msg)
    return float(chain["p"].mean()), chain


@dataclass
class SensitivityGrid:
    """Reconciled probabilities, rows by ``a`` and columns by prior mean."""

    a_values: list[float]
    dm_means: list[float]
    values: np.ndarray
    dm_strength: float = 2.0

    def column(self, mean: float) -> np.ndarray:
        return self.values[:, self.dm_means.index(mean)]

    def row(self, a: float) -> np.ndarray:
        return self.values[self.a_values.index(a)]


def sensitivity_curve(
    panel: Sequence[EventJudgement],
    template: EventModelSpec,
    a_values: Sequence[float],
    dm_means: Sequence[float],
    b: float = 2.0,
    dm_strength: float = 2.0,
) -> SensitivityGrid:
    """Reconcile under ``a_W = a_B = a``, ``b_W = b_B = b`` and Beta priors
    with the given means and fixed total strength."""
    data = _panel_data(panel)
    out = np.empty((len(a_values), len(dm_means)))
    for i, a in enumerate(a_values):
        for k, mean in enumerate(dm_means):
            spec = replace(template, a_W=a, a_B=a, b_W=b, b_B=b).with_dm_mean(mean, dm_strength)
            draws, _ = sample_events(data, spec)
            out[i, k] = draws[:, :, 0].mean()
    return SensitivityGrid(list(a_values), list(dm_means), out, dm_strength)


def beta_draw(rng: np.random.Generator, a, b, size=None) -> np.ndarray:
    """Beta variates computed in log space, stable for tiny shape parameters.

    Uses ``Gamma(a) = Gamma(a + 1) * U ** (1 / a)`` so that neither gamma
    variate underflows to zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if size is None:
        size = np.broadcast_shapes(a.shape, b.shape)
    # a shape that underflowed to 0 sends its log-gamma to -inf, i.e. a 0 or 1 draw
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        log_x = np.log(rng.gamma(a + 1.0, size=size)) + np.log1p(-rng.random(size)) / a
        log_y = np.log(rng.gamma(b + 1.0, size=size)) + np.log1p(-rng.random(size)) / b
        x = special.expit(log_x - log_y)
        tie = np.isnan(x)
        if np.any(tie):
            # both shapes vanished: the limit is a Bernoulli(a / (a + b)) draw
            m = np.broadcast_to(np.nan_to_num(a / (a + b), nan=0.5), np.shape(x))[tie]
            x = np.where(tie, 0.0, x)
            x[tie] = (rng.random(m.shape) < m).astype(float)
        return x


def prior_correlation(
    spec: EventModelSpec,
    same_group: bool,
    mc_draws: int = 200_000,
    rng: np.random.Generator | None = None,
    rao_blackwell: bool = True,
) -> float:
    """Prior correlation between two experts' probabilities, by simulation.

    By default only ``(p, n_W, n_B)`` are simulated and the moments of the
    two expert probabilities given them are used in closed form.  The
    sample sizes are drawn by inverse CDF, so two calls sharing a seed use
    common random numbers and the estimate varies smoothly with the
    hyperparameters.  ``rao_blackwell=False`` simulates every level of the
    hierarchy instead.
    """
    if mc_draws < 100_000:
        raise ValueError("use at least 1e5 draws")
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    n = mc_draws
    if not rao_blackwell:
        return _prior_correlation_draws(spec, same_group, n, rng)
    u_p, u_w, u_b = rng.random((3, n))
    p = special.betaincinv(spec.dm_alpha, spec.dm_beta, u_p)
    n_W = (np.full(n, spec.fixed_n_W) if spec.fixed_n_W is not None
           else special.gammaincinv(spec.a_W, u_w) / spec.b_W)
    n_B = (np.full(n, spec.fixed_n_B) if spec.fixed_n_B is not None
           else special.gammaincinv(spec.a_B, u_b) / spec.b_B)
    w = 1.0 / (n_W + 1.0)
    c = 1.0 / (n_B + 1.0)
    pq = p * (1.0 - p)
    g2 = p * p + pq * c                          # E[p_g^2 | p, n_B]
    x2 = (1.0 - w) * g2 + w * p                  # E[p_ig^2 | p, n_W, n_B]
    cross = g2 if same_group else p * p          # E[p_ig p_jh | p, n_W, n_B]
    mean = p.mean()
    var = x2.mean() - mean * mean
    return float((cross.mean() - mean * mean) / var)


def _prior_correlation_draws(spec, same_group, n, rng) -> float:
    n_W = (np.full(n, spec.fixed_n_W) if spec.fixed_n_W is not None
           else rng.gamma(spec.a_W, 1.0 / spec.b_W, n))
    n_B = (np.full(n, spec.fixed_n_B) if spec.fixed_n_B is not None
           else rng.gamma(spec.a_B, 1.0 / spec.b_B, n))
    p = beta_draw(rng, np.full(n, spec.dm_alpha), np.full(n, spec.dm_beta))
    g1 = beta_draw(rng, n_B * p, n_B * (1 - p))
    g2 = g1 if same_group else beta_draw(rng, n_B * p, n_B * (1 - p))
    x1 = beta_draw(rng, n_W * g1, n_W * (1 - g1))
    x2 = beta_draw(rng, n_W * g2, n_W * (1 - g2))
    return float(np.corrcoef(x1, x2)[0, 1])


def _mean_inverse_shift(a: float, b: float, fixed: float | None) -> float:
    """``E[1 / (n + 1)]`` for ``n ~ Gamma(a, rate=b)``, or at a fixed ``n``."""
    if fixed is not None:
        return 1.0 / (fixed + 1.0)
    dist = stats.gamma(a, scale=1.0 / b)
    lo, hi = dist.ppf(1e-14), dist.isf(1e-14)
    val, _ = integrate.quad(lambda n: dist.pdf(n) / (n + 1.0), lo, hi,
                            points=[dist.mean()], epsabs=0.0, epsrel=1e-10, limit=200)
    return val


def prior_correlation_exact(spec: EventModelSpec, same_group: bool) -> float:
    """Closed-form counterpart of :func:`prior_correlation`.

    With ``V = Var(p)``, ``A = E[p (1 - p)]``, ``w = E[1/(n_W + 1)]`` and
    ``c = E[1/(n_B + 1)]``, two experts share covariance ``V`` across
    groups and ``V + A c`` within one, and each has variance
    ``V + A c + A w (1 - c)``.
    """
    al, be = spec.dm_alpha, spec.dm_beta
    s = al + be
    V = al * be / (s * s * (s + 1.0))
    A = al * be / (s * (s + 1.0))
    w = _mean_inverse_shift(spec.a_W, spec.b_W, spec.fixed_n_W)
    c = _mean_inverse_shift(spec.a_B, spec.b_B, spec.fixed_n_B)
    var = V + A * c + A * w * (1.0 - c)
    return float((V + A * c if same_group else V) / var)
