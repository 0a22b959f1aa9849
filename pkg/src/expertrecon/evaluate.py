"""Scoring reconciled and pooled forecasts against realised values."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .continuous import draw_sll_params
from .diagnostics import PosteriorChain
from .sll import SllParams, QuantileTriplet, cdf_arrays, pdf_arrays, sll_pdf, solve_sll
from .standardize import DecisionMakerPrior

__all__ = [
    "ScoredForecaster",
    "fit_expert",
    "equal_weights_pdf",
    "equal_weights_cdf",
    "MixtureDensity",
    "reconciled_density",
    "avg_log_score",
    "CalibrationCurve",
    "calibration_curve",
    "paired_score_comparison",
]

log = logging.getLogger(__name__)


def fit_expert(triplet: QuantileTriplet) -> SllParams:
    """Shifted log-logistic through an expert's three quantiles."""
    return solve_sll(triplet)


def _stack(experts: Sequence[SllParams]):
    if len(experts) == 0:
        raise ValueError("equal-weights pool needs at least one expert")
    mu = np.array([e.location for e in experts])
    sigma = np.array([e.scale for e in experts])
    gamma = np.array([e.shape for e in experts])
    return mu, sigma, gamma


def equal_weights_pdf(experts: Sequence[SllParams], x):
    """Linear pool with weights ``1/I``."""
    mu, sigma, gamma = _stack(experts)
    x = np.asarray(x, dtype=float)
    out = pdf_arrays(mu, sigma, gamma, x[..., None]).mean(axis=-1)
    return float(out) if out.ndim == 0 else out


def equal_weights_cdf(experts: Sequence[SllParams], x):
    mu, sigma, gamma = _stack(experts)
    x = np.asarray(x, dtype=float)
    out = cdf_arrays(mu, sigma, gamma, x[..., None]).mean(axis=-1)
    return float(out) if out.ndim == 0 else out


@dataclass
class MixtureDensity:
    """Equal mixture of shifted log-logistic components.

    Used for the reconciled predictive density, one component per posterior
    draw, which is exact for the model rather than a smoothed estimate.
    """

    mu: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray

    def _eval(self, fn, x, chunk=256):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(x.shape)
        flat, res = x.reshape(-1), out.reshape(-1)
        for i in range(0, flat.size, chunk):
            xs = flat[i:i + chunk, None]
            res[i:i + chunk] = fn(self.mu, self.sigma, self.gamma, xs).mean(axis=-1)
        return out

    def pdf(self, x):
        out = self._eval(pdf_arrays, x)
        return float(out[0]) if np.ndim(x) == 0 else out

    def cdf(self, x):
        out = self._eval(cdf_arrays, x)
        return float(out[0]) if np.ndim(x) == 0 else out

    __call__ = pdf


def reconciled_density(
    chain: PosteriorChain, prior: DecisionMakerPrior, p_low: float | None = None
) -> MixtureDensity:
    return MixtureDensity(*draw_sll_params(chain, prior, p_low))


@dataclass
class ScoredForecaster:
    """A named forecaster: one density per scored quantity."""

    name: str
    densities: list[Callable]
    score: float = np.nan
    flags: list[str] = field(default_factory=list)

    @classmethod
    def from_sll(cls, name: str, params: Sequence[SllParams]) -> "ScoredForecaster":
        return cls(name, [lambda x, p=p: sll_pdf(p, x) for p in params])

    @classmethod
    def equal_weights(cls, name: str, panels: Sequence[Sequence[SllParams]]) -> "ScoredForecaster":
        return cls(name, [lambda x, e=e: equal_weights_pdf(e, x) for e in panels])


def avg_log_score(
    forecaster: ScoredForecaster,
    realizations: Sequence[float],
    drop_nonfinite: bool = False,
) -> float:
    """Mean log density at the realised values; higher is better.

    A zero density gives ``-inf``.  That is kept and flagged on the
    forecaster; only with ``drop_nonfinite=True`` are such quantities left out
    of the mean (and the exclusion is recorded in the flags).
    """
    if len(forecaster.densities) != len(realizations):
        raise ValueError("one realisation per density is required")
    with np.errstate(divide="ignore"):
        logs = np.array([np.log(f(x)) for f, x in zip(forecaster.densities, realizations)],
                        dtype=float)
    bad = ~np.isfinite(logs)
    if bad.any():
        idx = np.flatnonzero(bad).tolist()
        msg = f"{forecaster.name}: zero density at quantities {idx}"
        log.warning(msg)
        if drop_nonfinite:
            forecaster.flags.append(msg + " (excluded from mean)")
            logs = logs[~bad]
        else:
            forecaster.flags.append(msg)
    score = float(logs.mean()) if logs.size else -np.inf
    forecaster.score = score
    return score


@dataclass
class CalibrationCurve:
    """Sorted CDF values against the uniform plotting positions ``k/J``."""

    empirical: np.ndarray
    uniform: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.empirical.tolist(), self.uniform.tolist()))

    @property
    def max_deviation(self) -> float:
        """Largest vertical distance of the plotted points from ``x = y``."""
        return float(np.max(np.abs(self.empirical - self.uniform)))

    @property
    def ks_statistic(self) -> float:
        """``sup_t |ECDF(t) - t|`` for the CDF values."""
        J = len(self.empirical)
        lower = self.uniform - 1.0 / J
        return float(max(np.max(self.uniform - self.empirical),
                         np.max(self.empirical - lower)))


def calibration_curve(cdf_values: Sequence[float]) -> CalibrationCurve:
    v = np.sort(np.asarray(cdf_values, dtype=float))
    if v.size == 0:
        raise ValueError("no values")
    if np.any((v < 0) | (v > 1)):
        raise ValueError("CDF values must lie in [0, 1]")
    J = v.size
    return CalibrationCurve(v, np.arange(1, J + 1) / J)


def paired_score_comparison(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    seed: int = 0,
    draws: int = 20_000,
    warmup: int = 1000,
    prior_var: float = 1e6,
    ig_shape: float = 1e-3,
    ig_rate: float = 1e-3,
) -> float:
    """Posterior probability that forecaster ``a`` has the higher mean score.

    Per-study differences ``d = a - b`` are modelled as ``N(eta, s2)`` with
    ``eta ~ N(0, prior_var)`` and ``s2 ~ InvGamma(ig_shape, ig_rate)``.  A
    Gibbs sampler alternates the two conditionals; ``Pr(eta > 0)`` is
    averaged over the ``s2`` draws in closed form, which removes most of the
    Monte Carlo noise.
    """
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("score vectors must be one-dimensional and equal length")
    if a.size < 3:
        raise ValueError("need at least three paired scores")
    d = a - b
    if not np.all(np.isfinite(d)):
        raise ValueError("score differences must be finite")
    if np.all(d == 0):
        return 0.5
    n = d.size
    total = d.sum()
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(warmup + draws)
    eta = d.mean()
    tail = np.empty(draws)
    for it in range(warmup + draws):
        ss = np.sum((d - eta) ** 2)
        s2 = 1.0 / rng.gamma(ig_shape + 0.5 * n, 1.0 / (ig_rate + 0.5 * ss))
        prec = n / s2 + 1.0 / prior_var
        mean = total / s2 / prec
        eta = mean + z[it] / np.sqrt(prec)
        if it >= warmup:
            tail[it - warmup] = mean * np.sqrt(prec)
    return float(special.ndtr(tail).mean())
