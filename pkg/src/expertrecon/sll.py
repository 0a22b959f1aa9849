"""Shifted log-logistic distribution fitted from a quantile triplet.

The distribution has location ``mu``, scale ``sigma > 0`` and shape ``gamma``.
Its quantile function is

    Q(p) = mu + sigma / gamma * ((p / (1 - p)) ** gamma - 1)

with the logistic limit ``mu + sigma * logit(p)`` at ``gamma = 0``.  Three
quantiles at probabilities ``(p_low, 0.5, 1 - p_low)`` pin the three
parameters in closed form, which is what makes the distribution cheap to
refit once per posterior draw.

All array functions broadcast over their arguments; the scalar wrappers
taking :class:`SllParams` are thin conveniences on top.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "SllParams",
    "QuantileTriplet",
    "OrderingError",
    "sll_pdf",
    "sll_cdf",
    "sll_quantile",
    "sll_sample",
    "solve_sll",
    "solve_sll_arrays",
    "pdf_arrays",
    "cdf_arrays",
    "quantile_arrays",
    "SYMMETRY_RTOL",
]

# Relative tolerance below which |(U - M) - (M - L)| counts as symmetric.
SYMMETRY_RTOL = 1e-12


class OrderingError(ValueError):
    """Quantiles are not strictly increasing."""


@dataclass(frozen=True)
class SllParams:
    location: float
    scale: float
    shape: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def support(self) -> tuple[float, float]:
        """Closed support interval; infinite ends where unbounded."""
        if self.shape > 0:
            return (self.location - self.scale / self.shape, np.inf)
        if self.shape < 0:
            return (-np.inf, self.location - self.scale / self.shape)
        return (-np.inf, np.inf)


@dataclass(frozen=True)
class QuantileTriplet:
    """Lower quantile, median and upper quantile at ``(p_low, 0.5, 1 - p_low)``."""

    low: float
    median: float
    high: float
    p_low: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.p_low < 0.5:
            raise ValueError(f"p_low must lie in (0, 0.5), got {self.p_low}")
        if not (self.low < self.median < self.high):
            raise OrderingError(
                f"quantiles must satisfy low < median < high, got "
                f"({self.low}, {self.median}, {self.high})"
            )

    @property
    def p_high(self) -> float:
        return 1.0 - self.p_low

    @property
    def range(self) -> float:
        return self.high - self.low

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.low, self.median, self.high)


def _logit(p):
    return np.log(p) - np.log1p(-p)


# Below this |gamma| the gamma -> 0 expansions are used; the dropped terms are
# O(gamma**2) relative, far under double precision.
_SMALL_GAMMA = 1e-10


def _expm1_over(g, t):
    """``expm1(g t) / g`` with its ``g -> 0`` limit ``t``."""
    small = np.abs(g) < _SMALL_GAMMA
    safe = np.where(small, 1.0, g)
    return np.where(small, t * (1.0 + 0.5 * g * t), np.expm1(safe * t) / safe)


def _log1p_over(g, z):
    """``log1p(g z) / g`` with its ``g -> 0`` limit ``z``; needs ``g z > -1``."""
    small = np.abs(g) < _SMALL_GAMMA
    safe = np.where(small, 1.0, g)
    arg = np.where(small, 0.0, safe * z)
    return np.where(small, z * (1.0 - 0.5 * g * z), np.log1p(np.maximum(arg, -1.0 + 1e-300)) / safe)


def _check_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    return p


def quantile_arrays(mu, sigma, gamma, p):
    """Vectorised quantile function; ``p`` must lie in (0, 1)."""
    p = _check_prob(p)
    mu, sigma, gamma = (np.asarray(a, dtype=float) for a in (mu, sigma, gamma))
    return mu + sigma * _expm1_over(gamma, _logit(p))


def _standardized(mu, sigma, gamma, x):
    """Support mask and ``t = logit F(x)``, plus the pieces the density reuses."""
    x, mu, sigma, gamma = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (x, mu, sigma, gamma))
    )
    z = (x - mu) / sigma
    base = 1.0 + gamma * z
    inside = (gamma == 0.0) | (base > 0.0)
    # logit F(x) = log(1 + gamma z) / gamma, with the logistic limit z
    t = np.where(inside, _log1p_over(gamma, np.where(inside, z, 0.0)), 0.0)
    return inside, t, base, gamma


def cdf_arrays(mu, sigma, gamma, x):
    """Vectorised CDF, 0 below and 1 above the support."""
    inside, t, _, g = _standardized(mu, sigma, gamma, x)
    out = special.expit(t)
    # outside the support: below the bound for gamma > 0, above it for gamma < 0
    return np.where(inside, out, np.where(g > 0, 0.0, 1.0))


def pdf_arrays(mu, sigma, gamma, x):
    """Vectorised density; 0 outside the support.

    Written as the derivative of :func:`cdf_arrays`: with ``t`` the logit of
    the CDF, ``f = F (1 - F) dt/dx`` and ``dt/dx = 1 / (sigma (1 + gamma z))``.
    """
    inside, t, base, _ = _standardized(mu, sigma, gamma, x)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), t.shape)
    safe_base = np.where(inside, base, 1.0)
    e = np.exp(-np.abs(t))
    logistic_density = e / (1.0 + e) ** 2
    out = logistic_density / (sigma * safe_base)
    return np.where(inside, out, 0.0)


def solve_sll_arrays(low, median, high, p_low):
    """Closed-form ``(mu, sigma, gamma)`` for arrays of ordered triplets.

    The shape comes from the ratio of the two half-widths,
    ``gamma = log((M - L) / (U - M)) / logit(p_low)``; the scale then follows
    from the lower quantile.  Near-symmetric triplets take the logistic limit.
    """
    low, median, high, p_low = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (low, median, high, p_low))
    )
    if np.any(~(low < median)) or np.any(~(median < high)):
        raise OrderingError("quantiles must satisfy low < median < high")
    if np.any(~((p_low > 0.0) & (p_low < 0.5))):
        raise ValueError("p_low must lie in (0, 0.5)")
    d1 = median - low
    d2 = high - median
    lr = _logit(p_low)
    symmetric = np.abs(d2 - d1) <= SYMMETRY_RTOL * np.maximum(d1, d2)
    gamma = np.where(symmetric, 0.0, (np.log(d1) - np.log(d2)) / lr)
    # Q(p_low) = L  =>  -d1 = sigma * expm1(gamma * lr) / gamma
    sigma = -d1 / _expm1_over(gamma, lr)
    return median.copy(), sigma, gamma


def solve_sll(triplet: QuantileTriplet) -> SllParams:
    """Fit the shifted log-logistic exactly through a quantile triplet.

    >>> p = solve_sll(QuantileTriplet(1.0, 2.0, 4.0, 0.05))
    >>> round(p.shape, 5), round(p.scale, 5)
    (0.23541, 0.47082)
    """
    mu, sigma, gamma = solve_sll_arrays(
        triplet.low, triplet.median, triplet.high, triplet.p_low
    )
    return SllParams(float(mu), float(sigma), float(gamma))


def sll_quantile(params: SllParams, p):
    out = quantile_arrays(params.location, params.scale, params.shape, p)
    return float(out) if out.ndim == 0 else out


def sll_cdf(params: SllParams, x):
    out = cdf_arrays(params.location, params.scale, params.shape, x)
    return float(out) if out.ndim == 0 else out


def sll_pdf(params: SllParams, x):
    out = pdf_arrays(params.location, params.scale, params.shape, x)
    return float(out) if out.ndim == 0 else out


def sll_sample(params: SllParams, u):
    """Inverse-CDF draw(s): ``u`` are uniforms in (0, 1)."""
    return sll_quantile(params, u)
