"""Put expert quantiles on a shared logit scale through the decision maker's CDF.

Each quantile ``Q`` becomes ``Z = logit(F(Q))`` where ``F`` is the decision
maker's prior CDF for the quantity.  The hierarchical model then works with
``Z_M`` and the two positive gaps ``Z_M - Z_L`` and ``Z_U - Z_M``.  Reconciled
quantiles come back through the logistic function and ``F^-1``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .judgements import PanelError, QuantileJudgement
from .sll import OrderingError, QuantileTriplet

__all__ = [
    "DecisionMakerPrior",
    "StandardizedTriplet",
    "dm_range_from_panel",
    "standardize_triplet",
    "back_transform",
    "logit",
    "expit",
    "CLAMP_EPS",
]

log = logging.getLogger(__name__)

CLAMP_EPS = 1e-6


def logit(x):
    x = np.asarray(x, dtype=float)
    return np.log(x) - np.log1p(-x)


def expit(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(frozen=True)
class DecisionMakerPrior:
    """Decision maker's prior for one quantity, uniform or a tabulated CDF.

    A tabulated prior is piecewise linear in the CDF between the ``x`` knots
    (a piecewise-uniform density); the first knot carries probability 0 and the
    last probability 1.
    """

    range_low: float
    range_high: float
    kind: str = "uniform"
    knots_x: tuple[float, ...] = ()
    knots_cdf: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.range_low < self.range_high:
            raise ValueError(
                f"prior range must have positive width, got "
                f"[{self.range_low}, {self.range_high}]"
            )
        if self.kind == "uniform":
            return
        if self.kind != "table":
            raise ValueError(f"unknown prior kind {self.kind!r}")
        x = np.asarray(self.knots_x, dtype=float)
        c = np.asarray(self.knots_cdf, dtype=float)
        if x.shape != c.shape or x.size < 2:
            raise ValueError("CDF table needs matching x and cdf columns, at least two rows")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(c) <= 0):
            raise ValueError("CDF table must be strictly increasing in both columns")
        if c[0] != 0.0 or c[-1] != 1.0:
            raise ValueError("CDF table must start at 0 and end at 1")
        if x[0] != self.range_low or x[-1] != self.range_high:
            raise ValueError("CDF table knots must span exactly the prior range")

    @classmethod
    def uniform(cls, low: float, high: float) -> "DecisionMakerPrior":
        return cls(float(low), float(high))

    @classmethod
    def from_table(cls, x: Sequence[float], cdf: Sequence[float]) -> "DecisionMakerPrior":
        x = tuple(float(v) for v in x)
        return cls(x[0], x[-1], "table", x, tuple(float(v) for v in cdf))

    @property
    def width(self) -> float:
        return self.range_high - self.range_low

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.clip((x - self.range_low) / self.width, 0.0, 1.0)
        return np.interp(x, self.knots_x, self.knots_cdf, left=0.0, right=1.0)

    def inverse_cdf(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "uniform":
            return self.range_low + y * self.width
        return np.interp(y, self.knots_cdf, self.knots_x)

    def scaled(self, c: float) -> "DecisionMakerPrior":
        """The same prior for the quantity measured in units ``1/c`` as large."""
        if self.kind == "uniform":
            return DecisionMakerPrior.uniform(c * self.range_low, c * self.range_high)
        return DecisionMakerPrior.from_table([c * v for v in self.knots_x], self.knots_cdf)


@dataclass(frozen=True)
class StandardizedTriplet:
    z_median: float
    d1: float
    d2: float
    clamped: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not (self.d1 > 0 and self.d2 > 0):
            raise OrderingError("standardized gaps must be positive")

    @property
    def z_low(self) -> float:
        return self.z_median - self.d1

    @property
    def z_high(self) -> float:
        return self.z_median + self.d2


def dm_range_from_panel(
    judgements: Sequence[QuantileJudgement], padding: float = 0.1
) -> DecisionMakerPrior:
    """Uniform prior over everything the panel considers plausible, padded.

    Uses each expert's plausible bounds when present, otherwise the outer
    quantiles; the interval is widened by ``padding`` times its width on
    each side.
    """
    if not judgements:
        raise PanelError("cannot build a decision-maker range from an empty panel")
    lo = min(j.lower_bound for j in judgements)
    hi = max(j.upper_bound for j in judgements)
    width = hi - lo
    if not width > 0:
        raise PanelError("panel range has zero width")
    return DecisionMakerPrior.uniform(lo - padding * width, hi + padding * width)


def standardize_triplet(
    prior: DecisionMakerPrior, triplet: QuantileTriplet, expert: str = "?"
) -> StandardizedTriplet:
    """Map a triplet to ``(z_median, z_median - z_low, z_high - z_median)``.

    CDF values at or beyond the prior's range are clamped to
    ``[CLAMP_EPS, 1 - CLAMP_EPS]`` with a warning; if clamping makes two
    quantiles coincide an :class:`OrderingError` naming the expert is raised.
    """
    x = prior.cdf(np.array(triplet.as_tuple()))
    clamped = []
    for name, value in zip(("low", "median", "high"), x):
        if value < CLAMP_EPS or value > 1.0 - CLAMP_EPS:
            clamped.append(name)
    if clamped:
        log.warning(
            "expert %s: %s quantile(s) at or outside the decision-maker range; clamped",
            expert,
            "/".join(clamped),
        )
        x = np.clip(x, CLAMP_EPS, 1.0 - CLAMP_EPS)
    if not (x[0] < x[1] < x[2]):
        raise OrderingError(
            f"expert {expert}: quantiles collapse after clamping to the "
            f"decision-maker range [{prior.range_low}, {prior.range_high}]"
        )
    z = logit(x)
    return StandardizedTriplet(float(z[1]), float(z[1] - z[0]), float(z[2] - z[1]), tuple(clamped))


def back_transform(
    prior: DecisionMakerPrior, z_low, z_median, z_high, p_low: float = 0.05
):
    """Logit-scale quantiles back to the quantity's own scale.

    Scalars give a :class:`QuantileTriplet`; arrays give a tuple of three
    arrays (one entry per posterior draw).
    """
    zl, zm, zh = (np.asarray(v, dtype=float) for v in (z_low, z_median, z_high))
    if np.any(~(zl < zm)) or np.any(~(zm < zh)):
        raise OrderingError("standardized quantiles must be strictly increasing")
    low, med, high = (prior.inverse_cdf(expit(v)) for v in (zl, zm, zh))
    if zl.ndim == 0 and zm.ndim == 0 and zh.ndim == 0:
        return QuantileTriplet(float(low), float(med), float(high), p_low)
    return low, med, high
