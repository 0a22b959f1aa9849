"""Posterior draw containers and convergence diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PosteriorChain",
    "split_rhat",
    "effective_sample_size",
    "mcse_mean",
    "mcse_sd",
    "RHAT_THRESHOLD",
]

RHAT_THRESHOLD = 1.05


def _as_chains(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected draws shaped (chains, iterations)")
    return x


def split_rhat(x) -> float:
    """Potential scale reduction on split chains.

    Each chain is cut in half so that within-chain drift shows up as
    between-chain disagreement.
    """
    x = _as_chains(x)
    n = x.shape[1] // 2
    if n < 2:
        return np.nan
    halves = np.concatenate([x[:, :n], x[:, -n:]], axis=0)
    w = halves.var(axis=1, ddof=1).mean()
    b = n * halves.mean(axis=1).var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else np.inf
    var_plus = (n - 1) / n * w + b / n
    return float(np.sqrt(var_plus / w))


def _autocov(x: np.ndarray) -> np.ndarray:
    """Autocovariance of each row via FFT, biased normalisation."""
    n = x.shape[-1]
    m = 1 << (2 * n - 1).bit_length()
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, n=m, axis=-1)
    acov = np.fft.irfft(f * np.conj(f), n=m, axis=-1)[..., :n]
    return acov / n


def effective_sample_size(x) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence truncation."""
    x = _as_chains(x)
    n_chain, n = x.shape
    if n < 4:
        return np.nan
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1.0)
    w = chain_var.mean()
    var_plus = w * (n - 1.0) / n
    if n_chain > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus == 0:
        return float(n_chain * n)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # sum consecutive pairs while positive, forcing them monotone
    pairs = rho[: 2 * ((n - 1) // 2)].reshape(-1, 2).sum(axis=1)
    positive = pairs > 0
    k = len(pairs) if positive.all() else int(np.argmin(positive))
    pairs = np.minimum.accumulate(pairs[:k])
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(n_chain * n))
    return float(n_chain * n / tau)


def mcse_mean(x) -> float:
    x = _as_chains(x)
    return float(x.std(ddof=1) / np.sqrt(effective_sample_size(x)))


def mcse_sd(x) -> float:
    """Monte Carlo error of the posterior SD, by the delta method on the variance."""
    x = _as_chains(x)
    sq = (x - x.mean()) ** 2
    se_var = sq.std(ddof=1) / np.sqrt(effective_sample_size(sq))
    return float(se_var / (2.0 * x.std(ddof=1)))


@dataclass
class PosteriorChain:
    """Post-warmup draws, shaped ``(chains, kept, parameters)``."""

    draws: np.ndarray
    names: list[str]
    seed: int
    warmup: int
    kind: str = "continuous"
    meta: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    reported: tuple[str, ...] = ()

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 3 or self.draws.shape[2] != len(self.names):
            raise ValueError("draws must be (chains, kept, parameters) matching names")
        if not np.all(np.isfinite(self.draws)):
            raise FloatingPointError("posterior draws contain non-finite values")
        if not self.diagnostics:
            self.diagnostics = {
                name: {
                    "rhat": split_rhat(self.draws[:, :, i]),
                    "ess": effective_sample_size(self.draws[:, :, i]),
                }
                for i, name in enumerate(self.names)
            }

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_kept(self) -> int:
        return self.draws.shape[1]

    def __len__(self) -> int:
        return self.n_chains * self.n_kept

    def by_chain(self, name: str) -> np.ndarray:
        return self.draws[:, :, self.names.index(name)]

    def __getitem__(self, name: str) -> np.ndarray:
        """Pooled draws of one parameter, chain after chain."""
        return self.by_chain(name).reshape(-1)

    @property
    def converged(self) -> bool:
        keys = self.reported or tuple(self.names)
        return all(self.diagnostics[k]["rhat"] <= RHAT_THRESHOLD for k in keys)
