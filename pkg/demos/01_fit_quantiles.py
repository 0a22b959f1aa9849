"""Turning an expert's three quantiles into a full distribution.

An expert gives a 5% quantile, a median and a 95% quantile.  The shifted
log-logistic passes exactly through all three, so it is a cheap way to turn
a triplet into a density that can be scored, pooled and sampled.
"""
import numpy as np

from expertrecon import QuantileTriplet, sll_cdf, sll_pdf, sll_quantile, solve_sll

# A right-skewed judgement: the upper half-width is twice the lower one.
triplet = QuantileTriplet(low=1.0, median=2.0, high=4.0, p_low=0.05)
params = solve_sll(triplet)
print(f"location {params.location:.4f}, scale {params.scale:.5f}, shape {params.shape:.5f}")
print(f"support {params.support}")

# The fitted quantile function reproduces the judgement exactly.
for p in (0.05, 0.5, 0.95):
    print(f"  Q({p}) = {sll_quantile(params, p):.12f}")

# Positive shape means a lower bound and a long right tail.
for x in (0.5, 1.0, 2.0, 4.0, 8.0):
    print(f"  x = {x:4.1f}: F = {sll_cdf(params, x):.4f}, f = {sll_pdf(params, x):.4f}")

# A symmetric triplet falls back to the logistic distribution (shape 0).
sym = solve_sll(QuantileTriplet(-1.0, 0.0, 1.0))
print(f"symmetric triplet: shape {sym.shape}, scale {sym.scale:.6f}")

# Inverse-CDF sampling.
draws = sll_quantile(params, np.random.default_rng(0).random(100_000))
print("sample quantiles:", np.round(np.quantile(draws, [0.05, 0.5, 0.95]), 3))
