"""Reconciling a grouped panel of quantile judgements.

Eleven experts judge the same quantity; they form three groups of like-minded
experts (7, 2 and 2).  Judgements are mapped through the decision maker's
prior onto a common logit scale, the hierarchical model is fitted by Gibbs
sampling, and the posterior is turned back into quantiles and predictive
draws on the original scale.
"""
import numpy as np

from expertrecon import (
    ContinuousModelSpec,
    DecisionMakerPrior,
    PanelScenario,
    generate_continuous_panel,
    reconciled_quantiles,
    run_continuous,
    sample_theta,
)
from expertrecon.standardize import back_transform

# A synthetic panel on a 0-100 scale, one quantity.
scenario = PanelScenario(groups=(7, 2, 2), dm_low=0, dm_high=100, seed=3,
                         spec=ContinuousModelSpec(v_bar=1, v_bar_k=0.25, d1=0.5, d2=0.5))
panel = generate_continuous_panel(scenario)
for j in panel:
    t = j.triplet
    print(f"  {j.expert:>3} ({j.group}): {t.low:6.1f} {t.median:6.1f} {t.high:6.1f}")

prior = DecisionMakerPrior.uniform(0, 100)
chain = run_continuous(panel, prior, ContinuousModelSpec(seed=1))
print(f"\nconverged: {chain.converged}")
for name in ("mu", "delta1", "delta2"):
    d = chain.diagnostics[name]
    print(f"  {name:>6}: R-hat {d['rhat']:.4f}, ESS {d['ess']:.0f}")

# Reconciled quantiles, one triplet per posterior draw.
low, med, high = back_transform(prior, *reconciled_quantiles(chain))
print(f"\nposterior median of the reconciled 5/50/95% quantiles: "
      f"{np.median(low):.1f} / {np.median(med):.1f} / {np.median(high):.1f}")

# Predictive draws of the quantity itself.
theta = sample_theta(chain, prior)
q = np.quantile(theta, [0.05, 0.5, 0.95])
print(f"predictive 90% interval: [{q[0]:.1f}, {q[2]:.1f}], median {q[1]:.1f}")
equal = np.median([j.triplet.median for j in panel])
print(f"median of the expert medians, for comparison: {equal:.1f}")
