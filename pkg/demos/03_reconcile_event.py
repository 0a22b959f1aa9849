"""Reconciling probabilities for a one-off event.

Ten experts give the probability that a pump fails.  Eight of them share one
line of reasoning and two another.  The equal-weights average lets the big
group dominate; the Beta hierarchy weights the two groups more evenly.
"""
import numpy as np

from expertrecon import EventJudgement, EventModelSpec, reconcile_event
from expertrecon.events import prior_correlation_exact, sensitivity_curve

g1 = [0.44, 0.49, 0.48, 0.39, 0.33, 0.35, 0.41, 0.41]
g2 = [0.09, 0.11]
panel = ([EventJudgement(f"e{i + 1}", "mechanical", p) for i, p in enumerate(g1)]
         + [EventJudgement(f"e{i + 9}", "electrical", p) for i, p in enumerate(g2)])

spec = EventModelSpec(a_W=20, b_W=2, a_B=20, b_B=2, seed=20240601)
prob, chain = reconcile_event(panel, spec)
print(f"equal weights: {np.mean(g1 + g2):.4f}")
print(f"group means:   {np.mean(g1):.4f} and {np.mean(g2):.4f}")
print(f"reconciled:    {prob:.4f}  (converged: {chain.converged})")
print("acceptance rates:", {k: round(float(v), 2) for k, v in zip(chain.names, chain.meta["acceptance"])})

# How much does the answer depend on the hyperparameters and the prior mean?
grid = sensitivity_curve(panel, EventModelSpec(seed=1, warmup=1000, kept=1000, chains=2),
                         a_values=[2, 20, 200], dm_means=[0.05, 0.275, 0.5])
print("\nreconciled probability, rows a_W = a_B, columns prior mean")
print("        " + "".join(f"{m:>8}" for m in grid.dm_means))
for a, row in zip(grid.a_values, grid.values):
    print(f"a = {a:>3}" + "".join(f"{v:8.3f}" for v in row))

# Larger prior sample sizes tie experts in different groups more closely.
for a in (2, 20, 200):
    rho = prior_correlation_exact(EventModelSpec(a_W=a, a_B=a), same_group=False)
    print(f"prior correlation across groups at a = {a}: {rho:.3f}")
