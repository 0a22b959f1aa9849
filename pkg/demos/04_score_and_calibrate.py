"""Scoring forecasters against realised values.

The log score rewards density placed on what actually happened.  Experts
whose intervals miss the realisation get a zero density and a score of
minus infinity, which the scorer flags rather than hides.  The calibration
curve compares the CDF values at the realisations with uniform positions.
"""
import numpy as np

from expertrecon import (
    ContinuousModelSpec,
    DecisionMakerPrior,
    PanelScenario,
    QuantileTriplet,
    ScoredForecaster,
    avg_log_score,
    calibration_curve,
    equal_weights_cdf,
    fit_expert,
    generate_continuous_panel,
    paired_score_comparison,
    reconciled_density,
    run_continuous,
    score_comparison_study,
)

rng = np.random.default_rng(4)
spec = ContinuousModelSpec(v_bar=1, v_bar_k=0.25, d1=0.5, d2=0.5)
scenario = PanelScenario(groups=(3, 2), n_quantities=6, spec=spec, seed=4)
panel = generate_continuous_panel(scenario)
prior = DecisionMakerPrior.uniform(0, 1)
qids = sorted({j.quantity for j in panel})
truth = {q: float(rng.uniform(0.2, 0.8)) for q in qids}

fits, recon = {}, []
for q in qids:
    members = [j for j in panel if j.quantity == q]
    fits[q] = [fit_expert(j.triplet) for j in members]
    chain = run_continuous(members, prior, ContinuousModelSpec(seed=1, warmup=500, kept=500,
                                                               chains=2))
    recon.append(reconciled_density(chain, prior))

x = [truth[q] for q in qids]
ew = ScoredForecaster.equal_weights("equal weights", [fits[q] for q in qids])
rc = ScoredForecaster("reconciled", recon)
for f in (ew, rc):
    print(f"{f.name:>14}: mean log score {avg_log_score(f, x):.3f}  {f.flags or ''}")

curve = calibration_curve([equal_weights_cdf(fits[q], truth[q]) for q in qids])
print("\nequal-weights calibration points (empirical, uniform):")
for e, u in curve.points:
    print(f"  {e:.3f}  {u:.3f}")
print(f"KS statistic {curve.ks_statistic:.3f}")

# Uniform density on [0, 10] at 5 scores log(0.1).
u = ScoredForecaster("uniform", [lambda v: 0.1 if 0 <= v <= 10 else 0.0])
print(f"\nuniform check: {avg_log_score(u, [5.0]):.5f}")

# Repeated synthetic studies: how often does reconciliation win?
study = score_comparison_study(PanelScenario(groups=(7, 2, 2), n_quantities=10, spec=spec),
                               replications=45, seed=2)
print(f"reconciled at least as good in {study.reconciled_wins:.0%} of 45 studies")
finite = np.isfinite(study.equal_weights)
if finite.sum() >= 3:
    p = paired_score_comparison(study.reconciled[finite], study.equal_weights[finite])
    print(f"Pr(reconciled has the higher mean score) = {p:.3f} "
          f"on the {finite.sum()} studies with finite pool scores")
