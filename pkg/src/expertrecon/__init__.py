"""Bayesian reconciliation of grouped expert judgements.

Quantile triplets are fitted with a shifted log-logistic distribution and
pooled through a normal hierarchy on a standardized scale; probabilities for
one-off events are pooled through a beta hierarchy.  The package also scores
forecasters, checks calibration by simulation and keeps Delphi round records.
"""
__version__ = "0.1.0"

from .sll import (
    OrderingError,
    QuantileTriplet,
    SllParams,
    sll_cdf,
    sll_pdf,
    sll_quantile,
    sll_sample,
    solve_sll,
)
from .judgements import EventJudgement, PanelError, QuantileJudgement
from .standardize import DecisionMakerPrior, back_transform, standardize_triplet
from .continuous import (
    ContinuousModelSpec,
    proportion_event_probability,
    reconciled_quantiles,
    run_continuous,
    sample_theta,
)
from .events import EventModelSpec, prior_correlation, reconcile_event, sensitivity_curve
from .evaluate import (
    ScoredForecaster,
    avg_log_score,
    calibration_curve,
    equal_weights_cdf,
    equal_weights_pdf,
    fit_expert,
    paired_score_comparison,
    reconciled_density,
)
from .simulate import (
    PanelScenario,
    coverage_study,
    generate_continuous_panel,
    generate_event_panel,
    score_comparison_study,
)
from .delphi import Study, anonymised_bundle, final_panel, stopping_check
