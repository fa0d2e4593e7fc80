"""Profit-driven churn prevention toolkit.

Campaign-cost math with individual customer lifetime values, a
regret-trained neural scorer with classic baselines, empirical profit
metrics (MP/MSP), SMOTE, and a reproducible benchmark harness with
nonparametric comparison tests.
"""

from .campaign import (
    CampaignParams,
    break_even_clv,
    campaign_cost,
    midpoint,
    normalized_gap,
    optimal_decision,
    optimal_total_profit,
    prescribe,
    regret,
    smooth_regret,
    smooth_regret_grad,
    surrogate,
    total_profit,
)
from .data import (
    CustomerRecord,
    Dataset,
    FeatureScaler,
    SegmentAssignment,
    load_dataset,
    save_dataset,
    segment_by_clv,
    standardize,
)
from .experiments import (
    BenchmarkReport,
    RunConfig,
    SyntheticSpec,
    bundled_specs,
    generate_synthetic,
    monte_carlo_cv,
    run_benchmark,
    sensitivity_sweep,
)
from .metrics import MspResult, ThresholdedEvaluation, accuracy, mp, msp, profit_at_threshold, targeted_fraction
from .models import Mlp, TrainConfig, fit_cart, fit_logistic, forward, init_mlp, knn_score, train
from .smote import SmoteConfig, smote_balance
from .stats import HolmReport, RankTable, compare_methods, friedman_iman_davenport, holm, nemenyi_z, rank_methods

__version__ = "0.1.0"
