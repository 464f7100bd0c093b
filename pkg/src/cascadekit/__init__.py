"""Early-exit inference over cascades of complete models.

A cascade runs small models first and falls through to larger ones only
when confidence is low.  This package covers the full loop: training
softmax classifiers (optionally with a difficulty-aware confidence
regularizer), labeling instance difficulty by cross-training, executing
and calibrating cascades with exact cost accounting, scoring runs, and
predicting whether adding another model to a cascade can pay off.
"""

from .analysis import (
    GainScenario,
    OriginalExits,
    empirical_gain,
    gain_report,
    gain_upper_bound,
    load_scenario,
    max_gain_bound,
    predict_gain,
    save_scenario,
    solve_original_exits,
)
from .cascade import (
    Cascade,
    ExitTrace,
    StageSpec,
    calibrate_threshold,
    cascade_predict,
    load_cascade,
    load_traces,
    run_cascade,
    save_cascade,
    save_traces,
    speedup_ratio,
)
from .classifier import (
    Architecture,
    ClassDistribution,
    ClassifierModel,
    GradientCheckResult,
    TrainConfig,
    confidence,
    dar_pair_loss,
    gradient_check,
    load_model,
    predict,
    predict_batch,
    save_model,
    total_loss,
    train,
    train_with_log,
)
from .dataset import (
    Dataset,
    FoldAssignment,
    Instance,
    assign_folds,
    hash_featurize,
    load_dataset,
    save_dataset,
)
from .difficulty import (
    DifficultyReport,
    apply_difficulty,
    label_difficulty,
    load_report,
    save_report,
)
from .errors import NumericError, ValidationError
from .metrics import (
    MetricsReport,
    ScoredInstance,
    accuracy,
    dis,
    ece,
    evaluate,
    f1_binary,
    load_metrics,
    save_metrics,
    scored_from_traces,
    write_sweep_csv,
)
from .synthetic import planted_hard_task, tiered_task

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "Cascade",
    "ClassDistribution",
    "ClassifierModel",
    "Dataset",
    "DifficultyReport",
    "ExitTrace",
    "FoldAssignment",
    "GainScenario",
    "GradientCheckResult",
    "Instance",
    "MetricsReport",
    "NumericError",
    "OriginalExits",
    "ScoredInstance",
    "StageSpec",
    "TrainConfig",
    "ValidationError",
    "accuracy",
    "apply_difficulty",
    "assign_folds",
    "calibrate_threshold",
    "cascade_predict",
    "confidence",
    "dar_pair_loss",
    "dis",
    "ece",
    "empirical_gain",
    "evaluate",
    "f1_binary",
    "gain_report",
    "gain_upper_bound",
    "gradient_check",
    "hash_featurize",
    "label_difficulty",
    "load_cascade",
    "load_dataset",
    "load_metrics",
    "load_model",
    "load_report",
    "load_scenario",
    "load_traces",
    "max_gain_bound",
    "planted_hard_task",
    "predict",
    "predict_batch",
    "predict_gain",
    "run_cascade",
    "save_cascade",
    "save_dataset",
    "save_metrics",
    "save_model",
    "save_report",
    "save_scenario",
    "save_traces",
    "scored_from_traces",
    "solve_original_exits",
    "speedup_ratio",
    "tiered_task",
    "total_loss",
    "train",
    "train_with_log",
    "write_sweep_csv",
]
