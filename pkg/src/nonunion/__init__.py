"""Risk models for failed healing after long-bone non-union revision surgery.

Pipeline pieces: cohort schema + synthetic generator, fit-on-train
preprocessing, three probability classifiers (logistic regression, RBF SVM
with Platt scaling, gradient-boosted trees), UPM-based evaluation, a
300-resample Wilcoxon comparison protocol, LOWESS calibration analysis, and
a training-size ablation.  See the ``nonunion`` CLI for batch usage.
"""

from .calibration import CalibrationReport, calibration_odds_ratio, calibration_report, lowess
from .cohort import (
    Dataset,
    FeatureSchema,
    FeatureSpec,
    SplitIndices,
    SyntheticConfig,
    default_schema,
    generate_synthetic_cohort,
    load_dataset,
    load_schema,
    save_schema,
    split_dataset,
    write_dataset,
)
from .compare import (
    ComparisonResult,
    ResamplePlan,
    bonferroni,
    ecdf,
    make_resamples,
    paired_scores,
    wilcoxon_signed_rank,
)
from .experiments import (
    AblationPlan,
    ExperimentConfig,
    SourceConfig,
    ThresholdPolicy,
    default_config,
    run_ablation,
    run_all,
    run_comparison,
    run_full_pipeline,
)
from .gbt import GbtConfig, GbtModel, predict_proba_gbt, train_gbt
from .logistic import LinearModel, LogisticConfig, predict_proba_linear, train_logistic
from .metrics import (
    ConfusionMatrix,
    MetricReport,
    companion_metrics,
    confusion,
    min_threshold_for_sensitivity,
    min_threshold_for_specificity,
    sweep_thresholds,
    upm,
)
from .preprocess import (
    DesignMatrix,
    FittedTransformer,
    compute_class_weights,
    fit_transformer,
    transform,
    with_class_weights,
)
from .svm import SvmConfig, SvmModel, decision_function, fit_platt, predict_proba_svm, train_svm

__version__ = "0.1.0"
