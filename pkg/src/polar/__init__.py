"""Risk scoring for quantized LLM answers.

A harmonizer model is trained to agree with the LLM and every triggered
external information source at once, by minimizing a convex aggregate of the
per-source cross-entropy losses. The trained model's complement probability
on the LLM's stated answer is a risk score; calibration utilities evaluate it
against ground truth and a correction loop re-queries the LLM only where the
risk is high.
"""

from .calibration import (
    CalibrationReport,
    binned_r2,
    build_report,
    ece,
    majority_vote_estimate,
    majority_vote_scores,
    top_percentile_errors,
)
from .correction import (
    AnswerMapper,
    CorrectionPolicy,
    CorrectionRecord,
    LlmClient,
    MapResult,
    PromptBundle,
    build_followup,
    correct_batch,
    decide,
    default_prompt_bundle,
    map_response,
)
from .dataset import (
    ClassSpace,
    Dataset,
    DatasetError,
    Instance,
    LabelRow,
    SourceLabelMatrix,
    SynthConfig,
    datasets_equal,
    generate_synthetic,
    generate_synthetic_splits,
    import_wrench,
    load_dataset,
    save_dataset,
)
from .harmonizer import (
    HarmonizerParams,
    LossVector,
    Simplex,
    backward,
    cross_entropy,
    forward,
    init_params,
    load_params,
    loss_vector,
    save_params,
    softmax,
)
from .pareto import (
    AggregatorSpec,
    DominanceResult,
    aggregate,
    aggregate_gradient,
    check_dominance,
    equal_weights,
)
from .pipeline import ExperimentConfig, ExperimentResult, PairedRun, run_experiment, run_pilot_then_rebalanced
from .rebalance import (
    RebalanceConfig,
    ResidualStats,
    compute_residual_stats,
    max_eigen_weights,
    min_variance_weights,
    project_to_simplex,
    rebalance_weights,
)
from .scoring import PolarScore, ScoreBatchResult, load_scores, polar_score, save_scores, score_batch
from .trainer import TrainConfig, TrainReport, evaluate_objective, train

__version__ = "0.1.0"
