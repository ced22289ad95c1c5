"""Online class-incremental learning with uncertainty-driven replay memory."""

from .harness import (
    ER_SCORE,
    SCORE_CHOICES,
    ExperimentConfig,
    GridResult,
    RunArtifacts,
    config_fingerprint,
    config_from_dict,
    load_config_dict,
    run_er_baseline,
    run_grid,
    run_online_cl,
    run_single,
)
from .memory import (
    RETENTION_MODES,
    STRATEGIES,
    MemoryEntry,
    ReplayMemory,
    class_quotas,
    select_retained,
)
from .metrics import (
    AccuracyMatrix,
    RunSummary,
    last_accuracy,
    last_forgetting,
    relative_improvement,
)
from .models import (
    MODEL_KINDS,
    SoftmaxRegression,
    TanhMLP,
    TrainingDivergenceError,
    TrainStepReport,
    cross_entropy,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .rng import SUBSTREAMS, substream
from .scoring import (
    SCORE_KINDS,
    PerturbationFamily,
    bregman_information,
    entropy,
    least_confidence,
    log_sum_exp,
    ratio_confidence,
    score_sample,
    score_samples,
    smallest_margin,
    softmax,
    vote_disagreement,
)
from .stream import (
    TASK_ORDERINGS,
    Dataset,
    Sample,
    StreamBatch,
    SyntheticSpec,
    TaskAssignment,
    assign_classes,
    generate_synthetic,
    load_csv,
    longtail_sizes,
    make_stream,
    train_test_split_by_class,
)

__version__ = "0.1.0"
