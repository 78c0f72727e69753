"""Concurrent softmax, concurrent-rate estimation, soft-balance sampling
with a hybrid training schedule, and an ignore-aware mAP evaluator."""

from .evaluation import EvalReport, average_precision, evaluate
from .losses import (
    LossResult,
    NumericalDomainError,
    bce_loss,
    concurrent_softmax_ce,
    concurrent_softmax_infer,
    effective_number_weights,
    focal_loss,
    softmax_ce,
    softmax_probs,
)
from .rates import apply_hierarchy_rule, estimate_rates, top_confused_pairs
from .sampling import SamplingPlan, build_plan, exposure_report, plan_entropy, sample_batch
from .schedule import Phase, TrainPlan, hybrid_plan, next_epoch, one_x_schedule, single_phase_plan
from .synth import SynthConfig, SynthDataset, generate, rate_recovery_check, split_indices
from .taxonomy import (
    AnnotationSet,
    Instance,
    annotations_from_labels,
    Taxonomy,
    ancestors,
    compute_counts,
    imbalance_magnitude,
    load_annotations,
    load_taxonomy,
)
from .trainer import LossSpec, Model, forward, predict, train

__version__ = "0.1.0"
