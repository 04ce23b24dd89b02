"""Pseudo-label quality pipeline for semi-supervised instance segmentation.

Quality scoring, decoupled dual-threshold filtering, dynamic category
correction, uncertainty-weighted mask losses with verified gradients,
minimum-cost matching, EMA teacher-student training, and a seeded synthetic
benchmark that exercises the whole pipeline at desk scale.
"""

from .instances import (
    BinaryMask,
    ClassLogits,
    GroundTruthInstance,
    InstancePrediction,
    MaskLogitGrid,
    binarize,
    mask_iou,
    rle_decode,
    rle_encode,
    sigmoid,
    softmax,
)
from .quality import (
    QualityScores,
    UncertaintyMap,
    class_quality,
    coupled_score,
    mask_quality,
    score_instance,
    uncertainty_map,
)
from .filtering import (
    FilterConfig,
    FilteredSet,
    FilterMode,
    RejectReason,
    filter_coupled,
    filter_ddtf,
    filter_predictions,
)
from .correction import (
    ClassifierQuery,
    Distribution,
    ExternalClassifier,
    FusionState,
    MockExternalClassifier,
    PrecomputedClassifier,
    correct_category,
    fuse,
    fusion_weight,
)
from .matching import CostWeights, MatchResult, PseudoLabel, hungarian, match_cost
from .losses import (
    LinearPixelModel,
    LossConfig,
    SupervisedLoss,
    finite_difference_check,
    pmua_gradient,
    pmua_mask_loss,
    supervised_loss,
    total_loss,
)
from .pipeline import PseudoLabelBatch, derive_pseudo_labels
from .synthetic import (
    BenchmarkConfig,
    NoiseChannel,
    SyntheticScene,
    corrupt_predictions,
    generate_dataset,
    generate_scene,
)
from .training import (
    EmaConfig,
    PipelineSettings,
    ToySegmenter,
    TrainSchedule,
    ablation_settings,
    ema_update,
    evaluate_segmenter,
    run_burn_in,
    run_mutual_learning,
    run_pipeline,
)
from .evaluation import (
    ErrorCategory,
    Taxonomy,
    categorize_errors,
    confusion_matrix,
    score_iou_table,
    simplified_ap,
)

__version__ = "0.1.0"
