"""Gaze-centered time-contrastive representation learning toolkit.

Implements the pipeline end to end at desk scale: gaze extraction from
saliency maps, gaze-centered cropping, fixation segmentation, temporal
positive-pair sampling, InfoNCE training of a query/momentum encoder pair,
linear probing, symmetric GloVe co-occurrence embeddings and linear CKA
alignment, plus a synthetic world for mechanism-level experiments.
"""

from .cka import (
    RepMatrix,
    SeedScores,
    TTestResult,
    aggregate_object_reps,
    concat_layers,
    linear_cka,
    paired_t_test,
)
from .contrastive import (
    EncoderConfig,
    ModelParams,
    StepMetrics,
    TrainConfig,
    backbone_features,
    ema_update,
    forward,
    info_nce,
    init_params,
    train,
)
from .gaze import (
    CropWindow,
    DisplacementStats,
    FixationSegment,
    GazePoint,
    GazeTrajectory,
    SaliencyMap,
    apply_crop,
    crop_window,
    displacement_stats,
    gaze_distribution,
    peak_gaze,
    segment_fixations,
)
from .glove import (
    CoocMatrix,
    GloveConfig,
    GloveModel,
    build_cooc,
    glove_loss_grad,
    glove_weight,
    train_glove,
    validate_glove,
)
from .probe import ProbeConfig, ProbeModel, evaluate, sensitivity_delta, train_probe
from .sampling import (
    FrameManifest,
    FrameRecord,
    PairSpec,
    SamplerConfig,
    sample_pairs,
    split_clips,
)
from .synth import LabeledFrame, WorldConfig, gen_stream

__all__ = [
    "CoocMatrix",
    "CropWindow",
    "DisplacementStats",
    "EncoderConfig",
    "FixationSegment",
    "FrameManifest",
    "FrameRecord",
    "GazePoint",
    "GazeTrajectory",
    "GloveConfig",
    "GloveModel",
    "LabeledFrame",
    "ModelParams",
    "PairSpec",
    "ProbeConfig",
    "ProbeModel",
    "RepMatrix",
    "SaliencyMap",
    "SamplerConfig",
    "SeedScores",
    "StepMetrics",
    "TTestResult",
    "TrainConfig",
    "WorldConfig",
    "aggregate_object_reps",
    "apply_crop",
    "backbone_features",
    "build_cooc",
    "concat_layers",
    "crop_window",
    "displacement_stats",
    "ema_update",
    "evaluate",
    "forward",
    "gaze_distribution",
    "gen_stream",
    "glove_loss_grad",
    "glove_weight",
    "info_nce",
    "init_params",
    "linear_cka",
    "paired_t_test",
    "peak_gaze",
    "sample_pairs",
    "segment_fixations",
    "sensitivity_delta",
    "split_clips",
    "train",
    "train_glove",
    "train_probe",
    "validate_glove",
]
