"""istdkit: cross-dataset alignment, fusion augmentation and scoring for
infrared small-target detection corpora.

The pipeline stages are plain functions over numpy arrays: gamma alignment
of a source dataset onto a target dataset's intensity statistics, SSIM
sliding-window selection of paste sites, gradient-domain (Poisson)
compositing of target patches, seeded Gaussian perturbation with a
multi-scale consistency loss, and the standard object-level detection
metrics (IoU, detection probability, false-alarm rate, ROC sweeps).
"""

from .channel_align import (
    GammaParams,
    align_dataset,
    apply_gamma,
    compute_gamma,
    refine_gamma,
)
from .dataset_io import (
    DatasetError,
    DatasetStats,
    LabeledSample,
    dataset_stats,
    load_dataset,
    save_sample,
)
from .metrics import MetricsReport, RocCurve, evaluate, iou, pd_fa, roc
from .noise_repr import (
    FeaturePyramid,
    NoiseConfig,
    add_noise,
    bce_loss,
    feature_pyramid,
    noise_loss,
    total_loss,
)
from .patch_match import (
    MatchCandidate,
    MatchConfig,
    TargetPatch,
    extract_patches,
    load_patches,
    save_patch,
    sliding_match,
    ssim,
    top_k,
)
from .pipeline import (
    PipelineConfig,
    PipelineError,
    RunReport,
    derive_seed,
    parse_config,
    run_pipeline,
)
from .poisson_fusion import (
    FusionResult,
    GuidanceField,
    PoissonConvergenceError,
    fuse_dataset,
    fusion_energy,
    guidance_field,
    seamless_clone,
    solve_poisson,
)

__version__ = "0.1.0"

__all__ = [
    "GammaParams",
    "align_dataset",
    "apply_gamma",
    "compute_gamma",
    "refine_gamma",
    "DatasetError",
    "DatasetStats",
    "LabeledSample",
    "dataset_stats",
    "load_dataset",
    "save_sample",
    "MetricsReport",
    "RocCurve",
    "evaluate",
    "iou",
    "pd_fa",
    "roc",
    "FeaturePyramid",
    "NoiseConfig",
    "add_noise",
    "bce_loss",
    "feature_pyramid",
    "noise_loss",
    "total_loss",
    "MatchCandidate",
    "MatchConfig",
    "TargetPatch",
    "extract_patches",
    "load_patches",
    "save_patch",
    "sliding_match",
    "ssim",
    "top_k",
    "PipelineConfig",
    "PipelineError",
    "RunReport",
    "derive_seed",
    "parse_config",
    "run_pipeline",
    "FusionResult",
    "GuidanceField",
    "PoissonConvergenceError",
    "fuse_dataset",
    "fusion_energy",
    "guidance_field",
    "seamless_clone",
    "solve_poisson",
]
