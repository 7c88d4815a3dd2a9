"""Few-shot 3D anomaly classification and segmentation.

Point clouds are rendered into multi-view images, synthetic anomalies are
blended onto normal samples, and small trainable heads (adapters, a
coarse-to-fine decoder and multi-view fusion) are optimized over a frozen
encoder with a contrastive + segmentation objective. The top-level API is
the scikit-learn style :class:`MultiViewAnomalyDetector`.
"""

__version__ = "0.1.0"

from .adaptation import (
    BottleneckAdapter,
    CoarseToFineDecoder,
    adapt_class_text,
    adapt_seg_text,
    anomaly_map,
    similarity_map,
)
from .encoder import EmbeddingBundle, EncoderConfig, FrozenEncoder, PromptSet, default_prompt_set
from .estimator import MultiViewAnomalyDetector
from .fusion import GlobalViewFusion, LocalViewFusion, enhance
from .geometry import (
    CameraModel,
    PointCloudGrid,
    RotationAngles,
    backproject_depth,
    project_points,
    rotate_cloud,
    rotation_matrix,
    view_grid,
)
from .losses import LossBreakdown, contrastive_losses, seg_loss, total_loss
from .metrics import EvalReport, aupr, aupro, auroc, p_auroc
from .model import AnomalyDetectionModel, ModelConfig
from .rendering import MultiViewSet, RenderedView, render_multiview, render_view, select_views
from .scoring import ScorePair, classification_score
from .synthesis import AnomalySample, PerlinParams, foreground_mask, perlin_field, synthesize_anomaly
from .training import GradCheckResult, TrainConfig, grad_check, train_step

__all__ = [
    "MultiViewAnomalyDetector",
    "AnomalyDetectionModel",
    "ModelConfig",
    "EncoderConfig",
    "FrozenEncoder",
    "EmbeddingBundle",
    "PromptSet",
    "default_prompt_set",
    "PointCloudGrid",
    "CameraModel",
    "RotationAngles",
    "rotation_matrix",
    "rotate_cloud",
    "view_grid",
    "project_points",
    "backproject_depth",
    "RenderedView",
    "MultiViewSet",
    "render_view",
    "render_multiview",
    "select_views",
    "PerlinParams",
    "AnomalySample",
    "foreground_mask",
    "perlin_field",
    "synthesize_anomaly",
    "BottleneckAdapter",
    "CoarseToFineDecoder",
    "adapt_class_text",
    "adapt_seg_text",
    "similarity_map",
    "anomaly_map",
    "GlobalViewFusion",
    "LocalViewFusion",
    "enhance",
    "LossBreakdown",
    "contrastive_losses",
    "seg_loss",
    "total_loss",
    "TrainConfig",
    "train_step",
    "GradCheckResult",
    "grad_check",
    "ScorePair",
    "classification_score",
    "auroc",
    "aupr",
    "p_auroc",
    "aupro",
    "EvalReport",
]
