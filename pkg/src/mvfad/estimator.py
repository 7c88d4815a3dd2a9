"""Scikit-learn style estimator wrapping the full detection pipeline.

``fit`` consumes K normal (image, point-grid) pairs, synthesizes fresh
anomalous counterparts every epoch, renders the selected views of each
sample's cloud with both textures, and optimizes the adapters, decoder and
fusion against the contrastive + segmentation objective. ``score_samples``
and ``transform`` produce image-level anomaly scores and pixel anomaly
maps for held-out samples.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator

from .blocks import derive_seed
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .encoder import EncoderConfig, PromptSet, default_prompt_set
from .geometry import DEFAULT_VIEW_ANGLES, PointCloudGrid, fit_camera, rotation_matrix, view_grid
from .metrics import EvalReport, aupr, aupro, auroc, p_auroc
from .model import AnomalyDetectionModel, ModelConfig
from .rendering import ViewProjection
from .scoring import ScorePair, classification_score
from .synthesis import PerlinParams, procedural_texture, synthesize_anomaly
from .training import StepInputs, TrainConfig, build_optimizer, train_step
from .validation import check_sample_pairs

__all__ = ["MultiViewAnomalyDetector"]


class MultiViewAnomalyDetector(BaseEstimator):
    """Few-shot anomaly detector over RGB images paired with point-cloud grids.

    Parameters mirror the pipeline defaults: a 240x240 input, patch 16,
    twelve frozen encoder blocks with stages {6, 9, 12} tapped, 27 candidate
    views with the five-view subset {5, 9, 14, 19, 27}, and the per-module
    learning rates (class text 1e-5, seg text 5e-5, image adapter 5e-4,
    decoder 5e-4, fusion 1e-4).

    ``score_samples`` returns the anomaly score (higher = more anomalous),
    ``transform`` the per-pixel anomaly maps in [0, 1].
    """

    def __init__(self, k_shot=2, epochs=200, seed=0,
                 image_size=240, patch_size=16, encoder_depth=12,
                 feature_dim=64, joint_dim=64, stage_set=(6, 9, 12),
                 num_heads=4, mlp_ratio=4,
                 adapter_hidden_ratio=4, adapter_alpha=0.2,
                 decoder_blocks=2, fusion_blocks=2, se_ratio=2,
                 use_multiview=True, view_indices=(5, 9, 14, 19, 27),
                 view_angles=DEFAULT_VIEW_ANGLES,
                 background=(0.0, 0.0, 0.0),
                 lr_class_text=1e-5, lr_seg_text=5e-5, lr_image_adapter=5e-4,
                 lr_decoder=5e-4, lr_fusion=1e-4,
                 perlin_periods=(4, 4), perlin_octaves=2, perlin_persistence=0.5,
                 perlin_threshold=0.5, resynthesize_each_epoch=True,
                 class_name="object", normal_prompts=None, anomalous_prompts=None):
        self.k_shot = k_shot
        self.epochs = epochs
        self.seed = seed
        self.image_size = image_size
        self.patch_size = patch_size
        self.encoder_depth = encoder_depth
        self.feature_dim = feature_dim
        self.joint_dim = joint_dim
        self.stage_set = stage_set
        self.num_heads = num_heads
        self.mlp_ratio = mlp_ratio
        self.adapter_hidden_ratio = adapter_hidden_ratio
        self.adapter_alpha = adapter_alpha
        self.decoder_blocks = decoder_blocks
        self.fusion_blocks = fusion_blocks
        self.se_ratio = se_ratio
        self.use_multiview = use_multiview
        self.view_indices = view_indices
        self.view_angles = view_angles
        self.background = background
        self.lr_class_text = lr_class_text
        self.lr_seg_text = lr_seg_text
        self.lr_image_adapter = lr_image_adapter
        self.lr_decoder = lr_decoder
        self.lr_fusion = lr_fusion
        self.perlin_periods = perlin_periods
        self.perlin_octaves = perlin_octaves
        self.perlin_persistence = perlin_persistence
        self.perlin_threshold = perlin_threshold
        self.resynthesize_each_epoch = resynthesize_each_epoch
        self.class_name = class_name
        self.normal_prompts = normal_prompts
        self.anomalous_prompts = anomalous_prompts

    # -- configuration assembly -------------------------------------------

    def _encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            image_size=self.image_size, patch_size=self.patch_size,
            depth=self.encoder_depth, feature_dim=self.feature_dim,
            joint_dim=self.joint_dim, stage_set=tuple(self.stage_set),
            weight_seed=derive_seed(self.seed, "encoder-weights"),
            num_heads=self.num_heads, mlp_ratio=self.mlp_ratio,
        )

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            encoder=self._encoder_config(), seed=self.seed,
            use_multiview=self.use_multiview, num_views=len(tuple(self.view_indices)),
            adapter_hidden_ratio=self.adapter_hidden_ratio,
            adapter_alpha=self.adapter_alpha, decoder_blocks=self.decoder_blocks,
            fusion_blocks=self.fusion_blocks, num_heads=self.num_heads,
            se_ratio=self.se_ratio,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            k_shot=self.k_shot, epochs=self.epochs, seed=self.seed,
            lr_class_text=self.lr_class_text, lr_seg_text=self.lr_seg_text,
            lr_image_adapter=self.lr_image_adapter, lr_decoder=self.lr_decoder,
            lr_fusion=self.lr_fusion, perlin=self._perlin_params(),
            view_indices=tuple(self.view_indices),
            resynthesize_each_epoch=self.resynthesize_each_epoch,
        )

    def _perlin_params(self) -> PerlinParams:
        return PerlinParams(
            grid_periods=tuple(self.perlin_periods), octaves=self.perlin_octaves,
            persistence=self.perlin_persistence, threshold=self.perlin_threshold,
        )

    def _resolve_prompts(self) -> tuple[PromptSet, PromptSet]:
        def resolve(spec, state):
            if spec is None:
                return default_prompt_set(state, self.class_name)
            if isinstance(spec, PromptSet):
                return spec
            if isinstance(spec, (list, tuple)):
                return PromptSet(prompts=tuple(spec), class_name=self.class_name)
            return PromptSet.from_file(spec, class_name=self.class_name)

        return resolve(self.normal_prompts, "normal"), resolve(self.anomalous_prompts, "anomalous")

    # -- rendering & encoding helpers ---------------------------------------

    def _selected_rotations(self):
        grid = view_grid(tuple(self.view_angles))
        indices = tuple(self.view_indices)
        for idx in indices:
            if not 1 <= idx <= len(grid):
                raise ValueError(f"view index {idx} out of range 1..{len(grid)}")
        if len(set(indices)) != len(indices):
            raise ValueError(f"view indices must be distinct, got {indices}")
        return [rotation_matrix(grid[i - 1]) for i in indices]

    def _view_projections(self, cloud: PointCloudGrid) -> list[ViewProjection]:
        centered = cloud.centered()
        cam = fit_camera(centered, self.image_size, self.image_size)
        return [
            ViewProjection(centered, rot, cam, self.image_size, self.image_size)
            for rot in self._selected_rotations()
        ]

    def _encode_views(self, projections, texture):
        return [
            self.model_.encoder.encode_image(
                proj.paint(texture, self.background).image)
            for proj in projections
        ]

    # -- fitting --------------------------------------------------------------

    def fit(self, samples, y=None):
        """Train the adapters, decoder and fusion on K normal samples.

        ``samples`` is a list of exactly ``k_shot`` (image, PointCloudGrid)
        pairs at the configured image size. ``y`` is ignored (present for
        scikit-learn compatibility).
        """
        config = self._train_config()  # validates k_shot / epochs / lrs
        pairs = check_sample_pairs(samples, self.image_size)
        if len(pairs) != config.k_shot:
            raise ValueError(f"expected k_shot={config.k_shot} samples, got {len(pairs)}")

        self.model_ = AnomalyDetectionModel(self._model_config())
        normal_prompts, anomalous_prompts = self._resolve_prompts()
        self.model_.set_prompts(normal_prompts, anomalous_prompts)
        self.prompts_ = {"normal": list(normal_prompts.prompts),
                         "anomalous": list(anomalous_prompts.prompts),
                         "class_name": self.class_name}
        optimizer = build_optimizer(self.model_, config)

        shots = []
        for image, cloud in pairs:
            depth = np.where(cloud.valid, cloud.points[..., 2], 0.0)
            projections = self._view_projections(cloud) if self.use_multiview else None
            shots.append({
                "image": image,
                "depth": depth,
                "bundle": self.model_.encoder.encode_image(image),
                "projections": projections,
                "views": self._encode_views(projections, image) if projections else None,
            })

        perlin = self._perlin_params()
        self.history_ = []
        for epoch in range(config.epochs):
            synth_tag = epoch if config.resynthesize_each_epoch else 0
            for shot_idx, shot in enumerate(shots):
                source = procedural_texture(
                    self.image_size, self.image_size,
                    derive_seed(config.seed, "anomaly-source", synth_tag, shot_idx))
                asample = synthesize_anomaly(
                    shot["image"], shot["depth"], source, perlin,
                    derive_seed(config.seed, "synth", synth_tag, shot_idx))
                views_minus = (
                    self._encode_views(shot["projections"], asample.x_minus)
                    if shot["projections"] else None
                )
                inputs = StepInputs(
                    bundle_plus=shot["bundle"],
                    bundle_minus=self.model_.encoder.encode_image(asample.x_minus),
                    mask=asample.mask.astype(np.float64),
                    views_plus=shot["views"],
                    views_minus=views_minus,
                )
                self.history_.append(train_step(self.model_, optimizer, inputs))
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit() or load() first")

    # -- inference --------------------------------------------------------

    def score_one(self, image, cloud: PointCloudGrid) -> tuple[ScorePair, np.ndarray]:
        """Score a single sample; returns the score pair and the anomaly map."""
        self._check_fitted()
        [(image, cloud)] = check_sample_pairs([(image, cloud)], self.image_size)
        bundle = self.model_.encoder.encode_image(image)
        view_bundles = None
        if self.use_multiview:
            view_bundles = self._encode_views(self._view_projections(cloud), image)
        with torch.no_grad():
            t_c_plus, t_c_minus, t_s = self.model_.adapted_text()
            i_a, f = self.model_.forward_features(bundle, view_bundles)
            s_map = self.model_.segmentation_map(f, t_s)
        score = classification_score(i_a, t_c_plus, t_c_minus, s_map)
        return score, s_map.cpu().numpy().astype(np.float64)

    def score_samples(self, samples) -> np.ndarray:
        """Anomaly score per sample; higher means more anomalous."""
        return np.array([self.score_one(img, cloud)[0].a_score for img, cloud in samples])

    def transform(self, samples) -> np.ndarray:
        """Per-pixel anomaly maps in [0, 1], stacked to (N, S, S)."""
        return np.stack([self.score_one(img, cloud)[1] for img, cloud in samples])

    def predict(self, samples, threshold: float = 1.0) -> np.ndarray:
        """Binary anomaly decision: score above threshold (default 1.0).

        The default splits the score range (0, 2) in half; calibrate on
        validation data for real use.
        """
        return (self.score_samples(samples) > threshold).astype(int)

    def evaluate(self, samples, labels, masks=None, names=None,
                 fpr_limit: float = 0.3) -> EvalReport:
        """Full metric report over labeled samples.

        ``masks`` (optional) holds per-sample ground-truth masks, ``None``
        entries meaning all-normal; pixel metrics are computed when given.
        """
        self._check_fitted()
        labels = [int(l) for l in labels]
        scores, maps = [], []
        per_sample = []
        for i, (img, cloud) in enumerate(samples):
            pair, s_map = self.score_one(img, cloud)
            scores.append(pair.a_score)
            maps.append(s_map)
            per_sample.append({
                "name": names[i] if names else f"sample_{i:03d}",
                "label": labels[i],
                "a_score": pair.a_score,
                "s_plus": pair.s_plus,
                "s_minus": pair.s_minus,
                "max_map": pair.max_map,
            })
        report_masks = None
        if masks is not None:
            report_masks = [
                np.zeros(m.shape, dtype=bool) if gt is None else np.asarray(gt) > 0.5
                for m, gt in zip(maps, masks)
            ]
        return EvalReport(
            i_auroc=auroc(scores, labels),
            aupr=aupr(scores, labels),
            p_auroc=p_auroc(maps, report_masks) if report_masks is not None else None,
            aupro=(aupro(maps, report_masks, fpr_limit)
                   if report_masks is not None and any(m.any() for m in report_masks) else None),
            per_sample=per_sample,
            config=self.get_params(),
        )

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        """Write the trained parameters and configuration echo to a file."""
        self._check_fitted()
        params = {k: (list(v) if isinstance(v, tuple) else v)
                  for k, v in self.get_params().items()}
        save_checkpoint(path, Checkpoint(
            model_config=self.model_.config.to_dict(),
            params=self.model_.trainable_state(),
            train_config=params,
            prompts=self.prompts_,
        ))

    @classmethod
    def load(cls, path) -> "MultiViewAnomalyDetector":
        """Reconstruct a fitted estimator from a checkpoint file."""
        ckpt = load_checkpoint(path)
        est = cls(**ckpt.train_config)
        est.model_ = AnomalyDetectionModel(ModelConfig.from_dict(ckpt.model_config))
        est.model_.load_trainable_state(ckpt.params)
        est.prompts_ = ckpt.prompts
        est.model_.set_prompts(
            PromptSet(prompts=tuple(ckpt.prompts["normal"]),
                      class_name=ckpt.prompts.get("class_name", "object")),
            PromptSet(prompts=tuple(ckpt.prompts["anomalous"]),
                      class_name=ckpt.prompts.get("class_name", "object")),
        )
        est.history_ = []
        return est
