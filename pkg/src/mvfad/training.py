"""Optimization loop pieces: per-module Adam, the train step, grad checks.

One step consumes a normal/anomalous sample pair (already encoded) plus the
ground-truth mask of the anomalous image. The segmentation term supervises
both branches: the anomalous map against its mask and the normal map
against an all-zero mask. The encoder is frozen and never appears in the
optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .adaptation import BottleneckAdapter, CoarseToFineDecoder, SIMILARITY_TEMPERATURE
from .blocks import derive_seed
from .encoder import EmbeddingBundle
from .errors import TrainingDivergedError
from .fusion import GlobalViewFusion, LocalViewFusion
from .losses import LossBreakdown, contrastive_losses, seg_loss, total_loss
from .model import AnomalyDetectionModel
from .synthesis import PerlinParams

__all__ = [
    "TrainConfig",
    "StepInputs",
    "build_optimizer",
    "train_step",
    "GradCheckResult",
    "grad_check",
    "GRAD_CHECK_COMPONENTS",
]

K_SHOT_CHOICES = (1, 2, 4)


@dataclass(frozen=True)
class TrainConfig:
    """Few-shot regime, epoch budget, per-module learning rates and seeding."""

    k_shot: int = 2
    epochs: int = 200
    seed: int = 0
    lr_class_text: float = 1e-5
    lr_seg_text: float = 5e-5
    lr_image_adapter: float = 5e-4
    lr_decoder: float = 5e-4
    lr_fusion: float = 1e-4
    perlin: PerlinParams = field(default_factory=PerlinParams)
    view_indices: tuple[int, ...] = (5, 9, 14, 19, 27)
    resynthesize_each_epoch: bool = True

    def __post_init__(self):
        if self.k_shot not in K_SHOT_CHOICES:
            raise ValueError(f"k_shot must be one of {K_SHOT_CHOICES}, got {self.k_shot}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        for name in ("lr_class_text", "lr_seg_text", "lr_image_adapter", "lr_decoder", "lr_fusion"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class StepInputs:
    """One encoded sample pair ready for a training step."""

    bundle_plus: EmbeddingBundle
    bundle_minus: EmbeddingBundle
    mask: np.ndarray
    views_plus: list[EmbeddingBundle] | None = None
    views_minus: list[EmbeddingBundle] | None = None


def build_optimizer(model: AnomalyDetectionModel, config: TrainConfig) -> torch.optim.Adam:
    """Adam with one parameter group per trainable module.

    Both fusion branches share the fusion learning rate. Groups are named so
    checkpoints and diagnostics can report them.
    """
    lr_by_module = {
        "class_text_adapter": config.lr_class_text,
        "seg_text_adapter": config.lr_seg_text,
        "image_adapter": config.lr_image_adapter,
        "decoder": config.lr_decoder,
        "global_fusion": config.lr_fusion,
        "local_fusion": config.lr_fusion,
    }
    groups = []
    for name, module in model.trainable_modules().items():
        groups.append({"params": list(module.parameters()), "lr": lr_by_module[name], "name": name})
    return torch.optim.Adam(groups, betas=(0.9, 0.999), eps=1e-8)


def compute_losses(model: AnomalyDetectionModel, inputs: StepInputs):
    """Forward the trainable path and assemble every loss term.

    Returns the differentiable total and the float breakdown. Raises
    TrainingDivergedError naming the first non-finite term.
    """
    t_c_plus, t_c_minus, t_s = model.adapted_text()
    i_a_plus, f_plus = model.forward_features(inputs.bundle_plus, inputs.views_plus)
    i_a_minus, f_minus = model.forward_features(inputs.bundle_minus, inputs.views_minus)

    l_i2t, l_t2i, l_con = contrastive_losses(i_a_plus, i_a_minus, t_c_plus, t_c_minus)

    h, w = inputs.mask.shape
    map_plus = model.segmentation_map(f_plus, t_s, h, w)
    map_minus = model.segmentation_map(f_minus, t_s, h, w)
    mask = torch.as_tensor(np.asarray(inputs.mask, dtype=np.float64), dtype=map_minus.dtype)
    l_seg = 0.5 * (seg_loss(map_plus, torch.zeros_like(mask)) + seg_loss(map_minus, mask))
    l_tot = total_loss(l_con, l_seg)

    for name, term in (("l_i2t", l_i2t), ("l_t2i", l_t2i), ("l_seg", l_seg)):
        if not torch.isfinite(term):
            raise TrainingDivergedError(f"loss term {name} is not finite: {float(term)!r}")

    li, lt, ls = float(l_i2t.detach()), float(l_t2i.detach()), float(l_seg.detach())
    lc = (li + lt) / 2.0
    breakdown = LossBreakdown(l_i2t=li, l_t2i=lt, l_con=lc, l_seg=ls, l_tot=ls + lc)
    return l_tot, breakdown


def train_step(model: AnomalyDetectionModel, optimizer: torch.optim.Optimizer,
               inputs: StepInputs) -> LossBreakdown:
    """One Adam update over all trainable modules; the encoder is untouched."""
    optimizer.zero_grad(set_to_none=True)
    l_tot, breakdown = compute_losses(model, inputs)
    l_tot.backward()
    optimizer.step()
    return breakdown


# -- gradient verification ---------------------------------------------------

GRAD_CHECK_COMPONENTS = (
    "image_adapter",
    "class_text_adapter",
    "seg_text_adapter",
    "decoder",
    "global_fusion",
    "local_fusion",
)


@dataclass
class GradCheckResult:
    component: str
    max_rel_err: float | None
    checked_coords: int
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.max_rel_err is not None and self.max_rel_err <= 1e-4


def _probe(component_id: str, joint_dim: int, feature_dim: int, n_patches: int,
           num_views: int, seed: int):
    """Build one component in float64 plus a scalar loss closure over it."""
    gen = torch.Generator().manual_seed(derive_seed(seed, "grad-probe", component_id))

    def randn(*shape):
        return torch.randn(*shape, generator=gen, dtype=torch.float64)

    if component_id in ("image_adapter", "class_text_adapter", "seg_text_adapter"):
        module = BottleneckAdapter(joint_dim, seed=derive_seed(seed, component_id)).double()
        x = randn(1, joint_dim)
        w = randn(1, joint_dim)
        return module, lambda: (module(x) * w).sum()

    if component_id == "decoder":
        stage_set = (6, 9, 12)
        module = CoarseToFineDecoder(
            feature_dim, joint_dim, stage_set, seed=derive_seed(seed, component_id)).double()
        stages = {l: randn(n_patches, feature_dim) for l in stage_set}
        w = randn(n_patches, joint_dim)
        return module, lambda: (module(stages) * w).sum()

    if component_id == "global_fusion":
        module = GlobalViewFusion(
            joint_dim, num_views, seed=derive_seed(seed, component_id)).double()
        views = [randn(1, joint_dim) for _ in range(num_views)]
        w = randn(1, joint_dim)
        return module, lambda: (module(views) * w).sum()

    if component_id == "local_fusion":
        module = LocalViewFusion(
            feature_dim, joint_dim, num_views, seed=derive_seed(seed, component_id)).double()
        views = [randn(n_patches, feature_dim) for _ in range(num_views)]
        w = randn(n_patches, joint_dim)
        return module, lambda: (module(views) * w).sum()

    raise ValueError(f"unknown component {component_id!r}; "
                     f"expected one of {GRAD_CHECK_COMPONENTS + ('encoder',)}")


def grad_check(component_id: str, *, joint_dim: int = 16, feature_dim: int = 16,
               n_patches: int = 16, num_views: int = 5, eps: float = 1e-5,
               seed: int = 0, coords_per_param: int = 32) -> GradCheckResult:
    """Compare autograd gradients against central finite differences.

    Runs in double precision. For each parameter tensor a seeded subset of
    coordinates is perturbed by +/- eps; the error is reported relative to
    the largest gradient magnitude seen for that tensor. Probing the frozen
    encoder reports that there is nothing to check.
    """
    if component_id == "encoder":
        return GradCheckResult("encoder", None, 0, "no trainable parameters")

    module, loss_fn = _probe(component_id, joint_dim, feature_dim, n_patches, num_views, seed)
    params = dict(module.named_parameters())

    loss = loss_fn()
    grads = torch.autograd.grad(loss, list(params.values()))
    grads = dict(zip(params.keys(), grads))
    for name, g in grads.items():
        if not torch.isfinite(g).all():
            raise TrainingDivergedError(f"non-finite analytic gradient in {name}")

    max_rel = 0.0
    checked = 0
    for name, p in params.items():
        g = grads[name].reshape(-1)
        flat = p.detach().reshape(-1)
        numel = flat.numel()
        rng = np.random.default_rng(derive_seed(seed, "grad-coords", component_id, name))
        coords = rng.choice(numel, size=min(numel, coords_per_param), replace=False)

        numeric = np.empty(coords.size, dtype=np.float64)
        with torch.no_grad():
            for k, idx in enumerate(coords):
                orig = flat[idx].item()
                flat[idx] = orig + eps
                f_plus = loss_fn().item()
                flat[idx] = orig - eps
                f_minus = loss_fn().item()
                flat[idx] = orig
                numeric[k] = (f_plus - f_minus) / (2.0 * eps)

        analytic = g[coords].numpy()
        scale = max(float(g.abs().max()), float(np.abs(numeric).max()), 1e-12)
        rel = float(np.abs(analytic - numeric).max() / scale)
        max_rel = max(max_rel, rel)
        checked += coords.size

    return GradCheckResult(component_id, max_rel, checked)
