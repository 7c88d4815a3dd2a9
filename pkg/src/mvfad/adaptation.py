"""Trainable adapters and the coarse-to-fine decoder over frozen features.

Adapters are bottleneck MLPs with a residual blend; the decoder projects
multi-stage patch features to the joint width, concatenates them along the
channel axis and refines the result with transformer blocks. Patch-vs-text
similarity logits and the upsampled anomaly map are computed here as well.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .blocks import TransformerBlock, seed_everything_module
from .errors import NumericDegeneracyError

__all__ = [
    "BottleneckAdapter",
    "CoarseToFineDecoder",
    "adapt_class_text",
    "adapt_seg_text",
    "similarity_map",
    "anomaly_map",
    "SIMILARITY_TEMPERATURE",
]

SIMILARITY_TEMPERATURE = 0.07


class BottleneckAdapter(nn.Module):
    """Residual bottleneck MLP: ``alpha * mlp(x) + (1 - alpha) * x``.

    With ``alpha=0`` the adapter is the identity; with ``alpha=1`` it is the
    plain MLP. Input and output width are both ``dim``.
    """

    def __init__(self, dim: int, hidden_ratio: int = 4, alpha: float = 0.2, seed: int = 0):
        super().__init__()
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {alpha}")
        hidden = max(1, dim // hidden_ratio)
        self.alpha = float(alpha)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))
        seed_everything_module(self, seed)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.alpha * self.mlp(x) + (1.0 - self.alpha) * x


def adapt_class_text(adapter: BottleneckAdapter, t_plus: torch.Tensor,
                     t_minus: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Run one shared adapter over both class-level text embeddings."""
    return adapter(t_plus), adapter(t_minus)


def adapt_seg_text(adapter: BottleneckAdapter, t_plus: torch.Tensor,
                   t_minus: torch.Tensor) -> torch.Tensor:
    """Stack the adapted text embeddings, normal row first, anomaly second.

    The row order is load-bearing: the anomaly map reads the second column
    of the similarity logits.
    """
    return torch.cat([adapter(t_plus), adapter(t_minus)], dim=0)


class CoarseToFineDecoder(nn.Module):
    """Fuse multi-stage patch features into joint-width local features.

    Each configured stage is projected ``feature_dim -> joint_dim``, the
    projections are concatenated channel-wise and refined by ``n_blocks``
    pre-norm transformer blocks before a final projection back to
    ``joint_dim``. Token count is preserved.
    """

    def __init__(self, feature_dim: int, joint_dim: int, stage_set=(6, 9, 12),
                 n_blocks: int = 2, num_heads: int = 4, seed: int = 0):
        super().__init__()
        self.stage_set = tuple(sorted(int(s) for s in stage_set))
        width = joint_dim * len(self.stage_set)
        self.stage_proj = nn.ModuleDict(
            {str(l): nn.Linear(feature_dim, joint_dim) for l in self.stage_set}
        )
        self.blocks = nn.ModuleList(TransformerBlock(width, num_heads) for _ in range(n_blocks))
        self.out_proj = nn.Linear(width, joint_dim)
        seed_everything_module(self, seed)

    def forward(self, stages: dict[int, torch.Tensor]) -> torch.Tensor:
        missing = [l for l in self.stage_set if l not in stages]
        if missing:
            raise ValueError(f"missing stage features for stages {missing}")
        x = torch.cat([self.stage_proj[str(l)](stages[l]) for l in self.stage_set], dim=1)
        x = x.unsqueeze(0)
        for block in self.blocks:
            x = block(x)
        return self.out_proj(x[0])


def _row_normalize(x: torch.Tensor, what: str) -> torch.Tensor:
    norms = torch.linalg.vector_norm(x, dim=-1, keepdim=True)
    if (norms == 0).any():
        raise NumericDegeneracyError(f"zero-norm row in {what}")
    return x / norms


def similarity_map(f: torch.Tensor, t_s: torch.Tensor,
                   gamma: float = SIMILARITY_TEMPERATURE) -> torch.Tensor:
    """Temperature-scaled cosine logits between patch and text features.

    Rows of both operands are L2-normalized, so scaling any feature row by
    a positive factor leaves its logits unchanged. Returns (N_p, 2) with
    column 0 = normal, column 1 = anomalous.
    """
    return _row_normalize(f, "local features") @ _row_normalize(t_s, "text features").T / gamma


def anomaly_map(m_sim: torch.Tensor, out_h: int, out_w: int) -> torch.Tensor:
    """Per-pixel anomaly probability from the similarity logits.

    Row-softmax over the two classes, the anomaly column is reshaped to the
    square patch grid and bilinearly upsampled (corner-aligned) to the
    requested size. Values stay in [0, 1].
    """
    n_p = m_sim.shape[0]
    side = math.isqrt(n_p)
    if side * side != n_p:
        raise ValueError(f"token count {n_p} is not a perfect square")
    probs = torch.softmax(m_sim, dim=1)
    patch_map = probs[:, 1].reshape(1, 1, side, side)
    full = F.interpolate(patch_map, size=(int(out_h), int(out_w)),
                         mode="bilinear", align_corners=True)
    return full[0, 0]
