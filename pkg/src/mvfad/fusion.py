"""Multi-view feature fusion: one global and one local enhancement branch.

The global branch gates each view's summary token with a squeeze-excite
pathway and mixes the gated tokens through a fully connected layer. The
local branch lets attention mix tokens across views, then pools per token
position. Enhancement is a plain elementwise sum onto the adapted RGB
features.
"""

from __future__ import annotations

import torch
from torch import nn

from .blocks import TransformerBlock, seed_everything_module

__all__ = ["GlobalViewFusion", "LocalViewFusion", "enhance"]


def _check_view_count(views, expected: int, what: str) -> list:
    views = list(views)
    if len(views) != expected:
        raise ValueError(f"{what} expects exactly {expected} views, got {len(views)}")
    shapes = {tuple(v.shape) for v in views}
    if len(shapes) != 1:
        raise ValueError(f"{what} views must share one shape, got {sorted(shapes)}")
    return views


class GlobalViewFusion(nn.Module):
    """Gate per-view summary tokens and fuse them into one joint embedding.

    The squeeze step averages each view's token over channels to a scalar;
    the excite MLP maps the view-score vector through a bottleneck and a
    sigmoid to per-view gates in (0, 1). Gated tokens are concatenated and
    projected back to the joint width.
    """

    def __init__(self, joint_dim: int, num_views: int = 5, se_ratio: int = 2, seed: int = 0):
        super().__init__()
        self.num_views = int(num_views)
        self.joint_dim = int(joint_dim)
        hidden = max(1, self.num_views // se_ratio)
        self.gate_mlp = nn.Sequential(
            nn.Linear(self.num_views, hidden), nn.GELU(), nn.Linear(hidden, self.num_views)
        )
        self.fuse = nn.Linear(self.num_views * joint_dim, joint_dim)
        seed_everything_module(self, seed)

    def _stack(self, cls_views) -> torch.Tensor:
        views = _check_view_count(cls_views, self.num_views, "global fusion")
        flat = [v.reshape(-1) for v in views]
        if flat[0].numel() != self.joint_dim:
            raise ValueError(
                f"each view token must have {self.joint_dim} channels, got {flat[0].numel()}"
            )
        return torch.stack(flat)  # (v, C)

    def gates(self, cls_views) -> torch.Tensor:
        return torch.sigmoid(self.gate_mlp(self._stack(cls_views).mean(dim=1)))

    def forward(self, cls_views) -> torch.Tensor:
        x = self._stack(cls_views)                          # (v, C)
        g = torch.sigmoid(self.gate_mlp(x.mean(dim=1)))     # (v,)
        gated = x * g.unsqueeze(1)
        return self.fuse(gated.reshape(1, -1))              # (1, C)


class LocalViewFusion(nn.Module):
    """Mix last-stage patch features across views and pool per position.

    All views' tokens form one sequence so attention can exchange
    information between views; after the blocks, tokens are averaged across
    views position-wise and projected to the joint width.
    """

    def __init__(self, feature_dim: int, joint_dim: int, num_views: int = 5,
                 n_blocks: int = 2, num_heads: int = 4, seed: int = 0):
        super().__init__()
        self.num_views = int(num_views)
        self.blocks = nn.ModuleList(
            TransformerBlock(feature_dim, num_heads) for _ in range(n_blocks)
        )
        self.out_proj = nn.Linear(feature_dim, joint_dim)
        seed_everything_module(self, seed)

    def forward(self, feat_views) -> torch.Tensor:
        views = _check_view_count(feat_views, self.num_views, "local fusion")
        if views[0].ndim != 2:
            raise ValueError(f"local views must be (N_p, D), got shape {tuple(views[0].shape)}")
        x = torch.stack(views)                              # (v, N_p, D)
        v, n_p, d = x.shape
        x = x.reshape(1, v * n_p, d)
        for block in self.blocks:
            x = block(x)
        pooled = x[0].reshape(v, n_p, d).mean(dim=0)        # (N_p, D)
        return self.out_proj(pooled)                        # (N_p, C)


def enhance(adapted: torch.Tensor, fused: torch.Tensor) -> torch.Tensor:
    """Add an enhancement term onto adapted features of the same shape."""
    if adapted.shape != fused.shape:
        raise ValueError(f"shape mismatch: adapted {tuple(adapted.shape)} vs fused {tuple(fused.shape)}")
    return adapted + fused
