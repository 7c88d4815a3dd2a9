"""Shared torch building blocks: pre-norm transformer layers and seeded init.

Every module in this package draws its initial parameters from an explicit
torch.Generator so that construction is reproducible and independent of
construction order elsewhere in the program.
"""

from __future__ import annotations

import hashlib

import torch
from torch import nn

__all__ = ["TransformerBlock", "seed_everything_module", "module_checksum", "derive_seed"]

INIT_STD = 0.02


class TransformerBlock(nn.Module):
    """Pre-norm self-attention block: x + attn(ln(x)), then x + mlp(ln(x))."""

    def __init__(self, dim: int, num_heads: int, mlp_ratio: int = 4):
        super().__init__()
        if dim % num_heads != 0:
            raise ValueError(f"dim {dim} must be divisible by num_heads {num_heads}")
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, num_heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, mlp_ratio * dim),
            nn.GELU(),
            nn.Linear(mlp_ratio * dim, dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attn_out, _ = self.attn(h, h, h, need_weights=False)
        x = x + attn_out
        return x + self.mlp(self.norm2(x))


def seed_everything_module(module: nn.Module, seed: int) -> nn.Module:
    """Re-initialize all parameters of a module from one seeded generator.

    Weights are N(0, 0.02), biases zero, normalization gains one. Parameters
    are visited in registration order, so the same (architecture, seed) pair
    always yields bit-identical parameters.
    """
    gen = torch.Generator().manual_seed(int(seed))
    norm_params = {
        id(p)
        for m in module.modules()
        if isinstance(m, nn.LayerNorm)
        for p in m.parameters(recurse=False)
    }
    with torch.no_grad():
        for name, p in module.named_parameters():
            if id(p) in norm_params:
                p.fill_(1.0) if name.endswith("weight") else p.zero_()
            elif name.endswith("bias"):
                p.zero_()
            else:
                p.normal_(0.0, INIT_STD, generator=gen)
    return module


def module_checksum(module: nn.Module) -> str:
    """SHA-256 over the raw bytes of all parameters, in registration order."""
    digest = hashlib.sha256()
    for name, p in module.named_parameters():
        digest.update(name.encode())
        digest.update(p.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def derive_seed(master_seed: int, *labels) -> int:
    """Stable per-component seed derived from a master seed and a label path."""
    digest = hashlib.sha256(repr((int(master_seed),) + tuple(labels)).encode()).digest()
    return int.from_bytes(digest[:8], "little")
