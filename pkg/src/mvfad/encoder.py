"""Frozen deterministic stand-in for a pretrained vision-language encoder.

The image tower is a ViT-style patch transformer and the text pathway a
byte-hash embedding table; both are initialized once from a weight seed and
never trained. The stand-in exists so the trainable pipeline (adapters,
decoder, fusion) can be exercised end to end without shipping pretrained
checkpoints: it provides a global summary token projected to the joint
dimension, per-stage patch features, and stable, distinct prompt-set
embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import torch
from torch import nn

from .blocks import TransformerBlock, derive_seed, module_checksum, seed_everything_module

__all__ = ["EncoderConfig", "EmbeddingBundle", "PromptSet", "FrozenEncoder",
           "default_prompt_set"]

TEXT_TABLE_SIZE = 4096


@dataclass(frozen=True)
class EncoderConfig:
    image_size: int = 240
    patch_size: int = 16
    depth: int = 12
    feature_dim: int = 64  # patch-token width
    joint_dim: int = 64    # shared image/text embedding width
    stage_set: tuple[int, ...] = (6, 9, 12)
    weight_seed: int = 0
    num_heads: int = 4
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        if self.feature_dim < 8 or self.joint_dim < 8:
            raise ValueError("feature_dim and joint_dim must be >= 8")
        if not self.stage_set:
            raise ValueError("stage_set must be nonempty")
        if min(self.stage_set) < 1 or max(self.stage_set) > self.depth:
            raise ValueError(f"stage_set {self.stage_set} must lie within 1..depth={self.depth}")
        if self.feature_dim % self.num_heads != 0:
            raise ValueError("feature_dim must be divisible by num_heads")

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_size**2


@dataclass
class EmbeddingBundle:
    """Global summary embedding (1 x C) plus per-stage patch features (N_p x D)."""

    cls: torch.Tensor
    stages: dict[int, torch.Tensor]


@dataclass(frozen=True)
class PromptSet:
    """Prompt templates with `{}` standing for the class name."""

    prompts: tuple[str, ...]
    class_name: str = "object"

    def __post_init__(self):
        if not self.prompts:
            raise ValueError("prompt set must be nonempty")

    def realized(self) -> list[str]:
        return [p.replace("{}", self.class_name) for p in self.prompts]

    @classmethod
    def from_file(cls, path, class_name: str = "object") -> "PromptSet":
        """Load one prompt per line; blank lines and `#` comments are skipped."""
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh]
        prompts = tuple(ln for ln in lines if ln and not ln.startswith("#"))
        if not prompts:
            raise ValueError(f"no prompts found in {path}")
        return cls(prompts=prompts, class_name=class_name)


def default_prompt_set(state: str, class_name: str = "object") -> PromptSet:
    """Built-in compositional prompt ensembles for the two object states."""
    if state not in ("normal", "anomalous"):
        raise ValueError(f"state must be 'normal' or 'anomalous', got {state!r}")
    ref = resources.files("mvfad").joinpath(f"prompts/{state}.txt")
    with resources.as_file(ref) as path:
        return PromptSet.from_file(path, class_name=class_name)


def _hash_bytes(text: str) -> np.ndarray:
    """Position-salted byte hashing into the frozen embedding table."""
    data = text.encode("utf-8")
    idx = np.frombuffer(data, dtype=np.uint8).astype(np.int64)
    pos = np.arange(idx.size, dtype=np.int64)
    return (idx * 2654435761 + (pos + 1) * 40503) % TEXT_TABLE_SIZE


class FrozenEncoder(nn.Module):
    """Weight-seeded, permanently frozen image and text encoders."""

    def __init__(self, config: EncoderConfig | None = None, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config or EncoderConfig()
        cfg = self.config

        self.patch_embed = nn.Conv2d(3, cfg.feature_dim, cfg.patch_size, stride=cfg.patch_size)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, cfg.feature_dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, cfg.num_patches + 1, cfg.feature_dim))
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg.feature_dim, cfg.num_heads, cfg.mlp_ratio)
            for _ in range(cfg.depth)
        )
        self.final_norm = nn.LayerNorm(cfg.feature_dim)
        self.cls_proj = nn.Linear(cfg.feature_dim, cfg.joint_dim, bias=False)

        self.text_table = nn.Parameter(torch.zeros(TEXT_TABLE_SIZE, cfg.feature_dim))
        self.text_proj = nn.Linear(cfg.feature_dim, cfg.joint_dim)

        seed_everything_module(self, derive_seed(cfg.weight_seed, "frozen-encoder"))
        # cls_token / pos_embed / text_table are not biases or norms, so the
        # generic init above already drew them from the seeded generator.
        self.to(dtype)
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    @property
    def dtype(self) -> torch.dtype:
        return self.patch_embed.weight.dtype

    def weight_checksum(self) -> str:
        """Digest of every parameter; must be invariant under training."""
        return module_checksum(self)

    def _to_input(self, image) -> torch.Tensor:
        cfg = self.config
        arr = image.detach().cpu().numpy() if isinstance(image, torch.Tensor) else np.asarray(image)
        if arr.shape != (cfg.image_size, cfg.image_size, 3):
            raise ValueError(
                f"image shape {arr.shape} does not match configured "
                f"({cfg.image_size}, {cfg.image_size}, 3)"
            )
        t = torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float64)).to(self.dtype)
        return t.permute(2, 0, 1).unsqueeze(0)

    @torch.no_grad()
    def encode_image(self, image) -> EmbeddingBundle:
        """Run the frozen tower; collect patch features after each listed stage.

        Stage l is the residual stream emitted by block l (1-indexed), patch
        tokens only, so smaller stage indices always come from strictly
        earlier blocks.
        """
        cfg = self.config
        x = self.patch_embed(self._to_input(image))          # (1, D, g, g)
        x = x.flatten(2).transpose(1, 2)                     # (1, N_p, D)
        x = torch.cat([self.cls_token.to(x.dtype).expand(1, -1, -1), x], dim=1)
        x = x + self.pos_embed

        stages: dict[int, torch.Tensor] = {}
        for i, block in enumerate(self.blocks, start=1):
            x = block(x)
            if i in cfg.stage_set:
                stages[i] = x[0, 1:, :].clone()
        cls = self.cls_proj(self.final_norm(x[0, :1, :]))
        return EmbeddingBundle(cls=cls, stages=stages)

    @torch.no_grad()
    def encode_prompt(self, text: str) -> torch.Tensor:
        """Embed one prompt: hashed byte lookup, mean pool, project to C."""
        idx = torch.from_numpy(_hash_bytes(text))
        pooled = self.text_table[idx].mean(dim=0, keepdim=True)
        return self.text_proj(pooled)

    @torch.no_grad()
    def encode_text(self, prompt_set: PromptSet) -> torch.Tensor:
        """Arithmetic mean of the member prompt embeddings, shape (1, C)."""
        prompts = prompt_set.realized()
        if not prompts:
            raise ValueError("prompt set must be nonempty")
        embs = torch.cat([self.encode_prompt(p) for p in prompts], dim=0)
        return embs.mean(dim=0, keepdim=True)
