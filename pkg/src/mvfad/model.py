"""The full detection model: frozen encoder plus all trainable heads.

Wiring: the image adapter shifts the encoder's summary token, the decoder
turns multi-stage patch features into joint-width local features, and (when
enabled) the two fusion branches add multi-view enhancement terms onto
both. Text embeddings pass through their own adapters. The model knows
nothing about rendering or optimization; it maps embedding bundles to
adapted features and anomaly maps.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

import torch
from torch import nn

from .adaptation import (
    BottleneckAdapter,
    CoarseToFineDecoder,
    adapt_seg_text,
    anomaly_map,
    similarity_map,
)
from .blocks import derive_seed, module_checksum
from .encoder import EmbeddingBundle, EncoderConfig, FrozenEncoder, PromptSet
from .fusion import GlobalViewFusion, LocalViewFusion, enhance

__all__ = ["ModelConfig", "AnomalyDetectionModel"]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters for the trainable heads."""

    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    seed: int = 0
    use_multiview: bool = True
    num_views: int = 5
    adapter_hidden_ratio: int = 4
    adapter_alpha: float = 0.2
    decoder_blocks: int = 2
    fusion_blocks: int = 2
    num_heads: int = 4
    se_ratio: int = 2

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["encoder"]["stage_set"] = list(self.encoder.stage_set)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        enc = dict(d.pop("encoder"))
        enc["stage_set"] = tuple(enc["stage_set"])
        return cls(encoder=EncoderConfig(**enc), **d)


class AnomalyDetectionModel(nn.Module):
    """Frozen encoder plus adapters, decoder and optional fusion branches.

    Each trainable submodule draws its initial weights from a seed derived
    from (config.seed, module name), so disabling fusion changes nothing
    about the remaining modules' parameters.
    """

    def __init__(self, config: ModelConfig | None = None, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config or ModelConfig()
        cfg = self.config
        c, d = cfg.encoder.joint_dim, cfg.encoder.feature_dim
        seed = cfg.seed

        self.encoder = FrozenEncoder(cfg.encoder, dtype=dtype)
        self.image_adapter = BottleneckAdapter(
            c, cfg.adapter_hidden_ratio, cfg.adapter_alpha, seed=derive_seed(seed, "image_adapter"))
        self.class_text_adapter = BottleneckAdapter(
            c, cfg.adapter_hidden_ratio, cfg.adapter_alpha, seed=derive_seed(seed, "class_text_adapter"))
        self.seg_text_adapter = BottleneckAdapter(
            c, cfg.adapter_hidden_ratio, cfg.adapter_alpha, seed=derive_seed(seed, "seg_text_adapter"))
        self.decoder = CoarseToFineDecoder(
            d, c, cfg.encoder.stage_set, cfg.decoder_blocks, cfg.num_heads,
            seed=derive_seed(seed, "decoder"))
        if cfg.use_multiview:
            self.global_fusion = GlobalViewFusion(
                c, cfg.num_views, cfg.se_ratio, seed=derive_seed(seed, "global_fusion"))
            self.local_fusion = LocalViewFusion(
                d, c, cfg.num_views, cfg.fusion_blocks, cfg.num_heads,
                seed=derive_seed(seed, "local_fusion"))
        else:
            self.global_fusion = None
            self.local_fusion = None

        for module in self.trainable_modules().values():
            module.to(dtype)

        # Frozen text embeddings, set once via set_prompts().
        self._t_plus: torch.Tensor | None = None
        self._t_minus: torch.Tensor | None = None

    # -- text pathway -----------------------------------------------------

    def set_prompts(self, normal: PromptSet, anomalous: PromptSet) -> None:
        self._t_plus = self.encoder.encode_text(normal)
        self._t_minus = self.encoder.encode_text(anomalous)

    def set_text_embeddings(self, t_plus: torch.Tensor, t_minus: torch.Tensor) -> None:
        self._t_plus = t_plus.detach().to(self.encoder.dtype)
        self._t_minus = t_minus.detach().to(self.encoder.dtype)

    @property
    def text_embeddings(self) -> tuple[torch.Tensor, torch.Tensor]:
        if self._t_plus is None or self._t_minus is None:
            raise RuntimeError("text embeddings not set; call set_prompts() first")
        return self._t_plus, self._t_minus

    def adapted_text(self) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Adapted class-level text pair and the stacked segmentation rows."""
        t_plus, t_minus = self.text_embeddings
        t_c_plus = self.class_text_adapter(t_plus)
        t_c_minus = self.class_text_adapter(t_minus)
        t_s = adapt_seg_text(self.seg_text_adapter, t_plus, t_minus)
        return t_c_plus, t_c_minus, t_s

    # -- image pathway ----------------------------------------------------

    @property
    def last_stage(self) -> int:
        return self.config.encoder.depth

    def forward_features(self, bundle: EmbeddingBundle,
                         view_bundles: list[EmbeddingBundle] | None = None):
        """Adapted global embedding and decoded local features for one image.

        When fusion is enabled and view bundles are given, the global branch
        consumes the views' summary tokens and the local branch their
        last-stage patch features; both enhancement terms are added on.
        """
        i_a = self.image_adapter(bundle.cls)
        f = self.decoder(bundle.stages)
        if self.config.use_multiview and view_bundles is not None:
            g = self.global_fusion([vb.cls for vb in view_bundles])
            u = self.local_fusion([vb.stages[self.last_stage] for vb in view_bundles])
            i_a = enhance(i_a, g)
            f = enhance(f, u)
        return i_a, f

    def segmentation_map(self, f: torch.Tensor, t_s: torch.Tensor,
                         out_h: int | None = None, out_w: int | None = None) -> torch.Tensor:
        size = self.config.encoder.image_size
        return anomaly_map(similarity_map(f, t_s), out_h or size, out_w or size)

    # -- bookkeeping --------------------------------------------------------

    def trainable_modules(self) -> dict[str, nn.Module]:
        mods = {
            "image_adapter": self.image_adapter,
            "class_text_adapter": self.class_text_adapter,
            "seg_text_adapter": self.seg_text_adapter,
            "decoder": self.decoder,
        }
        if self.global_fusion is not None:
            mods["global_fusion"] = self.global_fusion
            mods["local_fusion"] = self.local_fusion
        return mods

    def trainable_parameters(self):
        for module in self.trainable_modules().values():
            yield from module.parameters()

    def trainable_state(self) -> dict:
        """Flat name -> float32 numpy array view of all trainable parameters."""
        state = {}
        for mod_name, module in self.trainable_modules().items():
            for p_name, p in module.named_parameters():
                state[f"{mod_name}.{p_name}"] = (
                    p.detach().cpu().to(torch.float32).numpy().copy()
                )
        return state

    def load_trainable_state(self, state: dict) -> None:
        mods = self.trainable_modules()
        own = {f"{m}.{n}" for m, mod in mods.items() for n, _ in mod.named_parameters()}
        missing, extra = own - state.keys(), state.keys() - own
        if missing or extra:
            raise ValueError(f"parameter name mismatch: missing {sorted(missing)}, "
                             f"unexpected {sorted(extra)}")
        with torch.no_grad():
            for mod_name, module in mods.items():
                for p_name, p in module.named_parameters():
                    arr = state[f"{mod_name}.{p_name}"]
                    if tuple(arr.shape) != tuple(p.shape):
                        raise ValueError(
                            f"shape mismatch for {mod_name}.{p_name}: "
                            f"{tuple(arr.shape)} vs {tuple(p.shape)}")
                    p.copy_(torch.from_numpy(arr).to(p.dtype))

    def encoder_checksum(self) -> str:
        return self.encoder.weight_checksum()

    def trainable_checksum(self) -> str:
        parts = [name + ":" + module_checksum(module)
                 for name, module in sorted(self.trainable_modules().items())]
        return hashlib.sha256("|".join(parts).encode()).hexdigest()
