"""Bidirectional contrastive and segmentation-BCE training objectives.

The contrastive terms apply raw exponentials to cosine similarities (no
temperature); the inference-time scores are the temperature-scaled variant
and live in scoring.py. The asymmetry is deliberate.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import NumericDegeneracyError

__all__ = ["LossBreakdown", "cosine_similarity", "contrastive_losses", "seg_loss", "total_loss"]

BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossBreakdown:
    """All loss terms of one step; the combined terms satisfy
    ``l_con == (l_i2t + l_t2i) / 2`` and ``l_tot == l_seg + l_con`` exactly."""

    l_i2t: float
    l_t2i: float
    l_con: float
    l_seg: float
    l_tot: float


def cosine_similarity(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Cosine similarity of two single embeddings; zero norms are an error."""
    a, b = a.reshape(-1), b.reshape(-1)
    na, nb = torch.linalg.vector_norm(a), torch.linalg.vector_norm(b)
    if na == 0 or nb == 0:
        raise NumericDegeneracyError("zero-norm embedding in cosine similarity")
    return (a @ b) / (na * nb)


def contrastive_losses(i_a_plus, i_a_minus, t_c_plus, t_c_minus):
    """Image-to-text and text-to-image contrastive terms plus their mean.

    Each term is a two-way log-ratio over raw exponentiated cosine
    similarities: the image-to-text direction contrasts each adapted image
    embedding against the two text embeddings, the text-to-image direction
    contrasts each text embedding against the two image embeddings.
    -log(e^a / (e^a + e^b)) is evaluated as softplus(b - a).
    """
    s_pp = cosine_similarity(i_a_plus, t_c_plus)
    s_pm = cosine_similarity(i_a_plus, t_c_minus)
    s_mp = cosine_similarity(i_a_minus, t_c_plus)
    s_mm = cosine_similarity(i_a_minus, t_c_minus)

    l_i2t = F.softplus(s_pm - s_pp) + F.softplus(s_mp - s_mm)
    l_t2i = F.softplus(s_mp - s_pp) + F.softplus(s_pm - s_mm)
    l_con = 0.5 * (l_i2t + l_t2i)
    return l_i2t, l_t2i, l_con


def seg_loss(s_map: torch.Tensor, mask, eps: float = BCE_EPS) -> torch.Tensor:
    """Mean binary cross-entropy between an anomaly map and a binary mask.

    The map is clamped to [eps, 1 - eps] so a saturated prediction cannot
    produce log(0).
    """
    s_map = torch.as_tensor(s_map)
    mask = torch.as_tensor(mask, dtype=s_map.dtype, device=s_map.device)
    if s_map.shape != mask.shape:
        raise ValueError(f"shape mismatch: map {tuple(s_map.shape)} vs mask {tuple(mask.shape)}")
    p = s_map.clamp(eps, 1.0 - eps)
    return -(mask * p.log() + (1.0 - mask) * (1.0 - p).log()).mean()


def total_loss(l_con, l_seg):
    """Total objective: exact sum of the two combined terms."""
    return l_con + l_seg
