"""Test-time anomaly scoring from adapted embeddings and the anomaly map."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .losses import cosine_similarity

__all__ = ["ScorePair", "classification_score", "SCORE_TEMPERATURE"]

SCORE_TEMPERATURE = 0.07


@dataclass(frozen=True)
class ScorePair:
    """Two-way softmax scores plus the combined anomaly score.

    ``s_plus + s_minus == 1`` up to rounding, and ``a_score`` equals
    ``s_minus + max_map`` because the softmax denominators already sum to 1.
    """

    s_plus: float
    s_minus: float
    a_score: float
    max_map: float


def classification_score(i_a_test, t_c_plus, t_c_minus, s_map,
                         tau: float = SCORE_TEMPERATURE) -> ScorePair:
    """Temperature-softmax scores over the two text directions plus map max.

    The normal/anomalous scores are the two-way softmax of the cosine
    similarities divided by tau; the anomaly score adds the maximum of the
    anomaly map to the normalized negative score.
    """
    i_a_test = torch.as_tensor(i_a_test, dtype=torch.float64)
    t_c_plus = torch.as_tensor(t_c_plus, dtype=torch.float64)
    t_c_minus = torch.as_tensor(t_c_minus, dtype=torch.float64)
    s_p = float(cosine_similarity(i_a_test, t_c_plus))
    s_m = float(cosine_similarity(i_a_test, t_c_minus))

    s_plus = 1.0 / (1.0 + math.exp((s_m - s_p) / tau))
    s_minus = 1.0 / (1.0 + math.exp((s_p - s_m) / tau))

    if isinstance(s_map, torch.Tensor):
        max_map = float(s_map.detach().max())
    else:
        max_map = float(np.asarray(s_map).max())
    a_score = s_minus / (s_minus + s_plus) + max_map
    return ScorePair(s_plus=s_plus, s_minus=s_minus, a_score=a_score, max_map=max_map)
