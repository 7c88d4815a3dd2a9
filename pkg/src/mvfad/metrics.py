"""Evaluation metrics: image/pixel AUROC, average precision and AUPRO.

All curves are exact: AUROC is the Mann-Whitney statistic with midrank tie
handling, average precision integrates the PR curve step-wise over the
distinct score thresholds, and AUPRO sweeps every distinct map value. The
per-region-overlap curve is integrated as a staircase over the achieved
(FPR, PRO) operating points up to the FPR budget and normalized by it, so
overlap reached only beyond the budget earns no credit.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import UndefinedMetricError

__all__ = ["auroc", "aupr", "p_auroc", "aupro", "EvalReport"]

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def _scores_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    if scores.shape != labels.shape:
        raise ValueError(f"scores and labels length mismatch: {scores.size} vs {labels.size}")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary 0/1")
    return scores, labels


def auroc(scores, labels) -> float:
    """Area under the ROC curve = P(score+ > score-) + 0.5 P(tie).

    Computed from midranks, which is exactly the Mann-Whitney statistic.
    """
    scores, labels = _scores_labels(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("auroc needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    # Midranks: average rank within each tie group (1-based).
    boundaries = np.flatnonzero(np.diff(sorted_scores)) + 1
    starts = np.concatenate(([0], boundaries))
    stops = np.concatenate((boundaries, [scores.size]))
    for a, b in zip(starts, stops):
        ranks[order[a:b]] = 0.5 * (a + 1 + b)
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def aupr(scores, labels) -> float:
    """Average precision: step-wise PR-curve integration over ranked thresholds.

    Thresholds are the distinct score values in decreasing order; tied
    scores enter together.
    """
    scores, labels = _scores_labels(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("aupr needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    sorted_labels = labels[order]
    sorted_scores = scores[order]
    # Indices of the last element of each distinct-score group.
    group_ends = np.flatnonzero(np.diff(sorted_scores) != 0)
    group_ends = np.concatenate((group_ends, [scores.size - 1]))
    tp = np.cumsum(sorted_labels)[group_ends].astype(np.float64)
    total = (group_ends + 1).astype(np.float64)
    precision = tp / total
    recall = tp / n_pos
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev_recall) * precision))


def p_auroc(maps, masks) -> float:
    """AUROC over the pooled pixel population of all (map, mask) pairs."""
    flat_scores, flat_labels = [], []
    for m, gt in zip(maps, masks, strict=True):
        m = np.asarray(m, dtype=np.float64)
        gt = np.asarray(gt)
        if m.shape != gt.shape:
            raise ValueError(f"map shape {m.shape} does not match mask shape {gt.shape}")
        flat_scores.append(m.ravel())
        flat_labels.append((gt > 0.5).astype(np.int64).ravel())
    return auroc(np.concatenate(flat_scores), np.concatenate(flat_labels))


def aupro(maps, masks, fpr_limit: float = 0.3) -> float:
    """Area under the per-region-overlap curve up to an FPR budget.

    Ground-truth regions are 8-connected components. For every distinct map
    value t (prediction = map >= t) the curve point is (global FPR, mean
    over all regions of |prediction AND region| / |region|); the staircase
    through these points is integrated over FPR in [0, fpr_limit] and
    normalized by the budget.
    """
    if not 0.0 < fpr_limit <= 1.0:
        raise ValueError(f"fpr_limit must be in (0, 1], got {fpr_limit}")
    values, region_weight, is_background, n_regions = [], [], [], 0
    for m, gt in zip(maps, masks, strict=True):
        m = np.asarray(m, dtype=np.float64).ravel()
        gt = (np.asarray(gt) > 0.5)
        if m.size != gt.size:
            raise ValueError("map and mask sizes differ")
        labeled, count = ndimage.label(gt, structure=EIGHT_CONNECTED)
        labeled = labeled.ravel()
        weight = np.zeros(m.size, dtype=np.float64)
        if count:
            sizes = np.bincount(labeled, minlength=count + 1)[1:]
            weight[labeled > 0] = 1.0 / sizes[labeled[labeled > 0] - 1]
        values.append(m)
        region_weight.append(weight)
        is_background.append(~gt.ravel())
        n_regions += count
    if n_regions == 0:
        raise UndefinedMetricError("aupro needs at least one ground-truth region")

    values = np.concatenate(values)
    region_weight = np.concatenate(region_weight) / n_regions
    is_background = np.concatenate(is_background).astype(np.float64)
    neg_total = is_background.sum()

    order = np.argsort(-values, kind="mergesort")
    pro_cum = np.cumsum(region_weight[order])
    fp_cum = np.cumsum(is_background[order])
    # Operating points sit at the last pixel of each distinct-value group.
    ends = np.flatnonzero(np.diff(values[order]) != 0)
    ends = np.concatenate((ends, [values.size - 1]))
    pros = pro_cum[ends]
    fprs = fp_cum[ends] / neg_total if neg_total > 0 else np.zeros(ends.size)

    # Staircase integration from the empty prediction (0, 0) to the budget.
    pros = np.concatenate(([0.0], pros))
    fprs = np.minimum(np.concatenate(([0.0], fprs)), fpr_limit)
    widths = np.diff(np.append(fprs, fpr_limit))
    area = float(np.sum(pros * widths) / fpr_limit)
    return min(1.0, max(0.0, area))  # strip floating-point dust only


@dataclass
class EvalReport:
    """Metric summary plus per-sample scores and the configuration echo."""

    i_auroc: float
    aupr: float
    p_auroc: float | None = None
    aupro: float | None = None
    per_sample: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("i_auroc", "aupr", "p_auroc", "aupro"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(dataclasses.asdict(self), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))

    def to_csv(self) -> str:
        """Per-sample scores as CSV (name, label, a_score, s_plus, s_minus, max_map)."""
        lines = ["name,label,a_score,s_plus,s_minus,max_map"]
        for row in self.per_sample:
            lines.append(
                f"{row.get('name', '')},{row.get('label', '')},{row.get('a_score', '')},"
                f"{row.get('s_plus', '')},{row.get('s_minus', '')},{row.get('max_map', '')}"
            )
        return "\n".join(lines) + "\n"
