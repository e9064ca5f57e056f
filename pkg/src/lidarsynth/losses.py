"""Reference forward evaluations of the pre-training and fine-tuning losses.

These exist so an external training stack can be checked against known
values; no gradients are computed here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, DimensionError, InputError
from .heatmap import HeatmapTriplet

EPS = 1e-12


@dataclass(frozen=True)
class LossWeights:
    reg: float = 0.5
    seg: float = 1.0

    def __post_init__(self):
        if self.reg < 0 or self.seg < 0:
            raise InputError("loss weights must be non-negative")


def reg_loss(pred, gt, visibility) -> float:
    """Visibility-weighted mean Euclidean joint error."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    v = np.asarray(visibility, dtype=np.float64)
    if pred.shape != gt.shape or pred.shape[-1] != 3 or v.shape != pred.shape[:1]:
        raise DimensionError("pred/gt must be (K, 3) and visibility (K,)")
    total = v.sum()
    if total <= 0:
        raise DegenerateError("regression loss undefined: no visible joints")
    return float(np.linalg.norm(pred - gt, axis=1) @ v / total)


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def seg_loss(pred_probs, gt_onehot, eps: float = EPS) -> float:
    """Cross-entropy summed over points: ``-sum gt * log(pred + eps)``.

    The ground-truth one-hot rows weight the log of the predicted
    probabilities.
    """
    s = np.asarray(pred_probs, dtype=np.float64)
    g = np.asarray(gt_onehot, dtype=np.float64)
    if s.shape != g.shape or s.ndim != 2:
        raise DimensionError(f"prediction {s.shape} and target {g.shape} must both be (N, C)")
    if np.any(s < 0) or np.any(s > 1) or not np.allclose(s.sum(axis=1), 1.0, atol=1e-6):
        raise InputError("predicted probabilities must be non-negative rows summing to 1")
    if not (np.all((g == 0) | (g == 1)) and np.all(g.sum(axis=1) == 1)):
        raise InputError("target must be one-hot")
    return float(-(g * np.log(s + eps)).sum())


def pretrain_loss(reg: float, seg: float, w: LossWeights = LossWeights()) -> float:
    if not (np.isfinite(reg) and np.isfinite(seg)):
        raise InputError("loss terms must be finite")
    return w.reg * reg + w.seg * seg


def _kl_rows(p: np.ndarray, q: np.ndarray, eps: float) -> np.ndarray:
    # both sides smoothed by eps and renormalized, so each row is a proper KL
    n = p.shape[-1]
    ps = (p + eps) / (1.0 + n * eps)
    qs = (q + eps) / (1.0 + n * eps)
    return (ps * (np.log(ps) - np.log(qs))).sum(axis=-1)


def heatmap_loss(pred: HeatmapTriplet, gt: HeatmapTriplet, eps: float = EPS,
                 direction: str = "gt_pred") -> float:
    """Sum over axes and joints of KL(gt || pred).

    ``direction="pred_gt"`` evaluates KL(pred || gt) instead.
    """
    if direction not in ("gt_pred", "pred_gt"):
        raise InputError(f"unknown KL direction {direction!r}")
    total = 0.0
    for c in range(3):
        p = np.asarray(gt.axis(c), dtype=np.float64)
        q = np.asarray(pred.axis(c), dtype=np.float64)
        if p.shape != q.shape:
            raise DimensionError(f"axis {c}: shapes {q.shape} and {p.shape} differ")
        if direction == "pred_gt":
            p, q = q, p
        total += _kl_rows(p, q, eps).sum()
    return float(total)
