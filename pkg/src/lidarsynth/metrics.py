"""Pose-evaluation metrics: MPJPE, Procrustes-aligned MPJPE, PCK at fractions
of torso length, dataset aggregation and worst-instance statistics."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .body_model import JOINT_NAMES, NUM_JOINTS
from .errors import DegenerateError, DimensionError, InputError

PCK3 = 0.3
PCK5 = 0.5
WORST_N = 600
# wrists, ankles and head
END_JOINTS = (20, 21, 7, 8, 15)


@dataclass(frozen=True)
class SkeletonSpec:
    num_joints: int = NUM_JOINTS
    torso_pair: tuple[int, int] = (0, 12)
    joint_names: tuple[str, ...] = JOINT_NAMES

    def __post_init__(self):
        a, b = self.torso_pair
        if a == b or not (0 <= a < self.num_joints and 0 <= b < self.num_joints):
            raise InputError(f"torso_pair {self.torso_pair} must be two distinct joints < {self.num_joints}")
        if len(self.joint_names) != self.num_joints:
            raise DimensionError("one joint name per joint required")


def _prep(pred, gt, visibility=None):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise DimensionError(f"pred {pred.shape} and gt {gt.shape} must both be (K, 3)")
    if visibility is None:
        v = np.ones(len(gt), dtype=bool)
    else:
        v = np.asarray(visibility).astype(bool)
        if v.shape != (len(gt),):
            raise DimensionError("visibility must have one flag per joint")
    if not v.any():
        raise DegenerateError("no visible joints")
    return pred, gt, v


def joint_errors(pred, gt) -> np.ndarray:
    return np.linalg.norm(np.asarray(pred, float) - np.asarray(gt, float), axis=1)


def mpjpe(pred, gt, visibility=None) -> float:
    """Mean Euclidean error over visible joints, in millimetres (inputs in m)."""
    pred, gt, v = _prep(pred, gt, visibility)
    return float(joint_errors(pred, gt)[v].mean() * 1000.0)


@dataclass(frozen=True)
class SimilarityTransform:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points) -> np.ndarray:
        return self.scale * np.asarray(points) @ self.rotation.T + self.translation


def _rank_deficient(centered: np.ndarray) -> bool:
    s = np.linalg.svd(centered, compute_uv=False)
    return s[0] == 0.0 or s[1] <= 1e-9 * s[0]


def procrustes_align(pred, gt, with_scale: bool = True) -> SimilarityTransform:
    """Least-squares similarity (or rigid) transform taking ``pred`` onto ``gt``.

    Reflections are excluded: when the best orthogonal map is improper, the
    axis of the smallest singular value is flipped.
    """
    pred, gt, _ = _prep(pred, gt)
    if len(pred) < 3:
        raise DegenerateError("Procrustes alignment needs at least 3 joints")
    mu_p, mu_g = pred.mean(axis=0), gt.mean(axis=0)
    x, y = pred - mu_p, gt - mu_g
    if _rank_deficient(y) or _rank_deficient(x):
        raise DegenerateError("joints are coincident or collinear; alignment is not unique")
    u, s, vt = np.linalg.svd(y.T @ x)
    d = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[-1] = -1.0
    rot = (u * d) @ vt
    scale = float((s * d).sum() / (x * x).sum()) if with_scale else 1.0
    return SimilarityTransform(scale, rot, mu_g - scale * rot @ mu_p)


def pa_mpjpe(pred, gt, with_scale: bool = True) -> float:
    pred, gt, _ = _prep(pred, gt)
    aligned = procrustes_align(pred, gt, with_scale).apply(pred)
    return float(joint_errors(aligned, gt).mean() * 1000.0)


def torso_length(gt, skeleton: SkeletonSpec) -> float:
    a, b = skeleton.torso_pair
    gt = np.asarray(gt, dtype=np.float64)
    return float(np.linalg.norm(gt[a] - gt[b]))


def pck(pred, gt, visibility=None, skeleton: SkeletonSpec = SkeletonSpec(), fraction: float = PCK3) -> float:
    """Fraction of visible joints closer than ``fraction`` torso lengths."""
    pred, gt, v = _prep(pred, gt, visibility)
    torso = torso_length(gt, skeleton)
    if torso <= 0:
        raise DegenerateError("torso length is zero")
    return float((joint_errors(pred, gt)[v] < fraction * torso).mean())


@dataclass
class MetricsReport:
    """Per-instance or aggregated metrics. Errors in mm.

    ``pa_mpjpe`` is None when no instance had full visibility.
    """

    mpjpe: float
    pa_mpjpe: float | None
    pck3: float
    pck5: float
    per_joint_error: np.ndarray
    n_instances: int = 1
    n_pa_instances: int = 0
    per_joint_count: np.ndarray | None = None
    torso_pair: tuple[int, int] = (0, 12)

    def to_dict(self) -> dict:
        pje = [None if not np.isfinite(e) else round(float(e), 6) for e in self.per_joint_error]
        return {
            "n_instances": self.n_instances,
            "mpjpe_mm": round(self.mpjpe, 6),
            "pa_mpjpe_mm": None if self.pa_mpjpe is None else round(self.pa_mpjpe, 6),
            "n_pa_instances": self.n_pa_instances,
            "pck3": round(self.pck3, 6),
            "pck5": round(self.pck5, 6),
            "torso_pair": list(self.torso_pair),
            "per_joint_error_mm": pje,
        }

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def evaluate_instance(pred, gt, visibility=None, skeleton: SkeletonSpec = SkeletonSpec(),
                      with_scale: bool = True) -> MetricsReport:
    pred, gt, v = _prep(pred, gt, visibility)
    err = joint_errors(pred, gt) * 1000.0
    per_joint = np.where(v, err, np.nan)
    pa = pa_mpjpe(pred, gt, with_scale) if v.all() else None
    return MetricsReport(
        mpjpe=float(err[v].mean()),
        pa_mpjpe=pa,
        pck3=pck(pred, gt, v, skeleton, PCK3),
        pck5=pck(pred, gt, v, skeleton, PCK5),
        per_joint_error=per_joint,
        n_pa_instances=int(pa is not None),
        per_joint_count=v.astype(np.int64),
        torso_pair=skeleton.torso_pair,
    )


def _wmean(values, weights) -> float:
    total = math.fsum(weights)
    return math.fsum(v * w for v, w in zip(values, weights)) / total


def aggregate(reports) -> MetricsReport:
    """Instance-weighted dataset means; exact summation keeps the result
    independent of report order."""
    reports = list(reports)
    if not reports:
        raise InputError("aggregate needs at least one report")
    n = [r.n_instances for r in reports]
    pa = [r for r in reports if r.pa_mpjpe is not None and r.n_pa_instances > 0]
    counts = np.stack([r.per_joint_count if r.per_joint_count is not None
                       else np.isfinite(r.per_joint_error).astype(np.int64) for r in reports])
    sums = np.stack([np.where(c > 0, r.per_joint_error, 0.0) * c for r, c in zip(reports, counts)])
    k_count = counts.sum(axis=0)
    per_joint = np.full(counts.shape[1], np.nan)
    for k in np.flatnonzero(k_count):
        per_joint[k] = math.fsum(sums[:, k]) / k_count[k]
    return MetricsReport(
        mpjpe=_wmean([r.mpjpe for r in reports], n),
        pa_mpjpe=_wmean([r.pa_mpjpe for r in pa], [r.n_pa_instances for r in pa]) if pa else None,
        pck3=_wmean([r.pck3 for r in reports], n),
        pck5=_wmean([r.pck5 for r in reports], n),
        per_joint_error=per_joint,
        n_instances=sum(n),
        n_pa_instances=sum(r.n_pa_instances for r in pa),
        per_joint_count=k_count,
        torso_pair=reports[0].torso_pair,
    )


@dataclass(frozen=True)
class WorstStats:
    indices: np.ndarray       # instance indices, worst first
    mean: np.ndarray          # per-joint mean error (mm) over those instances
    var: np.ndarray
    mpjpe: float              # mean instance MPJPE over those instances


def worst_instances(per_joint_errors, instance_mpjpe=None, n: int = WORST_N) -> WorstStats:
    """Per-joint error statistics over the ``n`` instances with highest MPJPE.

    Args:
        per_joint_errors: (M, K) errors in mm, NaN where a joint is invisible.
        instance_mpjpe: (M,) ranking key; defaults to the nan-mean per row.
        n: number of instances kept; clamped to M with a warning.
    """
    e = np.asarray(per_joint_errors, dtype=np.float64)
    if e.ndim != 2 or len(e) == 0:
        raise InputError("need a non-empty (M, K) error matrix")
    key = np.nanmean(e, axis=1) if instance_mpjpe is None else np.asarray(instance_mpjpe, float)
    if n > len(e):
        warnings.warn(f"requested {n} worst instances but only {len(e)} exist; using all", stacklevel=2)
        n = len(e)
    idx = np.argsort(-key, kind="stable")[:n]
    sel = e[idx]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(sel, axis=0)
        var = np.nanvar(sel, axis=0)
    return WorstStats(idx, mean, var, float(key[idx].mean()))
