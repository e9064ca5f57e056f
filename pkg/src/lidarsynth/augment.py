"""Input perturbations for stability evaluation: clipped per-point jitter and
clusters of background noise points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body_model import NUM_JOINTS
from .errors import InputError
from .lidar import HitCloud

BACKGROUND = NUM_JOINTS

# default sweep grids for stability curves
JITTER_CLIPS = tuple(round(0.01 * k, 2) for k in range(1, 11))
CLUSTER_SIZES = (10, 25, 50, 100, 150, 200)


@dataclass(frozen=True)
class JitterConfig:
    sigma: float = 0.02
    clip: float = np.inf

    def __post_init__(self):
        if self.sigma < 0 or self.clip < 0:
            raise InputError("sigma and clip must be non-negative")


@dataclass(frozen=True)
class ClusterConfig:
    n_clusters: int = 0
    points_per_cluster: int = 50
    cluster_sigma: float = 0.1
    placement_margin: float = 0.3

    def __post_init__(self):
        if self.n_clusters < 0 or self.points_per_cluster < 0:
            raise InputError("cluster counts must be non-negative")
        if self.cluster_sigma < 0 or self.placement_margin < 0:
            raise InputError("cluster_sigma and placement_margin must be non-negative")


def jitter(points: np.ndarray, cfg: JitterConfig, rng: np.random.Generator) -> np.ndarray:
    """Add Gaussian noise clamped to [-clip, clip] on every coordinate."""
    points = np.asarray(points)
    if not np.all(np.isfinite(points)):
        raise InputError("points must be finite")
    if cfg.sigma == 0.0:
        return points.copy()
    noise = np.clip(rng.normal(0.0, cfg.sigma, size=points.shape), -cfg.clip, cfg.clip)
    return (points + noise).astype(points.dtype)


def noise_cluster_points(points: np.ndarray, cfg: ClusterConfig, rng: np.random.Generator) -> np.ndarray:
    if len(points) == 0:
        raise InputError("noise clusters need a non-empty cloud to place them")
    lo = points.min(axis=0) - cfg.placement_margin
    hi = points.max(axis=0) + cfg.placement_margin
    centers = rng.uniform(lo, hi, size=(cfg.n_clusters, 3))
    offsets = rng.normal(0.0, cfg.cluster_sigma, size=(cfg.n_clusters, cfg.points_per_cluster, 3))
    return (centers[:, None, :] + offsets).reshape(-1, 3)


def add_noise_clusters(cloud: HitCloud, cfg: ClusterConfig, rng: np.random.Generator) -> HitCloud:
    """Append Gaussian blobs of background points; original points untouched."""
    extra = noise_cluster_points(cloud.points, cfg, rng)
    if len(extra) == 0:
        return cloud
    n = len(extra)
    return HitCloud(
        points=np.concatenate([cloud.points, extra.astype(cloud.points.dtype)]),
        hit_face=np.concatenate([cloud.hit_face, np.full(n, -1, cloud.hit_face.dtype)]),
        ray_cell=np.concatenate([cloud.ray_cell, np.full((n, 2), -1, cloud.ray_cell.dtype)]),
        labels=np.concatenate([cloud.labels, np.full(n, BACKGROUND, cloud.labels.dtype)]),
        distance=np.concatenate([cloud.distance, np.linalg.norm(extra, axis=1)]),
    )
