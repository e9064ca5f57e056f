"""Per-axis 1D heatmaps for 3D joints (coordinate classification)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, DimensionError, InputError

DEFAULT_BINS = 128
DEFAULT_SIDE = 3.0
AXES = "xyz"


@dataclass(frozen=True)
class HeatmapSpec:
    """Bin counts and metric range per axis.

    ``sigma`` is the Gaussian target width in bins; 0 gives one-hot targets.
    """

    range: tuple = ((-1.5, 1.5), (-1.5, 1.5), (-1.5, 1.5))
    bins: tuple = (DEFAULT_BINS, DEFAULT_BINS, DEFAULT_BINS)
    sigma: float = 2.0

    def __post_init__(self):
        rng = tuple(tuple(float(v) for v in r) for r in self.range)
        object.__setattr__(self, "range", rng)
        object.__setattr__(self, "bins", tuple(int(b) for b in self.bins))
        if len(rng) != 3 or len(self.bins) != 3:
            raise DimensionError("range and bins need one entry per axis")
        if any(b < 2 for b in self.bins):
            raise InputError("every axis needs at least 2 bins")
        if any(not hi > lo for lo, hi in rng):
            raise InputError("range max must exceed min on every axis")
        if self.sigma < 0:
            raise InputError("sigma must be non-negative")

    def bin_width(self, axis: int) -> float:
        lo, hi = self.range[axis]
        return (hi - lo) / self.bins[axis]

    def centers(self, axis: int) -> np.ndarray:
        lo, _ = self.range[axis]
        return lo + (np.arange(self.bins[axis]) + 0.5) * self.bin_width(axis)


@dataclass(frozen=True, eq=False)
class HeatmapTriplet:
    """Normalized heatmaps per joint: ``x`` is (K, N_x), likewise ``y``, ``z``.

    ``clamped`` flags (K, 3) coordinates that were outside the range at
    encode time.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    clamped: np.ndarray | None = None

    def axis(self, c: int) -> np.ndarray:
        return (self.x, self.y, self.z)[c]

    @property
    def num_joints(self) -> int:
        return self.x.shape[0]


def default_range(points: np.ndarray, side: float = DEFAULT_SIDE) -> tuple:
    """Cube of the given side centered on the point-cloud centroid."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise InputError("default_range needs at least one point")
    c = points.mean(axis=0)
    h = 0.5 * side
    return tuple((float(c[k] - h), float(c[k] + h)) for k in range(3))


def encode(joints: np.ndarray, spec: HeatmapSpec) -> HeatmapTriplet:
    """Gaussian (or one-hot when ``sigma == 0``) targets per joint and axis."""
    joints = np.asarray(joints, dtype=np.float64)
    if joints.ndim != 2 or joints.shape[1] != 3:
        raise DimensionError(f"joints must be (K, 3), got {joints.shape}")
    if not np.all(np.isfinite(joints)):
        raise InputError("joints must be finite")
    lo = np.array([r[0] for r in spec.range])
    hi = np.array([r[1] for r in spec.range])
    clamped = (joints < lo) | (joints > hi)
    joints = np.clip(joints, lo, hi)
    out = []
    for c in range(3):
        centers = spec.centers(c)
        diff = centers[None, :] - joints[:, c:c + 1]
        if spec.sigma == 0.0:
            h = np.zeros_like(diff)
            h[np.arange(len(joints)), np.argmin(np.abs(diff), axis=1)] = 1.0
        else:
            s = spec.sigma * spec.bin_width(c)
            h = np.exp(-(diff * diff) / (2.0 * s * s))
            h /= h.sum(axis=1, keepdims=True)
        out.append(h)
    return HeatmapTriplet(*out, clamped=clamped)


def decode(hm: HeatmapTriplet, spec: HeatmapSpec, mode: str = "argmax") -> np.ndarray:
    """Peak bin center per axis (lowest bin on ties), or the soft expectation."""
    joints = np.empty((hm.num_joints, 3))
    for c in range(3):
        h = np.asarray(hm.axis(c), dtype=np.float64)
        if h.shape[1] != spec.bins[c]:
            raise DimensionError(f"axis {AXES[c]}: {h.shape[1]} bins, spec has {spec.bins[c]}")
        mass = h.sum(axis=1)
        if np.any(mass <= 0) or not np.all(np.isfinite(h)):
            raise DegenerateError(f"axis {AXES[c]}: heatmap with no positive mass")
        centers = spec.centers(c)
        if mode == "argmax":
            joints[:, c] = centers[np.argmax(h, axis=1)]
        elif mode == "soft":
            joints[:, c] = (h @ centers) / mass
        else:
            raise InputError(f"unknown decode mode {mode!r}")
    return joints
