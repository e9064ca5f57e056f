"""Laser-level occlusion masking: tile the effective window into square
patches of grid cells and drop every hit whose ray falls in a masked patch."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .lidar import EffectiveWindow, HitCloud


@dataclass(frozen=True, eq=False)
class MaskPlan:
    window: EffectiveWindow
    patch_size: int
    patches_az: int
    patches_el: int
    masked: np.ndarray      # (patches_el * patches_az,) bool, row-major by elevation
    r_keep: float

    @property
    def total_patches(self) -> int:
        return self.patches_az * self.patches_el

    @property
    def num_masked(self) -> int:
        return int(self.masked.sum())

    def patch_index(self, cells: np.ndarray) -> np.ndarray:
        col, row = self.window.relative(cells)
        return (row // self.patch_size) * self.patches_az + col // self.patch_size


def patch_size(width: int, height: int) -> int:
    return max(1, min(width, height) // 8)


def masked_count(total: int, r_keep: float) -> int:
    # nearest integer, halves round up
    return int(math.floor((1.0 - r_keep) * total + 0.5))


def plan_mask(window: EffectiveWindow, r_keep: float, rng: np.random.Generator) -> MaskPlan:
    """Choose which patches of the window to occlude.

    Patches are ``max(1, min(w, h) // 8)`` cells on a side, border patches may
    be partial and count like full ones. ``round((1 - r_keep) * total)``
    patches are masked, drawn without replacement.
    """
    if window.n_az <= 0 or window.n_el <= 0:
        raise InputError("cannot plan a mask on an empty window")
    if not 0.0 < r_keep <= 1.0:
        raise InputError(f"r_keep must lie in (0, 1], got {r_keep}")
    sp = patch_size(window.n_az, window.n_el)
    pa = -(-window.n_az // sp)
    pe = -(-window.n_el // sp)
    total = pa * pe
    masked = np.zeros(total, dtype=bool)
    m = masked_count(total, r_keep)
    if m:
        masked[rng.choice(total, size=m, replace=False)] = True
    return MaskPlan(window, sp, pa, pe, masked, r_keep)


def apply_mask(cloud: HitCloud, plan: MaskPlan) -> HitCloud:
    """Remove the points whose ray cell lies in a masked patch, keeping order."""
    if len(cloud) == 0 or plan.num_masked == 0:
        return cloud
    idx = plan.patch_index(cloud.ray_cell)
    if np.any(idx < 0) or np.any(idx >= plan.total_patches):
        raise InputError("cloud contains rays outside the plan's window")
    return cloud.take(~plan.masked[idx])
