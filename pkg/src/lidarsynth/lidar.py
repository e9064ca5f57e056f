"""Simulated spinning LiDAR: laser grid, effective angular window and
closest-hit ray casting against the scene mesh.

Ray-triangle tests use the watertight formulation of Woop, Benthin and Wald
(2013) so rays through shared edges never slip between triangles. The BVH
traversal and the brute-force reference share that arithmetic, operation for
operation, which is what lets them agree bit-for-bit on face ids.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np

from .errors import DegenerateError, InputError
from .scene import SceneMesh

T_MIN = 1e-4
LEAF_SIZE = 4
BOX_PAD = 1e-7
_ANGLE_TOL = 1e-9
# squared |e1 x e2| at or below which a face counts as zero-area
DEGENERATE_AREA2 = 1e-24


@dataclass(frozen=True, eq=False)
class LaserGrid:
    """Azimuth x elevation beam directions of the sensor at the origin."""

    n_azimuth: int = 2650
    n_elevation: int = 64
    elev_min: float = math.radians(-25.0)
    elev_max: float = math.radians(15.0)

    def __post_init__(self):
        if self.n_azimuth < 8 or self.n_elevation < 2:
            raise InputError("laser grid needs n_azimuth >= 8 and n_elevation >= 2")
        if not self.elev_max > self.elev_min:
            raise InputError("elev_max must exceed elev_min")

    @property
    def az_step(self) -> float:
        return 2.0 * math.pi / self.n_azimuth

    @property
    def el_step(self) -> float:
        return (self.elev_max - self.elev_min) / (self.n_elevation - 1)

    @cached_property
    def azimuths(self) -> np.ndarray:
        return -math.pi + self.az_step * np.arange(self.n_azimuth)

    @cached_property
    def elevations(self) -> np.ndarray:
        return np.linspace(self.elev_min, self.elev_max, self.n_elevation)

    @cached_property
    def directions(self) -> np.ndarray:
        """(n_elevation, n_azimuth, 3) unit ray directions."""
        el = self.elevations[:, None]
        az = self.azimuths[None, :]
        d = np.stack(np.broadcast_arrays(np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)), axis=-1)
        d.setflags(write=False)
        return d


@dataclass(frozen=True)
class EffectiveWindow:
    """Contiguous block of grid cells covering the scene.

    Azimuth indices run from ``az_start`` for ``n_az`` cells modulo the grid
    size; elevation indices run from ``el_start`` for ``n_el`` cells. The
    ``*_core`` counts are the cells whose angles fall inside the closed
    vertex extent, before the margin is added.
    """

    n_azimuth: int
    az_start: int
    n_az: int
    el_start: int
    n_el: int
    n_az_core: int
    n_el_core: int
    margin: int = 1

    @property
    def wraps(self) -> bool:
        return self.az_start < 0 or self.az_start + self.n_az > self.n_azimuth

    @property
    def az_indices(self) -> np.ndarray:
        return (self.az_start + np.arange(self.n_az)) % self.n_azimuth

    @property
    def el_indices(self) -> np.ndarray:
        return self.el_start + np.arange(self.n_el)

    @property
    def num_rays(self) -> int:
        return self.n_az * self.n_el

    def cells(self) -> np.ndarray:
        """(n_rays, 2) global (azimuth, elevation) indices ordered by (j, i)."""
        i = np.tile(self.az_indices, self.n_el)
        j = np.repeat(self.el_indices, self.n_az)
        return np.stack([i, j], axis=1).astype(np.int32)

    def relative(self, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Window-relative (column, row) of global grid cells."""
        col = (cells[:, 0] - self.az_start) % self.n_azimuth
        row = cells[:, 1] - self.el_start
        return col, row


@dataclass(frozen=True, eq=False)
class HitCloud:
    points: np.ndarray     # (N, 3)
    hit_face: np.ndarray   # (N,), -1 for points not produced by a ray
    ray_cell: np.ndarray   # (N, 2) global (azimuth, elevation) index, -1 if none
    labels: np.ndarray     # (N,) joint id, K for ground/background
    distance: np.ndarray   # (N,)

    def __len__(self) -> int:
        return len(self.points)

    def take(self, idx) -> "HitCloud":
        return HitCloud(self.points[idx], self.hit_face[idx], self.ray_cell[idx],
                        self.labels[idx], self.distance[idx])

    @classmethod
    def empty(cls) -> "HitCloud":
        return cls(np.zeros((0, 3)), np.zeros(0, np.int64), np.zeros((0, 2), np.int32),
                   np.zeros(0, np.int32), np.zeros(0))


def _wrap(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def effective_window(grid: LaserGrid, scene_or_vertices, margin: int = 1) -> EffectiveWindow:
    """Minimal grid-aligned cover of the scene's angular extent plus a margin.

    Azimuths are measured relative to the scene's mean bearing so scenes that
    straddle the -pi/pi seam get a narrow window. Grid angles exactly on the
    extent boundary are included.
    """
    verts = scene_or_vertices.vertices if isinstance(scene_or_vertices, SceneMesh) else np.asarray(scene_or_vertices)
    if len(verts) == 0:
        raise InputError("scene has no vertices")
    horiz = np.hypot(verts[:, 0], verts[:, 1])
    if np.any((horiz == 0.0) & (verts[:, 2] == 0.0)):
        raise DegenerateError("scene vertex coincides with the sensor origin")
    az = np.arctan2(verts[:, 1], verts[:, 0])
    mean = math.atan2(np.sin(az).sum(), np.cos(az).sum())
    rel = _wrap(az - mean)
    a_lo, a_hi = mean + rel.min(), mean + rel.max()

    i_lo = math.ceil((a_lo + math.pi) / grid.az_step - _ANGLE_TOL)
    i_hi = math.floor((a_hi + math.pi) / grid.az_step + _ANGLE_TOL)
    n_az_core = max(0, i_hi - i_lo + 1)
    az_start = i_lo - margin
    n_az = n_az_core + 2 * margin
    if n_az >= grid.n_azimuth:
        az_start, n_az = 0, grid.n_azimuth
    az_start %= grid.n_azimuth

    el = np.arctan2(verts[:, 2], horiz)
    j_lo = math.ceil((el.min() - grid.elev_min) / grid.el_step - _ANGLE_TOL)
    j_hi = math.floor((el.max() - grid.elev_min) / grid.el_step + _ANGLE_TOL)
    core_lo, core_hi = max(j_lo, 0), min(j_hi, grid.n_elevation - 1)
    n_el_core = max(0, core_hi - core_lo + 1)
    el_start = max(j_lo - margin, 0)
    el_stop = min(j_hi + margin, grid.n_elevation - 1)
    n_el = max(0, el_stop - el_start + 1)
    return EffectiveWindow(grid.n_azimuth, az_start, n_az, el_start, n_el, n_az_core, n_el_core, margin)


# --------------------------------------------------------------------------
# watertight ray/triangle kernel

def degenerate_faces(triangles: np.ndarray) -> np.ndarray:
    """Mask of zero-area triangles (never intersected)."""
    cross = np.cross(triangles[:, 1] - triangles[:, 0], triangles[:, 2] - triangles[:, 0])
    return np.einsum("ij,ij->i", cross, cross) <= DEGENERATE_AREA2


@numba.njit(cache=True, inline="always")
def _ray_setup(dx, dy, dz):
    ax, ay, az = abs(dx), abs(dy), abs(dz)
    if ax > ay and ax > az:
        kz = 0
    elif ay > az:
        kz = 1
    else:
        kz = 2
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    d = (dx, dy, dz)
    if d[kz] < 0.0:
        kx, ky = ky, kx
    sx = d[kx] / d[kz]
    sy = d[ky] / d[kz]
    sz = 1.0 / d[kz]
    return kx, ky, kz, sx, sy, sz


@numba.njit(cache=True, inline="always")
def _intersect(tri, f, o, kx, ky, kz, sx, sy, sz):
    """Distance along the ray to triangle ``f`` or inf on a miss."""
    a_x = tri[f, 0, kx] - o[kx]
    a_y = tri[f, 0, ky] - o[ky]
    a_z = tri[f, 0, kz] - o[kz]
    b_x = tri[f, 1, kx] - o[kx]
    b_y = tri[f, 1, ky] - o[ky]
    b_z = tri[f, 1, kz] - o[kz]
    c_x = tri[f, 2, kx] - o[kx]
    c_y = tri[f, 2, ky] - o[ky]
    c_z = tri[f, 2, kz] - o[kz]
    ax = a_x - sx * a_z
    ay = a_y - sy * a_z
    bx = b_x - sx * b_z
    by = b_y - sy * b_z
    cx = c_x - sx * c_z
    cy = c_y - sy * c_z
    u = cx * by - cy * bx
    v = ax * cy - ay * cx
    w = bx * ay - by * ax
    if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
        return np.inf
    det = u + v + w
    if det == 0.0:
        return np.inf
    t = (u * (sz * a_z) + v * (sz * b_z) + w * (sz * c_z)) / det
    if t > T_MIN:
        return t
    return np.inf


# --------------------------------------------------------------------------
# BVH

@dataclass(frozen=True, eq=False)
class BVH:
    """Flattened bounding-volume hierarchy over a triangle soup."""

    triangles: np.ndarray   # (F, 3, 3)
    valid: np.ndarray       # (F,) False for degenerate faces
    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray   # child index, -1 for leaves
    node_right: np.ndarray
    node_axis: np.ndarray   # split axis of inner nodes
    node_start: np.ndarray  # leaf range into ``order``
    node_count: np.ndarray
    order: np.ndarray       # face ids sorted so each leaf holds ascending ids

    @property
    def num_nodes(self) -> int:
        return len(self.node_left)


@numba.njit(cache=True)
def _select(order, s, cnt, kth, key):
    """Partially sort ``order[s:s+cnt]`` so position ``s+kth`` holds the
    element of rank ``kth`` by ``key``; ties ordered by face id."""
    lo, hi = s, s + cnt - 1
    target = s + kth
    while hi > lo:
        mid = (lo + hi) // 2
        pk, pf = key[order[mid]], order[mid]
        i, j = lo, hi
        while i <= j:
            while key[order[i]] < pk or (key[order[i]] == pk and order[i] < pf):
                i += 1
            while key[order[j]] > pk or (key[order[j]] == pk and order[j] > pf):
                j -= 1
            if i <= j:
                order[i], order[j] = order[j], order[i]
                i += 1
                j -= 1
        if target <= j:
            hi = j
        elif target >= i:
            lo = i
        else:
            return


@numba.njit(cache=True)
def _build(tri):
    n = tri.shape[0]
    lo = np.empty((n, 3))
    hi = np.empty((n, 3))
    cen = np.empty((3, n))
    valid = np.empty(n, np.bool_)
    for f in range(n):
        for c in range(3):
            a, b, d = tri[f, 0, c], tri[f, 1, c], tri[f, 2, c]
            lo[f, c] = min(a, b, d)
            hi[f, c] = max(a, b, d)
            cen[c, f] = (a + b + d) / 3.0
        e1x = tri[f, 1, 0] - tri[f, 0, 0]
        e1y = tri[f, 1, 1] - tri[f, 0, 1]
        e1z = tri[f, 1, 2] - tri[f, 0, 2]
        e2x = tri[f, 2, 0] - tri[f, 0, 0]
        e2y = tri[f, 2, 1] - tri[f, 0, 1]
        e2z = tri[f, 2, 2] - tri[f, 0, 2]
        cx = e1y * e2z - e1z * e2y
        cy = e1z * e2x - e1x * e2z
        cz = e1x * e2y - e1y * e2x
        valid[f] = cx * cx + cy * cy + cz * cz > DEGENERATE_AREA2
    order = np.arange(n)
    cap = 2 * n + 1
    nmin = np.empty((cap, 3))
    nmax = np.empty((cap, 3))
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    split = np.full(cap, -1, np.int64)
    start = np.zeros(cap, np.int64)
    count = np.zeros(cap, np.int64)
    stack = np.empty((cap, 3), np.int64)  # node, start, count
    stack[0, 0], stack[0, 1], stack[0, 2] = 0, 0, n
    top = 1
    used = 1
    while top > 0:
        top -= 1
        node, s, cnt = stack[top, 0], stack[top, 1], stack[top, 2]
        bx0 = by0 = bz0 = np.inf
        bx1 = by1 = bz1 = -np.inf
        cx0 = cy0 = cz0 = np.inf
        cx1 = cy1 = cz1 = -np.inf
        for k in range(s, s + cnt):
            f = order[k]
            bx0 = min(bx0, lo[f, 0])
            by0 = min(by0, lo[f, 1])
            bz0 = min(bz0, lo[f, 2])
            bx1 = max(bx1, hi[f, 0])
            by1 = max(by1, hi[f, 1])
            bz1 = max(bz1, hi[f, 2])
            cx0 = min(cx0, cen[0, f])
            cy0 = min(cy0, cen[1, f])
            cz0 = min(cz0, cen[2, f])
            cx1 = max(cx1, cen[0, f])
            cy1 = max(cy1, cen[1, f])
            cz1 = max(cz1, cen[2, f])
        nmin[node, 0] = bx0 - BOX_PAD * (1.0 + abs(bx0))
        nmin[node, 1] = by0 - BOX_PAD * (1.0 + abs(by0))
        nmin[node, 2] = bz0 - BOX_PAD * (1.0 + abs(bz0))
        nmax[node, 0] = bx1 + BOX_PAD * (1.0 + abs(bx1))
        nmax[node, 1] = by1 + BOX_PAD * (1.0 + abs(by1))
        nmax[node, 2] = bz1 + BOX_PAD * (1.0 + abs(bz1))
        ex, ey, ez = cx1 - cx0, cy1 - cy0, cz1 - cz0
        axis = 0
        ext = ex
        if ey > ext:
            axis, ext = 1, ey
        if ez > ext:
            axis, ext = 2, ez
        if cnt <= LEAF_SIZE or ext <= 0.0:
            # insertion sort keeps leaf ids ascending
            for a in range(s + 1, s + cnt):
                v = order[a]
                b = a - 1
                while b >= s and order[b] > v:
                    order[b + 1] = order[b]
                    b -= 1
                order[b + 1] = v
            start[node] = s
            count[node] = cnt
            continue
        half = cnt // 2
        _select(order, s, cnt, half, cen[axis])
        l, r = used, used + 1
        used += 2
        left[node], right[node] = l, r
        split[node] = axis
        stack[top, 0], stack[top, 1], stack[top, 2] = l, s, half
        top += 1
        stack[top, 0], stack[top, 1], stack[top, 2] = r, s + half, cnt - half
        top += 1
    return valid, nmin[:used], nmax[:used], left[:used], right[:used], split[:used], start[:used], count[:used], order


def build_bvh(scene_or_triangles) -> BVH:
    """Build an immutable BVH over a scene mesh or an (F, 3, 3) triangle array."""
    if isinstance(scene_or_triangles, SceneMesh):
        tri = scene_or_triangles.vertices[scene_or_triangles.faces]
    else:
        tri = np.asarray(scene_or_triangles, dtype=np.float64)
    if tri.ndim != 3 or tri.shape[1:] != (3, 3) or len(tri) == 0:
        raise InputError("need at least one triangle of shape (3, 3)")
    tri = np.ascontiguousarray(tri)
    parts = _build(tri)
    for arr in parts:
        arr.setflags(write=False)
    tri.setflags(write=False)
    return BVH(tri, *parts)


@numba.njit(cache=True, inline="always")
def _slab(bmin, bmax, node, ox, oy, oz, ix, iy, iz, t_hi):
    a = (bmin[node, 0] - ox) * ix
    b = (bmax[node, 0] - ox) * ix
    t0 = min(a, b)
    t1 = min(max(a, b), t_hi)
    a = (bmin[node, 1] - oy) * iy
    b = (bmax[node, 1] - oy) * iy
    t0 = max(t0, min(a, b))
    t1 = min(t1, max(a, b))
    a = (bmin[node, 2] - oz) * iz
    b = (bmax[node, 2] - oz) * iz
    t0 = max(t0, min(a, b))
    t1 = min(t1, max(a, b))
    return t0 <= t1 and t1 >= T_MIN


@numba.njit(cache=True, inline="always")
def _safe_inv(d):
    # huge finite stand-in for 1/0 keeps the slab products free of NaN
    if d == 0.0:
        return 1e300
    return 1.0 / d


@numba.njit(cache=True, inline="always")
def _closest(tri, valid, nmin, nmax, left, right, axis, start, count, order, origin, dx, dy, dz, stack):
    kx, ky, kz, sx, sy, sz = _ray_setup(dx, dy, dz)
    ox, oy, oz = origin[0], origin[1], origin[2]
    ix, iy, iz = _safe_inv(dx), _safe_inv(dy), _safe_inv(dz)
    best_t = np.inf
    best_f = -1
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab(nmin, nmax, node, ox, oy, oz, ix, iy, iz, best_t):
            continue
        if left[node] < 0:
            for k in range(start[node], start[node] + count[node]):
                f = order[k]
                if not valid[f]:
                    continue
                t = _intersect(tri, f, origin, kx, ky, kz, sx, sy, sz)
                if t < best_t or (t == best_t and t < np.inf and f < best_f):
                    best_t = t
                    best_f = f
        else:
            ax = axis[node]
            neg = (dx < 0.0) if ax == 0 else ((dy < 0.0) if ax == 1 else (dz < 0.0))
            # push the far child first so the near one is visited first
            if neg:
                stack[top] = left[node]
                stack[top + 1] = right[node]
            else:
                stack[top] = right[node]
                stack[top + 1] = left[node]
            top += 2
    return best_f, best_t


@numba.njit(cache=True)
def _traverse(tri, valid, nmin, nmax, left, right, axis, start, count, order, origin, dirs):
    n = dirs.shape[0]
    out_f = np.full(n, -1, np.int64)
    out_t = np.full(n, np.inf)
    stack = np.empty(128, np.int64)
    for r in range(n):
        out_f[r], out_t[r] = _closest(tri, valid, nmin, nmax, left, right, axis, start, count, order, origin,
                                      dirs[r, 0], dirs[r, 1], dirs[r, 2], stack)
    return out_f, out_t


@numba.njit(cache=True)
def _cast_window(tri, valid, nmin, nmax, left, right, axis, start, count, order, table, az_start, n_az, el_start,
                 n_el):
    n_azimuth = table.shape[1]
    n = n_az * n_el
    face = np.empty(n, np.int64)
    dist = np.empty(n)
    cell = np.empty((n, 2), np.int32)
    pts = np.empty((n, 3))
    stack = np.empty(128, np.int64)
    origin = np.zeros(3)
    m = 0
    for jj in range(n_el):
        j = el_start + jj
        for ii in range(n_az):
            i = (az_start + ii) % n_azimuth
            dx, dy, dz = table[j, i, 0], table[j, i, 1], table[j, i, 2]
            f, t = _closest(tri, valid, nmin, nmax, left, right, axis, start, count, order, origin,
                            dx, dy, dz, stack)
            if f >= 0:
                face[m] = f
                dist[m] = t
                cell[m, 0] = i
                cell[m, 1] = j
                pts[m, 0] = origin[0] + t * dx
                pts[m, 1] = origin[1] + t * dy
                pts[m, 2] = origin[2] + t * dz
                m += 1
    return face[:m].copy(), dist[:m].copy(), cell[:m].copy(), pts[:m].copy()


def bvh_closest_hit(bvh: BVH, origin, directions) -> tuple[np.ndarray, np.ndarray]:
    """Closest hit per ray: (face id or -1, distance or inf)."""
    origin = np.ascontiguousarray(origin, dtype=np.float64)
    directions = np.ascontiguousarray(directions, dtype=np.float64).reshape(-1, 3)
    return _traverse(bvh.triangles, bvh.valid, bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
                     bvh.node_axis, bvh.node_start, bvh.node_count, bvh.order, origin, directions)


def brute_force_closest_hit(triangles, origin, directions, chunk: int = 1024):
    """All-triangles reference intersector in plain numpy.

    Independent of the BVH path; same watertight arithmetic and the same
    tie rule (smallest distance, then lowest face id).
    """
    tri = np.asarray(triangles, dtype=np.float64)
    o = np.asarray(origin, dtype=np.float64)
    dirs = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    keep = ~degenerate_faces(tri)
    rel = tri - o  # (F, 3 verts, 3 coords)
    faces = np.zeros(len(dirs), np.int64) - 1
    dist = np.full(len(dirs), np.inf)
    for s in range(0, len(dirs), chunk):
        d = dirs[s:s + chunk]
        ad = np.abs(d)
        kz = np.where((ad[:, 0] > ad[:, 1]) & (ad[:, 0] > ad[:, 2]), 0, np.where(ad[:, 1] > ad[:, 2], 1, 2))
        kx = (kz + 1) % 3
        ky = (kx + 1) % 3
        rows = np.arange(len(d))
        neg = d[rows, kz] < 0
        kx, ky = np.where(neg, ky, kx), np.where(neg, kx, ky)
        sx = (d[rows, kx] / d[rows, kz])[:, None]
        sy = (d[rows, ky] / d[rows, kz])[:, None]
        sz = (1.0 / d[rows, kz])[:, None]
        # (rays, faces, vertex) components in the ray's shear frame
        px = rel[:, :, kx].transpose(2, 0, 1)
        py = rel[:, :, ky].transpose(2, 0, 1)
        pz = rel[:, :, kz].transpose(2, 0, 1)
        x = px - sx[..., None] * pz
        y = py - sy[..., None] * pz
        u = x[..., 2] * y[..., 1] - y[..., 2] * x[..., 1]
        v = x[..., 0] * y[..., 2] - y[..., 0] * x[..., 2]
        w = x[..., 1] * y[..., 0] - y[..., 1] * x[..., 0]
        neg_any = (u < 0) | (v < 0) | (w < 0)
        pos_any = (u > 0) | (v > 0) | (w > 0)
        det = u + v + w
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (u * (sz * pz[..., 0]) + v * (sz * pz[..., 1]) + w * (sz * pz[..., 2])) / det
        hit = ~(neg_any & pos_any) & (det != 0.0) & (t > T_MIN) & keep[None, :]
        t = np.where(hit, t, np.inf)
        best = np.argmin(t, axis=1)  # first minimum -> lowest face id
        bt = t[rows, best]
        faces[s:s + chunk] = np.where(np.isfinite(bt), best, -1)
        dist[s:s + chunk] = bt
    return faces, dist


# --------------------------------------------------------------------------
# ray casting

@dataclass
class RayStats:
    rays: int = 0
    seconds: float = 0.0

    @property
    def rays_per_second(self) -> float:
        return self.rays / self.seconds if self.seconds > 0 else 0.0


PERF = RayStats()


def raycast(scene: SceneMesh, window: EffectiveWindow, grid: LaserGrid | None = None,
            bvh: BVH | None = None) -> HitCloud:
    """Cast every ray of the window; keep closest hits, drop misses."""
    grid = grid or LaserGrid()
    if window.n_azimuth != grid.n_azimuth:
        raise InputError("window was computed for a different laser grid")
    if window.num_rays == 0:
        return HitCloud.empty()
    tic = time.perf_counter()
    bvh = bvh or build_bvh(scene)
    face, dist, cells, points = _cast_window(
        bvh.triangles, bvh.valid, bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right, bvh.node_axis,
        bvh.node_start, bvh.node_count, bvh.order, grid.directions, window.az_start, window.n_az,
        window.el_start, window.n_el)
    PERF.rays += window.num_rays
    PERF.seconds += time.perf_counter() - tic
    return HitCloud(points, face, cells, scene.face_label[face].astype(np.int32), dist)
