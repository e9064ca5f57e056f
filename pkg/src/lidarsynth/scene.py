"""Scene assembly: a posed body on a randomly tilted ground quad, placed at a
random polar position around the sensor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body_model import NUM_JOINTS, PosedBody
from .errors import InputError

GROUND = NUM_JOINTS


@dataclass(frozen=True)
class SceneConfig:
    r_range: tuple[float, float] = (4.0, 20.0)
    ground_size: float = 4.0
    ground_max_tilt: float = 0.175
    ground_enabled: bool = True
    height_jitter: float = 0.0

    def __post_init__(self):
        lo, hi = self.r_range
        if not 0 < lo <= hi:
            raise InputError(f"r_range must satisfy 0 < min <= max, got {self.r_range}")
        if not 0 <= self.ground_max_tilt < np.pi / 4:
            raise InputError("ground_max_tilt must lie in [0, pi/4)")
        if self.ground_size <= 0 or self.height_jitter < 0:
            raise InputError("ground_size must be positive and height_jitter non-negative")


@dataclass(frozen=True)
class Placement:
    r: float
    azimuth: float
    translation: np.ndarray


@dataclass(frozen=True, eq=False)
class SceneMesh:
    vertices: np.ndarray
    faces: np.ndarray
    face_label: np.ndarray
    placement: Placement
    num_body_faces: int


@dataclass(frozen=True, eq=False)
class GroundQuad:
    vertices: np.ndarray   # (4, 3)
    faces: np.ndarray      # (2, 3) local indices
    labels: np.ndarray     # (2,)
    normal: np.ndarray
    anchor: np.ndarray     # plane point below the body


def sample_tilted_normal(max_tilt: float, rng: np.random.Generator) -> np.ndarray:
    """Unit vector uniform on the spherical cap of half-angle ``max_tilt`` about +Z."""
    cos_a = rng.uniform(np.cos(max_tilt), 1.0)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    if max_tilt == 0.0:
        return np.array([0.0, 0.0, 1.0])
    sin_a = np.sqrt(max(0.0, 1.0 - cos_a * cos_a))
    return np.array([sin_a * np.cos(phi), sin_a * np.sin(phi), cos_a])


def make_ground(body: PosedBody, cfg: SceneConfig, rng: np.random.Generator) -> GroundQuad:
    if len(body.vertices) == 0:
        raise InputError("body has no vertices")
    normal = sample_tilted_normal(cfg.ground_max_tilt, rng)
    jitter = rng.uniform(-cfg.height_jitter, cfg.height_jitter) if cfg.height_jitter > 0 else 0.0
    low = body.vertices[np.argmin(body.vertices[:, 2])]
    anchor = np.array([low[0], low[1], low[2] + jitter])

    u = np.array([1.0, 0.0, 0.0]) - normal[0] * normal
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    h = 0.5 * cfg.ground_size
    verts = np.array([anchor - h * u - h * v, anchor + h * u - h * v,
                      anchor + h * u + h * v, anchor - h * u + h * v])
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    return GroundQuad(verts, faces, np.full(2, GROUND, dtype=np.int32), normal, anchor)


def sample_placement(cfg: SceneConfig, rng: np.random.Generator, size=None):
    """Draw range and azimuth; returns ``(r, azimuth)`` scalars or arrays."""
    r = rng.uniform(cfg.r_range[0], cfg.r_range[1], size=size)
    az = rng.uniform(-np.pi, np.pi, size=size)
    return r, az


def place_scene(body: PosedBody, cfg: SceneConfig, rng: np.random.Generator,
                r: float | None = None, azimuth: float | None = None) -> SceneMesh:
    """Merge body and ground and translate them to a sampled polar position.

    ``r`` and ``azimuth`` override the sampled values (the draws are still
    consumed so the stream stays aligned).
    """
    r_s, az_s = sample_placement(cfg, rng)
    r = float(r_s if r is None else r)
    azimuth = float(az_s if azimuth is None else azimuth)
    t = np.array([r * np.cos(azimuth), r * np.sin(azimuth), 0.0])

    verts = body.vertices
    faces = body.faces
    labels = np.asarray(body.face_joint_label, dtype=np.int32)
    if cfg.ground_enabled:
        ground = make_ground(body, cfg, rng)
        nv = len(verts)
        verts = np.concatenate([verts, ground.vertices])
        faces = np.concatenate([faces, ground.faces + nv])
        labels = np.concatenate([labels, ground.labels])
    return SceneMesh(
        vertices=verts + t,
        faces=faces,
        face_label=labels,
        placement=Placement(r, azimuth, t),
        num_body_faces=len(body.faces),
    )
