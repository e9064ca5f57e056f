"""Parametric human body model: container I/O, a procedural toy model and
the shape/pose forward pass with linear blend skinning.

All geometry is in meters in a right-handed, Z-up frame.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numba
import numpy as np

from .errors import DimensionError, FormatError, InputError, MagicError, TruncatedError, ValidationError, VersionError

NUM_JOINTS = 24
NUM_BETAS = 10
NUM_POSE = 72
NUM_POSE_FEATURES = (NUM_JOINTS - 1) * 9

MODEL_MAGIC = b"LBM1"
MODEL_VERSION = 1
ROOT_PARENT = -1

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
)

SMPL_PARENTS = np.array(
    [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21],
    dtype=np.int32,
)


@dataclass(frozen=True, eq=False)
class BodyModel:
    """Rest-pose template with blendshape and skinning tensors.

    Attributes:
        template_vertices: (N_V, 3) rest-pose vertices.
        faces: (N_F, 3) vertex indices.
        shape_dirs: (N_V, 3, 10) shape displacement basis.
        pose_dirs: (N_V, 3, 207) pose-corrective basis.
        joint_regressor: (K, N_V) joint regression weights.
        skinning_weights: (N_V, K) blend weights.
        kinematic_parents: (K,) parent index per joint, -1 for the root.
    """

    template_vertices: np.ndarray
    faces: np.ndarray
    shape_dirs: np.ndarray
    pose_dirs: np.ndarray
    joint_regressor: np.ndarray
    skinning_weights: np.ndarray
    kinematic_parents: np.ndarray

    def __post_init__(self):
        for name in ("template_vertices", "faces", "shape_dirs", "pose_dirs",
                     "joint_regressor", "skinning_weights", "kinematic_parents"):
            getattr(self, name).setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def num_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def num_joints(self) -> int:
        return self.kinematic_parents.shape[0]

    def validate(self) -> "BodyModel":
        """Check every structural invariant; raise on the first violation."""
        nv = self.template_vertices.shape[0]
        k = self.kinematic_parents.shape[0]
        expect = {
            "template_vertices": (nv, 3),
            "shape_dirs": (nv, 3, NUM_BETAS),
            "pose_dirs": (nv, 3, NUM_POSE_FEATURES),
            "joint_regressor": (NUM_JOINTS, nv),
            "skinning_weights": (nv, NUM_JOINTS),
        }
        if k != NUM_JOINTS:
            raise DimensionError(f"kinematic_parents: expected {NUM_JOINTS} joints, got {k}")
        for name, shape in expect.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise DimensionError(f"{name}: expected shape {shape}, got {arr.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise DimensionError(f"faces: expected (N_F, 3), got {self.faces.shape}")
        for name in expect:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(name, "contains non-finite values")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= nv):
            raise ValidationError("faces", f"vertex index outside [0, {nv})")
        w = self.skinning_weights
        if np.any(w < 0):
            raise ValidationError("skinning_weights", "negative weight")
        bad = np.flatnonzero(np.abs(w.sum(axis=1) - 1.0) > 1e-5)
        if bad.size:
            raise ValidationError("skinning_weights", f"row {bad[0]} sums to {w[bad[0]].sum():.6f}")
        bad = np.flatnonzero(np.abs(self.joint_regressor.sum(axis=1) - 1.0) > 1e-5)
        if bad.size:
            raise ValidationError("joint_regressor", f"row {bad[0]} does not sum to 1")
        _check_tree(self.kinematic_parents)
        return self

    @cached_property
    def face_joint_label(self) -> np.ndarray:
        """Joint id per face: argmax skinning per vertex, majority vote per face.

        Ties go to the lowest joint index for vertices, and to the label of the
        lowest-index vertex of the face when all three vertex labels differ.
        """
        vlabel = np.argmax(self.skinning_weights, axis=1)
        tri = vlabel[self.faces]
        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        lowest = self.faces.argmin(axis=1)
        label = tri[np.arange(len(tri)), lowest]
        label = np.where(b == c, b, label)
        label = np.where((a == b) | (a == c), a, label)
        label = label.astype(np.int32)
        label.setflags(write=False)
        return label


def _check_tree(parents: np.ndarray) -> None:
    roots = np.flatnonzero(parents < 0)
    if roots.size != 1:
        raise ValidationError("kinematic_parents", f"expected exactly one root, found {roots.size}")
    k = len(parents)
    if np.any(parents >= k):
        raise ValidationError("kinematic_parents", "parent index out of range")
    for j in range(k):
        seen, node = 0, j
        while parents[node] >= 0:
            node = parents[node]
            seen += 1
            if seen > k:
                raise ValidationError("kinematic_parents", f"cycle through joint {j}")


@dataclass(frozen=True, eq=False)
class PosedBody:
    vertices: np.ndarray
    faces: np.ndarray
    joints: np.ndarray
    face_joint_label: np.ndarray


# --------------------------------------------------------------------------
# container format

_HEADER = struct.Struct("<4sIIII")


def save_body_model(model: BodyModel, path) -> None:
    model.validate()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, model.num_vertices, model.num_faces, model.num_joints))
        for arr in (model.template_vertices, model.shape_dirs, model.pose_dirs,
                    model.joint_regressor, model.skinning_weights):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.faces, dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(model.kinematic_parents, dtype="<i4").tobytes())


def load_body_model(path) -> BodyModel:
    """Read and validate an ``LBM1`` body-model container."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TruncatedError(f"{path}: header truncated")
    magic, version, nv, nf, k = _HEADER.unpack_from(data, 0)
    if magic != MODEL_MAGIC:
        raise MagicError(f"{path}: bad magic {magic!r}")
    if version != MODEL_VERSION:
        raise VersionError(f"{path}: unsupported version {version}")
    if k != NUM_JOINTS:
        raise DimensionError(f"{path}: K={k}, expected {NUM_JOINTS}")
    layout = [
        ("template_vertices", "<f4", (nv, 3)),
        ("shape_dirs", "<f4", (nv, 3, NUM_BETAS)),
        ("pose_dirs", "<f4", (nv, 3, NUM_POSE_FEATURES)),
        ("joint_regressor", "<f4", (k, nv)),
        ("skinning_weights", "<f4", (nv, k)),
        ("faces", "<u4", (nf, 3)),
        ("kinematic_parents", "<i4", (k,)),
    ]
    offset = _HEADER.size
    fields = {}
    for name, dtype, shape in layout:
        count = int(np.prod(shape))
        nbytes = count * 4
        if offset + nbytes > len(data):
            raise TruncatedError(f"{path}: field {name} truncated")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(shape)
        fields[name] = arr.astype(np.float64) if dtype == "<f4" else arr.astype(np.int64 if name == "faces" else np.int32)
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
    return BodyModel(**fields).validate()


# --------------------------------------------------------------------------
# procedural toy model

_RINGS = 3
_RING_VERTS = 6
_SEGMENT_VERTS = _RINGS * _RING_VERTS

# rest joint positions (m), pelvis at origin, +X left, +Y forward, +Z up
_TOY_JOINTS = np.array([
    [0.00, 0.00, 0.00],    # pelvis
    [0.09, 0.00, -0.08],   # left_hip
    [-0.09, 0.00, -0.08],  # right_hip
    [0.00, 0.00, 0.11],    # spine1
    [0.10, 0.00, -0.47],   # left_knee
    [-0.10, 0.00, -0.47],  # right_knee
    [0.00, 0.00, 0.24],    # spine2
    [0.10, 0.00, -0.86],   # left_ankle
    [-0.10, 0.00, -0.86],  # right_ankle
    [0.00, 0.00, 0.30],    # spine3
    [0.10, 0.12, -0.92],   # left_foot
    [-0.10, 0.12, -0.92],  # right_foot
    [0.00, 0.00, 0.50],    # neck
    [0.07, 0.00, 0.42],    # left_collar
    [-0.07, 0.00, 0.42],   # right_collar
    [0.00, 0.00, 0.58],    # head
    [0.18, 0.00, 0.43],    # left_shoulder
    [-0.18, 0.00, 0.43],   # right_shoulder
    [0.44, 0.00, 0.43],    # left_elbow
    [-0.44, 0.00, 0.43],   # right_elbow
    [0.69, 0.00, 0.43],    # left_wrist
    [-0.69, 0.00, 0.43],   # right_wrist
    [0.77, 0.00, 0.43],    # left_hand
    [-0.77, 0.00, 0.43],   # right_hand
])

# segment end point per joint (start is the joint itself) and radius
_TOY_SEGMENT_END = {
    0: ([0.00, 0.00, -0.14], 0.14),
    1: (4, 0.08), 2: (5, 0.08),
    3: (6, 0.13),
    4: (7, 0.06), 5: (8, 0.06),
    6: (9, 0.14),
    7: ([0.10, 0.08, -0.95], 0.05), 8: ([-0.10, 0.08, -0.95], 0.05),
    9: (12, 0.14),
    10: ([0.10, 0.22, -0.93], 0.04), 11: ([-0.10, 0.22, -0.93], 0.04),
    12: (15, 0.05),
    13: (16, 0.05), 14: (17, 0.05),
    15: ([0.00, 0.03, 0.80], 0.10),
    16: (18, 0.05), 17: (19, 0.05),
    18: (20, 0.04), 19: (21, 0.04),
    20: (22, 0.035), 21: (23, 0.035),
    22: ([0.85, 0.00, 0.43], 0.03), 23: ([-0.85, 0.00, 0.43], 0.03),
}


def _segment_frame(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = axis / np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(d, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(d, u)


def _segment_faces(base: int) -> list[tuple[int, int, int]]:
    faces = []
    n = _RING_VERTS
    for ring in range(_RINGS - 1):
        for m in range(n):
            a = base + ring * n + m
            b = base + ring * n + (m + 1) % n
            c = base + (ring + 1) * n + (m + 1) % n
            d = base + (ring + 1) * n + m
            faces += [(a, b, c), (a, c, d)]
    for ring, flip in ((0, True), (_RINGS - 1, False)):
        start = base + ring * n
        for m in range(1, n - 1):
            tri = (start, start + m, start + m + 1)
            faces.append(tri[::-1] if flip else tri)
    return faces


def gen_toy_model(seed: int = 0) -> BodyModel:
    """Procedural 24-joint humanoid made of hexagonal capsule limbs.

    Stands in for licensed SMPL weights in tests. Every float is rounded to
    float32 so the model survives a save/load round trip bit-exactly.
    """
    rng = np.random.default_rng(seed)
    scale = rng.uniform(0.95, 1.05)
    joints = _TOY_JOINTS * scale

    verts, faces, seg_of_vertex, ring_of_vertex = [], [], [], []
    radial = []
    for j in range(NUM_JOINTS):
        end, radius = _TOY_SEGMENT_END[j]
        end = joints[end] if isinstance(end, int) else np.asarray(end) * scale
        radius *= rng.uniform(0.9, 1.1)
        start = joints[j]
        u, w = _segment_frame(end - start)
        base = len(verts)
        for ring in range(_RINGS):
            center = start + (end - start) * ring / (_RINGS - 1)
            for m in range(_RING_VERTS):
                ang = 2.0 * np.pi * m / _RING_VERTS
                offset = np.cos(ang) * u + np.sin(ang) * w
                verts.append(center + radius * offset)
                radial.append(offset * radius)
                seg_of_vertex.append(j)
                ring_of_vertex.append(ring)
        faces += _segment_faces(base)

    template = np.asarray(verts)
    nv = len(template)
    seg = np.asarray(seg_of_vertex)
    ring = np.asarray(ring_of_vertex)

    weights = np.zeros((nv, NUM_JOINTS))
    weights[np.arange(nv), seg] = 1.0
    blend = (ring == 0) & (SMPL_PARENTS[seg] >= 0)
    idx = np.flatnonzero(blend)
    weights[idx, seg[idx]] = 0.75
    weights[idx, SMPL_PARENTS[seg[idx]]] = 0.25

    regressor = np.zeros((NUM_JOINTS, nv))
    for j in range(NUM_JOINTS):
        regressor[j, np.flatnonzero((seg == j) & (ring == 0))] = 1.0 / _RING_VERTS

    shape_dirs = np.zeros((nv, 3, NUM_BETAS))
    shape_dirs[:, 2, 0] = 0.05 * template[:, 2]                        # stature
    shape_dirs[:, :, 1] = 0.1 * np.asarray(radial)                      # girth
    arm = np.isin(seg, [13, 14, 16, 17, 18, 19, 20, 21, 22, 23])
    shape_dirs[arm, 0, 2] = 0.05 * template[arm, 0]                     # arm span
    seg_shift = rng.normal(0.0, 0.005, size=(NUM_JOINTS, 3, NUM_BETAS - 3))
    shape_dirs[:, :, 3:] = seg_shift[seg]
    pose_dirs = rng.normal(0.0, 0.001, size=(nv, 3, NUM_POSE_FEATURES))

    def f32(a):
        return np.asarray(a, dtype=np.float32).astype(np.float64)

    return BodyModel(
        template_vertices=f32(template),
        faces=np.asarray(faces, dtype=np.int64),
        shape_dirs=f32(shape_dirs),
        pose_dirs=f32(pose_dirs),
        joint_regressor=f32(regressor),
        skinning_weights=f32(weights),
        kinematic_parents=SMPL_PARENTS.copy(),
    ).validate()


# --------------------------------------------------------------------------
# forward pass

def rodrigues(axis_angle: np.ndarray) -> np.ndarray:
    """(..., 3) axis-angle vectors to (..., 3, 3) rotation matrices.

    A zero vector maps to the identity exactly.
    """
    r = np.asarray(axis_angle, dtype=np.float64)
    angle = np.linalg.norm(r, axis=-1, keepdims=True)
    small = angle < 1e-12
    safe = np.where(small, 1.0, angle)
    k = r / safe
    kx, ky, kz = k[..., 0], k[..., 1], k[..., 2]
    zero = np.zeros_like(kx)
    skew = np.stack([zero, -kz, ky, kz, zero, -kx, -ky, kx, zero], axis=-1).reshape(r.shape[:-1] + (3, 3))
    s = np.sin(safe)[..., None]
    c = np.cos(safe)[..., None]
    eye = np.broadcast_to(np.eye(3), skew.shape)
    rot = eye + s * skew + (1.0 - c) * (skew @ skew)
    # first order for vanishing angles: R = I + [r]_x
    rx, ry, rz = r[..., 0], r[..., 1], r[..., 2]
    lin = eye + np.stack([zero, -rz, ry, rz, zero, -rx, -ry, rx, zero], axis=-1).reshape(skew.shape)
    return np.where(small[..., None], lin, rot)


@numba.njit(cache=True)
def _skin(rots, rest_joints, parents, weights, posed):
    """Linear blend skinning along the kinematic tree.

    Transforms are composed in rest coordinates,
    A_k = A_parent @ [R_k | J_k - R_k J_k], so a zero pose is exactly identity.
    """
    k_count = rots.shape[0]
    chain = np.zeros((k_count, 3, 4))
    for k in range(k_count):
        loc = np.zeros((3, 4))
        for i in range(3):
            acc = 0.0
            for j in range(3):
                loc[i, j] = rots[k, i, j]
                acc += rots[k, i, j] * rest_joints[k, j]
            loc[i, 3] = rest_joints[k, i] - acc
        p = parents[k]
        if p < 0:
            chain[k] = loc
        else:
            for i in range(3):
                for j in range(4):
                    acc = 0.0
                    for m in range(3):
                        acc += chain[p, i, m] * loc[m, j]
                    if j == 3:
                        acc += chain[p, i, 3]
                    chain[k, i, j] = acc
    joints = np.empty((k_count, 3))
    for k in range(k_count):
        for i in range(3):
            joints[k, i] = (chain[k, i, 0] * rest_joints[k, 0] + chain[k, i, 1] * rest_joints[k, 1]
                            + chain[k, i, 2] * rest_joints[k, 2] + chain[k, i, 3])
    nv = posed.shape[0]
    out = np.empty((nv, 3))
    blend = np.empty((3, 4))
    for v in range(nv):
        blend[:] = 0.0
        for k in range(k_count):
            w = weights[v, k]
            if w != 0.0:
                for i in range(3):
                    for j in range(4):
                        blend[i, j] += w * chain[k, i, j]
        for i in range(3):
            out[v, i] = (blend[i, 0] * posed[v, 0] + blend[i, 1] * posed[v, 1]
                         + blend[i, 2] * posed[v, 2] + blend[i, 3])
    return out, joints


def _check_params(beta, theta) -> tuple[np.ndarray, np.ndarray]:
    beta = np.asarray(beta, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if beta.shape != (NUM_BETAS,):
        raise DimensionError(f"beta must have shape ({NUM_BETAS},), got {beta.shape}")
    if theta.shape != (NUM_POSE,):
        raise DimensionError(f"theta must have shape ({NUM_POSE},), got {theta.shape}")
    if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(theta))):
        raise InputError("beta/theta contain non-finite values")
    return beta, theta


def forward(model: BodyModel, beta, theta) -> PosedBody:
    """Shape and pose the body model.

    Args:
        model: body model.
        beta: (10,) shape coefficients.
        theta: (72,) axis-angle rotations of the 24 joints, root first.

    Returns:
        PosedBody with posed vertices and posed joints.
    """
    beta, theta = _check_params(beta, theta)
    shaped = model.template_vertices + model.shape_dirs @ beta
    rest_joints = model.joint_regressor @ shaped

    rots = rodrigues(theta.reshape(NUM_JOINTS, 3))
    pose_feature = (rots[1:] - np.eye(3)).reshape(-1)
    posed = shaped + model.pose_dirs @ pose_feature

    vertices, joints = _skin(rots, rest_joints, model.kinematic_parents, model.skinning_weights, posed)
    if not np.all(np.isfinite(joints)):
        raise InputError("posed joints are not finite")
    return PosedBody(vertices=vertices, faces=model.faces, joints=joints,
                     face_joint_label=model.face_joint_label)
