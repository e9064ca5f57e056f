"""On-disk formats: sample records, sharded datasets with a JSON manifest,
prediction files, heatmap dumps and ASCII PLY export.

Every binary layout is little-endian regardless of host byte order.

Sample record::

    "LHS1" u32 version u32 N u32 K
    f32 points[N*3] u16 labels[N] f32 joints[K*3] u8 visibility[K]
    u64 seed f32 r f32 azimuth u32 pose_id u32 mask_patch_count u8 config_hash[16]

Prediction file::

    u32 K u32 count, then count x (u64 sample_id, f32 joints[K*3])

Heatmap dump::

    "LHH1" u32 version u32 K u32 Nx u32 Ny u32 Nz u32 count f32 sigma
    count x (u64 sample_id, f32 range[6], f32 hx[K*Nx], f32 hy[K*Ny], f32 hz[K*Nz])
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ConfigHashMismatch, FormatError, InputError, MagicError,
                     TruncatedError, VersionError)

log = logging.getLogger(__name__)

RECORD_MAGIC = b"LHS1"
RECORD_VERSION = 1
MANIFEST_VERSION = 1
SHARD_SIZE = 4096
MANIFEST_NAME = "manifest.json"

_REC_HEADER = struct.Struct("<4sIII")
_REC_META = struct.Struct("<QffII16s")


@dataclass(frozen=True)
class SampleMeta:
    seed: int = 0
    r: float = 0.0
    azimuth: float = 0.0
    pose_id: int = 0
    mask_patch_count: int = 0
    config_hash: bytes = bytes(16)


@dataclass(eq=False)
class SyntheticSample:
    points: np.ndarray       # (N, 3) float32, metres
    labels: np.ndarray       # (N,) uint16, joint id or K for background
    joints: np.ndarray       # (K, 3) float32
    visibility: np.ndarray   # (K,) uint8
    meta: SampleMeta = field(default_factory=SampleMeta)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float32).reshape(-1, 3)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint16)
        self.joints = np.ascontiguousarray(self.joints, dtype=np.float32).reshape(-1, 3)
        self.visibility = np.ascontiguousarray(self.visibility, dtype=np.uint8)
        k = len(self.joints)
        if len(self.labels) != len(self.points):
            raise InputError("one label per point required")
        if len(self.visibility) != k:
            raise InputError("one visibility flag per joint required")
        if len(self.labels) and self.labels.max() > k:
            raise InputError(f"labels must be < K+1 = {k + 1}")
        if not np.all(np.isfinite(self.joints)):
            raise InputError("joints must be finite")

    @property
    def num_joints(self) -> int:
        return len(self.joints)

    def same_as(self, other: "SyntheticSample") -> bool:
        return encode_sample(self) == encode_sample(other)


def config_digest(config: dict) -> bytes:
    """16-byte hash of a canonical JSON rendering of ``config``."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.blake2b(text.encode("utf-8"), digest_size=16).digest()


def file_digest(path) -> str:
    h = hashlib.blake2b(digest_size=16)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --------------------------------------------------------------------------
# sample records

def encode_sample(sample: SyntheticSample) -> bytes:
    m = sample.meta
    if len(m.config_hash) != 16:
        raise InputError("config_hash must be 16 bytes")
    parts = [
        _REC_HEADER.pack(RECORD_MAGIC, RECORD_VERSION, len(sample.points), sample.num_joints),
        sample.points.astype("<f4").tobytes(),
        sample.labels.astype("<u2").tobytes(),
        sample.joints.astype("<f4").tobytes(),
        sample.visibility.astype("u1").tobytes(),
        _REC_META.pack(m.seed, m.r, m.azimuth, m.pose_id, m.mask_patch_count, m.config_hash),
    ]
    return b"".join(parts)


def decode_sample(buf, offset: int = 0, expected_hash: bytes | None = None) -> tuple[SyntheticSample, int]:
    """Parse one record at ``offset``; returns the sample and its byte length."""
    buf = memoryview(buf)
    if len(buf) - offset < _REC_HEADER.size:
        raise TruncatedError(f"record header truncated at offset {offset}")
    magic, version, n, k = _REC_HEADER.unpack_from(buf, offset)
    if magic != RECORD_MAGIC:
        raise MagicError(f"bad record magic {bytes(magic)!r} at offset {offset}")
    if version != RECORD_VERSION:
        raise VersionError(f"unsupported record version {version}")
    size = _REC_HEADER.size + 12 * n + 2 * n + 12 * k + k + _REC_META.size
    if len(buf) - offset < size:
        raise TruncatedError(f"record at offset {offset} needs {size} bytes, {len(buf) - offset} available")
    pos = offset + _REC_HEADER.size

    def take(dtype, count):
        nonlocal pos
        arr = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).copy()
        pos += arr.nbytes
        return arr

    points = take("<f4", 3 * n).reshape(n, 3)
    labels = take("<u2", n)
    joints = take("<f4", 3 * k).reshape(k, 3)
    vis = take("u1", k)
    seed, r, az, pose_id, mpc, chash = _REC_META.unpack_from(buf, pos)
    if expected_hash is not None and chash != expected_hash:
        raise ConfigHashMismatch(f"record at offset {offset}: config hash {chash.hex()} != {expected_hash.hex()}")
    try:
        sample = SyntheticSample(points, labels, joints, vis, SampleMeta(seed, r, az, pose_id, mpc, chash))
    except InputError as exc:
        raise FormatError(f"record at offset {offset}: {exc}") from exc
    return sample, size


def write_sample(path_or_file, sample: SyntheticSample) -> int:
    data = encode_sample(sample)
    if hasattr(path_or_file, "write"):
        path_or_file.write(data)
    else:
        Path(path_or_file).write_bytes(data)
    return len(data)


def read_sample(path, offset: int = 0, expected_hash: bytes | None = None) -> SyntheticSample:
    return decode_sample(Path(path).read_bytes(), offset, expected_hash)[0]


# --------------------------------------------------------------------------
# datasets

def shard_name(index: int) -> str:
    return f"shard-{index:05d}.lhs"


class DatasetWriter:
    """Streams records into shards; the manifest is written on ``close``.

    Samples must be added in increasing id order.
    """

    def __init__(self, out_dir, config: dict, master_seed: int, extra: dict | None = None,
                 shard_size: int = SHARD_SIZE, config_hash: bytes | None = None):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.config_hash = config_hash if config_hash is not None else config_digest(config)
        self.master_seed = master_seed
        self.extra = extra or {}
        self.shard_size = shard_size
        self.records: list[dict] = []
        self._fh = None
        self._shard = -1
        self._offset = 0
        self._count_in_shard = 0

    def add(self, sample_id: int, sample: SyntheticSample | bytes) -> None:
        if self.records and sample_id <= self.records[-1]["sample_id"]:
            raise InputError("sample ids must be strictly increasing")
        if self._fh is None or self._count_in_shard >= self.shard_size:
            self._next_shard()
        data = sample if isinstance(sample, (bytes, bytearray)) else encode_sample(sample)
        self._fh.write(data)
        self.records.append({"sample_id": int(sample_id), "file": shard_name(self._shard),
                             "offset": self._offset, "size": len(data)})
        self._offset += len(data)
        self._count_in_shard += 1

    def _next_shard(self):
        if self._fh is not None:
            self._fh.close()
        self._shard += 1
        self._fh = open(self.out_dir / shard_name(self._shard), "wb")
        self._offset = 0
        self._count_in_shard = 0

    def close(self) -> Path:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
        manifest = {
            "schema_version": MANIFEST_VERSION,
            "sample_count": len(self.records),
            "master_seed": self.master_seed,
            "config_hash": self.config_hash.hex(),
            "config": self.config,
            **self.extra,
            "records": self.records,
        }
        path = self.out_dir / MANIFEST_NAME
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(manifest, indent=1) + "\n")
        os.replace(tmp, path)
        return path

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class Dataset:
    """Read-only view of a generated dataset directory."""

    def __init__(self, path):
        self.root = Path(path)
        if not self.root.is_dir():
            raise InputError(f"{self.root}: dataset directory not found")
        mpath = self.root / MANIFEST_NAME
        try:
            self.manifest = json.loads(mpath.read_text())
        except FileNotFoundError as exc:
            raise FormatError(f"{mpath}: no manifest") from exc
        except json.JSONDecodeError as exc:
            raise FormatError(f"{mpath}: {exc}") from exc
        if self.manifest.get("schema_version") != MANIFEST_VERSION:
            raise VersionError(f"{mpath}: unsupported manifest version {self.manifest.get('schema_version')}")
        self.config_hash = bytes.fromhex(self.manifest["config_hash"])
        self.records = self.manifest["records"]
        self._index = {r["sample_id"]: r for r in self.records}
        last = {}
        for r in self.records:
            if r["offset"] <= last.get(r["file"], -1):
                raise FormatError(f"{mpath}: offsets in {r['file']} are not strictly increasing")
            last[r["file"]] = r["offset"]
        self._cache: dict[str, bytes] = {}

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[int]:
        return [r["sample_id"] for r in self.records]

    @property
    def config(self) -> dict:
        return self.manifest["config"]

    def _shard(self, name: str) -> bytes:
        if name not in self._cache:
            self._cache = {name: (self.root / name).read_bytes()}
        return self._cache[name]

    def raw(self, sample_id: int) -> bytes:
        r = self._index[sample_id]
        data = self._shard(r["file"])
        return data[r["offset"]:r["offset"] + r["size"]]

    def get(self, sample_id: int) -> SyntheticSample:
        r = self._index.get(sample_id)
        if r is None:
            raise InputError(f"sample {sample_id} not in dataset")
        return decode_sample(self._shard(r["file"]), r["offset"], self.config_hash)[0]

    def __iter__(self):
        for r in self.records:
            yield r["sample_id"], self.get(r["sample_id"])


# --------------------------------------------------------------------------
# predictions

_PRED_HEADER = struct.Struct("<II")


def write_predictions(path, predictions: dict[int, np.ndarray]) -> None:
    items = sorted(predictions.items())
    k = len(items[0][1]) if items else 0
    with open(path, "wb") as fh:
        fh.write(_PRED_HEADER.pack(k, len(items)))
        for sid, joints in items:
            joints = np.asarray(joints, dtype="<f4")
            if joints.shape != (k, 3):
                raise InputError(f"prediction {sid}: expected ({k}, 3), got {joints.shape}")
            fh.write(struct.pack("<Q", sid))
            fh.write(joints.tobytes())


def read_predictions(path) -> dict[int, np.ndarray]:
    data = Path(path).read_bytes()
    if len(data) < _PRED_HEADER.size:
        raise TruncatedError(f"{path}: header truncated")
    k, count = _PRED_HEADER.unpack_from(data, 0)
    rec = 8 + 12 * k
    if len(data) != _PRED_HEADER.size + count * rec:
        raise TruncatedError(f"{path}: expected {count} records of {rec} bytes")
    out: dict[int, np.ndarray] = {}
    pos = _PRED_HEADER.size
    for _ in range(count):
        (sid,) = struct.unpack_from("<Q", data, pos)
        if sid in out:
            raise FormatError(f"{path}: duplicate sample id {sid}")
        out[sid] = np.frombuffer(data, "<f4", 3 * k, pos + 8).reshape(k, 3).astype(np.float64)
        pos += rec
    return out


def match_predictions(predictions: dict, dataset_ids) -> tuple[list[int], list[int]]:
    """Ids present in both, and dataset ids lacking a prediction."""
    ids = list(dataset_ids)
    common = [i for i in ids if i in predictions]
    missing = [i for i in ids if i not in predictions]
    if not common:
        raise InputError("predictions share no sample ids with the dataset")
    if missing:
        log.warning("%d dataset samples have no prediction; evaluating %d", len(missing), len(common))
    return common, missing


# --------------------------------------------------------------------------
# heatmap dumps

HEATMAP_MAGIC = b"LHH1"
_HM_HEADER = struct.Struct("<4sIIIIIIf")


def write_heatmap_dump(path, records, bins, sigma: float) -> None:
    """``records``: iterable of (sample_id, range ((lo, hi),)*3, HeatmapTriplet)."""
    records = list(records)
    k = records[0][2].num_joints if records else 0
    with open(path, "wb") as fh:
        fh.write(_HM_HEADER.pack(HEATMAP_MAGIC, 1, k, *bins, len(records), sigma))
        for sid, rng, hm in records:
            fh.write(struct.pack("<Q", sid))
            fh.write(np.asarray(rng, dtype="<f4").reshape(6).tobytes())
            for c in range(3):
                fh.write(np.asarray(hm.axis(c), dtype="<f4").tobytes())


def read_heatmap_dump(path):
    """Returns (bins, sigma, [(sample_id, range, (hx, hy, hz))])."""
    data = Path(path).read_bytes()
    if len(data) < _HM_HEADER.size:
        raise TruncatedError(f"{path}: header truncated")
    magic, version, k, nx, ny, nz, count, sigma = _HM_HEADER.unpack_from(data, 0)
    if magic != HEATMAP_MAGIC:
        raise MagicError(f"{path}: bad magic {magic!r}")
    if version != 1:
        raise VersionError(f"{path}: unsupported version {version}")
    bins = (nx, ny, nz)
    rec = 8 + 24 + 4 * k * (nx + ny + nz)
    if len(data) != _HM_HEADER.size + count * rec:
        raise TruncatedError(f"{path}: expected {count} records of {rec} bytes")
    out = []
    pos = _HM_HEADER.size
    for _ in range(count):
        (sid,) = struct.unpack_from("<Q", data, pos)
        rng = np.frombuffer(data, "<f4", 6, pos + 8).astype(np.float64).reshape(3, 2)
        p = pos + 32
        axes = []
        for n in bins:
            axes.append(np.frombuffer(data, "<f4", k * n, p).reshape(k, n).astype(np.float64))
            p += 4 * k * n
        out.append((sid, tuple(map(tuple, rng)), tuple(axes)))
        pos += rec
    return bins, sigma, out


# --------------------------------------------------------------------------
# PLY

def export_ply(sample: SyntheticSample, path) -> None:
    """ASCII PLY: points with their label, then joints with visibility."""
    lines = [
        "ply", "format ascii 1.0",
        f"element vertex {len(sample.points)}",
        "property float x", "property float y", "property float z", "property ushort label",
        f"element joint {sample.num_joints}",
        "property float x", "property float y", "property float z", "property uchar visible",
        "end_header",
    ]
    for p, lab in zip(sample.points.tolist(), sample.labels.tolist()):
        lines.append(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {lab}")
    for j, v in zip(sample.joints.tolist(), sample.visibility.tolist()):
        lines.append(f"{j[0]:.9g} {j[1]:.9g} {j[2]:.9g} {v}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path) -> dict[str, np.ndarray]:
    """Minimal ASCII PLY reader: element name -> (count, n_props) array."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "ply":
        raise FormatError(f"{path}: not a PLY file")
    elements, i = [], 1
    while lines[i] != "end_header":
        tok = lines[i].split()
        if tok[0] == "element":
            elements.append([tok[1], int(tok[2]), 0])
        elif tok[0] == "property":
            elements[-1][2] += 1
        i += 1
    i += 1
    out = {}
    for name, count, nprop in elements:
        rows = [list(map(float, lines[i + r].split())) for r in range(count)]
        out[name] = np.array(rows, dtype=np.float64).reshape(count, nprop)
        i += count
    return out
