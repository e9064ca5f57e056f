"""End-to-end orchestration: pose database -> posed body -> scene -> ray
cast -> laser mask -> sample records, plus augmentation, heatmap and
evaluation passes over generated datasets.

Randomness is drawn from per-sample counter-based streams, so outputs are
identical for any worker count.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .augment import BACKGROUND, CLUSTER_SIZES, JITTER_CLIPS, ClusterConfig, JitterConfig, jitter, noise_cluster_points
from .body_model import NUM_BETAS, NUM_JOINTS, NUM_POSE, BodyModel, forward, load_body_model
from .dataset_io import (Dataset, DatasetWriter, SampleMeta, SyntheticSample, config_digest, encode_sample,
                         file_digest, match_predictions)
from .errors import FormatError, GenerationAborted, InputError
from .heatmap import HeatmapSpec, HeatmapTriplet, decode, default_range, encode
from .lidar import HitCloud, LaserGrid, effective_window, raycast
from .masking import apply_mask, plan_mask
from .metrics import END_JOINTS, WORST_N, MetricsReport, SkeletonSpec, aggregate, evaluate_instance, worst_instances
from .scene import SceneConfig, place_scene

log = logging.getLogger(__name__)

POSE_ROW = NUM_BETAS + NUM_POSE
MAX_DISCARD_FRACTION = 0.5


# --------------------------------------------------------------------------
# pose database

def load_pose_db(path) -> np.ndarray:
    """(M, 82) rows of shape (10) then pose (72); CSV or raw little-endian f32."""
    path = Path(path)
    try:
        if path.suffix.lower() == ".csv":
            rows = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
        else:
            raw = path.read_bytes()
            if len(raw) % (4 * POSE_ROW):
                raise FormatError(f"{path}: size {len(raw)} is not a multiple of {4 * POSE_ROW}")
            rows = np.frombuffer(raw, "<f4").reshape(-1, POSE_ROW).astype(np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if rows.ndim != 2 or rows.shape[1] != POSE_ROW:
        raise FormatError(f"{path}: rows must have {POSE_ROW} columns, got {rows.shape}")
    if len(rows) == 0:
        raise InputError(f"{path}: pose database is empty")
    if not np.all(np.isfinite(rows)):
        raise FormatError(f"{path}: non-finite parameters")
    return rows


def save_pose_db(path, rows: np.ndarray) -> None:
    rows = np.asarray(rows)
    if Path(path).suffix.lower() == ".csv":
        np.savetxt(path, rows, delimiter=",", fmt="%.9g")
    else:
        Path(path).write_bytes(rows.astype("<f4").tobytes())


def gen_pose_db(n: int, seed: int = 0) -> np.ndarray:
    """Random toy poses: free yaw about +Z, moderate joint rotations."""
    rng = np.random.default_rng(seed)
    beta = np.clip(rng.normal(0.0, 0.7, size=(n, NUM_BETAS)), -2.0, 2.0)
    theta = rng.normal(0.0, 0.2, size=(n, NUM_JOINTS, 3))
    theta[:, 0] = 0.0
    theta[:, 0, 2] = rng.uniform(-np.pi, np.pi, size=n)
    return np.concatenate([beta, theta.reshape(n, -1)], axis=1).astype(np.float32).astype(np.float64)


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class GenConfig:
    body_model: str
    pose_db: str
    count: int
    seed: int = 0
    scene: SceneConfig = SceneConfig()
    n_azimuth: int = 2650
    n_elevation: int = 64
    elev_min_deg: float = -25.0
    elev_max_deg: float = 15.0
    r_keep: float = 0.6
    min_points: int = 24
    max_redraws: int = 8
    window_margin: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise InputError("count must be >= 1")
        if not 0.0 < self.r_keep <= 1.0:
            raise InputError("r_keep must lie in (0, 1]")
        if self.seed < 0 or self.workers < 1 or self.min_points < 0 or self.max_redraws < 0:
            raise InputError("seed, workers, min_points and max_redraws must be non-negative (workers >= 1)")

    @property
    def grid(self) -> LaserGrid:
        return LaserGrid(self.n_azimuth, self.n_elevation, math.radians(self.elev_min_deg),
                         math.radians(self.elev_max_deg))

    def manifest_config(self) -> dict:
        """Everything that determines output bytes (worker count excluded)."""
        d = asdict(self)
        d.pop("workers")
        d["scene"]["r_range"] = list(d["scene"]["r_range"])
        d["body_model_digest"] = file_digest(self.body_model)
        d["pose_db_digest"] = file_digest(self.pose_db)
        return d

    @staticmethod
    def hash_view(config: dict) -> dict:
        # paths are locations, not content; digests stand in for them
        return {k: v for k, v in config.items() if k not in ("body_model", "pose_db")}

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        d = dict(d)
        scene = d.pop("scene", {})
        d.pop("body_model_digest", None)
        d.pop("pose_db_digest", None)
        if isinstance(scene, dict):
            scene = dict(scene)
            if "r_range" in scene:
                scene["r_range"] = tuple(scene["r_range"])
            scene = SceneConfig(**scene)
        return cls(scene=scene, **d)


# --------------------------------------------------------------------------
# per-sample synthesis

@dataclass
class SampleResult:
    sample_id: int
    sample: SyntheticSample | None
    attempts: int
    n_rays: int = 0
    n_hits: int = 0
    n_patches: int = 0
    n_masked: int = 0
    hits: HitCloud | None = None
    survivors: HitCloud | None = None
    scene: object = None

    @property
    def survival(self) -> float:
        return len(self.sample.points) / self.n_hits if self.sample is not None and self.n_hits else float("nan")


class Synthesizer:
    """Holds the loaded inputs for one generation run."""

    def __init__(self, cfg: GenConfig, model: BodyModel | None = None, poses: np.ndarray | None = None):
        self.cfg = cfg
        self.model = model if model is not None else load_body_model(cfg.body_model)
        self.poses = poses if poses is not None else load_pose_db(cfg.pose_db)
        self.grid = cfg.grid
        self.grid.directions  # warm the direction table
        self.config = cfg.manifest_config()
        self.config_hash = config_digest(GenConfig.hash_view(self.config))

    def pose(self, sample_id: int) -> tuple[int, np.ndarray, np.ndarray]:
        r = rngmod.stream(self.cfg.seed, sample_id, "pose")
        pid = int(r.integers(len(self.poses)))
        row = self.poses[pid]
        return pid, row[:NUM_BETAS], row[NUM_BETAS:]

    def sample(self, sample_id: int, keep: bool = False, beta=None, theta=None,
               r: float | None = None, azimuth: float | None = None) -> SampleResult:
        """Synthesize one sample; ``keep`` retains intermediate clouds."""
        cfg = self.cfg
        pid, b, t = self.pose(sample_id)
        body = forward(self.model, b if beta is None else beta, t if theta is None else theta)
        for attempt in range(cfg.max_redraws + 1):
            scene = place_scene(body, cfg.scene, rngmod.stream(cfg.seed, sample_id, "scene", attempt), r, azimuth)
            window = effective_window(self.grid, scene, cfg.window_margin)
            if window.num_rays == 0:
                continue
            hits = raycast(scene, window, self.grid)
            plan = plan_mask(window, cfg.r_keep, rngmod.stream(cfg.seed, sample_id, "mask", attempt))
            kept = apply_mask(hits, plan)
            if np.count_nonzero(kept.labels < NUM_JOINTS) >= cfg.min_points:
                break
        else:
            return SampleResult(sample_id, None, cfg.max_redraws + 1)

        vis = np.bincount(kept.labels, minlength=NUM_JOINTS + 1)[:NUM_JOINTS] > 0
        meta = SampleMeta(
            seed=rngmod.sample_seed(cfg.seed, sample_id),
            r=float(np.float32(scene.placement.r)),
            azimuth=float(np.float32(scene.placement.azimuth)),
            pose_id=pid,
            mask_patch_count=plan.num_masked,
            config_hash=self.config_hash,
        )
        sample = SyntheticSample(kept.points, kept.labels, body.joints + scene.placement.translation, vis, meta)
        res = SampleResult(sample_id, sample, attempt + 1, window.num_rays, len(hits), plan.total_patches,
                           plan.num_masked)
        if keep:
            res.hits, res.survivors, res.scene = hits, kept, scene
        return res


_WORKER: Synthesizer | None = None


def _init_worker(cfg: GenConfig) -> None:
    global _WORKER
    _WORKER = Synthesizer(cfg)


def _run_chunk(ids):
    out = []
    for k in ids:
        res = _WORKER.sample(k)
        out.append((k, None if res.sample is None else encode_sample(res.sample), res.n_hits,
                    0 if res.sample is None else len(res.sample.points)))
    return out


def _chunks(n: int, size: int):
    for s in range(0, n, size):
        yield list(range(s, min(n, s + size)))


@dataclass
class SynthSummary:
    written: int
    discarded: list[int]
    seconds: float
    manifest: Path
    mean_survival: float

    @property
    def samples_per_second(self) -> float:
        return self.written / self.seconds if self.seconds > 0 else float("inf")


def synth(cfg: GenConfig, out_dir, chunk: int = 32) -> SynthSummary:
    """Generate ``cfg.count`` samples into ``out_dir``.

    Raises GenerationAborted once more than half the requested samples have
    been discarded.
    """
    tic = time.perf_counter()
    main = Synthesizer(cfg)
    writer = DatasetWriter(out_dir, main.config, cfg.seed, config_hash=main.config_hash)
    discarded: list[int] = []
    survival = []

    def consume(results):
        for k, data, n_hits, n_kept in results:
            if data is None:
                discarded.append(k)
                log.warning("sample %d discarded after %d placements", k, cfg.max_redraws + 1)
                if len(discarded) > MAX_DISCARD_FRACTION * cfg.count:
                    raise GenerationAborted(
                        f"{len(discarded)} of {cfg.count} samples discarded (min_points={cfg.min_points})")
                continue
            writer.add(k, data)
            survival.append(n_kept / n_hits)

    try:
        if cfg.workers == 1:
            global _WORKER
            _WORKER = main
            for ids in _chunks(cfg.count, chunk):
                consume(_run_chunk(ids))
        else:
            with ProcessPoolExecutor(cfg.workers, initializer=_init_worker, initargs=(cfg,)) as pool:
                for results in pool.map(_run_chunk, _chunks(cfg.count, chunk)):
                    consume(results)
    finally:
        writer.extra = {"discarded": discarded}
        manifest = writer.close()
    seconds = time.perf_counter() - tic
    mean = float(np.mean(survival)) if survival else float("nan")
    log.info("wrote %d samples in %.2fs (%.1f/s), %d discarded", len(writer.records), seconds,
             len(writer.records) / seconds, len(discarded))
    return SynthSummary(len(writer.records), discarded, seconds, manifest, mean)


# --------------------------------------------------------------------------
# baseline predictor and evaluation

def nearest_joint_predictor(sample: SyntheticSample) -> np.ndarray:
    """Each joint takes the position of its nearest same-labeled point;
    joints without points fall back to the cloud centroid."""
    pts = sample.points.astype(np.float64)
    gt = sample.joints.astype(np.float64)
    centroid = pts.mean(axis=0) if len(pts) else np.zeros(3)
    pred = np.tile(centroid, (sample.num_joints, 1))
    for j in range(sample.num_joints):
        mine = pts[sample.labels == j]
        if len(mine):
            pred[j] = mine[np.argmin(((mine - gt[j]) ** 2).sum(axis=1))]
    return pred


@dataclass
class EvalResult:
    report: MetricsReport
    instances: list[int]
    per_instance: list[MetricsReport]
    missing: list[int]
    skipped: list[int]

    def worst(self, n: int = WORST_N, joints=END_JOINTS):
        errs = np.stack([r.per_joint_error for r in self.per_instance])
        key = np.array([r.mpjpe for r in self.per_instance])
        stats = worst_instances(errs, key, n)
        return stats, {j: (float(stats.mean[j]), float(stats.var[j])) for j in joints}


def evaluate_dataset(dataset: Dataset, predictions: dict | None = None,
                     skeleton: SkeletonSpec = SkeletonSpec(), transform=None) -> EvalResult:
    """Score predictions (or the nearest-joint baseline when None) against GT.

    ``transform(sample_id, sample) -> sample`` perturbs inputs before the
    baseline predictor runs; ground truth is never perturbed.
    """
    if predictions is None:
        ids, missing = dataset.ids, []
    else:
        ids, missing = match_predictions(predictions, dataset.ids)
    reports, used, skipped = [], [], []
    for sid in ids:
        sample = dataset.get(sid)
        if not sample.visibility.any():
            skipped.append(sid)
            continue
        if predictions is None:
            inp = transform(sid, sample) if transform else sample
            pred = nearest_joint_predictor(inp)
        else:
            pred = predictions[sid]
        reports.append(evaluate_instance(pred, sample.joints.astype(np.float64), sample.visibility, skeleton))
        used.append(sid)
    if not reports:
        raise InputError("no evaluable instances (every sample has zero visible joints)")
    if skipped:
        log.warning("skipped %d samples with no visible joints", len(skipped))
    return EvalResult(aggregate(reports), used, reports, missing, skipped)


def _perturb(kind: str, value, seed: int, sigma: float, n_clusters: int):
    def fn(sid, sample):
        if kind == "jitter":
            pts = jitter(sample.points.astype(np.float64), JitterConfig(sigma, value),
                         rngmod.stream(seed, sid, "jitter"))
            return SyntheticSample(pts, sample.labels, sample.joints, sample.visibility, sample.meta)
        extra = noise_cluster_points(sample.points.astype(np.float64), ClusterConfig(n_clusters, int(value)),
                                     rngmod.stream(seed, sid, "clusters"))
        return SyntheticSample(np.concatenate([sample.points, extra]),
                               np.concatenate([sample.labels, np.full(len(extra), BACKGROUND)]),
                               sample.joints, sample.visibility, sample.meta)
    return fn


def stability_sweep(dataset: Dataset, kind: str, values=None, seed: int = 0, sigma: float = 0.05,
                    n_clusters: int = 3, skeleton: SkeletonSpec = SkeletonSpec()) -> list[dict]:
    """Baseline metrics for each perturbation strength.

    Every strength reuses the same per-sample streams, so curves differ only
    through the swept parameter.
    """
    if kind not in ("jitter", "clusters"):
        raise InputError(f"unknown sweep kind {kind!r}")
    values = list(values if values is not None else (JITTER_CLIPS if kind == "jitter" else CLUSTER_SIZES))
    rows = []
    for v in values:
        rep = evaluate_dataset(dataset, None, skeleton, _perturb(kind, v, seed, sigma, n_clusters)).report
        rows.append({"kind": kind, "value": v, "mpjpe_mm": rep.mpjpe,
                     "pa_mpjpe_mm": rep.pa_mpjpe, "pck3": rep.pck3, "pck5": rep.pck5})
    return rows


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["kind", "value", "mpjpe_mm", "pa_mpjpe_mm", "pck3", "pck5"])
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else (f"{v:.6f}" if isinstance(v, float) else v)) for k, v in r.items()})


# --------------------------------------------------------------------------
# augmentation of stored datasets

def augment_dataset(src, out_dir, jitter_cfg: JitterConfig = JitterConfig(0.0),
                    cluster_cfg: ClusterConfig = ClusterConfig(0), seed: int = 0) -> Path:
    """Write a perturbed copy of a dataset; records keep the source config hash."""
    ds = Dataset(src)
    provenance = {
        "provenance": {
            "source": str(Path(src)),
            "source_config_hash": ds.config_hash.hex(),
            "augment_seed": seed,
            "jitter": {"sigma": jitter_cfg.sigma, "clip": None if math.isinf(jitter_cfg.clip) else jitter_cfg.clip},
            "clusters": asdict(cluster_cfg),
        }
    }
    writer = DatasetWriter(out_dir, ds.config, ds.manifest["master_seed"], provenance, config_hash=ds.config_hash)
    for sid, s in ds:
        pts, labels = s.points, s.labels
        if jitter_cfg.sigma > 0:
            pts = jitter(pts.astype(np.float64), jitter_cfg, rngmod.stream(seed, sid, "jitter"))
        if cluster_cfg.n_clusters and cluster_cfg.points_per_cluster:
            extra = noise_cluster_points(pts.astype(np.float64), cluster_cfg, rngmod.stream(seed, sid, "clusters"))
            pts = np.concatenate([np.asarray(pts, np.float32), extra.astype(np.float32)])
            labels = np.concatenate([labels, np.full(len(extra), BACKGROUND, np.uint16)])
        writer.add(sid, SyntheticSample(pts, labels, s.joints, s.visibility, s.meta))
    return writer.close()


# --------------------------------------------------------------------------
# heatmaps over datasets

def encode_dataset_heatmaps(dataset: Dataset, bins=(128, 128, 128), sigma: float = 2.0,
                            side: float = 3.0, fixed_range=None):
    """Yield (sample_id, range, HeatmapTriplet) for every sample's GT joints."""
    for sid, s in dataset:
        rng = fixed_range if fixed_range is not None else default_range(s.points if len(s.points) else s.joints, side)
        spec = HeatmapSpec(rng, bins, sigma)
        yield sid, spec.range, encode(s.joints.astype(np.float64), spec)


def decode_heatmap_records(bins, sigma, records, mode: str = "argmax") -> dict[int, np.ndarray]:
    out = {}
    for sid, rng, axes in records:
        out[sid] = decode(HeatmapTriplet(*axes), HeatmapSpec(rng, bins, sigma), mode)
    return out


# --------------------------------------------------------------------------
# inspection

def dataset_stats(dataset: Dataset) -> dict:
    counts, body, vis, rs = [], [], [], []
    hist = np.zeros(NUM_JOINTS + 1, dtype=np.int64)
    for _, s in dataset:
        counts.append(len(s.points))
        body.append(int(np.count_nonzero(s.labels < s.num_joints)))
        vis.append(float(s.visibility.mean()))
        rs.append(s.meta.r)
        hist += np.bincount(s.labels, minlength=NUM_JOINTS + 1)[:NUM_JOINTS + 1]
    if not counts:
        return {"samples": 0}
    return {
        "samples": len(counts),
        "points_mean": float(np.mean(counts)),
        "points_min": int(np.min(counts)),
        "points_max": int(np.max(counts)),
        "body_points_mean": float(np.mean(body)),
        "visible_joint_fraction": float(np.mean(vis)),
        "range_min_m": float(np.min(rs)),
        "range_max_m": float(np.max(rs)),
        "label_histogram": hist.tolist(),
    }
