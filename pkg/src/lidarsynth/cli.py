"""Command-line front end.

Exit codes: 0 ok, 2 bad input, 3 malformed data, 4 generation aborted.
Logs go to stderr; results are written to files named by ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .augment import ClusterConfig, JitterConfig
from .body_model import gen_toy_model, save_body_model
from .dataset_io import (Dataset, export_ply, read_heatmap_dump, read_predictions, write_heatmap_dump,
                         write_predictions)
from .errors import FormatError, GenerationAborted, InputError
from .metrics import END_JOINTS, WORST_N, SkeletonSpec
from .pipeline import (GenConfig, augment_dataset, dataset_stats, decode_heatmap_records, encode_dataset_heatmaps,
                       evaluate_dataset, gen_pose_db, save_pose_db, stability_sweep, synth, write_sweep_csv)
from .scene import SceneConfig

log = logging.getLogger("lidarsynth")

EXIT_OK, EXIT_INPUT, EXIT_FORMAT, EXIT_ABORT = 0, 2, 3, 4


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InputError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise FormatError(f"config file {path}: top level must be an object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _override(args, config: dict) -> None:
    """Config-file values win over command-line flags."""
    for key, value in config.items():
        if not hasattr(args, key):
            raise InputError(f"unknown config key {key!r} for '{args.command}'")
        setattr(args, key, value)


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


# --------------------------------------------------------------------------
# subcommands

def _gen_config(args) -> GenConfig:
    d = {
        "body_model": args.body_model, "pose_db": args.pose_db, "count": args.count, "seed": args.seed,
        "scene": asdict(SceneConfig(
            r_range=(args.r_min, args.r_max), ground_size=args.ground_size,
            ground_max_tilt=args.ground_max_tilt, ground_enabled=not args.no_ground,
            height_jitter=args.height_jitter)),
        "n_azimuth": args.n_azimuth, "n_elevation": args.n_elevation,
        "elev_min_deg": args.elev_min_deg, "elev_max_deg": args.elev_max_deg,
        "r_keep": args.r_keep, "min_points": args.min_points, "max_redraws": args.max_redraws,
        "window_margin": args.window_margin, "workers": args.workers,
    }
    cfg = _load_config(args.config)
    scene = cfg.pop("scene", {})
    unknown = set(cfg) - set(d)
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    d.update(cfg)
    d["scene"].update({k.replace("-", "_"): v for k, v in scene.items()})
    for key in ("body_model", "pose_db", "count"):
        if d[key] is None:
            raise InputError(f"--{key.replace('_', '-')} is required")
    for key in ("body_model", "pose_db"):
        if not Path(d[key]).is_file():
            raise InputError(f"{key} file {d[key]} not found")
    try:
        return GenConfig.from_dict(d)
    except TypeError as exc:
        raise InputError(str(exc)) from exc


def cmd_synth(args) -> int:
    cfg = _gen_config(args)
    summary = synth(cfg, args.out)
    log.info("manifest %s; mean survival %.3f; %.1f samples/s", summary.manifest, summary.mean_survival,
             summary.samples_per_second)
    return EXIT_OK


def cmd_augment(args) -> int:
    _override(args, _load_config(args.config))
    clip = math.inf if args.jitter_clip is None else args.jitter_clip
    manifest = augment_dataset(
        args.dataset, args.out, JitterConfig(args.jitter_sigma, clip),
        ClusterConfig(args.clusters, args.points_per_cluster, args.cluster_sigma), args.seed)
    log.info("wrote %s", manifest)
    return EXIT_OK


def _worst_block(result, n: int) -> dict:
    stats, ends = result.worst(n, END_JOINTS)
    names = SkeletonSpec().joint_names
    return {
        "n": len(stats.indices),
        "mpjpe_mm": round(stats.mpjpe, 6),
        "end_joints": {names[j]: {"mean_mm": round(m, 6), "var_mm2": round(v, 6)} for j, (m, v) in ends.items()},
    }


def cmd_eval(args) -> int:
    _override(args, _load_config(args.config))
    ds = Dataset(args.dataset)
    skeleton = SkeletonSpec(torso_pair=tuple(args.torso_pair))
    if args.sweep:
        values = None if args.sweep_values is None else [float(v) for v in args.sweep_values.split(",")]
        if values is not None and args.sweep == "clusters":
            values = [int(v) for v in values]
        rows = stability_sweep(ds, args.sweep, values, args.seed, args.jitter_sigma, args.clusters, skeleton)
        write_sweep_csv(rows, args.out)
        log.info("wrote %d sweep rows to %s", len(rows), args.out)
        return EXIT_OK
    preds = read_predictions(args.predictions) if args.predictions else None
    result = evaluate_dataset(ds, preds, skeleton)
    report = result.report.to_dict()
    report["predictor"] = "file" if preds is not None else "nearest_joint_baseline"
    report["missing_ids"] = result.missing
    report["skipped_ids"] = result.skipped
    report["worst"] = _worst_block(result, args.worst)
    _write_json(args.out, report)
    log.info("MPJPE %.2f mm, PCK-3 %.3f, PCK-5 %.3f over %d instances", result.report.mpjpe,
             result.report.pck3, result.report.pck5, result.report.n_instances)
    return EXIT_OK


def cmd_heatmap(args) -> int:
    _override(args, _load_config(args.config))
    if args.action == "encode":
        if args.dataset is None:
            raise InputError("heatmap encode needs --dataset")
        bins = tuple(args.bins) if len(args.bins) == 3 else (args.bins[0],) * 3
        recs = encode_dataset_heatmaps(Dataset(args.dataset), bins, args.sigma, args.side)
        write_heatmap_dump(args.out, recs, bins, args.sigma)
    else:
        if args.dump is None:
            raise InputError("heatmap decode needs --dump")
        bins, sigma, recs = read_heatmap_dump(args.dump)
        write_predictions(args.out, decode_heatmap_records(bins, sigma, recs, args.mode))
    log.info("wrote %s", args.out)
    return EXIT_OK


def cmd_inspect(args) -> int:
    _override(args, _load_config(args.config))
    ds = Dataset(args.dataset)
    stats = dataset_stats(ds)
    stats["config_hash"] = ds.config_hash.hex()
    if args.out:
        _write_json(args.out, stats)
    else:
        print(json.dumps(stats, indent=2))
    if args.ply is not None:
        if args.ply_out is None:
            raise InputError("--ply needs --ply-out")
        export_ply(ds.get(args.ply), args.ply_out)
        log.info("sample %d exported to %s", args.ply, args.ply_out)
    return EXIT_OK


def cmd_toy_model(args) -> int:
    _override(args, _load_config(args.config))
    save_body_model(gen_toy_model(args.seed), args.out)
    log.info("toy body model written to %s", args.out)
    if args.poses:
        if args.pose_out is None:
            raise InputError("--poses needs --pose-out")
        save_pose_db(args.pose_out, gen_pose_db(args.poses, args.seed))
        log.info("%d poses written to %s", args.poses, args.pose_out)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def _common(p, out_required=True, workers=False):
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", required=out_required, help="output path")
    p.add_argument("--config", help="JSON file whose values override flags")
    if workers:
        p.add_argument("--workers", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lidarsynth", description="Synthetic LiDAR human point clouds.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a dataset")
    _common(s, workers=True)
    s.add_argument("--body-model")
    s.add_argument("--pose-db")
    s.add_argument("--count", type=int)
    s.add_argument("--r-min", type=float, default=4.0)
    s.add_argument("--r-max", type=float, default=20.0)
    s.add_argument("--ground-size", type=float, default=4.0)
    s.add_argument("--ground-max-tilt", type=float, default=0.175)
    s.add_argument("--no-ground", action="store_true")
    s.add_argument("--height-jitter", type=float, default=0.0)
    s.add_argument("--n-azimuth", type=int, default=2650)
    s.add_argument("--n-elevation", type=int, default=64)
    s.add_argument("--elev-min-deg", type=float, default=-25.0)
    s.add_argument("--elev-max-deg", type=float, default=15.0)
    s.add_argument("--r-keep", type=float, default=0.6)
    s.add_argument("--min-points", type=int, default=24)
    s.add_argument("--max-redraws", type=int, default=8)
    s.add_argument("--window-margin", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    a = sub.add_parser("augment", help="write a jittered / cluster-noised copy of a dataset")
    _common(a)
    a.add_argument("--dataset", required=True)
    a.add_argument("--jitter-sigma", type=float, default=0.0)
    a.add_argument("--jitter-clip", type=float)
    a.add_argument("--clusters", type=int, default=0)
    a.add_argument("--points-per-cluster", type=int, default=50)
    a.add_argument("--cluster-sigma", type=float, default=0.1)
    a.set_defaults(func=cmd_augment)

    e = sub.add_parser("eval", help="score predictions or the nearest-joint baseline")
    _common(e)
    e.add_argument("--dataset", required=True)
    e.add_argument("--predictions", help="prediction file; omit to score the baseline")
    e.add_argument("--torso-pair", type=int, nargs=2, default=(0, 12))
    e.add_argument("--worst", type=int, default=WORST_N)
    e.add_argument("--sweep", choices=("jitter", "clusters"), help="write a robustness curve CSV instead")
    e.add_argument("--sweep-values", help="comma-separated clip thresholds or cluster sizes")
    e.add_argument("--jitter-sigma", type=float, default=0.05)
    e.add_argument("--clusters", type=int, default=3)
    e.set_defaults(func=cmd_eval)

    h = sub.add_parser("heatmap", help="encode GT joints to heatmaps or decode a dump")
    _common(h)
    h.add_argument("action", choices=("encode", "decode"))
    h.add_argument("--dataset")
    h.add_argument("--dump")
    h.add_argument("--bins", type=int, nargs="+", default=[128])
    h.add_argument("--sigma", type=float, default=2.0)
    h.add_argument("--side", type=float, default=3.0, help="cube side (m) around the point centroid")
    h.add_argument("--mode", choices=("argmax", "soft"), default="argmax")
    h.set_defaults(func=cmd_heatmap)

    i = sub.add_parser("inspect", help="dataset statistics and PLY export")
    _common(i, out_required=False)
    i.add_argument("--dataset", required=True)
    i.add_argument("--ply", type=int, metavar="SAMPLE_ID")
    i.add_argument("--ply-out")
    i.set_defaults(func=cmd_inspect)

    t = sub.add_parser("toy-model", help="write a synthetic body model and pose database")
    _common(t)
    t.add_argument("--poses", type=int, default=0, help="number of poses to generate")
    t.add_argument("--pose-out")
    t.set_defaults(func=cmd_toy_model)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GenerationAborted as exc:
        log.error("generation aborted: %s", exc)
        return EXIT_ABORT
    except FormatError as exc:
        log.error("data format error: %s", exc)
        return EXIT_FORMAT
    except (InputError, FileNotFoundError, IsADirectoryError) as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
