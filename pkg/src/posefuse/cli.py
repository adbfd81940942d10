"""Command-line entry point.

Subcommands: ``synth`` renders noisy dense maps from ground truth,
``aggregate`` runs detection + orientation fusion to poses, ``evaluate``
scores poses against ground truth, ``bench`` times the aggregation
strategies, and ``kernel`` serves the numeric kernels over stdin/stdout.

Exit codes: 0 success, 2 I/O or schema failure, 3 empty aggregation,
64 usage error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import io, kernel, metrics, synth
from .aggregate import (AggregationConfig, Strategy, WeightedQuatSet,
                        WeightSource, aggregate, select_weights)
from .errors import EmptyAggregationError, FormatError, SchemaError
from .hough import DEFAULT_INLIER_ANGLE, DEFAULT_MIN_PIXELS, detect_objects

EXIT_OK = 0
EXIT_IO = 2
EXIT_EMPTY_AGGREGATION = 3
EXIT_USAGE = 64

STRATEGY_NAMES = [s.value for s in Strategy]
WEIGHT_NAMES = [w.value for w in WeightSource]

DEFAULTS = {
    "strategy": Strategy.MARKLEY_AVERAGE.value,
    "weights": WeightSource.NORM.value,
    "lambda": 0.0,
    "threshold": 0.2,
    "iters": 50,
    "seed": 0,
    "tau_max": metrics.DEFAULT_TAU_MAX,
    "theta_in": DEFAULT_INLIER_ANGLE,
    "min_pixels": DEFAULT_MIN_PIXELS,
    "depth_agg": "mean",
    "pixels": "segm",
    "jobs": 1,
    "height": 480,
    "width": 640,
    "reps": 400,
    "noise": {
        "sigma_quat": 0.0,
        "sigma_dir": 0.0,
        "sigma_depth": 0.0,
        "outlier_fraction": 0.0,
        "label_noise": 0.0,
        "seed": 0,
    },
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_aggregation_flags(p):
    p.add_argument("--strategy", choices=STRATEGY_NAMES, default=DEFAULTS["strategy"])
    p.add_argument("--weights", choices=WEIGHT_NAMES, default=DEFAULTS["weights"])
    p.add_argument("--lambda", dest="prune_fraction", type=float, default=DEFAULTS["lambda"],
                   help="pruned fraction of least-confident predictions")
    p.add_argument("--threshold", type=float, default=DEFAULTS["threshold"],
                   help="RANSAC inlier angular distance [rad]")
    p.add_argument("--iters", type=int, default=DEFAULTS["iters"],
                   help="RANSAC hypothesis draws")
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"])


def _add_detection_flags(p):
    p.add_argument("--theta-in", type=float, default=DEFAULTS["theta_in"],
                   help="Hough inlier cone half-angle [rad]")
    p.add_argument("--min-pixels", type=int, default=DEFAULTS["min_pixels"])
    p.add_argument("--depth-agg", choices=["mean", "median"], default=DEFAULTS["depth_agg"])
    p.add_argument("--log-depth", action="store_true",
                   help="depth maps store log(z); exponentiate on load")


def build_parser():
    top = _Parser(prog="posefuse",
                  description="Dense 6D pose fusion and evaluation toolkit")
    top.add_argument("--print-defaults", action="store_true",
                     help="print all defaults as JSON and exit")
    sub = top.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="render synthetic dense maps")
    p.add_argument("--print-defaults", action="store_true")
    p.add_argument("--gt", help="ground-truth JSON")
    p.add_argument("--intrinsics", help="camera intrinsics JSON")
    p.add_argument("--models", help="object model directory")
    p.add_argument("--out", help="output scene directory")
    p.add_argument("--height", type=int, default=DEFAULTS["height"])
    p.add_argument("--width", type=int, default=DEFAULTS["width"])
    p.add_argument("--sigma-quat", type=float, default=0.0)
    p.add_argument("--sigma-dir", type=float, default=0.0)
    p.add_argument("--sigma-depth", type=float, default=0.0)
    p.add_argument("--outlier-fraction", type=float, default=0.0)
    p.add_argument("--label-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    p.set_defaults(func=cmd_synth, required=["gt", "intrinsics", "models", "out"])

    p = sub.add_parser("aggregate", help="detect objects and fuse orientations")
    p.add_argument("--print-defaults", action="store_true")
    p.add_argument("--scene", help="scene directory (dense.dpt + intrinsics.json)")
    p.add_argument("--scenes", help="parent directory of scene directories")
    p.add_argument("--out", help="output poses JSON")
    p.add_argument("--pixels", choices=["segm", "inliers"], default=DEFAULTS["pixels"],
                   help="candidate pixels: predicted segmentation or Hough inliers")
    p.add_argument("--jobs", type=int, default=DEFAULTS["jobs"])
    _add_aggregation_flags(p)
    _add_detection_flags(p)
    p.set_defaults(func=cmd_aggregate, required=["out"])

    p = sub.add_parser("evaluate", help="score poses against ground truth")
    p.add_argument("--print-defaults", action="store_true")
    p.add_argument("--poses", help="poses JSON from aggregate")
    p.add_argument("--gt", help="gt JSON, scene directory, or parent directory")
    p.add_argument("--models", help="object model directory")
    p.add_argument("--tau-max", type=float, default=DEFAULTS["tau_max"])
    p.add_argument("--report", help="output report JSON")
    p.add_argument("--csv", help="optional per-sample CSV")
    p.set_defaults(func=cmd_evaluate, required=["poses", "gt", "models", "report"])

    p = sub.add_parser("bench", help="time the aggregation strategies")
    p.add_argument("--print-defaults", action="store_true")
    p.add_argument("--scene", help="scene directory to draw quaternions from")
    p.add_argument("--n-quats", type=int,
                   help="benchmark a random set of this size instead of a scene")
    p.add_argument("--strategies", default=",".join(STRATEGY_NAMES),
                   help="comma-separated strategy list")
    p.add_argument("--reps", type=int, default=DEFAULTS["reps"])
    p.add_argument("--out", help="output CSV")
    p.add_argument("--log-depth", action="store_true")
    _add_aggregation_flags(p)
    p.set_defaults(func=cmd_bench, required=[])

    p = sub.add_parser("kernel", help="serve numeric kernels over stdin/stdout")
    p.add_argument("--serve", action="store_true",
                   help="line-delimited JSON loop instead of one-shot")
    p.set_defaults(func=lambda args: kernel.run(serve=args.serve), required=[])

    return top


def _agg_config(args):
    return AggregationConfig(
        strategy=Strategy(args.strategy),
        weight_source=WeightSource(args.weights),
        prune_fraction=args.prune_fraction,
        ransac_threshold=args.threshold,
        ransac_iterations=args.iters,
        seed=args.seed,
    )


def cmd_synth(args):
    gt = io.read_gt(args.gt)
    gt.intrinsics = io.read_intrinsics(args.intrinsics)
    models = io.read_models_dir(args.models)
    noise = synth.NoiseSpec(
        sigma_quat=args.sigma_quat, sigma_dir=args.sigma_dir,
        sigma_depth=args.sigma_depth, outlier_fraction=args.outlier_fraction,
        label_noise=args.label_noise, seed=args.seed)
    maps = synth.synth_scene(gt, models, noise, height=args.height, width=args.width)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_dense(out / "dense.dpt", maps)
    io.write_intrinsics(out / "intrinsics.json", gt.intrinsics)
    io.write_gt(out / "gt.json", gt)
    print(f"wrote scene {gt.frame_id} ({maps.height}x{maps.width}, "
          f"{int((maps.labels > 0).sum())} foreground px) to {out}")
    return EXIT_OK


def _aggregate_scene(scene_dir, args, cfg):
    scene_dir = Path(scene_dir)
    maps = io.read_dense(scene_dir / "dense.dpt", log_depth=args.log_depth)
    intr = io.read_intrinsics(scene_dir / "intrinsics.json")
    gt_path = scene_dir / "gt.json"
    frame_id = io.read_gt(gt_path).frame_id if gt_path.exists() else scene_dir.name
    detections = detect_objects(maps, intr, inlier_angle=args.theta_in,
                                min_pixels=args.min_pixels, depth_mode=args.depth_agg)
    objects = []
    for det in detections:
        mask = (maps.labels == det.class_id) if args.pixels == "segm" else det.inlier_mask
        qset = select_weights(maps, mask, cfg.weight_source, class_id=det.class_id)
        agg = aggregate(qset, cfg)
        objects.append({
            "class_id": det.class_id,
            "quaternion": [float(x) for x in agg.quaternion],
            "translation": [float(x) for x in det.translation],
            "support": agg.support,
            "used_count": agg.used_count,
            "ambiguous": agg.ambiguous,
            "strategy": cfg.strategy.value,
            "center": [float(det.center[0]), float(det.center[1])],
            "depth": det.depth,
            "bbox": list(det.bbox),
            "vote_score": det.vote_score,
        })
    return {"frame_id": frame_id, "objects": objects}


def cmd_aggregate(args):
    if bool(args.scene) == bool(args.scenes):
        _usage_error("exactly one of --scene/--scenes is required")
        return EXIT_USAGE
    cfg = _agg_config(args)
    if args.scene:
        doc = _aggregate_scene(args.scene, args, cfg)
    else:
        dirs = sorted(p for p in Path(args.scenes).iterdir() if p.is_dir())
        if not dirs:
            raise FileNotFoundError(f"no scene directories under {args.scenes}")
        with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
            frames = list(pool.map(lambda d: _aggregate_scene(d, args, cfg), dirs))
        frames.sort(key=lambda f: f["frame_id"])
        doc = {"frames": frames}
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    n = len(doc.get("frames", [doc]))
    print(f"aggregated {n} frame(s) with {cfg.strategy.value}/{cfg.weight_source.value} "
          f"-> {args.out}")
    return EXIT_OK


def _usage_error(message):
    print(f"posefuse: error: {message}", file=sys.stderr)
    return True


def _load_frames(path):
    """Accept either a single-frame document or {"frames": [...]}."""
    with open(path) as fh:
        doc = json.load(fh)
    if isinstance(doc, dict) and "frames" in doc:
        return doc["frames"]
    return [doc]


def _gather_gt(path):
    path = Path(path)
    if path.is_file():
        return [io.read_gt(path)]
    direct = path / "gt.json"
    if direct.exists():
        return [io.read_gt(direct)]
    gts = [io.read_gt(p) for p in sorted(path.glob("*/gt.json"))]
    if not gts:
        raise FileNotFoundError(f"no gt.json found under {path}")
    return gts


def cmd_evaluate(args):
    estimates = {}
    for frame in _load_frames(args.poses):
        if not isinstance(frame, dict) or "frame_id" not in frame:
            raise SchemaError("missing frame_id", path="poses")
        for i, obj in enumerate(frame.get("objects", [])):
            class_id, pose = io.parse_pose_object(obj, f"poses.objects[{i}]")
            estimates[(frame["frame_id"], class_id)] = pose
    ground_truths = {}
    for gt in _gather_gt(args.gt):
        for class_id, pose in gt.objects:
            ground_truths[(gt.frame_id, class_id)] = pose
    models = io.read_models_dir(args.models)
    report = metrics.evaluate(estimates, ground_truths, models, tau_max=args.tau_max)
    io.write_report(args.report, report)
    if args.csv:
        io.write_report_csv(args.csv, report)

    def fmt(x):
        return "n/a" if x is None else f"{x:.4f}"

    print(f"AUC P              {report.auc_p:.4f}")
    print(f"AUC S              {report.auc_s:.4f}")
    print(f"AUC P (rot only)   {report.auc_rot_p:.4f}")
    print(f"AUC S (rot only)   {report.auc_rot_s:.4f}")
    print(f"NonSymC            {fmt(report.nonsymc)}")
    print(f"SymC               {fmt(report.symc)}")
    print(f"translation error  {fmt(report.mean_translation_error)} m "
          f"({report.n_missed} missed)")
    return EXIT_OK


def _bench_set(args):
    if bool(args.scene) == (args.n_quats is not None):
        _usage_error("exactly one of --scene/--n-quats is required")
        raise SystemExit(EXIT_USAGE)
    if args.scene:
        maps = io.read_dense(Path(args.scene) / "dense.dpt", log_depth=args.log_depth)
        mask = maps.labels > 0
        source = WeightSource(args.weights)
        if source is WeightSource.SEGMENTATION_SCORE:
            # score of the per-pixel argmax class
            scores = np.take_along_axis(maps.scores, maps.labels[:, :, None], axis=2)[:, :, 0]
            return WeightedQuatSet(maps.quat[mask].astype(float),
                                   scores[mask].astype(float), source)
        return select_weights(maps, mask, source)
    rng = np.random.default_rng(args.seed)
    quats = rng.normal(size=(args.n_quats, 4)) * rng.uniform(0.2, 2.0, (args.n_quats, 1))
    return WeightedQuatSet(quats, np.linalg.norm(quats, axis=1))


def cmd_bench(args):
    qset = _bench_set(args)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for name in strategies:
        if name not in STRATEGY_NAMES:
            _usage_error(f"unknown strategy {name!r} "
                         f"(choose from {', '.join(STRATEGY_NAMES)})")
            raise SystemExit(EXIT_USAGE)
    rows = []
    for name in strategies:
        cfg = AggregationConfig(
            strategy=Strategy(name), weight_source=WeightSource(args.weights),
            prune_fraction=args.prune_fraction, ransac_threshold=args.threshold,
            ransac_iterations=args.iters, seed=args.seed)
        samples = []
        for _ in range(max(1, args.reps)):
            t0 = time.perf_counter()
            aggregate(qset, cfg)
            samples.append((time.perf_counter() - t0) * 1e3)
        rows.append((name, statistics.median(samples),
                     statistics.fmean(samples), len(qset)))
    lines = ["strategy,median_ms,mean_ms,n_quats"]
    for name, med, mean, n in rows:
        lines.append(f"{name},{med:.4f},{mean:.4f},{n}")
    table = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(table)
    sys.stdout.write(table)
    return EXIT_OK


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "print_defaults", False):
        json.dump(DEFAULTS, sys.stdout, indent=2)
        sys.stdout.write("\n")
        return EXIT_OK
    if not getattr(args, "command", None):
        parser.print_help()
        return EXIT_USAGE
    missing = [f"--{name}" for name in args.required if getattr(args, name) is None]
    if missing:
        _usage_error(f"missing required arguments: {', '.join(missing)}")
        return EXIT_USAGE
    try:
        return args.func(args)
    except EmptyAggregationError as exc:
        print(f"posefuse: empty aggregation: {exc}", file=sys.stderr)
        return EXIT_EMPTY_AGGREGATION
    except (FormatError, SchemaError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"posefuse: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
