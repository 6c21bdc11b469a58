"""Command-line entry point: ``texttrack <command> ...``.

Exit codes: 0 success, 1 missing input or I/O failure, 2 usage or scenario
error, 3 validation error (malformed files, bad config, inconsistent ids).
"""
from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as tio
from .assoc import AssocModel, TrainingBatch, identity_accuracy, load_checkpoint, save_checkpoint, train_toy
from .errors import SpecError, TextTrackError
from .geom import GAUSSIAN_VARIANTS, RotatedBox, box_to_gaussian, positional_score, wasserstein_distance
from .metrics import compute_report
from .synth import PRESETS, crowd, generate, preset, separable_scenario
from .tracker import POSITIONAL_MODES, Tracker

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_VALIDATION = 0, 1, 2, 3


def _scenario(args):
    if args.scenario:
        scen = tio.read_scenario(args.scenario)
        return scen if args.seed is None else replace(scen, seed=args.seed)
    if args.preset == "separable":
        return separable_scenario(seed=args.seed or 0)
    return preset(args.preset, seed=args.seed or 0)


def cmd_simulate(args) -> int:
    scen = _scenario(args)
    if args.frames is not None:
        scen = replace(scen, num_frames=args.frames)
    clip = generate(scen, video_id=args.video_id)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tio.write_clip(clip, out / "detections.jsonl", out / "gt.jsonl")
    n_det = sum(len(f.detections) for f in clip.frames)
    print(f"scenario={scen.name} seed={scen.seed} frames={len(clip.frames)} detections={n_det} "
          f"gt_tracks={len({g.track_id for objs in clip.gt.values() for g in objs})} out={out}")
    return EXIT_OK


def _track_video(config, model, frames):
    tracker = Tracker(config, model)
    for frame in frames:
        tracker.step(frame)
    return tracker


def cmd_track(args) -> int:
    config = tio.load_config(args.config, {
        "window": args.window, "alpha": args.alpha, "new_track_threshold": args.threshold,
        "positional": args.positional, "gaussian_variant": args.variant,
    })
    model = load_checkpoint(args.model) if args.model else None
    videos = tio.read_detections(args.detections)
    vids = sorted(videos)
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        trackers = list(pool.map(lambda v: _track_video(config, model, videos[v]), vids))
    tio.write_tracks(args.out, {v: t.result() for v, t in zip(vids, trackers)})
    frames = sum(len(videos[v]) for v in vids)
    dets = sum(len(f.detections) for v in vids for f in videos[v])
    tracks = sum(len(t.records) for t in trackers)
    ms = [m for t in trackers for m in t.assoc_ms]
    mean_ms = sum(ms) / frames if frames else 0.0
    print(f"videos={len(vids)} frames={frames} detections={dets} tracks={tracks} "
          f"assoc_ms_per_frame={mean_ms:.3f} scorer={'model' if model else 'cosine-fallback'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    gt = tio.read_ground_truth(args.gt)
    preds = tio.read_tracks(args.tracks)
    report = compute_report(gt, preds, mode=args.mode, iou_threshold=args.iou,
                            max_edit_ratio=args.max_edit_ratio, transcription_only=args.transcription_only)
    print(f"mode={args.mode} {report.summary()}")
    if args.report:
        Path(args.report).write_text("".join(line + "\n" for line in report.to_kv()), encoding="utf-8")
    return EXIT_OK


def cmd_train_toy(args) -> int:
    scen = _scenario(args)
    clip = generate(scen)
    batch = TrainingBatch.from_clip(clip)
    model = AssocModel.init(batch.embeddings.shape[1], args.heads, args.ffn_mult, seed=args.model_seed)
    trained, trace = train_toy(model, batch, steps=args.steps, lr=args.lr, reduction=args.reduction)
    save_checkpoint(trained, args.out)
    if args.trace:
        Path(args.trace).write_text("".join(f"{i} {v!r}\n" for i, v in enumerate(trace)), encoding="utf-8")
    acc = identity_accuracy(trained, batch)
    print(f"steps={args.steps} initial_loss={trace[0]:.6g} final_loss={trace[-1]:.6g} "
          f"ratio={trace[-1] / trace[0] if trace[0] else float('nan'):.4f} accuracy={acc:.4f} out={args.out}")
    return EXIT_OK


def _parse_box(text: str) -> RotatedBox:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise SpecError(f"box {text!r} must be cx,cy,w,h,theta") from None
    if len(vals) != 5:
        raise SpecError(f"box {text!r} must have 5 comma-separated numbers")
    return RotatedBox(*vals)


def cmd_dist(args) -> int:
    b1, b2 = _parse_box(args.box1), _parse_box(args.box2)
    g1, g2 = box_to_gaussian(b1, args.variant), box_to_gaussian(b2, args.variant)
    for name, g in (("g1", g1), ("g2", g2)):
        s = g.sigma
        print(f"{name} mu=({g.mu[0]:.6g}, {g.mu[1]:.6g}) "
              f"sigma=[[{s[0, 0]:.6g}, {s[0, 1]:.6g}], [{s[1, 0]:.6g}, {s[1, 1]:.6g}]]")
    d = wasserstein_distance(g1, g2)
    score = positional_score(b1, b2, args.alpha, args.variant)
    print(f"d={d:.6g}")
    print(f"score={score:.6g} (unclamped; tracker clamps to {min(max(score, 0.0), 1.0):.6g})")
    return EXIT_OK


def cmd_bench(args) -> int:
    scen = crowd(args.texts, seed=args.seed, embedding_dim=args.dim, num_frames=args.frames + args.window)
    clip = generate(scen)
    model = None if args.fallback else AssocModel.init(args.dim, args.heads, 2, seed=args.seed)
    tracker = Tracker(tio.load_config(None, {"window": args.window}), model)
    t0 = time.perf_counter()
    for frame in clip.frames:
        tracker.step(frame)
    wall = time.perf_counter() - t0
    ms = np.asarray(tracker.assoc_ms[args.window:])  # skip the warm-up while the pool fills
    p50, p95 = np.percentile(ms, [50, 95])
    print(f"texts={args.texts} window={args.window} dim={args.dim} frames={ms.size} "
          f"scorer={'cosine-fallback' if model is None else 'model'}")
    print(f"assoc_ms_per_frame p50={p50:.3f} p95={p95:.3f} mean={ms.mean():.3f} "
          f"wall_ms_per_frame={1e3 * wall / len(clip.frames):.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="texttrack", description="Global video-text tracking toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="write a synthetic clip (detections + ground truth)")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", help=f"one of: {', '.join(PRESETS)}, separable")
    src.add_argument("--scenario", help="JSON scenario file")
    s.add_argument("--seed", type=int)
    s.add_argument("--frames", type=int, help="override the frame count")
    s.add_argument("--video-id")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("track", help="track a detection file")
    t.add_argument("detections")
    t.add_argument("--out", required=True, help="TrackFile to write")
    t.add_argument("--config", help=f"key=value config (default ${tio.CONFIG_ENV})")
    t.add_argument("--model", help="associator checkpoint; cosine fallback when absent")
    t.add_argument("--window", type=int)
    t.add_argument("--alpha", type=float)
    t.add_argument("--threshold", type=float, help="new-track threshold")
    t.add_argument("--positional", choices=POSITIONAL_MODES)
    t.add_argument("--variant", choices=GAUSSIAN_VARIANTS, help="box-to-Gaussian covariance variant")
    t.add_argument("--jobs", type=int, default=1, help="videos tracked in parallel")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="score a TrackFile against ground truth")
    e.add_argument("--gt", required=True)
    e.add_argument("--tracks", required=True)
    e.add_argument("--mode", choices=("tracking", "spotting"), default="tracking")
    e.add_argument("--iou", type=float, default=0.5)
    e.add_argument("--max-edit-ratio", type=float, default=0.0)
    e.add_argument("--transcription-only", action="store_true")
    e.add_argument("--report", help="key=value report file")
    e.set_defaults(func=cmd_eval)

    tr = sub.add_parser("train-toy", help="fit the associator on a synthetic clip")
    tsrc = tr.add_mutually_exclusive_group()
    tsrc.add_argument("--preset", default="separable")
    tsrc.add_argument("--scenario")
    tr.add_argument("--seed", type=int)
    tr.add_argument("--model-seed", type=int, default=0)
    tr.add_argument("--steps", type=int, default=200)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--heads", type=int, default=4)
    tr.add_argument("--ffn-mult", type=int, default=2)
    tr.add_argument("--reduction", choices=("sum", "mean"), default="sum")
    tr.add_argument("--out", required=True, help="checkpoint path")
    tr.add_argument("--trace", help="loss trace path")
    tr.set_defaults(func=cmd_train_toy)

    d = sub.add_parser("dist", help="Gaussian Wasserstein debug for two boxes cx,cy,w,h,theta")
    d.add_argument("box1")
    d.add_argument("box2")
    d.add_argument("--alpha", type=float, default=1.0)
    d.add_argument("--variant", choices=GAUSSIAN_VARIANTS, default="linear")
    d.set_defaults(func=cmd_dist)

    b = sub.add_parser("bench", help="association latency on a crowd clip")
    b.add_argument("--texts", type=int, default=20)
    b.add_argument("--window", type=int, default=8)
    b.add_argument("--dim", type=int, default=64)
    b.add_argument("--heads", type=int, default=4)
    b.add_argument("--frames", type=int, default=100, help="timed frames after warm-up")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--fallback", action="store_true", help="time the cosine scorer instead of a model")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TextTrackError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
