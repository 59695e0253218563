"""Command line: ``posetrack {train,track,eval,render,bench,synth}``.

Exit status is 0 on success, 1 for data errors and 2 for usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .bench import machine_info, run_bench
from .dataio import (
    Config,
    load_annotations,
    load_clip,
    load_config,
    load_predictions,
    read_frame,
    read_manifest,
    render_overlay,
    save_predictions,
)
from .errors import AnnotationMismatch, LengthMismatch, PoseTrackError
from .evaluation import DEFAULT_THRESHOLDS, localization_accuracy, pcp, report_render
from .models import load_model, save_model, train
from .synth import MotionScript, elbow_swing_script, synth_generate
from .tracker import TrackerConfig, track_video

log = logging.getLogger("posetrack")


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _int_list(text: str) -> list[int]:
    vals = _float_list(text)
    if any(v != int(v) or v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return [int(v) for v in vals]


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    topo = cfg.topology
    clips = []
    for path in args.clips:
        man = read_manifest(path)
        if args.split != "any" and man.split != args.split:
            log.info("skipping %s (split %s)", man.clip, man.split)
            continue
        if man.annotations is None:
            raise AnnotationMismatch(f"clip {man.clip!r} has no annotations to train on")
        ann = load_annotations(man.annotations)
        ann.check(topo, man.annotations)
        clips.append(ann.positions)
    if not clips:
        raise AnnotationMismatch(f"no clips with split {args.split!r} among the inputs")
    k = args.clusters or cfg.k
    eps = cfg.epsilon if args.epsilon is None else args.epsilon
    model = train(
        clips, topo, k=k, eps=eps, seed=cfg.seed,
        geometry=cfg.geometry, lambda1=cfg.lambda1, lambda2=cfg.lambda2, window_radius=cfg.window_radius,
    )
    save_model(model, args.out)
    sizes = ", ".join(f"{topo.parts[i]}={len(c)}" for i, c in enumerate(model.spatial) if c is not None)
    print(f"trained on {len(clips)} clip(s); clusters per part: {sizes}")
    print(f"model written to {args.out}")
    return 0


def cmd_track(args) -> int:
    model = load_model(args.model)
    man = read_manifest(args.clip)
    frames, ann = load_clip(man, model.topology)
    if args.first_pose:
        first = load_annotations(args.first_pose)
        first.check(model.topology, args.first_pose)
        first_pose = first.positions[0]
    elif ann is not None:
        first_pose = ann.positions[0]
    else:
        raise AnnotationMismatch(f"clip {man.clip!r}: no first-frame annotation; pass --first-pose")
    config = TrackerConfig.from_model(
        model,
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        window_radius=args.window_radius,
        reinit_interval=args.reinit_interval,
    )
    gt = ann.positions if ann is not None else None
    poses = track_video(frames, first_pose, model, config, ground_truth=gt)
    save_predictions(args.out, man.clip, model.topology.parts, poses)
    print(f"tracked {len(poses)} frames of {man.clip!r} -> {args.out}")
    return 0


def _truth(path):
    path = Path(path)
    if path.is_dir() or path.name == "clip.json":
        man = read_manifest(path)
        if man.annotations is None:
            raise AnnotationMismatch(f"clip {man.clip!r} has no annotations")
        return load_annotations(man.annotations)
    return load_annotations(path)


def cmd_eval(args) -> int:
    if len(args.pred) != len(args.truth):
        raise LengthMismatch(f"{len(args.pred)} prediction files but {len(args.truth)} ground-truth files")
    cfg = load_config(args.config) if args.config else None
    preds, gts, parts = [], [], None
    for p_path, t_path in zip(args.pred, args.truth):
        _, pred = load_predictions(p_path)
        gt = _truth(t_path)
        if pred.parts != gt.parts:
            raise AnnotationMismatch(f"{p_path}: parts differ from {t_path}")
        if len(pred) != len(gt):
            if len(pred) > len(gt):
                raise LengthMismatch(f"{p_path}: {len(pred)} poses but {len(gt)} annotated frames")
            gt = type(gt)(gt.parts, gt.positions[: len(pred)])
        if parts is not None and parts != pred.parts:
            raise AnnotationMismatch(f"{p_path}: parts differ from the first clip")
        parts = pred.parts
        preds.append(pred.positions)
        gts.append(gt.positions)
    pred_all, gt_all = np.concatenate(preds), np.concatenate(gts)

    thresholds = args.thresholds or (cfg.thresholds if cfg else list(DEFAULT_THRESHOLDS))
    eval_parts = parts
    if cfg and cfg.eval_parts:
        missing = [p for p in cfg.eval_parts if p not in parts]
        if missing:
            raise AnnotationMismatch("eval parts not in predictions: " + ", ".join(missing))
        eval_parts = list(cfg.eval_parts)
    sel = [parts.index(p) for p in eval_parts]
    acc = localization_accuracy(pred_all[:, sel], gt_all[:, sel], thresholds, eval_parts)

    out = Path(args.out_dir) if args.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    text, csv_text, js = report_render(acc)
    print("Keypoint localisation accuracy (%)")
    print(text)
    if out:
        (out / "accuracy.csv").write_text(csv_text)
        (out / "accuracy.json").write_text(js)
        plotting.accuracy_figure(acc, out / "accuracy.png")

    limbs = cfg.limbs if cfg else []
    if limbs:
        ratio = args.pcp_ratio if args.pcp_ratio is not None else cfg.pcp_ratio
        rep = pcp(pred_all, gt_all, limbs, ratio=ratio, parts=parts)
        text, csv_text, js = report_render(rep)
        print()
        print(f"Percentage of correct parts (ratio {ratio:g})")
        print(text)
        if out:
            (out / "pcp.csv").write_text(csv_text)
            (out / "pcp.json").write_text(js)
            plotting.pcp_figure(rep, out / "pcp.png")
    if out:
        print(f"\nreports written to {out}")
    return 0


def cmd_render(args) -> int:
    if args.model:
        topo = load_model(args.model).topology
    else:
        topo = load_config(args.config).topology
    man = read_manifest(args.clip)
    _, pred = load_predictions(args.pred)
    pred.check(topo, args.pred)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = min(len(pred), len(man.frames))
    for t in range(n):
        frame = read_frame(man.frame_paths[t])
        render_overlay(frame, pred.positions[t], topo, path=out / f"overlay_{t:04d}.png")
    print(f"wrote {n} overlays to {out}")
    return 0


def cmd_bench(args) -> int:
    info = machine_info()
    log.info("machine: %s", info)
    rows = run_bench(args.width, args.height, args.radii, args.rings, args.stride, args.runs, args.seed)
    print(f"descriptor extraction, {args.width}x{args.height} image, m = {args.rings}, median of {args.runs} runs")
    print(f"{'radius':>6} {'cands':>6} {'integral s':>11} {'lookups s':>10} {'per-pixel s':>12} {'speedup':>8}")
    for r in rows:
        print(f"{r.window_radius:6d} {r.candidates:6d} {r.integral_s:11.5f} {r.extract_s:10.5f} {r.naive_s:12.5f} {r.speedup:8.2f}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "bench.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].as_dict()), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow(r.as_dict())
        (out / "bench.json").write_text(json.dumps({"machine": info, "rows": [r.as_dict() for r in rows]}, indent=1))
        plotting.bench_figure(rows, out / "bench.png")
        print(f"results written to {out}")
    return 0


def cmd_synth(args) -> int:
    if args.script:
        script = MotionScript.load(args.script)
    else:
        script = elbow_swing_script(
            frames=args.frames,
            amplitude_deg=args.elbow_amplitude,
            translation=(args.dx, args.dy),
            seed=args.seed,
            clip=args.clip or Path(args.out).name,
            split=args.split,
        )
    man = synth_generate(script, args.out)
    print(f"wrote {len(man.frames)} frames to {man.frames_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="posetrack", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="fit displacement models from annotated clips")
    s.add_argument("clips", nargs="+", help="clip manifests (or directories holding clip.json)")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--split", default="train", help="use clips with this split tag ('any' for all)")
    s.add_argument("--clusters", type=_positive_int)
    s.add_argument("--epsilon", type=_nonneg_float)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("track", help="track a clip from its first-frame pose")
    s.add_argument("--model", required=True)
    s.add_argument("--clip", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--first-pose", help="annotation file whose first frame starts the track")
    s.add_argument("--window-radius", type=_positive_int)
    s.add_argument("--lambda1", type=_nonneg_float)
    s.add_argument("--lambda2", type=_nonneg_float)
    s.add_argument("--reinit-interval", type=_positive_int)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("eval", help="accuracy and PCP of predictions against ground truth")
    s.add_argument("--pred", nargs="+", required=True)
    s.add_argument("--truth", nargs="+", required=True, help="annotation files or clip manifests, same order as --pred")
    s.add_argument("--config", help="config with [eval] limbs / parts")
    s.add_argument("--thresholds", type=_float_list, help="comma-separated, default 5,10,...,40")
    s.add_argument("--pcp-ratio", type=_nonneg_float)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("render", help="draw predicted poses over the frames")
    s.add_argument("--clip", required=True)
    s.add_argument("--pred", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--model")
    g.add_argument("--config")
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("bench", help="time descriptor extraction")
    s.add_argument("--width", type=_positive_int, default=240)
    s.add_argument("--height", type=_positive_int, default=240)
    s.add_argument("--radii", type=_int_list, default=[5, 10, 15, 20])
    s.add_argument("--rings", type=_positive_int, default=10)
    s.add_argument("--stride", type=_positive_int, default=2)
    s.add_argument("--runs", type=_positive_int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("synth", help="generate a synthetic annotated clip")
    s.add_argument("--out", required=True)
    s.add_argument("--script", help="motion script JSON; overrides the options below")
    s.add_argument("--frames", type=_positive_int, default=30)
    s.add_argument("--dx", type=float, default=2.0)
    s.add_argument("--dy", type=float, default=0.0)
    s.add_argument("--elbow-amplitude", type=float, default=10.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--clip")
    s.add_argument("--split", default="train")
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (PoseTrackError, FileNotFoundError) as exc:
        print(f"posetrack {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
