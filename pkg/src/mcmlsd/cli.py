"""Command-line interface: ``mcmlsd {detect,eval,train,synth,curves}``.

Exit codes: 0 ok, 1 processing failure, 2 I/O or usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time

import numpy as np

from .config import Config, ConfigError, load_config
from .core import GrayImage, write_pgm
from .detector import detect_edge_map, load_confidence
from .edges import EdgeMap, EdgeMapError, detect_edges, load_edge_map
from .evaluation import (
    EvalFormatError,
    SegmentSet,
    compute_curves,
    mean_curves,
    pr_area,
    read_detections_csv,
    read_gt_json,
    segment_precisions,
    write_curves_csv,
    write_detections_csv,
)
from .hough import accumulate
from .markov.model import ModelBundle
from .markov.pipeline import DetectionStats
from .markov.ranker import train_rank2
from .markov.segments import appearance_score
from .markov.train import TrainingError, labeled_lines_from_segments, train_likelihoods, train_priors
from .synth import SceneSpec, random_segments, render_scene, write_gt_json

log = logging.getLogger("mcmlsd")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or unreadable inputs (exit 2)."""


# -- helpers ------------------------------------------------------------------


def _require_file(path) -> str:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise UsageError(f"cannot read {path}: no such file")
    return path


def _config_from_args(args) -> Config:
    overrides = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    flag_keys = {
        "mode": "mode", "threshold": "threshold", "method": "method", "max_lines": "max_lines",
        "resolution_scale": "resolution_scale", "model": "model", "confidence": "confidence",
    }
    for attr, key in flag_keys.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        _require_file(cfg_path)
    cfg = load_config(cfg_path, overrides)
    for key in ("model", "confidence"):
        if getattr(cfg, key):
            _require_file(getattr(cfg, key))
    return cfg


def _is_edge_csv(path: str) -> bool:
    return path.lower().endswith(".csv")


def _load_input(path, width=None, height=None, cfg: Config | None = None) -> EdgeMap:
    """Edge map from an image (edges detected here) or an edge CSV."""
    path = _require_file(path)
    if _is_edge_csv(path):
        return load_edge_map(path, width, height)
    try:
        img = GrayImage.load(path)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return detect_edges(img, (cfg or Config()).edge_params())


def _image_size(path) -> tuple[int, int]:
    path = _require_file(path)
    if _is_edge_csv(path):
        em = load_edge_map(path)
        return em.width, em.height
    try:
        img = GrayImage.load(path)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return img.width, img.height


def _extent(path) -> tuple[int, int]:
    """Smallest image holding every coordinate of a GT or detection file."""
    xs, ys = [0.0], [0.0]
    if path.lower().endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        for obj in data if isinstance(data, list) else []:
            if isinstance(obj, dict):
                xs += [float(obj.get("x1", 0)), float(obj.get("x2", 0))]
                ys += [float(obj.get("y1", 0)), float(obj.get("y2", 0))]
    else:
        with open(path, encoding="utf-8") as fh:
            next(fh, None)
            for line in fh:
                parts = line.strip().split(",")
                if len(parts) == 6:
                    try:
                        xs += [float(parts[1]), float(parts[3])]
                        ys += [float(parts[2]), float(parts[4])]
                    except ValueError:
                        pass
    return int(math.ceil(max(xs))) + 1, int(math.ceil(max(ys))) + 1


def _read_segments(path, width: int, height: int) -> SegmentSet:
    """Detections from CSV; a GT-style JSON file is accepted in file order."""
    path = _require_file(path)
    if path.lower().endswith(".json"):
        return read_gt_json(path, width, height)
    return read_detections_csv(path, width, height)


def _resolve_dims(args, *paths) -> tuple[int, int]:
    if args.width and args.height:
        return args.width, args.height
    if getattr(args, "image", None):
        return _image_size(args.image)
    w = h = 0
    for p in paths:
        pw, ph = _extent(_require_file(p))
        w, h = max(w, pw), max(h, ph)
    log.warning("image size not given; using the coordinate extent %dx%d", w, h)
    return w, h


def load_manifest(path) -> list[dict]:
    """Manifest entries with paths resolved against the manifest's folder."""
    path = _require_file(path)
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(data, dict):
        data = data.get("images", data.get("entries"))
    if not isinstance(data, list):
        raise UsageError(f"{path}: expected a JSON array of entries")
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise UsageError(f"{path}: entry {i} is not an object")
        resolved = dict(entry)
        for key in ("image", "edges", "gt", "detections", "confidence"):
            if key in entry and entry[key]:
                resolved[key] = os.path.join(base, entry[key])
        for key in ("width", "height"):
            if key in entry:
                resolved[key] = int(entry[key])
        out.append(resolved)
    return out


def _entry_dims(entry: dict, i: int) -> tuple[int, int]:
    if "width" in entry and "height" in entry:
        return entry["width"], entry["height"]
    src = entry.get("image") or entry.get("edges")
    if not src:
        raise UsageError(f"manifest entry {i}: needs an image, an edge map or width/height")
    return _image_size(src)


def _entry_edges(entry: dict, i: int, cfg: Config) -> EdgeMap:
    w, h = _entry_dims(entry, i)
    if entry.get("edges"):
        return load_edge_map(_require_file(entry["edges"]), w, h)
    if entry.get("image"):
        return _load_input(entry["image"], cfg=cfg)
    raise UsageError(f"manifest entry {i}: needs an image or an edge map")


def _summary(curve) -> str:
    max_recall = max((p.recall for p in curve), default=0.0)
    return f"max_recall={max_recall:.4f} pr_auc={pr_area(curve):.4f}"


# -- commands -----------------------------------------------------------------


def cmd_detect(args) -> int:
    cfg = _config_from_args(args)
    path = _require_file(args.input)
    t0 = time.perf_counter()
    stats = DetectionStats()
    if _is_edge_csv(path):
        em = load_edge_map(path, args.width, args.height)
    else:
        try:
            img = GrayImage.load(path)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        em = detect_edges(img, cfg.edge_params())
    found = detect_edge_map(em, cfg, stats=stats)
    if args.dump_hough:
        hm = accumulate(em, cfg.hough_params())
        hm.dump(args.dump_hough)
    elapsed = time.perf_counter() - t0
    out = args.output or "-"
    segments, scores = [r.segment for r in found], [r.score for r in found]
    write_detections_csv(sys.stdout if out == "-" else out, segments, scores)
    print(f"lines={stats.lines} segments={len(found)} time={elapsed:.3f}s", file=sys.stderr)
    return EXIT_OK


def _write_curve(path, curve):
    write_curves_csv(sys.stdout if not path or path == "-" else path, curve)


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    ks = cfg.k_values()
    if args.manifest:
        if args.gt or args.detections:
            raise UsageError("give either --manifest or GT and DET files, not both")
        entries = load_manifest(args.manifest)
        if not entries:
            log.error("manifest %s is empty", args.manifest)
            return EXIT_FAIL
        curves = []
        for i, e in enumerate(entries):
            if not e.get("detections") or not e.get("gt"):
                raise UsageError(f"manifest entry {i}: eval needs gt and detections (use 'curves' to detect)")
            w, h = _entry_dims(e, i)
            gt = read_gt_json(_require_file(e["gt"]), w, h)
            det = _read_segments(e["detections"], w, h)
            curves.append(compute_curves(gt, det, ks, cfg.eval_threshold(w, h), cfg.mode))
        curve = mean_curves(curves)
    else:
        if not (args.gt and args.detections):
            raise UsageError("eval needs GT and DET files, or --manifest")
        w, h = _resolve_dims(args, args.gt, args.detections)
        gt = read_gt_json(_require_file(args.gt), w, h)
        det = _read_segments(args.detections, w, h)
        curve = compute_curves(gt, det, ks, cfg.eval_threshold(w, h), cfg.mode)
    _write_curve(args.output, curve)
    print(_summary(curve), file=sys.stderr)
    return EXIT_OK


def cmd_curves(args) -> int:
    cfg = _config_from_args(args)
    ks = cfg.k_values()
    entries = load_manifest(args.manifest)
    if not entries:
        log.error("manifest %s is empty", args.manifest)
        return EXIT_FAIL
    curves = []
    for i, e in enumerate(entries):
        if not e.get("gt"):
            raise UsageError(f"manifest entry {i}: missing gt")
        w, h = _entry_dims(e, i)
        gt = read_gt_json(_require_file(e["gt"]), w, h)
        if e.get("detections"):
            det = _read_segments(e["detections"], w, h)
        else:
            em = _entry_edges(e, i, cfg)
            conf = None
            if cfg.method == "mcmlsd2" and e.get("confidence"):
                conf = load_confidence(_require_file(e["confidence"]), w, h)
            found = detect_edge_map(em, cfg, conf)
            det = SegmentSet([r.segment for r in found], w, h, [r.score for r in found])
        curves.append(compute_curves(gt, det, ks, cfg.eval_threshold(w, h), cfg.mode))
    curve = mean_curves(curves)
    _write_curve(args.output, curve)
    print(f"images={len(entries)} {_summary(curve)}", file=sys.stderr)
    return EXIT_OK


def train_from_manifest(entries, cfg: Config | None = None) -> ModelBundle:
    """Fit likelihoods and priors; fit the MCMLSD2 ranker as well when every
    entry carries a confidence map."""
    cfg = cfg or Config()
    if not entries:
        raise TrainingError("empty manifest")
    corpus, dims, gts = [], [], []
    for i, e in enumerate(entries):
        if not e.get("gt"):
            raise UsageError(f"manifest entry {i}: missing gt")
        em = _entry_edges(e, i, cfg)
        gt = read_gt_json(_require_file(e["gt"]), em.width, em.height)
        corpus.append((em, labeled_lines_from_segments(gt.segments)))
        dims.append((em.width, em.height))
        gts.append(gt)
    lm = train_likelihoods(corpus, cfg.halfwidth)
    tm = train_priors(corpus, cfg.halfwidth)
    bundle = ModelBundle(lm, tm, dims[0])
    if all(e.get("confidence") for e in entries):
        feats, targets = [], []
        for (em, _), gt, e in zip(corpus, gts, entries):
            conf = load_confidence(_require_file(e["confidence"]), em.width, em.height)
            model = bundle.for_image(em.width, em.height)
            found = detect_edge_map(em, cfg.with_values({"method": "4"}), model=model)
            if not found:
                continue
            det = SegmentSet([r.segment for r in found], em.width, em.height)
            prec = segment_precisions(gt, det, cfg.eval_threshold(em.width, em.height))
            for r, p in zip(found, prec):
                feats.append((r.mean_marginal, appearance_score(conf, r.segment, em, cfg.removal_radius)))
                targets.append(p)
        if len(feats) >= 2:
            bundle.ranker = train_rank2(np.array(feats), np.array(targets))
        else:
            log.warning("too few detections to fit the MCMLSD2 ranker; skipped")
    return bundle


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    entries = load_manifest(args.manifest)
    if not entries:
        print(f"error: manifest {args.manifest} is empty", file=sys.stderr)
        return EXIT_FAIL
    bundle = train_from_manifest(entries, cfg)
    bundle.save(args.output)
    tm = bundle.transitions
    print(
        f"trained on {len(entries)} images: p_on={tm.p_on:.4g} p_on_given_off={tm.p_on_given_off:.4g} "
        f"p_off_given_on={tm.p_off_given_on:.4g} rank2={'yes' if bundle.ranker else 'no'}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.spec:
        path = _require_file(args.spec)
        with open(path, encoding="utf-8") as fh:
            try:
                spec = SceneSpec.from_json(json.load(fh))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise UsageError(f"{path}: bad scene spec ({exc})") from None
    else:
        w, h = args.width or 640, args.height or 480
        rng = np.random.default_rng(args.seed)
        spec = SceneSpec(w, h, random_segments(rng, args.random, w, h, args.min_length), args.noise)
    if args.noise is not None and args.spec:
        spec.noise_sigma = args.noise
    img = render_scene(spec, args.seed)
    write_pgm(args.output, img)
    if args.gt:
        write_gt_json(args.gt, spec.segments)
    print(f"wrote {args.output} ({spec.width}x{spec.height}, {len(spec.segments)} segments)", file=sys.stderr)
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def _add_common(p, eval_flags=False, detect_flags=False):
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    if detect_flags:
        p.add_argument("--method", choices=["1", "2", "3", "4", "mcmlsd2"], help="segment ranking method")
        p.add_argument("--max-lines", dest="max_lines", type=int, help="maximum Hough lines")
        p.add_argument("--resolution-scale", dest="resolution_scale", type=float,
                       help="transition scaling factor (default: from image size)")
        p.add_argument("--model", help="model JSON (default: packaged model)")
        p.add_argument("--confidence", help="confidence map (.npy or image) for MCMLSD2 ranking")
    if eval_flags:
        p.add_argument("--mode", choices=["segment", "pixel"], help="evaluation mode")
        p.add_argument("--threshold", type=float, help="match distance in pixels")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcmlsd", description="Markov-chain line segment detection.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect ranked segments in an image or edge map")
    p.add_argument("input", help="PGM/PNG image or edge CSV (x,y,theta_deg,strength)")
    p.add_argument("-o", "--output", help="detection CSV (default: stdout)")
    p.add_argument("--width", type=int, help="image width for edge-CSV input")
    p.add_argument("--height", type=int, help="image height for edge-CSV input")
    p.add_argument("--dump-hough", dest="dump_hough", metavar="BASE", help="write the initial accumulator")
    _add_common(p, detect_flags=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="recall/precision curves for detections against ground truth")
    p.add_argument("gt", nargs="?", help="ground-truth JSON")
    p.add_argument("detections", nargs="?", help="detection CSV")
    p.add_argument("--manifest", help="batch manifest with gt and detections per image")
    p.add_argument("--image", help="image whose size bounds the segments")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("-o", "--output", help="curve CSV (default: stdout)")
    _add_common(p, eval_flags=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("curves", help="detect over a manifest and write the mean curve")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", help="curve CSV (default: stdout)")
    _add_common(p, eval_flags=True, detect_flags=True)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("train", help="fit a model from labelled images")
    p.add_argument("manifest", help="JSON array of {image or edges, gt, confidence?}")
    p.add_argument("-o", "--output", required=True, help="model JSON to write")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="render a synthetic scene")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="scene JSON {width, height, noise_sigma, segments}")
    src.add_argument("--random", type=int, metavar="N", help="N random segments")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--noise", type=float, help="noise sigma (random default 5)")
    p.add_argument("--min-length", dest="min_length", type=float, default=60.0)
    p.add_argument("-o", "--output", required=True, help="PGM to write")
    p.add_argument("--gt", help="ground-truth JSON to write")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and args.random is not None and args.noise is None:
        args.noise = 5.0
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, EvalFormatError, EdgeMapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        where = f"{exc.filename}: " if exc.filename else ""
        print(f"error: {where}{exc.strerror or exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
