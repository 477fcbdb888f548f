"""Command-line surface: one subcommand per pipeline capability.

Every stochastic step hangs off --seed, outputs are CSV plus a JSON twin,
logs go to stderr only (level from MESHCOUNT_LOG), and exit codes are
0 on success, 1 for invalid usage or inputs, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import io
from .annotate import fit_alpha, prune_far, sanitize_box
from .density import DensityMap, DotAnnotation, KernelSpec, count, dots_to_density, local_peaks
from .errors import MeshCountError, ParseError
from .geometry import (
    RansacParams,
    distance_violations,
    project_point,
    ransac_homography,
    symmetric_transfer_error,
)
from .matching import distance_filter, default_max_dist, ratio_match, to_correspondences
from .metrics import (
    CountPair,
    MatchResult,
    agreement_filtered_counts,
    game,
    mae,
    mare,
    match_boxes,
    match_points,
    mean_ap,
    mse,
    precision_recall_f1,
    rmse,
)
from .protocol import ProtocolConfig, run_scenario
from .rescoring import TrainConfig, pearson_r, score, train
from .synth import SyntheticSceneSpec, generate_scene

log = logging.getLogger("meshcount")

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING,
               "info": logging.INFO, "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    # usage problems are validation errors: exit 1, not argparse's 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _ransac_args(parser):
    parser.add_argument("--ratio", type=float, default=0.75, help="Lowe ratio test value")
    parser.add_argument("--max-dist", type=float, default=None,
                        help="absolute match distance cutoff (default: 2x median)")
    parser.add_argument("--threshold", type=float, default=3.0,
                        help="RANSAC inlier threshold in px")
    parser.add_argument("--max-iter", type=int, default=2000)
    parser.add_argument("--confidence", type=float, default=0.995)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meshcount", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[], help="estimate a homography from features or correspondences")
    p.add_argument("--features-a", help="source feature CSV")
    p.add_argument("--features-b", help="target feature CSV")
    p.add_argument("--correspondences", help="pre-matched correspondence CSV")
    _ransac_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="homography JSON path")

    p = sub.add_parser("simulate", help="run the multi-camera counting protocol on a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--tau", type=float, default=0.2, help="IoU duplicate threshold")
    p.add_argument("--agg", choices=("min", "max", "mean"), default="mean")
    _ransac_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report CSV path (JSON twin written next to it)")

    p = sub.add_parser("gen-scene", help="generate a synthetic scenario with exact ground truth")
    p.add_argument("--cameras", type=int, default=2)
    p.add_argument("--vehicles", type=int, default=12)
    p.add_argument("--overlap", type=float, default=0.4)
    p.add_argument("--warp", choices=("translation", "affine", "projective"), default="translation")
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--drop", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--spurious", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="scenario JSON path")

    p = sub.add_parser("density", help="build a density map from dot annotations")
    p.add_argument("--dots", required=True, help="dot CSV with header x,y[,sigma]")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--sigma", type=float, help="fixed Gaussian bandwidth")
    p.add_argument("--knn-k", type=int, help="neighbor count for adaptive bandwidths")
    p.add_argument("--knn-beta", type=float, help="bandwidth scale for the knn mode")
    p.add_argument("--peaks", type=int, help="also report the top-n local peaks")
    p.add_argument("--min-distance", type=int, default=3)
    p.add_argument("--min-value", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="DMF1 raster path")
    p.add_argument("--csv-out", help="optional lossless CSV export")

    p = sub.add_parser("eval-count", help="counting metrics from point predictions vs ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--game", type=int, default=None, help="also compute GAME at this level")
    p.add_argument("--width", type=int, help="image width (needed for GAME)")
    p.add_argument("--height", type=int, help="image height (needed for GAME)")
    p.add_argument("--min-agreement", type=int, default=None)
    p.add_argument("--k", type=int, default=7, help="number of raters")
    p.add_argument("--score-threshold", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval-detect", help="detection metrics: precision, recall, F1, AP")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mode", choices=("box", "point"), default="box")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--radius", type=float, default=5.0, help="gating radius for point mode")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("rescore-train", help="train an objectness scorer on agreement samples")
    p.add_argument("--samples", required=True)
    p.add_argument("--method", choices=("AR", "AC", "OR", "RL"), default="OR")
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--k", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--trace", help="optional loss-trace CSV path")

    p = sub.add_parser("rescore-eval", help="correlate scorer output with rater agreement")
    p.add_argument("--samples", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=None,
                   help="also report how many samples pass this score")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sanitize-bboxes", help="pad skeleton boxes and prune far objects")
    p.add_argument("--in", dest="infile", required=True, help="CSV h_s,w_s,z[,h_m]")
    p.add_argument("--alpha", type=float, default=None,
                   help="padding parameter; fitted from the h_m column when omitted")
    p.add_argument("--max-z", type=float, default=40.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("distance-check", help="find physical-distance violations")
    p.add_argument("--positions", required=True, help="CSV x,y (pixels or meters)")
    p.add_argument("--homography", help="pixel-to-ground homography JSON")
    p.add_argument("--threshold", type=float, default=1.0, help="violation distance in meters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    return parser


# -- command bodies ---------------------------------------------------------------


def _cmd_calibrate(args) -> int:
    if args.correspondences:
        corrs = io.read_correspondences_csv(args.correspondences)
    else:
        if not (args.features_a and args.features_b):
            print("calibrate: need --correspondences or both --features-a/--features-b",
                  file=sys.stderr)
            return 1
        fa = io.read_features_csv(args.features_a)
        fb = io.read_features_csv(args.features_b)
        matches = ratio_match(fa, fb, args.ratio)
        cutoff = args.max_dist if args.max_dist is not None else default_max_dist(matches)
        matches = distance_filter(matches, cutoff)
        corrs = to_correspondences(fa, fb, matches)
    params = RansacParams(
        max_iterations=args.max_iter,
        inlier_threshold=args.threshold,
        confidence=args.confidence,
        seed=args.seed,
    )
    h, mask = ransac_homography(corrs, params)
    io.write_homography_json(args.out, h)
    inliers = [c for c, keep in zip(corrs, mask) if keep]
    err = symmetric_transfer_error(h, inliers)
    print(f"correspondences={len(corrs)} inliers={sum(mask)} "
          f"mean_transfer_error={float(np.mean(err)):.6f}")
    return 0


def _protocol_config(args) -> ProtocolConfig:
    return ProtocolConfig(
        tau=args.tau,
        aggregation=args.agg,
        ransac=RansacParams(
            max_iterations=args.max_iter,
            inlier_threshold=args.threshold,
            confidence=args.confidence,
            seed=args.seed,
        ),
        ratio=args.ratio,
        max_dist=args.max_dist,
    )


def _cmd_simulate(args) -> int:
    scenario = io.read_scenario_json(args.scenario)
    report = run_scenario(scenario, _protocol_config(args))
    csv_path, json_path = io.write_report(args.out, report)
    log.info("report written to %s and %s", csv_path, json_path)
    for method in ("naive", "masking", "ours"):
        stats = report.summary.get(method)
        if stats:
            print(f"{method}: error={stats['error']:+.3f} "
                  f"abs={stats['absolute_error']:.3f} sq={stats['squared_error']:.3f}")
    return 0


def _cmd_gen_scene(args) -> int:
    spec = SyntheticSceneSpec(
        n_cameras=args.cameras,
        image_shape=(args.width, args.height),
        n_vehicles=args.vehicles,
        overlap=args.overlap,
        warp=args.warp,
        drop_rate=args.drop,
        jitter_px=args.jitter,
        spurious_rate=args.spurious,
        n_frames=args.frames,
        seed=args.seed,
    )
    scenario = generate_scene(spec)
    io.write_scenario_json(args.out, scenario)
    total = sum(scenario.ground_truth.global_counts.values())
    print(f"scenario with {args.cameras} cameras, {len(scenario.frames)} frames, "
          f"total ground truth {total} written to {args.out}")
    return 0


def _cmd_density(args) -> int:
    points, sigmas = io.read_dots_csv(args.dots)
    if args.sigma is not None:
        kernel = KernelSpec(mode="fixed", sigma=args.sigma)
    elif args.knn_k is not None and args.knn_beta is not None:
        kernel = KernelSpec(mode="knn-adaptive", k=args.knn_k, beta=args.knn_beta)
    elif sigmas is not None:
        kernel = KernelSpec(mode="per-point")
    else:
        print("density: need --sigma, --knn-k/--knn-beta, or a sigma column", file=sys.stderr)
        return 1
    dots = DotAnnotation(points, sigma=tuple(sigmas) if sigmas is not None else None)
    density = dots_to_density(dots, (args.height, args.width), kernel)
    io.write_density_dmf(args.out, density)
    if args.csv_out:
        io.write_density_csv(args.csv_out, density)
    print(f"dots={len(points)} integral={count(density):.9f}")
    if args.peaks:
        for p in local_peaks(density, args.peaks, args.min_distance, args.min_value):
            print(f"peak,{p.x},{p.y}")
    return 0


def _points_to_delta_map(points, width, height) -> DensityMap:
    grid = np.zeros((height, width))
    for p in points:
        grid[int(p.y), int(p.x)] += 1.0
    return DensityMap(grid)


def _cmd_eval_count(args) -> int:
    preds = io.read_detections_csv(args.pred)
    gts = io.read_detections_csv(args.gt)
    images = sorted({r["image_id"] for r in preds} | {r["image_id"] for r in gts})
    pairs = []
    pred_by_img = {img: [r for r in preds if r["image_id"] == img] for img in images}
    gt_by_img = {img: [r for r in gts if r["image_id"] == img] for img in images}
    for img in images:
        p_rows = pred_by_img[img]
        g_rows = gt_by_img[img]
        if args.min_agreement is not None:
            # rows without an agreement column count as agreed by everyone
            agreements = [r["agreement"] if r["agreement"] is not None else args.k
                          for r in g_rows]
            pairs.append(
                agreement_filtered_counts(
                    [r["score"] for r in p_rows],
                    agreements,
                    k=args.k,
                    min_agreement=args.min_agreement,
                    score_threshold=args.score_threshold,
                )
            )
        else:
            kept = [r for r in p_rows if r["score"] >= args.score_threshold]
            pairs.append(CountPair(gt=float(len(g_rows)), pred=float(len(kept))))
    rows = [["mae", mae(pairs)], ["mse", mse(pairs)], ["rmse", rmse(pairs)]]
    try:
        rows.append(["mare", mare(pairs)])
    except MeshCountError:
        log.warning("MARE skipped: a ground-truth count is zero")
        rows.append(["mare", ""])
    if args.game is not None:
        if not (args.width and args.height):
            print("eval-count: GAME needs --width and --height", file=sys.stderr)
            return 1
        pred_maps, gt_maps = [], []
        for img in images:
            kept = [r["geom"] for r in pred_by_img[img] if r["score"] >= args.score_threshold]
            pred_maps.append(_points_to_delta_map(kept, args.width, args.height))
            gt_maps.append(
                _points_to_delta_map([r["geom"] for r in gt_by_img[img]], args.width, args.height)
            )
        rows.append([f"game{args.game}", game(pred_maps, gt_maps, args.game)])
    io.write_table(args.out, ["metric", "value"], rows)
    for name, value in rows:
        print(f"{name}={value}")
    return 0


def _split_by_image(records):
    out = {}
    for r in records:
        out.setdefault(r["image_id"], []).append(r)
    return out


def _multi_image_ap(pred_rows, gt_rows, match_one) -> tuple[float, MatchResult]:
    """Dataset AP (right-envelope) plus the match at the lowest threshold."""
    preds_by_img = _split_by_image(pred_rows)
    gts_by_img = _split_by_image(gt_rows)
    images = sorted(set(preds_by_img) | set(gts_by_img))

    def match_all(min_score):
        tp = fp = fn = 0
        pairs = []
        for img in images:
            kept = [r for r in preds_by_img.get(img, []) if r["score"] >= min_score]
            m = match_one(kept, gts_by_img.get(img, []))
            tp, fp, fn = tp + m.tp, fp + m.fp, fn + m.fn
            pairs.extend((img, i, j, c) for i, j, c in m.pairs)
        return tp, fp, fn, pairs

    scores = sorted({r["score"] for r in pred_rows}, reverse=True)
    curve = []
    for t in scores:
        tp, fp, fn, _ = match_all(t)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        curve.append((recall, precision))
    ap = 0.0
    prev = 0.0
    for r in sorted({r for r, _ in curve if r > 0}):
        ap += (r - prev) * max(p for rr, p in curve if rr >= r)
        prev = r
    if scores:
        tp, fp, fn, pairs = match_all(min(scores))
    else:
        tp, fp, fn, pairs = 0, 0, len(gt_rows), []
    final = MatchResult(
        tp=tp, fp=fp, fn=fn, pairs=tuple((i, j, c) for (_, i, j, c) in pairs)
    )
    return ap, final


def _cmd_eval_detect(args) -> int:
    preds = io.read_detections_csv(args.pred)
    gts = io.read_detections_csv(args.gt)
    classes = sorted({r["class_id"] for r in preds} | {r["class_id"] for r in gts})

    def make_matcher():
        if args.mode == "box":
            return lambda kept, gt_rows: match_boxes(
                io.detections_to_scored(kept), [r["geom"] for r in gt_rows], args.iou_threshold
            )
        return lambda kept, gt_rows: match_points(
            io.detections_to_scored(kept), [r["geom"] for r in gt_rows], args.radius
        )

    rows = []
    aps = []
    for cls in classes:
        p_rows = [r for r in preds if r["class_id"] == cls]
        g_rows = [r for r in gts if r["class_id"] == cls]
        ap, final = _multi_image_ap(p_rows, g_rows, make_matcher())
        precision, recall, f1 = precision_recall_f1(final)
        aps.append(ap)
        rows.append([f"class{cls}_precision", precision])
        rows.append([f"class{cls}_recall", recall])
        rows.append([f"class{cls}_f1", f1])
        rows.append([f"class{cls}_ap", ap])
    rows.append(["map", mean_ap(aps)])
    io.write_table(args.out, ["metric", "value"], rows)
    for name, value in rows:
        print(f"{name}={value}")
    return 0


def _cmd_rescore_train(args) -> int:
    samples = io.read_samples_csv(args.samples)
    config = TrainConfig(
        method=args.method,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch,
        margin=args.margin,
        seed=args.seed,
    )
    result = train(samples, config, k=args.k)
    io.write_model_json(args.out, result.model)
    if args.trace:
        io.write_loss_trace_csv(args.trace, result.loss_trace)
    print(f"method={args.method} samples={len(samples)} "
          f"initial_loss={result.loss_trace[0]:.6f} final_loss={result.loss_trace[-1]:.6f}")
    return 0


def _cmd_rescore_eval(args) -> int:
    samples = io.read_samples_csv(args.samples)
    model = io.read_model_json(args.model)
    scores = [score(model, s.features) for s in samples]
    agreements = [s.agreement for s in samples]
    r = pearson_r(scores, agreements)
    rows = [["pearson_r", r], ["n_samples", len(samples)]]
    if args.threshold is not None:
        kept = sum(1 for s in scores if s >= args.threshold)
        rows.append(["kept_at_threshold", kept])
    io.write_table(args.out, ["metric", "value"], rows)
    for name, value in rows:
        print(f"{name}={value}")
    return 0


def _cmd_sanitize_bboxes(args) -> int:
    boxes, measured = io.read_skeleton_csv(args.infile)
    if args.alpha is not None:
        alpha = args.alpha
    else:
        if measured is None:
            print("sanitize-bboxes: no --alpha and no h_m column to fit from", file=sys.stderr)
            return 1
        fit = fit_alpha([(b.h_s, b.z, hm) for b, hm in zip(boxes, measured)])
        alpha = fit.alpha
        print(f"fitted alpha={fit.alpha:.9f} residual_rmse={fit.residual_rmse:.9f} "
              f"n={fit.n_samples}")
    kept = prune_far([(box, box.z) for box in boxes], args.max_z)
    kept_boxes = [box for box, _ in kept]
    sanitized = [sanitize_box(box, alpha) for box in kept_boxes]
    io.write_sanitized_csv(args.out, kept_boxes, sanitized)
    print(f"kept {len(kept_boxes)} of {len(boxes)} boxes (max_z={args.max_z})")
    return 0


def _cmd_distance_check(args) -> int:
    positions = io.read_positions_csv(args.positions)
    if args.homography:
        h = io.read_homography_json(args.homography)
        ground = [project_point(h, p) for p in positions]
        log.debug("unprojected %d positions to the ground plane", len(ground))
    else:
        ground = positions
    groups = distance_violations(ground, args.threshold)
    rows = [[idx, ";".join(str(i) for i in g)] for idx, g in enumerate(groups)]
    io.write_table(args.out, ["group", "members"], rows)
    print(f"positions={len(ground)} violation_groups={len(groups)}")
    for idx, g in enumerate(groups):
        print(f"group{idx}: {g}")
    return 0


_COMMANDS = {
    "calibrate": _cmd_calibrate,
    "simulate": _cmd_simulate,
    "gen-scene": _cmd_gen_scene,
    "density": _cmd_density,
    "eval-count": _cmd_eval_count,
    "eval-detect": _cmd_eval_detect,
    "rescore-train": _cmd_rescore_train,
    "rescore-eval": _cmd_rescore_eval,
    "sanitize-bboxes": _cmd_sanitize_bboxes,
    "distance-check": _cmd_distance_check,
}


def main(argv=None) -> int:
    level = _LOG_LEVELS.get(os.environ.get("MESHCOUNT_LOG", "warn"), logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.perf_counter()
    try:
        rc = _COMMANDS[args.command](args)
    except (ParseError, ValueError, OSError) as exc:
        print(f"meshcount {args.command}: {exc}", file=sys.stderr)
        return 1
    except MeshCountError as exc:
        print(f"meshcount {args.command}: {exc}", file=sys.stderr)
        return 2
    log.info("%s finished in %.3f s", args.command, time.perf_counter() - started)
    return rc


if __name__ == "__main__":
    sys.exit(main())
