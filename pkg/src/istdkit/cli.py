"""Command-line front end: stats, align, extract, match, fuse, noise, eval,
roc and the all-in-one run. Reports are JSON on stdout (CSV for roc); logs
go to stderr; exit code 0 on success, 1 with a machine-parsable error
object otherwise.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .dataset_io import (
    DatasetError,
    dataset_stats,
    load_dataset,
    load_gray_png,
    load_mask_png,
)
from .metrics import evaluate, roc
from .noise_repr import bce_loss, feature_pyramid, noise_loss, total_loss
from .patch_match import (
    MatchConfig,
    load_patches,
    resolve_min_separation,
    save_patch,
    sliding_match,
    top_k,
)
from .pipeline import (
    PipelineConfig,
    PipelineError,
    align_stage,
    derive_seed,
    extract_stage,
    fuse_stage,
    noise_stage,
    parse_config,
    run_pipeline,
    write_dataset,
    write_fusion_results,
)
from .poisson_fusion import fuse_dataset

logger = logging.getLogger("istdkit")


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _mask_files(directory: Path) -> dict[str, Path]:
    if (directory / "masks").is_dir():
        directory = directory / "masks"
    return {p.stem: p for p in sorted(directory.glob("*.png"))}


def _paired_files(pred_dir: str, gt_dir: str) -> list[tuple[Path, Path]]:
    preds = _mask_files(Path(pred_dir))
    gts = _mask_files(Path(gt_dir))
    if set(preds) != set(gts):
        odd = sorted(set(preds).symmetric_difference(gts))
        raise DatasetError(f"prediction/ground-truth names differ: {', '.join(odd)}")
    if not preds:
        raise DatasetError("no PNG files to score")
    return [(preds[name], gts[name]) for name in sorted(preds)]


# ---------------------------------------------------------------- commands

def cmd_stats(args) -> int:
    stats = dataset_stats(load_dataset(args.dataset))
    _emit({"sample_count": stats.sample_count, "mean_intensity": stats.mean_intensity})
    return 0


def cmd_align(args) -> int:
    source = load_dataset(args.source)
    target_stats = dataset_stats(load_dataset(args.target))
    before = dataset_stats(source)
    aligned, params = align_stage(
        source, target_stats, refine=not args.no_refine,
        tolerance=args.tolerance, threads=args.threads,
    )
    write_dataset(aligned, Path(args.out))
    after = dataset_stats(load_dataset(args.out))
    _emit(
        {
            "gamma": params.gamma,
            "refined": params.refined,
            "source_mean_before": before.mean_intensity,
            "source_mean_after": after.mean_intensity,
            "target_mean": target_stats.mean_intensity,
            "n_aligned": after.sample_count,
        }
    )
    return 0


def cmd_extract(args) -> int:
    patches = extract_stage(load_dataset(args.dataset), args.padding)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for patch in patches:
        save_patch(patch, out)
    _emit({"n_patches": len(patches), "out": str(out)})
    return 0


def cmd_match(args) -> int:
    image = load_gray_png(args.image)
    if args.mask:
        mask = load_mask_png(args.mask)
        exclude = True
    else:
        mask = np.zeros(image.shape, dtype=bool)
        exclude = False
    patches = load_patches(args.patch)
    if not patches:
        raise DatasetError(f"no patches found under {args.patch}")
    base = MatchConfig(
        k=args.k,
        min_separation=args.min_sep if args.min_sep > 0 else None,
        stride=args.stride,
        exclude_target_overlap=exclude,
    )
    for patch in patches:
        config = resolve_min_separation(base, patch)
        selected = top_k(sliding_match(image, mask, patch, config), config)
        for rank, cand in enumerate(selected, start=1):
            print(
                json.dumps(
                    {
                        "patch_id": patch.patch_id,
                        "x": cand.x,
                        "y": cand.y,
                        "score": cand.score,
                        "rank": rank,
                    },
                    sort_keys=True,
                )
            )
    return 0


def cmd_fuse(args) -> int:
    dataset = load_dataset(args.dataset)
    patches = load_patches(args.patches)
    if not patches:
        raise DatasetError(f"no patches found under {args.patches}")
    config = MatchConfig(
        k=args.k,
        min_separation=args.min_sep if args.min_sep > 0 else None,
        stride=args.stride,
        exclude_target_overlap=True,
    )
    seed = args.seed if args.seed is not None else 0
    results = fuse_dataset(dataset, patches, config, seed=derive_seed(seed, "fuse"))
    write_fusion_results(results, Path(args.out))
    _emit({"n_fused": len(results), "out": str(args.out)})
    return 0


def cmd_noise(args) -> int:
    dataset = load_dataset(args.dataset)
    seed = args.seed if args.seed is not None else 0
    noisy = noise_stage(dataset, args.alpha, seed, threads=args.threads)
    write_dataset(noisy, Path(args.out))
    _emit({"n_noisy": len(noisy), "alpha": args.alpha, "out": str(args.out)})
    return 0


def cmd_loss(args) -> int:
    pairs = _paired_files(args.pred, args.gt)
    weighted = 0.0
    pixels = 0
    for pred_path, gt_path in pairs:
        scores = load_gray_png(pred_path) / 255.0
        mask = load_mask_png(gt_path)
        weighted += bce_loss(scores, mask) * scores.size
        pixels += scores.size
    bce = weighted / pixels
    noise = 0.0
    if args.noise_pair:
        clean_path, noisy_path = args.noise_pair
        clean = feature_pyramid(load_gray_png(clean_path))
        noisy = feature_pyramid(load_gray_png(noisy_path))
        noise = noise_loss(clean, noisy)
    _emit({"bce": bce, "noise": noise, "total": total_loss(bce, noise)})
    return 0


def cmd_eval(args) -> int:
    pairs = _paired_files(args.pred, args.gt)
    preds = [load_mask_png(p) for p, _ in pairs]
    gts = [load_mask_png(g) for _, g in pairs]
    report = evaluate(preds, gts, centroid_threshold=args.centroid_thresh)
    _emit(asdict(report))
    return 0


def cmd_roc(args) -> int:
    pairs = _paired_files(args.pred, args.gt)
    preds = [load_gray_png(p) / 255.0 for p, _ in pairs]
    gts = [load_mask_png(g) for _, g in pairs]
    thresholds = [float(t) for t in args.thresholds.split(",") if t.strip()]
    curve = roc(preds, gts, thresholds, centroid_threshold=args.centroid_thresh)
    print("threshold,fa,pd")
    for threshold, fa, pd in curve.points:
        print(f"{threshold:.6g},{fa:.6g},{pd:.6g}")
    return 0


def cmd_run(args) -> int:
    config = parse_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    report = run_pipeline(config, threads=args.threads)
    print(report.to_json(include_timing=True))
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="pipeline config file (run)", default=None)
    shared.add_argument("--seed", type=int, default=None, help="master seed")
    shared.add_argument("--threads", type=int, default=1, help="worker threads")
    shared.add_argument("--quiet", action="store_true", help="suppress progress logs")

    parser = argparse.ArgumentParser(
        prog="istdkit",
        description="Cross-dataset alignment, fusion augmentation and scoring "
        "for infrared small-target detection corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", parents=[shared], help="dataset mean/count report")
    p.add_argument("--dataset", required=True)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("align", parents=[shared], help="gamma-align source onto target")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-refine", action="store_true", help="closed-form gamma only")
    p.add_argument("--tolerance", type=float, default=0.5)
    p.set_defaults(handler=cmd_align)

    p = sub.add_parser("extract", parents=[shared], help="cut target patches")
    p.add_argument("--dataset", required=True)
    p.add_argument("--padding", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_extract)

    p = sub.add_parser("match", parents=[shared], help="top-k windows per patch")
    p.add_argument("--image", required=True)
    p.add_argument("--mask", default=None, help="exclusion mask for the image")
    p.add_argument("--patch", required=True, help="patch directory")
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--min-sep", type=float, default=0.0, help="0 = max(patch dims)")
    p.set_defaults(handler=cmd_match)

    p = sub.add_parser("fuse", parents=[shared], help="blend patches into backgrounds")
    p.add_argument("--dataset", required=True)
    p.add_argument("--patches", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--min-sep", type=float, default=0.0, help="0 = max(patch dims)")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_fuse)

    p = sub.add_parser("noise", parents=[shared], help="add seeded Gaussian noise")
    p.add_argument("--dataset", required=True)
    p.add_argument("--alpha", type=float, default=0.6)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_noise)

    p = sub.add_parser("loss", parents=[shared], help="BCE + consistency loss report")
    p.add_argument("--pred", required=True, help="prediction-map PNGs (scores = value/255)")
    p.add_argument("--gt", required=True)
    p.add_argument("--noise-pair", nargs=2, metavar=("CLEAN", "NOISY"), default=None,
                   help="image pair for the pyramid consistency term")
    p.set_defaults(handler=cmd_loss)

    p = sub.add_parser("eval", parents=[shared], help="score predicted masks")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--centroid-thresh", type=float, default=3.0)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("roc", parents=[shared], help="threshold sweep as CSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--thresholds", required=True, help="comma-separated, decreasing")
    p.add_argument("--centroid-thresh", type=float, default=3.0)
    p.set_defaults(handler=cmd_roc)

    p = sub.add_parser("run", parents=[shared], help="full pipeline from a config file")
    p.set_defaults(handler=cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except PipelineError as exc:
        _emit(
            {
                "error": {
                    "stage": exc.stage,
                    "type": type(exc.cause).__name__,
                    "message": str(exc.cause),
                }
            }
        )
        return 1
    except Exception as exc:  # argparse handles its own exits
        _emit({"error": {"stage": None, "type": type(exc).__name__, "message": str(exc)}})
        return 1


if __name__ == "__main__":
    sys.exit(main())
