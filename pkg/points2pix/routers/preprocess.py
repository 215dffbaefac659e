import argparse
from typing import List

from points2pix.config import settings
from points2pix.schemas.manifest import RunManifest
from points2pix.services.preprocess_service import PreprocessService


def point_count(value: str) -> int:
    """Accepts `700` as well as `1e9`."""
    return int(float(value))


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("preprocess", help="Crop a KITTI or synthetic dataset into a sample cache")
    parser.add_argument("dataset_dir")
    parser.add_argument("--out", dest="out_dir", required=True, help="Sample cache directory")
    parser.add_argument("--class", dest="classes", action="append", help="Keep this class (repeatable)")
    parser.add_argument("--min-points", type=point_count, default=settings.MIN_POINTS)
    parser.add_argument("--dmax", type=float, default=None, help="Depth normalization range in meters")
    parser.add_argument("--border", type=int, default=settings.BORDER_WIDTH, help="c3 border in patch pixels")
    parser.add_argument("--split", type=float, default=0.5, help="Share of samples in the training split")
    parser.add_argument("--train-list", default=None, help="File of frame ids forming the training split")
    parser.add_argument("--depth-only", action="store_true", help="Single-channel projections (indoor data)")
    parser.add_argument("--seed", type=int, default=0)
    parser.set_defaults(handler=cmd_preprocess, inputs=lambda a: [a.dataset_dir, a.train_list])
    return parser


def cmd_preprocess(args: argparse.Namespace, manifest: RunManifest) -> List[str]:
    """Build the object-sample cache"""
    d_max = args.dmax
    if d_max is None and args.depth_only:
        d_max = settings.D_MAX_SUNRGBD
    summary = PreprocessService.preprocess(
        args.dataset_dir, args.out_dir,
        classes=args.classes,
        min_points=args.min_points,
        d_max=d_max,
        border_width=args.border,
        split_ratio=args.split,
        seed=args.seed,
        train_list=args.train_list,
        projection_mode="depth_only" if args.depth_only else "rgb",
    )
    manifest.resolved_config = summary.model_dump(mode="json")
    return [f"{args.out_dir}/summary.json", f"{args.out_dir}/splits/train.txt", f"{args.out_dir}/splits/eval.txt"]
