import argparse
from pathlib import Path
from typing import List

from points2pix.config import settings
from points2pix.exceptions import ValidationFailure
from points2pix.repositories.sample_repository import SampleRepository
from points2pix.routers.train import add_train_flags, load_split, resolve_training
from points2pix.schemas.manifest import RunManifest
from points2pix.services.training_service import TrainingService


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("ablate", help="Train all three variants and compare them")
    parser.add_argument("cache_dir")
    parser.add_argument("--out", dest="out_dir", required=True)
    parser.add_argument("--thresholds", type=float, nargs="+", default=list(settings.DEFAULT_THRESHOLDS))
    add_train_flags(parser)
    parser.set_defaults(handler=cmd_ablate, inputs=lambda a: [a.cache_dir, a.config])
    return parser


def cmd_ablate(args: argparse.Namespace, manifest: RunManifest) -> List[str]:
    """Comparison table (ablation.json, ablation.txt) over full, unet_only and pointnet_only"""
    repository = SampleRepository(args.cache_dir)
    config, preset = resolve_training(args, manifest, repository)
    repository.check()
    train = load_split(repository, "train")
    if not train:
        raise ValidationFailure(f"{args.cache_dir}: the training split is empty")
    evaluation = load_split(repository, "eval")
    report = TrainingService.run_ablation(config, train, evaluation, args.out_dir, args.thresholds, preset=preset)
    out = Path(args.out_dir)
    return [str(out / "ablation.json"), str(out / "ablation.txt")] + [row.checkpoint for row in report.rows if row.checkpoint]
