import argparse
from typing import Any, Dict, List, Optional, Tuple

from points2pix.exceptions import ValidationFailure
from points2pix.repositories.detection_repository import write_report
from points2pix.repositories.sample_repository import SampleRepository
from points2pix.schemas.dataio import ObjectSample
from points2pix.schemas.manifest import RunManifest
from points2pix.schemas.training import NetworkPreset, TrainConfig
from points2pix.services.manifest_service import ManifestService
from points2pix.services.network_service import NetworkService
from points2pix.services.training_service import TrainingService

# flag dest -> TrainConfig field
TRAIN_FLAGS = {
    "epochs": "epochs",
    "lr": "lr",
    "lambda_l1": "lambda_l1",
    "batch_size": "batch_size",
    "seed": "seed",
    "variant": "variant",
    "preset": "preset",
    "dropout_p": "dropout_p",
    "inference_dropout": "dropout_at_inference",
    "conditional_d": "conditional_discriminator",
    "d_norm": "discriminator_norm",
    "literal_minimax": "literal_minimax",
    "compose": "compose_mode",
    "dmax": "d_max",
    "max_steps": "max_steps",
    "checkpoint_every": "checkpoint_every",
    "sample_every": "sample_every",
    "input_transform": "input_transform",
}


def add_train_flags(parser: argparse.ArgumentParser) -> None:
    """Training flags; every default is None so only flags actually given override the config file."""
    parser.add_argument("--config", default=None, help="JSON file of TrainConfig fields")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None)
    parser.add_argument("--lambda-l1", type=float, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--variant", choices=["full", "unet_only", "pointnet_only"], default=None)
    parser.add_argument("--preset", choices=["full_256", "toy_64"], default=None)
    parser.add_argument("--dropout-p", type=float, default=None)
    parser.add_argument("--inference-dropout", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--conditional-d", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--d-norm", choices=["instance", "batch", "none"], default=None)
    parser.add_argument("--literal-minimax", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--compose", choices=["overlay", "concat"], default=None)
    parser.add_argument("--dmax", type=float, default=None)
    parser.add_argument("--max-steps", type=int, default=None)
    parser.add_argument("--checkpoint-every", type=int, default=None)
    parser.add_argument("--sample-every", type=int, default=None)
    parser.add_argument("--input-transform", action=argparse.BooleanOptionalAction, default=None)


def cli_values(args: argparse.Namespace) -> Dict[str, Any]:
    return {field: getattr(args, dest) for dest, field in TRAIN_FLAGS.items() if getattr(args, dest) is not None}


def cache_defaults(summary: Dict[str, Any]) -> Dict[str, Any]:
    """Config defaults the cache dictates (the depth range and projection mode it was built for)."""
    defaults = {}
    if "d_max" in summary:
        defaults["d_max"] = summary["d_max"]
    if "projection_mode" in summary:
        defaults["projection_mode"] = summary["projection_mode"]
    return defaults


def resolve_training(args: argparse.Namespace, manifest: RunManifest,
                     repository: SampleRepository) -> Tuple[TrainConfig, NetworkPreset]:
    """Validated config and preset; runs before any sample is loaded."""
    summary = repository.read_summary()
    config, conflicts = ManifestService.resolve_config(cli_values(args), args.config,
                                                       defaults=cache_defaults(summary))
    manifest.resolved_config = config.model_dump(mode="json")
    manifest.conflicts = conflicts
    manifest.seed = config.seed
    preset = NetworkService.load_preset(config.preset)
    if "border_width" in summary:
        preset = NetworkService.scale_border(preset, int(summary["border_width"]))
    return config, preset


def load_split(repository: SampleRepository, name: str) -> List[ObjectSample]:
    ids: Optional[List[str]] = repository.split_ids(name)
    if ids is None:
        ids = repository.ids() if name == "train" else []
    return repository.load_many(ids)


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("train", help="Train generator and discriminator on a sample cache")
    parser.add_argument("cache_dir")
    parser.add_argument("--out", dest="out_dir", required=True, help="Run directory")
    parser.add_argument("--resume", default=None, help="Checkpoint to continue from")
    add_train_flags(parser)
    parser.set_defaults(handler=cmd_train, inputs=lambda a: [a.cache_dir, a.config, a.resume])
    return parser


def cmd_train(args: argparse.Namespace, manifest: RunManifest) -> List[str]:
    """Train on the cache's training split"""
    repository = SampleRepository(args.cache_dir)
    config, preset = resolve_training(args, manifest, repository)
    repository.check()
    samples = load_split(repository, "train")
    if not samples:
        raise ValidationFailure(f"{args.cache_dir}: the training split is empty")
    result = TrainingService.run_experiment(config, samples, args.out_dir, resume_from=args.resume, preset=preset)
    report = write_report(f"{args.out_dir}/experiment.json", result)
    return [result.checkpoint, result.log_path, str(report)]
