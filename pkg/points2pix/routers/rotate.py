import argparse
import json
from pathlib import Path
from typing import List

from points2pix.repositories.image_repository import write_png
from points2pix.repositories.sample_repository import SampleRepository
from points2pix.schemas.manifest import RunManifest
from points2pix.services.network_service import NetworkService
from points2pix.services.training_service import TrainingService


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("rotate", help="Rotate the cloud behind c2 and compare the fakes")
    parser.add_argument("checkpoint")
    parser.add_argument("cache_dir")
    parser.add_argument("--sample", required=True)
    parser.add_argument("--axis", choices=["x", "y", "z"], default="y")
    parser.add_argument("--degrees", type=float, default=20.0)
    parser.add_argument("--out", dest="out_dir", required=True)
    parser.set_defaults(handler=cmd_rotate, inputs=lambda a: [a.checkpoint, a.cache_dir])
    return parser


def cmd_rotate(args: argparse.Namespace, manifest: RunManifest) -> List[str]:
    """Image pair plus a pixel-difference summary"""
    generator, config, preset, _ = NetworkService.load_generator(args.checkpoint)
    manifest.resolved_config = config.model_dump(mode="json")
    manifest.seed = config.seed
    sample = SampleRepository(args.cache_dir).load(args.sample)
    result = TrainingService.rotation_demo(sample, generator, preset, config, args.axis, args.degrees)

    out = Path(args.out_dir)
    outputs = [
        write_png(out / "original.png", result.original),
        write_png(out / "rotated.png", result.rotated),
        write_png(out / "c2_original.png", result.c2_original.as_rgb()),
        write_png(out / "c2_rotated.png", result.c2_rotated.as_rgb()),
    ]
    summary = out / "rotation_summary.json"
    summary.write_text(json.dumps(result.summary(), indent=2, sort_keys=True))
    return [str(p) for p in outputs + [summary]]
