import argparse
from typing import List

from points2pix.log import get_logger
from points2pix.repositories.image_repository import write_png
from points2pix.repositories.sample_repository import SampleRepository
from points2pix.schemas.manifest import RunManifest
from points2pix.services.dataio_service import DataIOService
from points2pix.services.generation_service import GenerationService
from points2pix.services.geometry_service import GeometryService
from points2pix.services.network_service import NetworkService

logger = get_logger(__name__)


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("generate", help="Generate fakes with alternating background patches")
    parser.add_argument("checkpoint")
    parser.add_argument("cache_dir")
    parser.add_argument("--out", dest="out_dir", required=True)
    parser.add_argument("--sample", dest="samples", action="append", help="Sample id (repeatable; default: eval split)")
    parser.add_argument("--backgrounds", type=int, default=1, help="Fakes per sample, each with another c3")
    parser.add_argument("--seed", type=int, default=None, help="Overrides the training seed")
    parser.add_argument("--rotate-axis", choices=["x", "y", "z"], default=None)
    parser.add_argument("--rotate-degrees", type=float, default=0.0)
    parser.set_defaults(handler=cmd_generate, inputs=lambda a: [a.checkpoint, a.cache_dir])
    return parser


def cmd_generate(args: argparse.Namespace, manifest: RunManifest) -> List[str]:
    """Write k fakes per sample (fake/<id>__bgNN.png) and the real patch (real/<id>.png)"""
    generator, config, preset, _ = NetworkService.load_generator(args.checkpoint)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    manifest.resolved_config = config.model_dump(mode="json")
    manifest.seed = config.seed
    generator.eval()

    repository = SampleRepository(args.cache_dir)
    repository.check()
    pool = repository.ids()
    ids = args.samples or repository.split_ids("eval") or pool
    outputs = []
    for sample_id in ids:
        sample = repository.load(sample_id)
        chosen = GenerationService.choose_backgrounds(pool, sample_id, args.backgrounds, config.seed)
        backgrounds = [repository.load_patch(i) for i in chosen]
        cloud = None
        if args.rotate_axis is not None:
            cloud = GeometryService.rotate_points(sample.cloud, args.rotate_axis, args.rotate_degrees,
                                                  origin=sample.origin)
        fakes = GenerationService.generate_with_backgrounds(generator, sample, backgrounds, preset, config,
                                                            cloud=cloud)
        for image_id, image in fakes.items():
            outputs.append(str(write_png(f"{args.out_dir}/fake/{image_id}.png", image)))
        real = DataIOService.network_target(sample, preset.resolution)
        outputs.append(str(write_png(f"{args.out_dir}/real/{sample_id}.png", real)))
    logger.info(f"Wrote {args.backgrounds} fakes for each of {len(ids)} samples to {args.out_dir}")
    return outputs
