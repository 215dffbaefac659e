import argparse
from pathlib import Path
from typing import List

from points2pix.log import get_logger
from points2pix.schemas.manifest import RunManifest
from points2pix.seeding import SeedStreams
from points2pix.services.preprocess_service import SCENES_DIR
from points2pix.services.synthetic_service import SyntheticService

logger = get_logger(__name__)


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("synth", help="Write random synthetic scene documents")
    parser.add_argument("--out", dest="out_dir", required=True, help="Dataset directory for preprocess")
    parser.add_argument("--scenes", type=int, default=16)
    parser.add_argument("--classes", nargs="+", default=["Car"])
    parser.add_argument("--max-objects", type=int, default=1)
    parser.add_argument("--distance", type=float, nargs=2, default=[7.0, 12.0], metavar=("NEAR", "FAR"))
    parser.add_argument("--points-per-object", type=int, default=2400)
    parser.add_argument("--seed", type=int, default=0)
    parser.set_defaults(handler=cmd_synth, inputs=lambda a: [])
    return parser


def cmd_synth(args: argparse.Namespace, manifest: RunManifest) -> List[str]:
    """One scene_NNNN.json per scene under <out>/scenes"""
    streams = SeedStreams(args.seed)
    scenes_dir = Path(args.out_dir) / SCENES_DIR
    scenes_dir.mkdir(parents=True, exist_ok=True)
    manifest.resolved_config = {k: v for k, v in vars(args).items() if k not in ("handler", "inputs")}
    outputs = []
    for index in range(args.scenes):
        scene_id = f"scene_{index:04d}"
        spec = SyntheticService.random_scene_spec(
            streams.integer("scene", index), scene_id=scene_id, classes=args.classes,
            max_objects=args.max_objects, distance=tuple(args.distance),
            points_per_object=args.points_per_object,
        )
        path = scenes_dir / f"{scene_id}.json"
        path.write_text(spec.model_dump_json(indent=2))
        outputs.append(str(path))
    logger.info(f"Wrote {len(outputs)} scene documents to {scenes_dir}")
    return outputs
