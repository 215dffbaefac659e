import argparse
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List

from points2pix.config import settings
from points2pix.exceptions import ValidationFailure
from points2pix.log import get_logger
from points2pix.repositories.detection_repository import write_detections, write_image_index
from points2pix.repositories.image_repository import read_png
from points2pix.schemas.manifest import RunManifest
from points2pix.services.detector_service import DEFAULT_CLASSES, DetectorService, color_map

logger = get_logger(__name__)

DETECTIONS_FILE = "detections.jsonl"


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("detect", help="Run the colour-blob detector over a directory of PNGs")
    parser.add_argument("image_dir")
    parser.add_argument("--out", dest="out_dir", required=True)
    parser.add_argument("--classes", nargs="+", default=list(DEFAULT_CLASSES))
    parser.set_defaults(handler=cmd_detect, inputs=lambda a: [a.image_dir])
    return parser


def cmd_detect(args: argparse.Namespace, manifest: RunManifest) -> List[str]:
    """One DetectionRecord line per blob plus an index of every image id (the file stem)"""
    images = sorted(Path(args.image_dir).glob("*.png"))
    if not images:
        raise ValidationFailure(f"{args.image_dir}: no PNG images to detect on")
    colors = color_map(args.classes)
    manifest.resolved_config = {"classes": sorted(colors)}

    def detect_one(path: Path):
        return DetectorService.blob_detector(read_png(path), colors, image_id=path.stem)

    # map keeps file order, so the output does not depend on POINTS2PIX_THREADS
    with ThreadPoolExecutor(max_workers=settings.THREADS) as pool:
        records = [record for found in pool.map(detect_one, images) for record in found]
    out = write_detections(Path(args.out_dir) / DETECTIONS_FILE, records)
    index = write_image_index(out, [path.stem for path in images])
    logger.info(f"{len(records)} detections in {len(images)} images")
    return [str(out), str(index)]
