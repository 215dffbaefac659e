import argparse
from pathlib import Path
from typing import List

from points2pix.config import settings
from points2pix.log import get_logger
from points2pix.repositories.detection_repository import read_detections, read_image_index, write_report
from points2pix.schemas.manifest import RunManifest
from points2pix.services.metrics_service import MetricsService

logger = get_logger(__name__)

REPORT_FILE = "metric_report.json"


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("evaluate", help="Score fake against real detections")
    parser.add_argument("real_detections")
    parser.add_argument("fake_detections")
    parser.add_argument("--out", dest="out_dir", required=True)
    parser.add_argument("--class", dest="target_class", default=settings.KITTI_CLASSES[0])
    parser.add_argument("--thresholds", type=float, nargs="+", default=list(settings.DEFAULT_THRESHOLDS))
    parser.add_argument("--diversity", action="store_true", help="Add the per-sample background diversity table")
    parser.set_defaults(handler=cmd_evaluate, inputs=lambda a: [a.real_detections, a.fake_detections])
    return parser


def cmd_evaluate(args: argparse.Namespace, manifest: RunManifest) -> List[str]:
    """S_c curve, inception table and optional diversity table"""
    real = read_detections(args.real_detections)
    fake = read_detections(args.fake_detections)
    real_ids, fake_ids = read_image_index(args.real_detections), read_image_index(args.fake_detections)
    report = MetricsService.build_metric_report(real, fake, args.target_class, args.thresholds, args.diversity,
                                                real_ids=real_ids, fake_ids=fake_ids)
    manifest.resolved_config = {"target_class": args.target_class, "thresholds": args.thresholds,
                                "diversity": args.diversity, "image_index": real_ids is not None}
    path = write_report(Path(args.out_dir) / REPORT_FILE, report)
    for score in report.classification:
        logger.info(f"S_c@{score.threshold:g} = {score.value if score.value is not None else 'undefined'}")
    return [str(path)]
