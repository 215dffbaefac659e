import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from points2pix import __version__
from points2pix.config import settings
from points2pix.exceptions import PartialResultsError, Points2PixError, RuntimeFailure, ValidationFailure
from points2pix.log import LOG_FORMAT, get_logger
from points2pix.routers import ablate, detect, evaluate, generate, preprocess, rotate, synth, train
from points2pix.services.manifest_service import ManifestService
from points2pix.tensor import set_default_dtype

# Configure logging
logging.basicConfig(level=settings.LOG_LEVEL, format=LOG_FORMAT)
logger = get_logger(__name__)

ROUTERS = (preprocess, train, generate, evaluate, rotate, synth, ablate, detect)


class CommandLineParser(argparse.ArgumentParser):
    """Usage errors are validation failures (exit 1), not argparse's exit 2."""

    def error(self, message: str):
        raise ValidationFailure(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = CommandLineParser(
        prog="points2pix",
        description="Point clouds to images with a conditional GAN: preprocessing, training, generation and evaluation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for router in ROUTERS:
        router.add_parser(subparsers)
    return parser


# Global exception handler
def exception_handler(exc: Points2PixError) -> int:
    print(json.dumps(exc.to_dict()), file=sys.stderr)
    return exc.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except Points2PixError as exc:
        return exception_handler(exc)
    set_default_dtype(settings.PRECISION)

    manifest = ManifestService.start(args.command, argv, args.inputs(args), seed=getattr(args, "seed", None))
    outputs: List[str] = []
    exit_code, detail = 0, None
    try:
        outputs = args.handler(args, manifest)
    except PartialResultsError as exc:
        outputs = exc.written
        exit_code, detail = exception_handler(exc), exc.detail
    except Points2PixError as exc:
        exit_code, detail = exception_handler(exc), exc.detail
    except ValidationError as exc:
        failure = ValidationFailure(f"invalid configuration: {exc.errors()[0]['loc']}: {exc.errors()[0]['msg']}")
        exit_code, detail = exception_handler(failure), failure.detail
    except OSError as exc:
        failure = RuntimeFailure(f"I/O failure: {exc}")
        exit_code, detail = exception_handler(failure), failure.detail

    try:
        ManifestService.finish(manifest, args.out_dir, outputs, exit_code, detail)
    except OSError as exc:
        logger.error(f"Could not write the run manifest: {exc}")
        exit_code = exit_code or 2
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
