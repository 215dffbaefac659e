import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from points2pix.config import settings
from points2pix.exceptions import MissingKeyError, ParameterError, ParseError
from points2pix.log import get_logger
from points2pix.models.discriminator import Discriminator
from points2pix.models.generator import Generator
from points2pix.repositories.checkpoint_repository import (
    load_checkpoint,
    save_checkpoint,
    strip_prefix,
    with_prefix,
)
from points2pix.schemas.training import NetworkPreset, TrainConfig
from points2pix.seeding import SeedStreams
from points2pix.tensor.optim import Adam

logger = get_logger(__name__)

POINT_BRANCH = "pointnet."


def condition_channels(config: TrainConfig) -> int:
    return 6 if config.compose_mode == "concat" else 3


class NetworkService:
    @staticmethod
    def load_preset(name: str, presets_file: Optional[str] = None) -> NetworkPreset:
        path = Path(presets_file or settings.PRESETS_FILE)
        try:
            presets = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(str(path), f"invalid JSON ({exc.msg})", offset=exc.pos) from exc
        if name not in presets:
            raise MissingKeyError(str(path), name)
        return NetworkPreset(name=name, **presets[name])

    @staticmethod
    def scale_border(preset: NetworkPreset, patch_border: int) -> NetworkPreset:
        """Preset whose c3 border matches a border given in full-patch pixels (15 px at 256 is 4 px at 64)."""
        border = max(1, round(patch_border * preset.resolution / settings.PATCH_SIZE))
        return preset.model_copy(update={"border_width": border})

    @staticmethod
    def build_generator(config: TrainConfig, preset: NetworkPreset, streams: SeedStreams) -> Generator:
        return Generator(
            preset,
            streams.generator("init", 0),
            variant=config.variant,
            in_channels=condition_channels(config),
            dropout_p=config.dropout_p,
            dropout_at_inference=config.dropout_at_inference,
            input_transform=config.input_transform,
            num_points=config.num_points,
        )

    @staticmethod
    def build_discriminator(config: TrainConfig, preset: NetworkPreset, streams: SeedStreams) -> Discriminator:
        return Discriminator(
            preset,
            streams.generator("init", 1),
            conditional=config.conditional_discriminator,
            condition_channels=condition_channels(config),
            norm=config.discriminator_norm,
        )

    @staticmethod
    def generator_arrays(generator: Generator) -> Dict[str, np.ndarray]:
        """Image branch under `generator/`, point branch under `pointnet/` (absent for unet_only)."""
        state = generator.state_dict()
        image_branch = {k: v for k, v in state.items() if not k.startswith(POINT_BRANCH)}
        point_branch = {k[len(POINT_BRANCH):]: v for k, v in state.items() if k.startswith(POINT_BRANCH)}
        arrays = with_prefix("generator", image_branch)
        arrays.update(with_prefix("pointnet", point_branch))
        return arrays

    @staticmethod
    def load_generator_arrays(generator: Generator, arrays: Dict[str, np.ndarray]) -> None:
        state = strip_prefix("generator", arrays)
        state.update({POINT_BRANCH + k: v for k, v in strip_prefix("pointnet", arrays).items()})
        generator.load_state_dict(state)

    @staticmethod
    def save_training_state(path, generator: Generator, discriminator: Discriminator,
                            g_opt: Adam, d_opt: Adam, metadata: Dict[str, Any]) -> Path:
        arrays = NetworkService.generator_arrays(generator)
        arrays.update(with_prefix("discriminator", discriminator.state_dict()))
        arrays.update(g_opt.state.state_dict(prefix="optim/generator/"))
        arrays.update(d_opt.state.state_dict(prefix="optim/discriminator/"))
        return save_checkpoint(path, arrays, metadata)

    @staticmethod
    def restore_training_state(path, generator: Generator, discriminator: Discriminator,
                               g_opt: Adam, d_opt: Adam) -> Dict[str, Any]:
        arrays, metadata = load_checkpoint(path)
        NetworkService.load_generator_arrays(generator, arrays)
        discriminator.load_state_dict(strip_prefix("discriminator", arrays))
        g_opt.state.load_state_dict(arrays, prefix="optim/generator/")
        d_opt.state.load_state_dict(arrays, prefix="optim/discriminator/")
        for opt in (g_opt, d_opt):
            for p in opt.params:
                p.grad = None
        return metadata

    @staticmethod
    def load_generator(path) -> Tuple[Generator, TrainConfig, NetworkPreset, Dict[str, Any]]:
        """Trained generator plus the config and preset it was built with."""
        arrays, metadata = load_checkpoint(path)
        for key in ("config", "preset"):
            if key not in metadata:
                raise MissingKeyError(str(path), f"metadata.{key}")
        config = TrainConfig(**metadata["config"])
        preset = NetworkPreset(**metadata["preset"])
        generator = NetworkService.build_generator(config, preset, SeedStreams(config.seed))
        NetworkService.load_generator_arrays(generator, arrays)
        has_points = any(name.startswith("pointnet/") for name in arrays)
        if has_points != (config.variant != "unet_only"):
            raise ParameterError("checkpoint", f"point branch presence does not match variant {config.variant}")
        logger.info(f"Loaded {config.variant} generator from {path} (step {metadata.get('step')})")
        return generator, config, preset, metadata
