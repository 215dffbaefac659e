"""Alternating discriminator/generator optimization and the experiment drivers built on it."""
import json
import math
import time
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from points2pix.config import settings
from points2pix.exceptions import (
    NonFiniteError,
    NonFiniteGradientError,
    ParameterError,
    PartialResultsError,
    ShapeError,
    TrainingDivergedError,
)
from points2pix.log import get_logger
from points2pix.models.discriminator import Discriminator
from points2pix.models.generator import Generator
from points2pix.repositories.image_repository import from_network_range, write_png
from points2pix.repositories.detection_repository import write_report
from points2pix.schemas.dataio import ObjectSample
from points2pix.schemas.metrics import EvalPair
from points2pix.schemas.training import (
    AblationReport,
    AblationRow,
    ExperimentResult,
    NetworkPreset,
    RotationResult,
    TrainConfig,
    TrainLogRecord,
)
from points2pix.seeding import SeedStreams
from points2pix.services.detector_service import DetectorService, color_map
from points2pix.services.generation_service import GenerationService, NetworkExample
from points2pix.services.geometry_service import GeometryService
from points2pix.services.metrics_service import MetricsService
from points2pix.services.network_service import NetworkService
from points2pix.tensor import functional as F
from points2pix.tensor.optim import Adam
from points2pix.tensor.tensor import Tensor, default_dtype, no_grad

logger = get_logger(__name__)

LOG_FILE = "train_log.jsonl"
TIMING_FILE = "timing.jsonl"
VARIANTS = ("full", "unet_only", "pointnet_only")


class DiscriminatorLoss(NamedTuple):
    total: Tensor
    real: Tensor
    fake: Tensor
    clamped: int


class GeneratorLoss(NamedTuple):
    total: Tensor
    adv: Tensor
    l1: Tensor
    clamped: int


def _clamp_scores(scores: Tensor, eps: float = settings.SCORE_EPSILON) -> Tuple[Tensor, int]:
    clamped = int(np.count_nonzero((scores.data < eps) | (scores.data > 1.0 - eps)))
    return F.clamp(scores, eps, 1.0 - eps), clamped


def _stack(examples: Sequence[NetworkExample]) -> Tuple[Tensor, np.ndarray, Tensor]:
    images = Tensor(np.stack([e.image for e in examples]), dtype=default_dtype())
    points = np.stack([e.points for e in examples])
    targets = Tensor(np.stack([e.target for e in examples]), dtype=default_dtype())
    return images, points, targets


class TrainingService:
    @staticmethod
    def discriminator_loss(real_scores: Tensor, fake_scores: Tensor) -> DiscriminatorLoss:
        """-mean(log D(real)) - mean(log(1 - D(fake))); scores within 1e-7 of 0 or 1 are clamped and counted."""
        real, real_clamped = _clamp_scores(real_scores)
        fake, fake_clamped = _clamp_scores(fake_scores)
        real_term = -F.log(real).mean()
        fake_term = -F.log(1.0 - fake).mean()
        return DiscriminatorLoss(real_term + fake_term, real_term, fake_term, real_clamped + fake_clamped)

    @staticmethod
    def generator_loss(fake_scores: Tensor, fake_image: Tensor, real_image, lambda_l1: float,
                       literal_minimax: bool = False) -> GeneratorLoss:
        """adv + lambda_l1 * mean|y - G|, adv added first.

        adv is the non-saturating -mean(log D(fake)); with `literal_minimax` it
        is mean(log(1 - D(fake))) instead.
        """
        if lambda_l1 < 0:
            raise ParameterError("lambda_l1", f"must be non-negative, got {lambda_l1}")
        real_image = real_image if isinstance(real_image, Tensor) else Tensor(real_image, dtype=fake_image.dtype)
        if fake_image.shape != real_image.shape:
            raise ShapeError("generator_loss", f"fake {fake_image.shape} vs real {real_image.shape}")
        scores, clamped = _clamp_scores(fake_scores)
        adv = F.log(1.0 - scores).mean() if literal_minimax else -F.log(scores).mean()
        l1 = F.abs(real_image - fake_image).mean()
        return GeneratorLoss(adv + l1 * lambda_l1, adv, l1, clamped)

    @staticmethod
    def train_step(examples: Sequence[NetworkExample], generator: Generator, discriminator: Discriminator,
                   g_opt: Adam, d_opt: Adam, config: TrainConfig, step: int, epoch: int = 0,
                   dropout_rng: Optional[np.random.Generator] = None,
                   last_checkpoint: Optional[str] = None) -> TrainLogRecord:
        """One D update on real and detached fakes, then one G update through the updated D."""
        images, points, targets = _stack(examples)
        condition = images if config.conditional_discriminator else None
        rng = dropout_rng if dropout_rng is not None else SeedStreams(config.seed).generator("dropout", step)
        try:
            fake = generator(images, points, rng=rng)

            d_opt.zero_grad()
            d_loss = TrainingService.discriminator_loss(discriminator(targets, condition),
                                                        discriminator(fake.detach(), condition))
            d_loss.total.backward()
            d_opt.step()

            g_opt.zero_grad()
            g_loss = TrainingService.generator_loss(discriminator(fake, condition), fake, targets,
                                                    config.lambda_l1, config.literal_minimax)
            g_loss.total.backward()
            g_opt.step()
        except (NonFiniteError, NonFiniteGradientError) as exc:
            logger.error(f"Step {step} diverged: {exc.detail}")
            raise TrainingDivergedError(step, last_checkpoint) from exc

        values = [t.item() for t in (d_loss.real, d_loss.fake, g_loss.adv, g_loss.l1)]
        if not all(math.isfinite(v) for v in values):
            raise TrainingDivergedError(step, last_checkpoint)
        clamped = d_loss.clamped + g_loss.clamped
        if clamped:
            logger.warning(f"Step {step}: {clamped} discriminator scores clamped away from 0/1")
        return TrainLogRecord(step=step, epoch=epoch, loss_D_real=values[0], loss_D_fake=values[1],
                              loss_G_adv=values[2], loss_G_l1=values[3], clamped_scores=clamped)

    @staticmethod
    def epoch_batches(num_examples: int, batch_size: int, epoch: int, streams: SeedStreams) -> List[np.ndarray]:
        """Index batches of one epoch; the order comes from the `data_order` stream keyed by epoch."""
        order = streams.generator("data_order", epoch).permutation(num_examples)
        return [order[i:i + batch_size] for i in range(0, num_examples, batch_size)]

    @staticmethod
    def run_experiment(config: TrainConfig, dataset: Sequence[ObjectSample], out_dir,
                       resume_from: Optional[str] = None, preset: Optional[NetworkPreset] = None) -> ExperimentResult:
        """Epoch loop with deterministic shuffling, periodic checkpoints and fake dumps.

        The JSON-lines log holds one TrainLogRecord per step without wall-clock
        time, so identical seeds give identical files; timings go to a
        separate file.
        """
        if not dataset:
            raise ParameterError("dataset", "training needs at least one sample")
        out_dir = Path(out_dir)
        preset = preset or NetworkService.load_preset(config.preset)
        streams = SeedStreams(config.seed)
        samples = sorted(dataset, key=lambda s: s.sample_id)
        examples = [GenerationService.prepare_example(s, preset, config) for s in samples]

        generator = NetworkService.build_generator(config, preset, streams)
        discriminator = NetworkService.build_discriminator(config, preset, streams)
        logger.info(f"Generator ({config.variant}): {generator.parameter_count()} parameters; "
                    f"discriminator: {discriminator.parameter_count()}")
        constants = dict(lr=config.lr, beta1=config.beta1, beta2=config.beta2, epsilon=config.epsilon)
        g_opt = Adam(generator.parameters(), **constants)
        d_opt = Adam(discriminator.parameters(), **constants)
        generator.train()
        discriminator.train()

        step = 0
        if resume_from is not None:
            metadata = NetworkService.restore_training_state(resume_from, generator, discriminator, g_opt, d_opt)
            step = int(metadata.get("step", 0))
            if metadata.get("num_samples") != len(examples):
                raise ParameterError("resume", f"checkpoint was trained on {metadata.get('num_samples')} samples, "
                                               f"dataset has {len(examples)}")
            logger.info(f"Resuming from {resume_from} at step {step + 1}")

        written: List[str] = []
        last_checkpoint = resume_from
        steps_per_epoch = math.ceil(len(examples) / config.batch_size)
        total_steps = config.epochs * steps_per_epoch
        if config.max_steps is not None:
            total_steps = min(total_steps, config.max_steps)

        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            log_path = out_dir / LOG_FILE
            timing_path = out_dir / TIMING_FILE
            TrainingService._truncate_log(log_path, step)
            TrainingService._truncate_log(timing_path, step)
            written += [str(log_path), str(timing_path)]

            def checkpoint(at_step: int, epoch: int) -> str:
                path = out_dir / "checkpoints" / f"step_{at_step:06d}.ckpt"
                metadata = {
                    "step": at_step,
                    "epoch": epoch,
                    "num_samples": len(examples),
                    "variant": config.variant,
                    "config": config.model_dump(mode="json"),
                    "preset": preset.model_dump(mode="json"),
                }
                NetworkService.save_training_state(path, generator, discriminator, g_opt, d_opt, metadata)
                written.append(str(path))
                return str(path)

            with log_path.open("a", encoding="utf-8") as log, timing_path.open("a", encoding="utf-8") as timing:
                while step < total_steps:
                    epoch = step // steps_per_epoch
                    batches = TrainingService.epoch_batches(len(examples), config.batch_size, epoch, streams)
                    for batch in batches[step % steps_per_epoch:]:
                        if step >= total_steps:
                            break
                        step += 1
                        started = time.perf_counter()
                        record = TrainingService.train_step(
                            [examples[i] for i in batch], generator, discriminator, g_opt, d_opt, config,
                            step=step, epoch=epoch, dropout_rng=streams.generator("dropout", step),
                            last_checkpoint=last_checkpoint,
                        )
                        log.write(json.dumps(record.log_line(), sort_keys=True) + "\n")
                        timing.write(json.dumps({"step": step, "wallclock": time.perf_counter() - started}) + "\n")
                        logger.debug(f"step {step}: {record.log_line()}")
                        if config.checkpoint_every and step % config.checkpoint_every == 0:
                            log.flush()
                            last_checkpoint = checkpoint(step, epoch)

                    epoch_done = step % steps_per_epoch == 0 or step == total_steps
                    if not epoch_done:
                        continue
                    completed = math.ceil(step / steps_per_epoch)
                    logger.info(f"Epoch {completed}/{config.epochs} done at step {step}")
                    if not config.checkpoint_every:
                        log.flush()
                        last_checkpoint = checkpoint(step, completed)
                    last = step == total_steps
                    if last or (config.sample_every and completed % config.sample_every == 0):
                        written += TrainingService.dump_fakes(generator, examples, config,
                                                              out_dir / "fakes" / f"epoch_{completed:03d}")

            if last_checkpoint is None or not last_checkpoint.endswith(f"step_{step:06d}.ckpt"):
                last_checkpoint = checkpoint(step, math.ceil(step / steps_per_epoch))
            mean_l1 = GenerationService.mean_l1(generator, examples, config)
        except OSError as exc:
            raise PartialResultsError(f"training output failed: {exc}", written=written,
                                      gaps=[str(out_dir)]) from exc

        logger.info(f"Training finished after {step} steps; mean L1 {mean_l1:.4f}")
        return ExperimentResult(
            checkpoint=last_checkpoint,
            log_path=str(log_path),
            steps=step,
            epochs_completed=math.ceil(step / steps_per_epoch),
            mean_l1=mean_l1,
            fake_dir=str(out_dir / "fakes"),
        )

    @staticmethod
    def _truncate_log(path: Path, step: int) -> None:
        """Keep the records of steps 1..step so a resumed run appends where it left off."""
        if not path.exists():
            return
        kept = [line for line in path.read_text(encoding="utf-8").splitlines()
                if line.strip() and json.loads(line)["step"] <= step]
        path.write_text("".join(line + "\n" for line in kept), encoding="utf-8")

    @staticmethod
    def dump_fakes(generator: Generator, examples: Sequence[NetworkExample], config: TrainConfig,
                   directory: Path, limit: int = 8) -> List[str]:
        was_training = generator.training
        generator.eval()
        paths = []
        try:
            for example in examples[:limit]:
                image = GenerationService.generate_image(generator, example, config)
                paths.append(str(write_png(directory / f"{example.sample_id}.png", image)))
        finally:
            generator.train(was_training)
        return paths

    @staticmethod
    def rotation_demo(sample: ObjectSample, generator: Generator, preset: NetworkPreset, config: TrainConfig,
                      axis: str, degrees: float) -> RotationResult:
        """Fakes before and after rotating the cloud behind c2 about the object origin; c1 is left untouched."""
        generator.eval()
        original = GenerationService.condition_triple(sample, preset, config)
        rotated_cloud = GeometryService.rotate_points(sample.cloud, axis, degrees, origin=sample.origin)
        rotated = GenerationService.condition_triple(sample, preset, config, cloud=rotated_cloud)

        original_example = GenerationService.example_from_triple(sample, original, config)
        rotated_example = GenerationService.example_from_triple(sample, rotated, config)
        fake_original = GenerationService.generate_image(generator, original_example, config)
        fake_rotated = GenerationService.generate_image(generator, rotated_example, config)

        feature_diff = None
        if generator.pointnet is not None:
            with no_grad():
                before = generator.pointnet(original.c1.points).data
                after = generator.pointnet(rotated.c1.points).data
            feature_diff = float(np.max(np.abs(before - after)))
        changed_c2 = int(np.count_nonzero(np.any(original.c2.pixels != rotated.c2.pixels, axis=2)))
        changed_fake = int(np.count_nonzero(np.any(fake_original != fake_rotated, axis=2)))
        logger.info(f"Rotation {axis} {degrees}°: {changed_c2} c2 pixels and {changed_fake} output pixels changed")
        return RotationResult(
            axis=axis,
            degrees=degrees,
            original=fake_original,
            rotated=fake_rotated,
            c2_original=original.c2,
            c2_rotated=rotated.c2,
            changed_c2_pixels=changed_c2,
            changed_output_pixels=changed_fake,
            c1_feature_max_diff=feature_diff,
        )

    @staticmethod
    def score_fakes(generator: Generator, samples: Sequence[ObjectSample], preset: NetworkPreset,
                    config: TrainConfig, thresholds: Sequence[float]) -> Tuple[Dict[str, Optional[float]],
                                                                               Dict[str, Optional[float]], float]:
        """Blob-detector S_c and IoU per threshold plus mean L1 for the fakes of `samples`."""
        generator.eval()
        classes = sorted({s.object_class for s in samples})
        colors = color_map(classes)
        examples = [GenerationService.prepare_example(s, preset, config) for s in samples]
        pairs: Dict[str, List[EvalPair]] = {c: [] for c in classes}
        for sample, example in zip(samples, examples):
            real = from_network_range(example.target.transpose(1, 2, 0))
            fake = GenerationService.generate_image(generator, example, config)
            pairs[sample.object_class].append(EvalPair(
                image_id=sample.sample_id,
                target_class=sample.object_class,
                real_detections=DetectorService.blob_detector(real, colors, image_id=sample.sample_id),
                fake_detections=DetectorService.blob_detector(fake, colors, image_id=sample.sample_id),
            ))
        all_pairs = [p for c in classes for p in pairs[c]]
        classification = {f"{t:g}": MetricsService.classification_score(all_pairs, t).value for t in thresholds}
        inception = {f"{t:g}": MetricsService.inception_score(all_pairs, t).mean_iou for t in thresholds}
        return classification, inception, GenerationService.mean_l1(generator, examples, config)

    @staticmethod
    def run_ablation(config: TrainConfig, train: Sequence[ObjectSample], evaluation: Sequence[ObjectSample],
                     out_dir, thresholds: Sequence[float] = tuple(settings.DEFAULT_THRESHOLDS),
                     variants: Sequence[str] = VARIANTS, preset: Optional[NetworkPreset] = None) -> AblationReport:
        """Train every variant on the same data and seed, then score each on the eval samples."""
        out_dir = Path(out_dir)
        preset = preset or NetworkService.load_preset(config.preset)
        scored = evaluation or train
        rows = []
        for variant in variants:
            variant_config = config.model_copy(update={"variant": variant})
            result = TrainingService.run_experiment(variant_config, train, out_dir / variant, preset=preset)
            generator, _, _, _ = NetworkService.load_generator(result.checkpoint)
            classification, inception, mean_l1 = TrainingService.score_fakes(generator, scored, preset,
                                                                              variant_config, thresholds)
            rows.append(AblationRow(variant=variant, mean_l1=mean_l1, classification=classification,
                                    inception=inception, checkpoint=result.checkpoint))
            logger.info(f"Ablation {variant}: mean L1 {mean_l1:.4f}, S_c {classification}")

        report = AblationReport(thresholds=list(thresholds), rows=rows)
        write_report(out_dir / "ablation.json", report)
        (out_dir / "ablation.txt").write_text(format_ablation(report), encoding="utf-8")
        return report


def format_ablation(report: AblationReport) -> str:
    def cell(value: Optional[float]) -> str:
        return "undef" if value is None else f"{value:.3f}"

    keys = [f"{t:g}" for t in report.thresholds]
    header = ["variant", "mean_L1"] + [f"S_c@{k}" for k in keys] + [f"IoU@{k}" for k in keys]
    lines = ["\t".join(header)]
    for row in report.rows:
        cells = [row.variant, f"{row.mean_l1:.4f}"]
        cells += [cell(row.classification.get(k)) for k in keys]
        cells += [cell(row.inception.get(k)) for k in keys]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
