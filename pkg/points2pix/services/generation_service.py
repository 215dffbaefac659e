"""Network inputs from object samples, and inference with a trained generator."""
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from points2pix.exceptions import ParameterError
from points2pix.log import get_logger
from points2pix.models.generator import Generator
from points2pix.repositories.image_repository import from_network_range
from points2pix.schemas.dataio import ConditionTriple, ObjectSample
from points2pix.schemas.geometry import PointCloud
from points2pix.schemas.metrics import DetectionRecord, DiversityResult
from points2pix.schemas.training import NetworkPreset, TrainConfig
from points2pix.seeding import SeedStreams, stable_key
from points2pix.services.dataio_service import DataIOService, area_downsample, to_network_range
from points2pix.services.metrics_service import BACKGROUND_SEPARATOR, MetricsService
from points2pix.tensor.tensor import Tensor, default_dtype, no_grad

logger = get_logger(__name__)

Detector = Callable[[np.ndarray, str], Optional[List[DetectionRecord]]]


class NetworkExample(NamedTuple):
    sample_id: str
    image: np.ndarray   # C×H×W composite of c2 and c3, [-1, 1]
    points: np.ndarray  # n×3 object-centric c1
    target: np.ndarray  # 3×H×W ground truth, [-1, 1]


def fake_id(sample_id: str, index: int) -> str:
    return f"{sample_id}{BACKGROUND_SEPARATOR}{index:02d}"


class GenerationService:
    @staticmethod
    def condition_triple(sample: ObjectSample, preset: NetworkPreset, config: TrainConfig,
                         cloud: Optional[PointCloud] = None,
                         background: Optional[np.ndarray] = None) -> ConditionTriple:
        """c1 is drawn from the `sampling` stream keyed by sample id, so it never depends on c2 or c3."""
        rng = SeedStreams(config.seed).generator("sampling", stable_key(sample.sample_id))
        return DataIOService.build_condition_triple(
            sample, preset.resolution, preset.border_width, config.d_max,
            mode=config.projection_mode, num_points=config.num_points, rng=rng,
            cloud=cloud, background=background,
        )

    @staticmethod
    def example_from_triple(sample: ObjectSample, triple: ConditionTriple, config: TrainConfig) -> NetworkExample:
        composite = DataIOService.compose_generator_input(triple.c2, triple.c3, config.compose_mode)
        return NetworkExample(
            sample_id=sample.sample_id,
            image=to_network_range(composite),
            points=triple.c1.points,
            target=to_network_range(DataIOService.network_target(sample, triple.resolution)),
        )

    @staticmethod
    def prepare_example(sample: ObjectSample, preset: NetworkPreset, config: TrainConfig,
                        cloud: Optional[PointCloud] = None,
                        background: Optional[np.ndarray] = None) -> NetworkExample:
        triple = GenerationService.condition_triple(sample, preset, config, cloud, background)
        return GenerationService.example_from_triple(sample, triple, config)

    @staticmethod
    def dropout_rng(config: TrainConfig, sample_id: str) -> np.random.Generator:
        return SeedStreams(config.seed).generator("dropout", 0, stable_key(sample_id))

    @staticmethod
    def generate(generator: Generator, examples: Sequence[NetworkExample],
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """B×3×H×W fakes in [-1, 1]; no graph is recorded."""
        images = np.stack([e.image for e in examples])
        points = np.stack([e.points for e in examples])
        with no_grad():
            return generator(Tensor(images, dtype=default_dtype()), points, rng=rng).data

    @staticmethod
    def generate_image(generator: Generator, example: NetworkExample, config: TrainConfig) -> np.ndarray:
        """H×W×3 fake in [0, 1], dropout drawn from the sample's own stream."""
        fake = GenerationService.generate(generator, [example], GenerationService.dropout_rng(config, example.sample_id))
        return from_network_range(fake[0].transpose(1, 2, 0))

    @staticmethod
    def generate_with_backgrounds(generator: Generator, sample: ObjectSample, backgrounds: Sequence[np.ndarray],
                                  preset: NetworkPreset, config: TrainConfig,
                                  cloud: Optional[PointCloud] = None) -> Dict[str, np.ndarray]:
        """One fake per background patch; c1 and c2 and the dropout draw are shared by all of them."""
        base = GenerationService.condition_triple(sample, preset, config, cloud=cloud)
        fakes: Dict[str, np.ndarray] = {}
        for index, background in enumerate(backgrounds):
            c3 = DataIOService.extract_background_patch(area_downsample(background, preset.resolution),
                                                        preset.border_width)
            triple = ConditionTriple(c1=base.c1, c2=base.c2, c3=c3)
            example = GenerationService.example_from_triple(sample, triple, config)
            fakes[fake_id(sample.sample_id, index)] = GenerationService.generate_image(generator, example, config)
        return fakes

    @staticmethod
    def choose_backgrounds(pool: Sequence[str], sample_id: str, k: int, seed: int) -> List[str]:
        """k ids of other samples whose patches serve as c3, drawn from the `backgrounds` stream."""
        candidates = sorted(i for i in pool if i != sample_id)
        if k < 1:
            raise ParameterError("backgrounds", f"must be at least 1, got {k}")
        if len(candidates) < k:
            raise ParameterError("backgrounds", f"asked for {k} but the pool holds only {len(candidates)} patches")
        order = SeedStreams(seed).generator("backgrounds", stable_key(sample_id)).permutation(len(candidates))
        return [candidates[i] for i in order[:k]]

    @staticmethod
    def mean_l1(generator: Generator, examples: Sequence[NetworkExample], config: TrainConfig) -> float:
        """Mean |fake - real| over the examples, on the [-1, 1] scale the loss uses."""
        if not examples:
            raise ParameterError("examples", "mean L1 needs at least one example")
        was_training = generator.training
        generator.eval()
        try:
            total = 0.0
            for example in examples:
                fake = GenerationService.generate(generator, [example],
                                                  GenerationService.dropout_rng(config, example.sample_id))
                total += float(np.mean(np.abs(fake[0].astype(np.float64) - example.target)))
        finally:
            generator.train(was_training)
        return total / len(examples)

    @staticmethod
    def diversity_score(sample: ObjectSample, backgrounds: Sequence[np.ndarray], generator: Generator,
                        detector: Detector, threshold: float, preset: NetworkPreset,
                        config: TrainConfig) -> DiversityResult:
        """Mean S_c and IoU over fakes that differ only in c3, scored against the one real image.

        A detector returning None for a fake leaves a gap in the result instead
        of failing the whole sample.
        """
        generator.eval()
        fakes = GenerationService.generate_with_backgrounds(generator, sample, backgrounds, preset, config)
        real_image = DataIOService.network_target(sample, preset.resolution)
        real_detections = detector(real_image, sample.sample_id) or []
        fake_detections = {image_id: detector(image, image_id) for image_id, image in fakes.items()}
        return MetricsService.diversity_from_detections(real_detections, fake_detections,
                                                        sample.object_class, threshold)
