from collections import defaultdict
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from points2pix.config import settings
from points2pix.exceptions import ParameterError
from points2pix.log import get_logger
from points2pix.schemas.metrics import (
    Box,
    DetectionRecord,
    DiversityResult,
    EvalPair,
    InceptionResult,
    MetricReport,
    PairIoU,
    ScoreResult,
)

logger = get_logger(__name__)

BACKGROUND_SEPARATOR = "__bg"


def base_image_id(image_id: str) -> str:
    """Strip the background suffix from generated ids (`<sample>__bg03` -> `<sample>`)."""
    return image_id.split(BACKGROUND_SEPARATOR, 1)[0]


def _check_threshold(threshold: float) -> None:
    if not 0.0 <= threshold <= 1.0:
        raise ParameterError("confidence_threshold", f"must lie in [0, 1], got {threshold}")


def best_detection(detections: Iterable[DetectionRecord], target_class: str,
                   threshold: float) -> Optional[DetectionRecord]:
    """Highest-confidence target-class detection at or above the threshold (first wins ties)."""
    best = None
    for det in detections:
        if det.object_class != target_class or det.confidence < threshold:
            continue
        if best is None or det.confidence > best.confidence:
            best = det
    return best


class MetricsService:
    @staticmethod
    def box_iou(a: Box, b: Box) -> float:
        ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
        iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
        intersection = ix * iy
        if intersection == 0.0:
            return 0.0
        area_a = (a[2] - a[0]) * (a[3] - a[1])
        area_b = (b[2] - b[0]) * (b[3] - b[1])
        return intersection / (area_a + area_b - intersection)

    @staticmethod
    def classification_score(pairs: Sequence[EvalPair], confidence_threshold: float) -> ScoreResult:
        """S_c = TP_fake / TP_real; undefined (not 0) when no real image detects the class."""
        _check_threshold(confidence_threshold)
        tp_fake = tp_real = 0
        for pair in pairs:
            if best_detection(pair.real_detections, pair.target_class, confidence_threshold) is not None:
                tp_real += 1
            if best_detection(pair.fake_detections, pair.target_class, confidence_threshold) is not None:
                tp_fake += 1
        if tp_real == 0:
            return ScoreResult(threshold=confidence_threshold, value=None, status="undefined",
                               tp_fake=tp_fake, tp_real=0)
        return ScoreResult(threshold=confidence_threshold, value=tp_fake / tp_real,
                           tp_fake=tp_fake, tp_real=tp_real)

    @staticmethod
    def classification_curve(pairs: Sequence[EvalPair], thresholds: Sequence[float]) -> List[ScoreResult]:
        return [MetricsService.classification_score(pairs, t) for t in thresholds]

    @staticmethod
    def inception_score(pairs: Sequence[EvalPair], confidence_threshold: float) -> InceptionResult:
        """Mean IoU of best fake vs best real box over pairs where both sides detect."""
        _check_threshold(confidence_threshold)
        table: List[PairIoU] = []
        for pair in pairs:
            real = best_detection(pair.real_detections, pair.target_class, confidence_threshold)
            fake = best_detection(pair.fake_detections, pair.target_class, confidence_threshold)
            if real is None or fake is None:
                continue
            table.append(PairIoU(image_id=pair.image_id, iou=MetricsService.box_iou(fake.box, real.box),
                                 real_box=real.box, fake_box=fake.box))
        if not table:
            return InceptionResult(threshold=confidence_threshold, status="undefined")
        mean = sum(row.iou for row in table) / len(table)
        return InceptionResult(threshold=confidence_threshold, mean_iou=mean, qualifying=len(table), table=table)

    @staticmethod
    def diversity_from_detections(real_detections: Sequence[DetectionRecord],
                                  fake_detections: Mapping[str, Optional[Sequence[DetectionRecord]]],
                                  target_class: str, confidence_threshold: float) -> DiversityResult:
        """Scores over fakes of one cloud that differ only in background.

        A None entry in `fake_detections` marks a fake without a detector
        result; it is reported as a gap and left out of the means.
        """
        gaps = sorted(fake_id for fake_id, dets in fake_detections.items() if dets is None)
        pairs = [
            EvalPair(image_id=fake_id, target_class=target_class,
                     real_detections=list(real_detections), fake_detections=list(dets))
            for fake_id, dets in sorted(fake_detections.items()) if dets is not None
        ]
        score = MetricsService.classification_score(pairs, confidence_threshold)
        inception = MetricsService.inception_score(pairs, confidence_threshold)
        if gaps:
            logger.warning(f"{len(gaps)} fakes have no detector output: {gaps[:5]}")
        return DiversityResult(
            threshold=confidence_threshold,
            mean_score=score.value,
            mean_iou=inception.mean_iou,
            score_status=score.status,
            iou_status=inception.status,
            fakes=len(pairs),
            gaps=gaps,
        )

    @staticmethod
    def pair_detections(real: Sequence[DetectionRecord], fake: Sequence[DetectionRecord], target_class: str,
                        real_ids: Optional[Iterable[str]] = None,
                        fake_ids: Optional[Iterable[str]] = None) -> Tuple[List[EvalPair], List[str]]:
        """EvalPairs over every real image; fake ids with no real counterpart come back as mismatches.

        Detection files only list images with at least one blob, so `real_ids` and
        `fake_ids` carry the full image indexes. Without a real index every fake
        base id is taken to be a real image, detected or not. Generated ids
        carrying a background suffix pair with their base id, one pair per fake image.
        """
        real_by_id: Dict[str, List[DetectionRecord]] = defaultdict(list)
        for det in real:
            real_by_id[det.image_id].append(det)
        fake_by_id: Dict[str, List[DetectionRecord]] = defaultdict(list)
        for det in fake:
            fake_by_id[det.image_id].append(det)

        all_fakes = set(fake_by_id) | set(fake_ids or ())
        all_reals = set(real_by_id) | set(real_ids or ())
        if real_ids is None:
            all_reals |= {base_image_id(fid) for fid in all_fakes}

        mismatched = sorted(fid for fid in all_fakes if base_image_id(fid) not in all_reals)
        fakes_for_real: Dict[str, List[str]] = defaultdict(list)
        for fid in sorted(all_fakes):
            if base_image_id(fid) in all_reals:
                fakes_for_real[base_image_id(fid)].append(fid)

        pairs = []
        for rid in sorted(all_reals):
            for fid in fakes_for_real.get(rid) or [rid]:
                pairs.append(EvalPair(image_id=fid, target_class=target_class,
                                      real_detections=real_by_id.get(rid, []),
                                      fake_detections=fake_by_id.get(fid, [])))
        return pairs, mismatched

    @staticmethod
    def build_metric_report(real: Sequence[DetectionRecord], fake: Sequence[DetectionRecord],
                            target_class: str, thresholds: Sequence[float] = tuple(settings.DEFAULT_THRESHOLDS),
                            diversity: bool = False, real_ids: Optional[Iterable[str]] = None,
                            fake_ids: Optional[Iterable[str]] = None) -> MetricReport:
        """S_c curve and inception table per threshold, plus a diversity table when asked."""
        warnings: List[str] = []
        if not fake:
            warnings.append("fake detection set is empty; every fake counts as a miss")
            logger.warning(warnings[-1])
        pairs, mismatched = MetricsService.pair_detections(real, fake, target_class, real_ids, fake_ids)
        if mismatched:
            warnings.append(f"{len(mismatched)} fake ids have no real counterpart and were excluded")
            logger.warning(warnings[-1])

        diversity_rows = None
        if diversity:
            real_by_id: Dict[str, List[DetectionRecord]] = defaultdict(list)
            for det in real:
                real_by_id[det.image_id].append(det)
            groups: Dict[str, Dict[str, List[DetectionRecord]]] = defaultdict(dict)
            for pair in pairs:
                if BACKGROUND_SEPARATOR in pair.image_id:
                    groups[base_image_id(pair.image_id)][pair.image_id] = pair.fake_detections
            diversity_rows = []
            for t in thresholds:
                per_sample = [
                    MetricsService.diversity_from_detections(real_by_id[rid], fakes, target_class, t)
                    for rid, fakes in sorted(groups.items())
                ]
                diversity_rows.append(MetricsService.average_diversity(per_sample, t))

        return MetricReport(
            target_class=target_class,
            thresholds=list(thresholds),
            classification=MetricsService.classification_curve(pairs, thresholds),
            inception=[MetricsService.inception_score(pairs, t) for t in thresholds],
            diversity=diversity_rows,
            pairs=len(pairs),
            mismatched_ids=mismatched,
            excluded=len(mismatched),
            warnings=warnings,
            reference_scores=settings.REFERENCE_SCORES,
        )

    @staticmethod
    def average_diversity(results: Sequence[DiversityResult], threshold: float) -> DiversityResult:
        """Mean over samples of the defined per-sample scores."""
        scores = [r.mean_score for r in results if r.mean_score is not None]
        ious = [r.mean_iou for r in results if r.mean_iou is not None]
        return DiversityResult(
            threshold=threshold,
            mean_score=sum(scores) / len(scores) if scores else None,
            mean_iou=sum(ious) / len(ious) if ious else None,
            score_status="ok" if scores else "undefined",
            iou_status="ok" if ious else "undefined",
            fakes=sum(r.fakes for r in results),
            gaps=[g for r in results for g in r.gaps],
        )
