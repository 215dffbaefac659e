"""Colour-blob detector for synthetic scenes whose classes have distinct albedo hues."""
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy import ndimage

from points2pix.config import settings
from points2pix.schemas.metrics import DetectionRecord

# 8-connectivity
_STRUCTURE = np.ones((3, 3), dtype=bool)
DEFAULT_CLASSES = ("Car", "Pedestrian", "Cyclist")


def color_map(classes) -> Dict[str, Tuple[float, float, float]]:
    return {c: settings.CLASS_COLORS[c] for c in classes if c in settings.CLASS_COLORS}


def _chroma(pixels: np.ndarray) -> np.ndarray:
    return pixels - pixels.mean(axis=-1, keepdims=True)


class DetectorService:
    @staticmethod
    def class_mask(image: np.ndarray, color: Tuple[float, float, float],
                   min_cosine: float = settings.DETECTOR_MIN_COSINE,
                   min_chroma: float = settings.DETECTOR_MIN_CHROMA) -> np.ndarray:
        """Pixels whose hue direction matches `color` and whose chroma clears the brightness gate.

        Chroma is the pixel minus its channel mean, so shading changes the
        magnitude but not the direction.
        """
        pixel_chroma = _chroma(np.asarray(image, dtype=np.float64)[..., :3])
        class_chroma = _chroma(np.asarray(color, dtype=np.float64))
        magnitude = np.linalg.norm(pixel_chroma, axis=-1)
        reference = np.linalg.norm(class_chroma)
        if reference == 0.0:
            return np.zeros(magnitude.shape, dtype=bool)
        with np.errstate(divide="ignore", invalid="ignore"):
            cosine = (pixel_chroma @ class_chroma) / (magnitude * reference)
        return (magnitude >= min_chroma) & (np.nan_to_num(cosine, nan=-1.0) >= min_cosine)

    @staticmethod
    def blob_detector(image: np.ndarray, class_color_map: Optional[Mapping[str, Tuple[float, float, float]]] = None,
                      image_id: str = "image", min_area: int = settings.DETECTOR_MIN_AREA,
                      min_cosine: float = settings.DETECTOR_MIN_COSINE,
                      min_chroma: float = settings.DETECTOR_MIN_CHROMA) -> List[DetectionRecord]:
        """One detection per connected colour-matching component of at least `min_area` pixels.

        The box spans the component (max exclusive); confidence is the share of
        box pixels that match the class colour.
        """
        colors: Dict[str, Tuple[float, float, float]] = dict(class_color_map or color_map(DEFAULT_CLASSES))
        detections: List[DetectionRecord] = []
        for object_class in sorted(colors):
            mask = DetectorService.class_mask(image, colors[object_class], min_cosine, min_chroma)
            labels, count = ndimage.label(mask, structure=_STRUCTURE)
            if count == 0:
                continue
            for component, window in enumerate(ndimage.find_objects(labels), start=1):
                if window is None:
                    continue
                region = labels[window] == component
                area = int(region.sum())
                if area < min_area:
                    continue
                rows, cols = window
                purity = float(mask[window].sum()) / float(region.size)
                detections.append(DetectionRecord(
                    image_id=image_id,
                    object_class=object_class,
                    confidence=min(purity, 1.0),
                    box=(float(cols.start), float(rows.start), float(cols.stop), float(rows.stop)),
                ))
        return detections
