import os
from pathlib import Path
from typing import Dict, List, Tuple
from dotenv import load_dotenv

load_dotenv()

class Settings:
    # Runtime Configuration
    PRECISION: str = os.getenv("POINTS2PIX_PRECISION", "float32")
    LOG_LEVEL: str = os.getenv("POINTS2PIX_LOG_LEVEL", "INFO")
    DEBUG: bool = os.getenv("POINTS2PIX_DEBUG", "False").lower() == "true"
    THREADS: int = max(1, int(os.getenv("POINTS2PIX_THREADS", "4")))
    PRESETS_FILE: str = os.getenv("POINTS2PIX_PRESETS_FILE", str(Path(__file__).with_name("presets.json")))

    # Point-cloud conditions
    NUM_POINTS: int = 1024
    MIN_POINTS: int = int(os.getenv("POINTS2PIX_MIN_POINTS", "700"))
    PATCH_SIZE: int = 256
    BORDER_WIDTH: int = 15
    D_MAX_KITTI: float = 60.0
    D_MAX_SUNRGBD: float = 4.0
    CROP_MARGIN: float = 0.1  # box dilation per axis

    # Occlusion filter (KITTI occlusion levels 0..3)
    MAX_OCCLUSION: int = int(os.getenv("POINTS2PIX_MAX_OCCLUSION", "1"))
    MAX_TRUNCATION: float = float(os.getenv("POINTS2PIX_MAX_TRUNCATION", "0.3"))

    # Optimizer Settings
    LEARNING_RATE: float = 0.0002
    BETA1: float = 0.5
    BETA2: float = 0.999
    ADAM_EPSILON: float = 1e-8
    LAMBDA_L1: float = 100.0
    EPOCHS: int = 100

    # Network Settings
    BN_MOMENTUM: float = 0.1
    NORM_EPSILON: float = 1e-5
    LEAKY_SLOPE: float = 0.2
    SCORE_EPSILON: float = 1e-7

    # Class sets
    KITTI_CLASSES: List[str] = ["Car"]
    SUNRGBD_CLASSES: List[str] = ["chair", "table", "desk", "pillow", "sofa", "garbage_bin"]

    # Synthetic scenes: albedo per class (distinct hues so the blob detector can tell them apart)
    CLASS_COLORS: Dict[str, Tuple[float, float, float]] = {
        "Car": (0.85, 0.12, 0.10),
        "Pedestrian": (0.12, 0.25, 0.88),
        "Cyclist": (0.15, 0.75, 0.20),
        "chair": (0.85, 0.12, 0.10),
        "table": (0.15, 0.75, 0.20),
        "desk": (0.85, 0.75, 0.10),
        "pillow": (0.80, 0.15, 0.80),
        "sofa": (0.12, 0.25, 0.88),
        "garbage_bin": (0.10, 0.75, 0.80),
    }

    # Detector Settings
    DEFAULT_THRESHOLDS: List[float] = [0.3, 0.5, 0.7]
    DIVERSITY_BACKGROUNDS: int = 10
    DETECTOR_MIN_CHROMA: float = 0.15
    DETECTOR_MIN_COSINE: float = 0.9
    DETECTOR_MIN_AREA: int = 16

    # Reference scores reported for full-scale KITTI/SunRGBD training (documentation only)
    REFERENCE_SCORES: Dict[str, Dict[str, Dict[float, float]]] = {
        "inception": {
            "kitti/car": {0.3: 0.76, 0.5: 0.77, 0.7: 0.77},
            "sunrgbd/sofa": {0.1: 0.52, 0.2: 0.77, 0.3: 0.77},
            "sunrgbd/table": {0.1: 0.70},
            "sunrgbd/chair": {0.1: 0.60, 0.2: 0.58, 0.3: 0.58},
        },
        "diversity": {
            "kitti/car": {0.3: 0.71, 0.5: 0.70, 0.7: 0.68},
            "sunrgbd/sofa": {0.1: 0.16},
            "sunrgbd/table": {0.1: 0.24, 0.2: 0.22},
            "sunrgbd/chair": {0.1: 0.45, 0.2: 0.37, 0.3: 0.33},
        },
    }

settings = Settings()
