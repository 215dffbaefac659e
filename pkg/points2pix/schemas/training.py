# Pydantic Schemas for network presets, training configuration and logs
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from points2pix.config import settings
from points2pix.schemas.geometry import ProjectionImage

Variant = Literal["full", "unet_only", "pointnet_only"]
PresetName = Literal["full_256", "toy_64"]
NormKind = Literal["instance", "batch", "none"]


class NetworkPreset(BaseModel):
    name: str
    resolution: int = Field(..., ge=2)
    encoder_channels: List[int] = Field(..., min_length=2)
    discriminator_channels: List[int] = Field(..., min_length=5, max_length=5)
    discriminator_strides: List[int] = Field(..., min_length=5, max_length=5)
    pointnet_widths: List[int] = Field(default_factory=lambda: [64, 64, 128, 1024])
    dropout_p: float = Field(0.5, ge=0.0, lt=1.0)
    dropout_levels: int = Field(3, ge=0)
    border_width: int = Field(settings.BORDER_WIDTH, ge=0)

    @model_validator(mode="after")
    def _levels_match_resolution(self):
        if self.resolution != 2 ** len(self.encoder_channels):
            raise ValueError(
                f"{len(self.encoder_channels)} encoder levels reduce {2 ** len(self.encoder_channels)} px to 1×1, "
                f"not {self.resolution} px"
            )
        if self.pointnet_widths[-1] != 1024:
            raise ValueError("the global point feature must be 1024 wide")
        if self.discriminator_channels[-1] != 1:
            raise ValueError("the discriminator must end in a single score channel")
        return self


class TrainConfig(BaseModel):
    epochs: int = Field(settings.EPOCHS, ge=1)
    lr: float = Field(settings.LEARNING_RATE, gt=0.0)
    beta1: float = Field(settings.BETA1, ge=0.0, lt=1.0)
    beta2: float = Field(settings.BETA2, ge=0.0, lt=1.0)
    epsilon: float = Field(settings.ADAM_EPSILON, gt=0.0)
    lambda_l1: float = Field(settings.LAMBDA_L1, ge=0.0)
    batch_size: int = Field(1, ge=1)
    seed: int = 0
    variant: Variant = "full"
    preset: PresetName = "toy_64"
    dropout_p: Optional[float] = Field(None, ge=0.0, lt=1.0, description="Overrides the preset when set")
    dropout_at_inference: bool = True
    conditional_discriminator: bool = False
    discriminator_norm: NormKind = "instance"
    literal_minimax: bool = False
    compose_mode: Literal["overlay", "concat"] = "overlay"
    projection_mode: Literal["rgb", "depth_only"] = "rgb"
    d_max: float = Field(settings.D_MAX_KITTI, gt=0.0)
    num_points: int = Field(settings.NUM_POINTS, ge=1)
    input_transform: bool = False
    max_steps: Optional[int] = Field(None, ge=1)
    checkpoint_every: int = Field(0, ge=0, description="Steps between checkpoints; 0 checkpoints once per epoch")
    sample_every: int = Field(0, ge=0, description="Epochs between fake dumps; 0 dumps after the last epoch only")

    model_config = ConfigDict(extra="forbid")


class TrainLogRecord(BaseModel):
    step: int = Field(..., ge=1)
    epoch: int = Field(..., ge=0)
    loss_D_real: float
    loss_D_fake: float
    loss_G_adv: float
    loss_G_l1: float
    clamped_scores: int = 0
    wallclock: Optional[float] = None

    @field_validator("loss_D_real", "loss_D_fake", "loss_G_adv", "loss_G_l1")
    @classmethod
    def _finite(cls, v: float) -> float:
        if v != v or v in (float("inf"), float("-inf")):
            raise ValueError("losses must be finite")
        return v

    def log_line(self) -> Dict:
        """Fields written to the JSON-lines stream (wall-clock lives in its own file)."""
        return self.model_dump(exclude={"wallclock"})


class ExperimentResult(BaseModel):
    checkpoint: str
    log_path: str
    steps: int
    epochs_completed: int
    mean_l1: Optional[float] = None
    fake_dir: Optional[str] = None


class AblationRow(BaseModel):
    variant: Variant
    mean_l1: float
    classification: Dict[str, Optional[float]] = Field(default_factory=dict)
    inception: Dict[str, Optional[float]] = Field(default_factory=dict)
    checkpoint: Optional[str] = None


class AblationReport(BaseModel):
    thresholds: List[float]
    rows: List[AblationRow]


class RotationResult(BaseModel):
    """Fakes from the original and the rotated c2, with how much each input and output changed."""
    axis: Literal["x", "y", "z"]
    degrees: float
    original: np.ndarray
    rotated: np.ndarray
    c2_original: ProjectionImage
    c2_rotated: ProjectionImage
    changed_c2_pixels: int
    changed_output_pixels: int
    c1_feature_max_diff: Optional[float] = None

    model_config = ConfigDict(arbitrary_types_allowed=True)

    def summary(self) -> Dict:
        return {
            "axis": self.axis,
            "degrees": self.degrees,
            "changed_c2_pixels": self.changed_c2_pixels,
            "changed_output_pixels": self.changed_output_pixels,
            "c1_feature_max_diff": self.c1_feature_max_diff,
        }
