# Pydantic Schemas for detections and metric reports
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from points2pix.config import settings

Box = Tuple[float, float, float, float]
Status = Literal["ok", "undefined"]


class DetectionRecord(BaseModel):
    image_id: str
    object_class: str
    confidence: float = Field(..., ge=0.0, le=1.0)
    box: Box = Field(..., description="(x_min, y_min, x_max, y_max) in patch pixels")

    @field_validator("box", mode="before")
    @classmethod
    def _clamp(cls, v):
        limit = float(settings.PATCH_SIZE)
        return tuple(min(max(float(c), 0.0), limit) for c in v)

    @model_validator(mode="after")
    def _ordered(self):
        x_min, y_min, x_max, y_max = self.box
        if not (x_min < x_max and y_min < y_max):
            raise ValueError(f"box {self.box} is empty after clamping")
        return self


class EvalPair(BaseModel):
    image_id: str
    target_class: str
    real_detections: List[DetectionRecord] = Field(default_factory=list)
    fake_detections: List[DetectionRecord] = Field(default_factory=list)


class ScoreResult(BaseModel):
    threshold: float
    value: Optional[float] = None
    status: Status = "ok"
    tp_fake: int = 0
    tp_real: int = 0


class PairIoU(BaseModel):
    image_id: str
    iou: float
    real_box: Box
    fake_box: Box


class InceptionResult(BaseModel):
    threshold: float
    mean_iou: Optional[float] = None
    status: Status = "ok"
    qualifying: int = 0
    table: List[PairIoU] = Field(default_factory=list)


class DiversityResult(BaseModel):
    threshold: float
    mean_score: Optional[float] = None
    mean_iou: Optional[float] = None
    score_status: Status = "ok"
    iou_status: Status = "ok"
    fakes: int = 0
    gaps: List[str] = Field(default_factory=list)


class MetricReport(BaseModel):
    target_class: str
    thresholds: List[float]
    classification: List[ScoreResult]
    inception: List[InceptionResult]
    diversity: Optional[List[DiversityResult]] = None
    pairs: int = 0
    mismatched_ids: List[str] = Field(default_factory=list)
    excluded: int = 0
    warnings: List[str] = Field(default_factory=list)
    reference_scores: Dict[str, Dict[str, Dict[float, float]]] = Field(default_factory=dict)
