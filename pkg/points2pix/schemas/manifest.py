# Pydantic Schemas for run manifests
from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class ConfigConflict(BaseModel):
    key: str
    config_file_value: Any
    cli_value: Any


class RunManifest(BaseModel):
    command: str
    argv: List[str] = Field(default_factory=list)
    resolved_config: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    inputs: List[str] = Field(default_factory=list)
    outputs: List[str] = Field(default_factory=list)
    input_hash: str = ""
    conflicts: List[ConfigConflict] = Field(default_factory=list)
    started_at: datetime
    finished_at: Optional[datetime] = None
    status: str = "ok"
    exit_code: int = 0
    detail: Optional[str] = None
    version: str = "1.0.0"
