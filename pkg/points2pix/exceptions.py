# Error hierarchy; every error carries the process exit code the CLI reports
from typing import Any, Dict, List, Optional


class Points2PixError(Exception):
    exit_code: int = 2

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail

    def to_dict(self) -> Dict[str, Any]:
        return {"detail": self.detail, "error_type": type(self).__name__}


class ValidationFailure(Points2PixError):
    exit_code = 1


class ParameterError(ValidationFailure):
    """Raised when a parameter violates its invariant; names the field."""

    def __init__(self, field: str, detail: str):
        super().__init__(f"{field}: {detail}")
        self.field = field


class ShapeError(ValidationFailure):
    """Raised by a primitive on incompatible shapes; names the primitive."""

    def __init__(self, primitive: str, detail: str):
        super().__init__(f"{primitive}: {detail}")
        self.primitive = primitive


class ParseError(ValidationFailure):
    def __init__(self, path: str, detail: str, offset: Optional[int] = None):
        where = f" at byte {offset}" if offset is not None else ""
        super().__init__(f"{path}{where}: {detail}")
        self.path = path
        self.offset = offset


class MissingKeyError(ValidationFailure):
    def __init__(self, path: str, key: str):
        super().__init__(f"{path}: missing key '{key}'")
        self.path = path
        self.key = key


class RuntimeFailure(Points2PixError):
    exit_code = 2


class NonFiniteError(RuntimeFailure):
    def __init__(self, primitive: str):
        super().__init__(f"{primitive}: produced non-finite values")
        self.primitive = primitive


class NonFiniteGradientError(RuntimeFailure):
    def __init__(self, index: int):
        super().__init__(f"non-finite gradient for parameter {index}; update aborted")
        self.index = index


class TrainingDivergedError(RuntimeFailure):
    def __init__(self, step: int, last_checkpoint: Optional[str]):
        super().__init__(f"non-finite loss at step {step}; last good checkpoint: {last_checkpoint or 'none'}")
        self.step = step
        self.last_checkpoint = last_checkpoint


class ChecksumError(RuntimeFailure):
    pass


class PartialResultsError(Points2PixError):
    exit_code = 3

    def __init__(self, detail: str, written: Optional[List[str]] = None, gaps: Optional[List[str]] = None):
        super().__init__(detail)
        self.written = written or []
        self.gaps = gaps or []

    def to_dict(self) -> Dict[str, Any]:
        body = super().to_dict()
        body.update({"written": self.written, "gaps": self.gaps})
        return body
