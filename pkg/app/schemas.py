from pydantic import BaseModel, ConfigDict, Field
from typing import Any, Dict, List, Optional


class EdgeDocument(BaseModel):
    points: List[List[int]]


class GraphDocument(BaseModel):
    """Graph JSON interchange format used by trace, eval and render."""

    model_config = ConfigDict(extra="forbid")

    width: int = Field(gt=0)
    height: int = Field(gt=0)
    nodes: List[List[int]] = Field(default_factory=list)
    edges: List[EdgeDocument] = Field(default_factory=list)


class MetricsLine(BaseModel):
    P: float
    R: float
    C: float
    F_R: float
    F_C: float
    segments_total: int
    segments_ok: int
    threshold: Optional[float] = None  # set by the baseline sweep

    def to_json(self) -> str:
        return self.model_dump_json(exclude_none=True)


class TraceReport(BaseModel):
    steps: int = 0
    restarts: int = 0
    starts: List[List[int]] = Field(default_factory=list)
    visited: int = 0
    edges: int = 0
    bag_high_water: int = 0
    discarded: int = 0
    snapped: int = 0
    rejoined: int = 0
    tails: int = 0


class DetectionRecord(BaseModel):
    location: List[int]
    confidence: float


class PatchRecord(BaseModel):
    center: List[int]
    k: int
    s: int
    detections: List[DetectionRecord]
    heatmap: Optional[str] = None


class ParamsEcho(BaseModel):
    """Provenance written next to generated scenes."""

    command: str
    params: Dict[str, Any]
    outputs: Dict[str, str]
    nodes: int
    edges: int
    total_length: float
