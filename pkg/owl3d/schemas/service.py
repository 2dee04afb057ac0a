from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from owl3d.schemas.evaluation import EvalConfig, IouKind, MetricValues, RecallRow, ScoreMetric
from owl3d.schemas.geometry import Box3D
from owl3d.schemas.scene import Detection, GtObject, ScoreSpace


class HealthResponse(BaseModel):
    status: str = "ok"


class IouRequest(BaseModel):
    a: Box3D
    b: Box3D
    kind: IouKind = IouKind.IOU_3D


class IouResponse(BaseModel):
    iou: float


class ScoreRequest(BaseModel):
    logits: List[float] = Field(..., min_length=1)
    metric: ScoreMetric = ScoreMetric.MSP
    temperature: float = Field(1.0, gt=0.0)
    score_space: ScoreSpace = ScoreSpace.LOGIT


class ScoreResponse(BaseModel):
    metric: ScoreMetric
    score: float


class SceneInput(BaseModel):
    scene_id: str = ""
    gts: List[GtObject] = Field(default_factory=list)
    detections: List[Detection] = Field(default_factory=list)
    score_space: ScoreSpace = ScoreSpace.LOGIT


class RecallRequest(BaseModel):
    scenes: List[SceneInput]
    eval: EvalConfig = Field(default_factory=EvalConfig)
    id_classes: List[str] = Field(default_factory=list)
    ood_classes: List[str] = Field(default_factory=list)


class RecallResponse(BaseModel):
    rows: List[RecallRow]


class OODRequest(BaseModel):
    scenes: List[SceneInput]
    eval: EvalConfig = Field(default_factory=EvalConfig)
    id_classes: List[str] = Field(..., min_length=1)
    ood_classes: List[str] = Field(..., min_length=1)
    metrics: Optional[List[ScoreMetric]] = None
    temperature: float = Field(1.0, gt=0.0)


class OODResponse(BaseModel):
    metrics: Dict[str, MetricValues]
    n_id: int
    n_ood: int
    n_unmatched_ood: int
