from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from owl3d.schemas.scene import Detection, GtObject, ScoreSpace

DEFAULT_K_VALUES = [1, 10, 50, 100, 200, 300, 400, 500]


class IouKind(str, Enum):
    IOU_3D = "3d"
    BEV = "bev"


class RecallMode(str, Enum):
    COVERAGE = "coverage"
    ONE_TO_ONE = "one_to_one"


class MatchStage(str, Enum):
    IOU = "iou"
    DISTANCE = "distance"


class ScoreMetric(str, Enum):
    MSP = "MSP"
    MAX_LOGIT = "MaxLogit"
    SUM_LOGIT = "SumLogit"
    MAX_PROB = "MaxProb"
    SUM_PROB = "SumProb"
    MAX_ENERGY = "MaxEnergy"
    JOINT_ENERGY = "JointEnergy"
    ENERGY = "Energy"


class EvalConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    proposal_k: int = Field(500, ge=1, description="Detections kept per scene, ranked by conf")
    iou_thresholds: List[float] = Field(default_factory=lambda: [0.10, 0.25, 0.40])
    iou_kind: IouKind = IouKind.IOU_3D
    recall_mode: RecallMode = RecallMode.COVERAGE
    k_values: List[int] = Field(default_factory=lambda: list(DEFAULT_K_VALUES), description="Proposal numbers for the recall sweep, clipped to proposal_k")

    @field_validator("iou_thresholds")
    @classmethod
    def _thresholds(cls, values):
        if not values or any(not (0.0 < v <= 1.0) for v in values):
            raise ValueError("IoU thresholds must lie in (0, 1]")
        return sorted(values)

    @field_validator("k_values")
    @classmethod
    def _k_values(cls, values):
        if not values or any(v < 1 for v in values):
            raise ValueError("k values must be >= 1")
        return sorted(set(values))


class EvalScene(BaseModel):
    """Ground truth and detections of one scene, as handed to the evaluators."""
    model_config = ConfigDict(frozen=True)

    scene_id: str = ""
    gts: List[GtObject] = Field(default_factory=list)
    detections: List[Detection] = Field(default_factory=list)
    score_space: ScoreSpace = ScoreSpace.LOGIT


class MatchPair(BaseModel):
    model_config = ConfigDict(frozen=True)

    gt_index: int
    det_index: int
    stage: MatchStage
    iou_value: float = Field(..., ge=0.0)
    distance_value: float = Field(..., ge=0.0)


class MatchResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    pairs: List[MatchPair] = Field(default_factory=list)
    unmatched_gt: List[int] = Field(default_factory=list)


class RecallRow(BaseModel):
    class_label: str = Field(..., serialization_alias="class")
    k: int
    iou_threshold: float
    tp: int
    fn: int
    recall: Optional[float] = Field(None, description="TP / (TP + FN); null when the class has no objects")


class RecallReport(BaseModel):
    rows: List[RecallRow] = Field(default_factory=list)

    def lookup(self, class_label: str, k: int, iou_threshold: float) -> Optional[RecallRow]:
        for row in self.rows:
            if row.class_label == class_label and row.k == k and abs(row.iou_threshold - iou_threshold) < 1e-12:
                return row
        return None


class MetricValues(BaseModel):
    auroc: float = Field(..., ge=0.0, le=1.0)
    aupr: float = Field(..., ge=0.0, le=1.0)
    fpr95: float = Field(..., ge=0.0, le=1.0)


class OODReport(BaseModel):
    metrics: Dict[str, MetricValues] = Field(default_factory=dict)
    n_id: int = 0
    n_ood: int = 0
    n_unmatched_ood: int = 0

    def as_report(self) -> dict:
        """Flat wire form: {metric: {...}, "n_id": ..., "n_ood": ..., "n_unmatched_ood": ...}"""
        out = {name: values.model_dump() for name, values in self.metrics.items()}
        out.update(n_id=self.n_id, n_ood=self.n_ood, n_unmatched_ood=self.n_unmatched_ood)
        return out
