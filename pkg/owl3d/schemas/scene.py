import math
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from owl3d.schemas.geometry import Box3D, PointCloud


class ScoreSpace(str, Enum):
    LOGIT = "logit"
    PROB = "prob"


class GtObject(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    class_label: str = Field(..., alias="class", min_length=1, description="e.g. Car, Pedestrian, Cyclist, Misc, Anomaly")
    box: Box3D
    num_points: int = Field(0, ge=0, description="LiDAR points inside the box")


class SceneRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    scene_id: str = Field(..., min_length=1)
    cloud: PointCloud
    annotations: List[GtObject] = Field(default_factory=list)


class AnnotationFile(BaseModel):
    """On-disk annotation document: {"scene_id": str, "objects": [...]}"""
    model_config = ConfigDict(extra="forbid")

    scene_id: str = Field(..., min_length=1)
    objects: List[GtObject] = Field(default_factory=list)


class Detection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    conf: float = Field(..., description="Objectness-style confidence used for top-k ranking")
    objectness: Optional[float] = Field(None, description="Dedicated objectness output if the detector has one")
    scores: List[float] = Field(..., description="Per-class logits (or probabilities when score_space is prob)")
    box: Box3D

    @field_validator("conf")
    @classmethod
    def _finite_conf(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("conf must be finite")
        return value

    @field_validator("scores")
    @classmethod
    def _finite_scores(cls, values: List[float]) -> List[float]:
        if not all(math.isfinite(v) for v in values):
            raise ValueError("scores must be finite")
        return values


class SceneDetections(BaseModel):
    """One line of a detections JSON Lines file."""
    model_config = ConfigDict(extra="forbid")

    scene_id: str = Field(..., min_length=1)
    score_space: ScoreSpace = ScoreSpace.LOGIT
    detections: List[Detection] = Field(default_factory=list)


class Calib(BaseModel):
    """Subset of a KITTI calib file needed to move boxes between camera and LiDAR frames."""
    model_config = ConfigDict(frozen=True)

    R0_rect: List[List[float]] = Field(..., description="3x3 rectification rotation")
    Tr_velo_to_cam: List[List[float]] = Field(..., description="3x4 LiDAR to camera extrinsics, row-major")

    @field_validator("R0_rect")
    @classmethod
    def _r0_shape(cls, rows):
        arr = np.asarray(rows, dtype=np.float64)
        if arr.shape != (3, 3) or not np.isfinite(arr).all():
            raise ValueError("R0_rect must be a finite 3x3 matrix")
        return rows

    @field_validator("Tr_velo_to_cam")
    @classmethod
    def _tr_shape(cls, rows):
        arr = np.asarray(rows, dtype=np.float64)
        if arr.shape != (3, 4) or not np.isfinite(arr).all():
            raise ValueError("Tr_velo_to_cam must be a finite 3x4 matrix")
        return rows

    @classmethod
    def identity(cls) -> "Calib":
        return cls(R0_rect=np.eye(3).tolist(), Tr_velo_to_cam=np.hstack([np.eye(3), np.zeros((3, 1))]).tolist())

    @property
    def rect(self) -> np.ndarray:
        return np.asarray(self.R0_rect, dtype=np.float64)

    @property
    def velo_to_cam(self) -> np.ndarray:
        """4x4 homogeneous form of Tr_velo_to_cam."""
        out = np.eye(4)
        out[:3, :] = np.asarray(self.Tr_velo_to_cam, dtype=np.float64)
        return out
