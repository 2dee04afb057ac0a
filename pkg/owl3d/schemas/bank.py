import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from owl3d.schemas.geometry import Box3D, PointCloud
from owl3d.schemas.scene import SceneRecord


class BankEntry(BaseModel):
    """An extracted object. Points are stored in the box-local frame (center at origin, yaw 0)."""
    model_config = ConfigDict(frozen=True)

    class_label: str = Field(..., min_length=1)
    box: Box3D = Field(..., description="Box at the source placement; dims track resizing")
    points: PointCloud
    source_scene: str
    num_points: int = Field(..., ge=0)
    resized: bool = False

    @model_validator(mode="after")
    def _points_inside(self):
        if self.points.count != self.num_points:
            raise ValueError(f"num_points {self.num_points} does not match {self.points.count} stored points")
        if self.points.count and (np.abs(self.points.xyz) > 0.5 * self.box.dims + 1e-6).any():
            raise ValueError("bank points must lie inside the box")
        return self

    @property
    def local_box(self) -> Box3D:
        return Box3D(cx=0.0, cy=0.0, cz=0.0, l=self.box.l, w=self.box.w, h=self.box.h, yaw=0.0)


class BankIndexEntry(BaseModel):
    """Metadata row of a persisted bank's index.json."""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    file: str
    class_label: str = Field(..., alias="class")
    box: Box3D
    source_scene: str
    num_points: int = Field(..., ge=0)
    resized: bool = False


class BankIndex(BaseModel):
    model_config = ConfigDict(extra="forbid")

    entries: List[BankIndexEntry] = Field(default_factory=list)


class ObjectBank(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: List[BankEntry] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)


class SizePool(BaseModel):
    model_config = ConfigDict(frozen=True)

    dims: List[Tuple[float, float, float]] = Field(default_factory=list, description="(l, w, h) in meters")

    @field_validator("dims")
    @classmethod
    def _positive(cls, dims):
        for d in dims:
            if not all(math.isfinite(v) and v > 0 for v in d):
                raise ValueError(f"size {d} must be positive and finite")
        return dims


class Placement(BaseModel):
    """Donor location. When bottom_z is set, pasted objects rest on that height."""
    model_config = ConfigDict(frozen=True)

    cx: float
    cy: float
    cz: float
    yaw: float
    bottom_z: Optional[float] = None

    @model_validator(mode="after")
    def _finite(self):
        values = [self.cx, self.cy, self.cz, self.yaw] + ([self.bottom_z] if self.bottom_z is not None else [])
        if not all(math.isfinite(v) for v in values):
            raise ValueError("placement values must be finite")
        return self

    def center_for(self, height: float) -> Tuple[float, float, float]:
        if self.bottom_z is None:
            return self.cx, self.cy, self.cz
        return self.cx, self.cy, self.bottom_z + 0.5 * height


class LocationPool(BaseModel):
    model_config = ConfigDict(frozen=True)

    placements: List[Placement] = Field(default_factory=list)


class PastedObject(BaseModel):
    bank_index: int
    placement: Placement
    box: Box3D
    num_points: int


class PasteResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    scene: SceneRecord
    accepted: int = 0
    rejected: int = 0
    pasted: List[PastedObject] = Field(default_factory=list)
