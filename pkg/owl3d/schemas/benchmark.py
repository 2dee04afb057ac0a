import math
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from owl3d.schemas.geometry import Box3D
from owl3d.schemas.scene import SceneRecord

DEFAULT_RANGE_M = (0.0, 50.0)


class BenchmarkParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field("synthetic", min_length=1)
    seed: int = Field(..., description="Master seed; there is no wall-clock default")
    samples_per_scene: int = Field(1, ge=1)
    range_m: Tuple[float, float] = Field(DEFAULT_RANGE_M, description="Inclusive center-distance range from the sensor origin")
    unseen_label: str = Field("Anomaly", min_length=1)
    bank_digest: Optional[str] = None
    donor_digest: Optional[str] = None

    @field_validator("range_m")
    @classmethod
    def _ordered(cls, value):
        lo, hi = value
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo < 0 or hi < lo:
            raise ValueError("range_m must satisfy 0 <= lo <= hi")
        return value


class InsertedObject(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    bank_index: int = Field(..., ge=0)
    class_label: str = Field(..., alias="class")
    box: Box3D
    num_points: int = Field(..., ge=0)


class ManifestScene(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scene_id: str
    inserted: List[InsertedObject] = Field(default_factory=list)


class BenchmarkManifest(BaseModel):
    """manifest.json of a frozen benchmark. Contains no timestamps so it is reproducible byte for byte."""
    model_config = ConfigDict(extra="forbid")

    name: str
    seed: int
    params: BenchmarkParams
    source_scene_ids: List[str] = Field(default_factory=list)
    scene_ids: List[str] = Field(default_factory=list)
    flagged: List[str] = Field(default_factory=list, description="Sources where no insertion succeeded")
    out_of_range: List[str] = Field(default_factory=list, description="Sources whose insertions all fell outside range_m")
    scenes: List[ManifestScene] = Field(default_factory=list)


class SyntheticScene(BaseModel):
    model_config = ConfigDict(frozen=True)

    scene: SceneRecord
    inserted: List[InsertedObject] = Field(default_factory=list)
    removed: int = 0
    rejected: int = 0

    @property
    def flagged(self) -> bool:
        return not self.inserted
