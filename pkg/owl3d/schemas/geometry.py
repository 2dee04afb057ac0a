import math
from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def normalize_yaw(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(float(angle), 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


class Box3D(BaseModel):
    """Gravity-aligned box in the LiDAR frame; (cx, cy, cz) is the geometric center."""
    model_config = ConfigDict(frozen=True)

    cx: float = Field(..., description="Center x in meters")
    cy: float = Field(..., description="Center y in meters")
    cz: float = Field(..., description="Center z in meters")
    l: float = Field(..., gt=0, description="Extent along the local x axis")
    w: float = Field(..., gt=0, description="Extent along the local y axis")
    h: float = Field(..., gt=0, description="Extent along the local z axis")
    yaw: float = Field(..., description="Rotation about +z in radians, wrapped to (-pi, pi]")

    @field_validator("cx", "cy", "cz", "l", "w", "h", "yaw")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value

    @field_validator("yaw")
    @classmethod
    def _wrap_yaw(cls, value: float) -> float:
        return normalize_yaw(value)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz], dtype=np.float64)

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.l, self.w, self.h], dtype=np.float64)

    @property
    def volume(self) -> float:
        return self.l * self.w * self.h

    @property
    def bev_radius(self) -> float:
        return 0.5 * math.hypot(self.l, self.w)

    @property
    def z_range(self) -> Tuple[float, float]:
        return self.cz - 0.5 * self.h, self.cz + 0.5 * self.h

    def placed(self, center: Sequence[float], yaw: float) -> "Box3D":
        return Box3D(cx=center[0], cy=center[1], cz=center[2], l=self.l, w=self.w, h=self.h, yaw=yaw)

    def resized(self, dims: Sequence[float]) -> "Box3D":
        return Box3D(cx=self.cx, cy=self.cy, cz=self.cz, l=dims[0], w=dims[1], h=dims[2], yaw=self.yaw)

    def as_list(self):
        return [self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw]


class PointCloud(BaseModel):
    """M x 4 array of (x, y, z, intensity), float64 in memory."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    points: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data):
        if isinstance(data, dict) and "points" in data:
            points = np.asarray(data["points"], dtype=np.float64)
            if points.size == 0:
                points = points.reshape(0, 4)
            data = {**data, "points": points}
        return data

    @field_validator("points")
    @classmethod
    def _check(cls, points: np.ndarray) -> np.ndarray:
        if points.ndim != 2 or points.shape[1] != 4:
            raise ValueError(f"expected an (M, 4) array, got shape {points.shape}")
        if not np.isfinite(points).all():
            raise ValueError("point coordinates must be finite")
        if points.shape[0] and (points[:, 3].min() < 0.0 or points[:, 3].max() > 1.0):
            raise ValueError("intensity must lie in [0, 1]")
        return points

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(points=np.zeros((0, 4)))

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def intensity(self) -> np.ndarray:
        return self.points[:, 3]

    def subset(self, indices) -> "PointCloud":
        return PointCloud(points=self.points[np.asarray(indices, dtype=np.int64)])

    def without(self, indices) -> "PointCloud":
        keep = np.ones(self.count, dtype=bool)
        keep[np.asarray(indices, dtype=np.int64)] = False
        return PointCloud(points=self.points[keep])

    def with_xyz(self, xyz: np.ndarray) -> "PointCloud":
        return PointCloud(points=np.column_stack([xyz, self.intensity]))

    @staticmethod
    def concat(clouds) -> "PointCloud":
        arrays = [c.points for c in clouds]
        if not arrays:
            return PointCloud.empty()
        return PointCloud(points=np.concatenate(arrays, axis=0))
