"""
Readers for KITTI raw data: velodyne binaries, label_2 text and calib text.
Boxes leave this module in the LiDAR frame with geometric centers.
"""
import math
import os
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from owl3d.schemas.geometry import Box3D, PointCloud, normalize_yaw
from owl3d.schemas.scene import Calib, GtObject
from owl3d.utils.errors import CalibrationError, FormatError
from owl3d.utils.geom import points_in_box

logger = logging.getLogger(__name__)

POINT_RECORD_BYTES = 16
LABEL_FIELDS = 15
IGNORED_TYPES = {"DontCare"}
ORTHONORMAL_TOL = 1e-3

_CALIB_KEYS = {
    "R0_rect": ("R0_rect", "R_rect"),
    "Tr_velo_to_cam": ("Tr_velo_to_cam", "Tr_velo_cam"),
}


def read_pointcloud_with_stats(path) -> Tuple[PointCloud, Dict[str, int]]:
    path = str(path)
    size = os.path.getsize(path)
    if size % POINT_RECORD_BYTES:
        raise FormatError(f"file size {size} is not a multiple of {POINT_RECORD_BYTES} bytes", path=path)
    raw = np.fromfile(path, dtype="<f4").reshape(-1, 4).astype(np.float64)
    finite = np.isfinite(raw).all(axis=1)
    dropped = int((~finite).sum())
    points = raw[finite]
    out_of_range = int(((points[:, 3] < 0.0) | (points[:, 3] > 1.0)).sum())
    if dropped:
        logger.warning(f"{path}: dropped {dropped} non-finite points")
    if out_of_range:
        logger.warning(f"{path}: clamped {out_of_range} intensities into [0, 1]")
        points[:, 3] = np.clip(points[:, 3], 0.0, 1.0)
    stats = {"records": int(raw.shape[0]), "dropped_non_finite": dropped, "clamped_intensity": out_of_range}
    return PointCloud(points=points), stats


def read_pointcloud(path) -> PointCloud:
    """Read a little-endian float32 (x, y, z, intensity) blob."""
    return read_pointcloud_with_stats(path)[0]


def write_pointcloud(path, pc: PointCloud):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pc.points.astype("<f4").tofile(str(path))


def _floats(values: Sequence[str], path: Optional[str], line: Optional[int], what: str) -> List[float]:
    try:
        return [float(v) for v in values]
    except ValueError:
        raise FormatError(f"non-numeric value in {what}", path=path, line=line)


def parse_kitti_calib(text: str, path: Optional[str] = None) -> Calib:
    entries = {}
    for raw in text.splitlines():
        if ":" not in raw:
            continue
        key, _, rest = raw.partition(":")
        entries[key.strip()] = rest.split()

    def lookup(name: str, count: int) -> List[float]:
        for alias in _CALIB_KEYS[name]:
            if alias in entries:
                values = _floats(entries[alias], path, None, alias)
                if len(values) != count:
                    raise FormatError(f"{alias} needs {count} values, got {len(values)}", path=path)
                return values
        raise FormatError(f"missing {name}", path=path)

    r0 = np.asarray(lookup("R0_rect", 9)).reshape(3, 3)
    tr = np.asarray(lookup("Tr_velo_to_cam", 12)).reshape(3, 4)
    return Calib(R0_rect=r0.tolist(), Tr_velo_to_cam=tr.tolist())


def _rect_from_lidar(calib: Calib) -> np.ndarray:
    """4x4 map from homogeneous LiDAR points to the rectified camera frame."""
    r0 = np.eye(4)
    r0[:3, :3] = calib.rect
    velo_to_cam = calib.velo_to_cam
    for name, rot in (("R0_rect", calib.rect), ("Tr_velo_to_cam", velo_to_cam[:3, :3])):
        det = np.linalg.det(rot)
        if not np.isfinite(det) or abs(det) < 1e-12:
            raise CalibrationError(f"{name} rotation is singular")
        if np.abs(rot @ rot.T - np.eye(3)).max() > ORTHONORMAL_TOL:
            raise CalibrationError(f"{name} rotation is not orthonormal")
    return r0 @ velo_to_cam


def camera_box_to_lidar(cam_box: Sequence[float], calib: Calib) -> Box3D:
    """
    Convert a KITTI camera box (h, w, l, x, y, z, ry) whose (x, y, z) is the
    bottom center in rectified camera coordinates into a LiDAR-frame Box3D.
    """
    h, w, l, x, y, z, ry = (float(v) for v in cam_box)
    transform = _rect_from_lidar(calib)
    try:
        inverse = np.linalg.inv(transform)
    except np.linalg.LinAlgError:
        raise CalibrationError("calibration is singular")
    bottom = inverse @ np.array([x, y, z, 1.0])
    return Box3D(
        cx=float(bottom[0]),
        cy=float(bottom[1]),
        cz=float(bottom[2]) + 0.5 * h,
        l=l,
        w=w,
        h=h,
        yaw=-ry - 0.5 * math.pi,
    )


def lidar_box_to_camera(box: Box3D, calib: Calib) -> Tuple[float, float, float, float, float, float, float]:
    """Inverse of camera_box_to_lidar."""
    transform = _rect_from_lidar(calib)
    bottom = transform @ np.array([box.cx, box.cy, box.cz - 0.5 * box.h, 1.0])
    ry = normalize_yaw(-box.yaw - 0.5 * math.pi)
    return box.h, box.w, box.l, float(bottom[0]), float(bottom[1]), float(bottom[2]), ry


def parse_kitti_labels(text: str, calib: Calib, path: Optional[str] = None) -> List[GtObject]:
    """
    Parse label_2 lines: type, truncated, occluded, alpha, bbox x4, h, w, l, x, y, z, ry.
    DontCare lines are skipped; num_points is filled later by count_points.
    """
    objects = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        fields = raw.split()
        if not fields:
            continue
        if len(fields) != LABEL_FIELDS:
            raise FormatError(f"expected {LABEL_FIELDS} fields, got {len(fields)}", path=path, line=lineno)
        label = fields[0]
        if label in IGNORED_TYPES:
            continue
        values = _floats(fields[1:], path, lineno, "label")
        h, w, l, x, y, z, ry = values[7:14]
        try:
            box = camera_box_to_lidar((h, w, l, x, y, z, ry), calib)
        except ValidationError as exc:
            raise FormatError(f"invalid box: {exc.errors()[0]['msg']}", path=path, line=lineno)
        objects.append(GtObject(class_label=label, box=box))
    return objects


def count_points(cloud: PointCloud, objects: List[GtObject]) -> List[GtObject]:
    return [obj.model_copy(update={"num_points": int(points_in_box(cloud, obj.box).size)}) for obj in objects]
