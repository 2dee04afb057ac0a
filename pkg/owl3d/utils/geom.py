"""
Geometry for gravity-aligned 3D boxes: BEV / 3D IoU, point membership and
rigid / anisotropic object transforms.

BEV overlap is computed by Sutherland-Hodgman clipping of one box footprint
against the other. Both footprints are convex quads, so the clip is exact and
the intersection has at most 8 vertices.
"""
import math
from typing import List, Sequence, Tuple

import numpy as np

from owl3d.schemas.geometry import Box3D, PointCloud
from owl3d.utils.errors import InvalidInputError

COLLINEAR_EPS = 1e-9  # m^2, cross-product tolerance of the clipping inside test
MEMBERSHIP_TOL = 1e-6  # m, absorbs float32 rounding of stored points

# counter-clockwise footprint corners in units of (l/2, w/2)
_UNIT_CORNERS = np.array([[1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0]])


def _rotation_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def box_corners_bev(b: Box3D) -> np.ndarray:
    """4x2 footprint corners, counter-clockwise."""
    local = _UNIT_CORNERS * np.array([0.5 * b.l, 0.5 * b.w])
    c, s = math.cos(b.yaw), math.sin(b.yaw)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([b.cx, b.cy])


def _cross(o, a, p) -> float:
    return (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0])


def _segment_intersection(s, e, cp1, cp2):
    dc = (cp1[0] - cp2[0], cp1[1] - cp2[1])
    dp = (s[0] - e[0], s[1] - e[1])
    denom = dc[0] * dp[1] - dc[1] * dp[0]
    if abs(denom) < 1e-15:
        return e
    n1 = cp1[0] * cp2[1] - cp1[1] * cp2[0]
    n2 = s[0] * e[1] - s[1] * e[0]
    return ((n1 * dp[0] - n2 * dc[0]) / denom, (n1 * dp[1] - n2 * dc[1]) / denom)


def clip_convex(subject: Sequence, clip: Sequence) -> List[Tuple[float, float]]:
    """Sutherland-Hodgman: clip `subject` by the convex, counter-clockwise polygon `clip`."""
    output = [tuple(p) for p in subject]
    cp1 = tuple(clip[-1])
    for vertex in clip:
        cp2 = tuple(vertex)
        if not output:
            break
        candidates = output
        output = []
        s = candidates[-1]
        s_in = _cross(cp1, cp2, s) >= -COLLINEAR_EPS
        for e in candidates:
            e_in = _cross(cp1, cp2, e) >= -COLLINEAR_EPS
            if e_in:
                if not s_in:
                    output.append(_segment_intersection(s, e, cp1, cp2))
                output.append(e)
            elif s_in:
                output.append(_segment_intersection(s, e, cp1, cp2))
            s, s_in = e, e_in
        cp1 = cp2
    return output


def polygon_area(poly: Sequence) -> float:
    if len(poly) < 3:
        return 0.0
    pts = np.asarray(poly, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def bev_intersection_area(a: Box3D, b: Box3D) -> float:
    if math.hypot(a.cx - b.cx, a.cy - b.cy) > a.bev_radius + b.bev_radius:
        return 0.0
    return polygon_area(clip_convex(box_corners_bev(a), box_corners_bev(b)))


def bev_iou(a: Box3D, b: Box3D) -> float:
    inter = bev_intersection_area(a, b)
    if inter <= 0.0:
        return 0.0
    union = a.l * a.w + b.l * b.w - inter
    return min(1.0, max(0.0, inter / union))


def z_overlap(a: Box3D, b: Box3D) -> float:
    a_lo, a_hi = a.z_range
    b_lo, b_hi = b.z_range
    return max(0.0, min(a_hi, b_hi) - max(a_lo, b_lo))


def iou_3d(a: Box3D, b: Box3D) -> float:
    dz = z_overlap(a, b)
    if dz <= 0.0:
        return 0.0
    inter = bev_intersection_area(a, b) * dz
    if inter <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / (a.volume + b.volume - inter)))


def pairwise_iou(boxes_a: Sequence[Box3D], boxes_b: Sequence[Box3D], kind: str = "3d") -> np.ndarray:
    """IoU matrix len(a) x len(b); pairs whose footprints cannot touch are skipped."""
    out = np.zeros((len(boxes_a), len(boxes_b)), dtype=np.float64)
    if not len(boxes_a) or not len(boxes_b):
        return out
    iou_fn = bev_iou if kind == "bev" else iou_3d
    ca = np.array([[b.cx, b.cy] for b in boxes_a])
    cb = np.array([[b.cx, b.cy] for b in boxes_b])
    ra = np.array([b.bev_radius for b in boxes_a])
    rb = np.array([b.bev_radius for b in boxes_b])
    dist = np.linalg.norm(ca[:, None, :] - cb[None, :, :], axis=-1)
    for i, j in zip(*np.nonzero(dist <= ra[:, None] + rb[None, :])):
        out[i, j] = iou_fn(boxes_a[i], boxes_b[j])
    return out


def to_box_local(xyz: np.ndarray, b: Box3D) -> np.ndarray:
    """Translate by -center, then rotate by -yaw."""
    return (np.asarray(xyz, dtype=np.float64) - b.center) @ _rotation_z(b.yaw)


def from_box_local(local: np.ndarray, b: Box3D) -> np.ndarray:
    return np.asarray(local, dtype=np.float64) @ _rotation_z(b.yaw).T + b.center


def points_in_box(pc: PointCloud, b: Box3D) -> np.ndarray:
    """Indices of points inside the box, faces included."""
    if pc.count == 0:
        return np.zeros(0, dtype=np.int64)
    local = np.abs(to_box_local(pc.xyz, b))
    half = 0.5 * b.dims + MEMBERSHIP_TOL
    inside = (local <= half).all(axis=1)
    return np.flatnonzero(inside)


def transform_object(pc: PointCloud, b: Box3D, new_center: Sequence[float], new_yaw: float) -> Tuple[PointCloud, Box3D]:
    """Rigidly move an object: p -> R(new_yaw - yaw) (p - center) + new_center."""
    moved_box = b.placed(new_center, new_yaw)
    xyz = from_box_local(to_box_local(pc.xyz, b), moved_box)
    return pc.with_xyz(xyz), moved_box


def resize_object(pc: PointCloud, b: Box3D, target_dims: Sequence[float]) -> Tuple[PointCloud, Box3D]:
    """Scale an object per local axis so its box gets `target_dims`."""
    target = np.asarray(target_dims, dtype=np.float64)
    if target.shape != (3,) or not np.isfinite(target).all() or (target <= 0).any():
        raise InvalidInputError(f"target dims must be three positive numbers, got {list(target_dims)}")
    resized_box = b.resized(target)
    local = to_box_local(pc.xyz, b) * (target / b.dims)
    return pc.with_xyz(from_box_local(local, resized_box)), resized_box


def center_distance(a: Box3D, b: Box3D) -> float:
    return math.sqrt((a.cx - b.cx) ** 2 + (a.cy - b.cy) ** 2 + (a.cz - b.cz) ** 2)
