import math

import numpy as np
import pytest

from owl3d.clients.kitti import lidar_box_to_camera, write_pointcloud
from owl3d.schemas.geometry import Box3D, PointCloud
from owl3d.schemas.scene import Calib, Detection, GtObject, SceneRecord

# LiDAR (x forward, y left, z up) to camera (x right, y down, z forward)
KITTI_CALIB_TEXT = """P0: 7.215377e+02 0.0 6.095593e+02 0.0 0.0 7.215377e+02 1.728540e+02 0.0 0.0 0.0 1.0 0.0
R0_rect: 1 0 0 0 1 0 0 0 1
Tr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0
Tr_imu_to_velo: 1 0 0 0 0 1 0 0 0 0 1 0
"""

GROUND_Z = -1.8
ID_CLASSES = ["Car", "Pedestrian", "Cyclist"]

# scene_id -> [(class, cx, cy, (l, w, h), yaw, points)]
KITTI_SCENES = {
    "000000": [
        ("Car", 10.0, 2.0, (3.9, 1.6, 1.5), 0.3, 60),
        ("Misc", 20.0, -5.0, (1.2, 0.8, 1.0), 1.1, 30),
        ("Pedestrian", 8.0, -3.0, (0.8, 0.6, 1.7), 0.0, 20),
    ],
    "000001": [
        ("Car", 15.0, 0.0, (4.2, 1.7, 1.4), -0.4, 60),
        ("Misc", 30.0, 4.0, (2.0, 1.0, 1.2), 0.5, 30),
        ("Cyclist", 12.0, 6.0, (1.7, 0.6, 1.7), 2.0, 20),
    ],
    "000002": [
        ("Car", 25.0, -2.0, (3.6, 1.5, 1.5), 3.0, 60),
        ("Misc", 40.0, 0.0, (0.9, 0.9, 0.9), -1.2, 30),
    ],
}


def make_box(cx=0.0, cy=0.0, cz=0.0, l=1.0, w=1.0, h=1.0, yaw=0.0) -> Box3D:
    return Box3D(cx=cx, cy=cy, cz=cz, l=l, w=w, h=h, yaw=yaw)


def ground_box(cx, cy, dims, yaw) -> Box3D:
    l, w, h = dims
    return Box3D(cx=cx, cy=cy, cz=GROUND_Z + 0.1 + 0.5 * h, l=l, w=w, h=h, yaw=yaw)


def points_inside(rng, box: Box3D, n: int) -> np.ndarray:
    """n points strictly inside the box, with intensities."""
    local = rng.uniform(-0.45, 0.45, size=(n, 3)) * box.dims
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    xyz = local @ rot.T + box.center
    return np.column_stack([xyz, rng.uniform(0.0, 1.0, size=n)])


def build_scene(scene_id, objects, n_background=200, seed=0) -> SceneRecord:
    """objects: [(class, Box3D, n_points)]; background points lie on the ground below every box."""
    rng = np.random.default_rng(seed)
    chunks = [
        np.column_stack(
            [
                rng.uniform(0.0, 60.0, n_background),
                rng.uniform(-30.0, 30.0, n_background),
                np.full(n_background, GROUND_Z),
                rng.uniform(0.0, 1.0, n_background),
            ]
        )
    ]
    annotations = []
    for label, box, n in objects:
        chunks.append(points_inside(rng, box, n))
        annotations.append(GtObject(class_label=label, box=box, num_points=n))
    return SceneRecord(scene_id=scene_id, cloud=PointCloud(points=np.vstack(chunks)), annotations=annotations)


def kitti_label_line(label, box: Box3D, calib: Calib) -> str:
    h, w, l, x, y, z, ry = lidar_box_to_camera(box, calib)
    return f"{label} 0.00 0 0.00 100.00 100.00 200.00 200.00 {h!r} {w!r} {l!r} {x!r} {y!r} {z!r} {ry!r}"


def make_detection(box: Box3D, conf=0.5, scores=(0.0, 0.0, 0.0), objectness=None) -> Detection:
    return Detection(conf=conf, scores=list(scores), box=box, objectness=objectness)


@pytest.fixture
def kitti_calib():
    return Calib(R0_rect=np.eye(3).tolist(), Tr_velo_to_cam=[[0, -1, 0, 0], [0, 0, -1, 0], [1, 0, 0, 0]])


@pytest.fixture
def kitti_scenes():
    """The three KITTI fixture scenes as in-memory SceneRecords (LiDAR frame)."""
    scenes = []
    for i, (scene_id, rows) in enumerate(sorted(KITTI_SCENES.items())):
        objects = [(label, ground_box(cx, cy, dims, yaw), n) for label, cx, cy, dims, yaw, n in rows]
        scenes.append(build_scene(scene_id, objects, seed=i))
    return scenes


@pytest.fixture
def kitti_dir(tmp_path, kitti_scenes, kitti_calib):
    """A KITTI-layout directory (velodyne/, label_2/, calib/) holding the fixture scenes."""
    root = tmp_path / "kitti"
    for folder in ("velodyne", "label_2", "calib"):
        (root / folder).mkdir(parents=True)
    for scene in kitti_scenes:
        write_pointcloud(root / "velodyne" / f"{scene.scene_id}.bin", scene.cloud)
        lines = [kitti_label_line(o.class_label, o.box, kitti_calib) for o in scene.annotations]
        lines.append("DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10")
        (root / "label_2" / f"{scene.scene_id}.txt").write_text("\n".join(lines) + "\n")
        (root / "calib" / f"{scene.scene_id}.txt").write_text(KITTI_CALIB_TEXT)
    return root
