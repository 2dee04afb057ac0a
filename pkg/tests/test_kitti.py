import math

import numpy as np
import pytest

from conftest import KITTI_CALIB_TEXT, make_box
from owl3d.clients.kitti import (
    camera_box_to_lidar,
    count_points,
    lidar_box_to_camera,
    parse_kitti_calib,
    parse_kitti_labels,
    read_pointcloud,
    read_pointcloud_with_stats,
    write_pointcloud,
)
from owl3d.schemas.geometry import Box3D, PointCloud
from owl3d.schemas.scene import Calib, GtObject
from owl3d.utils.errors import CalibrationError, FormatError

MISC_LINE = "Misc 0.00 0 -1.57 100.0 120.0 180.0 200.0 1.20 0.80 1.50 2.00 1.60 15.00 -1.5707963267948966"


def rotation(axis: str, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def random_calib(rng) -> Calib:
    r0 = rotation("x", rng.uniform(-0.05, 0.05)) @ rotation("y", rng.uniform(-0.05, 0.05))
    base = np.array([[0, -1, 0], [0, 0, -1], [1, 0, 0]], dtype=np.float64)
    tr_rot = base @ rotation("z", rng.uniform(-0.1, 0.1))
    tr = np.hstack([tr_rot, rng.uniform(-0.5, 0.5, size=(3, 1))])
    return Calib(R0_rect=r0.tolist(), Tr_velo_to_cam=tr.tolist())


def test_read_single_point(tmp_path):
    path = tmp_path / "one.bin"
    np.array([1.0, 2.0, 3.0, 0.5], dtype="<f4").tofile(path)
    pc = read_pointcloud(path)
    assert pc.count == 1
    np.testing.assert_array_equal(pc.points[0], [1.0, 2.0, 3.0, 0.5])


def test_read_empty_file(tmp_path):
    path = tmp_path / "empty.bin"
    path.write_bytes(b"")
    assert read_pointcloud(path).count == 0


def test_read_rejects_partial_record(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x00" * 17)
    with pytest.raises(FormatError) as exc:
        read_pointcloud(path)
    assert "16" in str(exc.value)


def test_read_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        read_pointcloud(tmp_path / "missing.bin")


def test_read_drops_non_finite_and_clamps_intensity(tmp_path):
    path = tmp_path / "dirty.bin"
    raw = np.array(
        [[1.0, 1.0, 1.0, 0.2], [np.nan, 0.0, 0.0, 0.1], [2.0, 2.0, 2.0, 1.7], [0.0, np.inf, 0.0, 0.3]],
        dtype="<f4",
    )
    raw.tofile(path)
    pc, stats = read_pointcloud_with_stats(path)
    assert pc.count == 2
    assert stats == {"records": 4, "dropped_non_finite": 2, "clamped_intensity": 1}
    assert pc.intensity.max() == 1.0
    assert stats["records"] * 16 == path.stat().st_size


def test_write_then_read_pointcloud(tmp_path):
    rng = np.random.default_rng(0)
    points = np.column_stack([rng.normal(size=(50, 3)), rng.uniform(0, 1, 50)]).astype(np.float32).astype(np.float64)
    path = tmp_path / "nested" / "cloud.bin"
    write_pointcloud(path, PointCloud(points=points))
    assert path.stat().st_size == 50 * 16
    np.testing.assert_array_equal(read_pointcloud(path).points, points)


def test_parse_calib():
    calib = parse_kitti_calib(KITTI_CALIB_TEXT)
    np.testing.assert_array_equal(calib.rect, np.eye(3))
    assert calib.Tr_velo_to_cam[2] == [1.0, 0.0, 0.0, 0.0]


def test_parse_calib_missing_key():
    with pytest.raises(FormatError) as exc:
        parse_kitti_calib("R0_rect: 1 0 0 0 1 0 0 0 1\n", path="calib.txt")
    assert "Tr_velo_to_cam" in str(exc.value)


def test_parse_calib_wrong_arity():
    with pytest.raises(FormatError):
        parse_kitti_calib("R0_rect: 1 0 0 0 1 0 0 0\nTr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0\n")


def test_identity_round_trip():
    calib = Calib.identity()
    box = make_box(1.5, -2.0, 0.3, 4.0, 1.7, 1.5, 0.4)
    back = camera_box_to_lidar(lidar_box_to_camera(box, calib), calib)
    assert abs(back.cx - box.cx) <= 1e-9
    assert abs(back.cy - box.cy) <= 1e-9
    assert abs(back.cz - box.cz) <= 1e-9
    assert abs(back.yaw - box.yaw) <= 1e-9


def test_yaw_convention_identity_calib():
    box = camera_box_to_lidar((1.5, 1.6, 3.9, 0.0, 0.0, 0.0, -math.pi / 2), Calib.identity())
    assert box.yaw == pytest.approx(0.0, abs=1e-12)
    # bottom center lifted by h / 2
    assert box.cz == pytest.approx(0.75)
    assert (box.l, box.w, box.h) == (3.9, 1.6, 1.5)


def test_random_calib_round_trip():
    rng = np.random.default_rng(42)
    for _ in range(500):
        calib = random_calib(rng)
        box = Box3D(
            cx=rng.uniform(0, 70),
            cy=rng.uniform(-40, 40),
            cz=rng.uniform(-3, 1),
            l=rng.uniform(0.5, 10),
            w=rng.uniform(0.5, 3),
            h=rng.uniform(0.5, 4),
            yaw=rng.uniform(-math.pi, math.pi),
        )
        back = camera_box_to_lidar(lidar_box_to_camera(box, calib), calib)
        np.testing.assert_allclose(back.center, box.center, atol=1e-6)
        assert abs(math.remainder(back.yaw - box.yaw, 2 * math.pi)) <= 1e-6


def test_singular_calibration_rejected():
    calib = Calib(R0_rect=np.zeros((3, 3)).tolist(), Tr_velo_to_cam=[[0, -1, 0, 0], [0, 0, -1, 0], [1, 0, 0, 0]])
    with pytest.raises(CalibrationError):
        camera_box_to_lidar((1, 1, 1, 0, 0, 10, 0), calib)


def test_parse_labels_basic(kitti_calib):
    assert parse_kitti_labels("", kitti_calib) == []
    objects = parse_kitti_labels(MISC_LINE, kitti_calib)
    assert len(objects) == 1
    misc = objects[0]
    assert misc.class_label == "Misc"
    # camera (x right, y down, z forward) -> LiDAR (x forward, y left, z up)
    assert misc.box.cx == pytest.approx(15.0)
    assert misc.box.cy == pytest.approx(-2.0)
    assert misc.box.cz == pytest.approx(-1.6 + 0.6)
    assert misc.box.yaw == pytest.approx(0.0, abs=1e-12)


def test_parse_labels_skips_dont_care(kitti_calib):
    text = MISC_LINE + "\nDontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n"
    assert [o.class_label for o in parse_kitti_labels(text, kitti_calib)] == ["Misc"]


def test_parse_labels_wrong_field_count(kitti_calib):
    short = " ".join(MISC_LINE.split()[:14])
    with pytest.raises(FormatError) as exc:
        parse_kitti_labels(short, kitti_calib, path="000000.txt")
    assert exc.value.line == 1
    assert "line 1" in str(exc.value)


def test_parse_labels_invalid_box(kitti_calib):
    bad = MISC_LINE.replace(" 1.20 0.80 1.50 ", " 0.00 0.80 1.50 ")
    with pytest.raises(FormatError):
        parse_kitti_labels(bad, kitti_calib)


def test_count_points(kitti_scenes):
    scene = kitti_scenes[0]
    blank = [GtObject(class_label=o.class_label, box=o.box) for o in scene.annotations]
    counted = count_points(scene.cloud, blank)
    assert [o.num_points for o in counted] == [60, 30, 20]
