import math

import numpy as np
import pytest

from conftest import make_box
from owl3d.schemas.geometry import Box3D, PointCloud, normalize_yaw
from owl3d.utils.errors import InvalidInputError
from owl3d.utils.geom import (
    bev_iou,
    box_corners_bev,
    center_distance,
    clip_convex,
    iou_3d,
    pairwise_iou,
    points_in_box,
    polygon_area,
    resize_object,
    to_box_local,
    from_box_local,
    transform_object,
)


def random_box(rng, spread=2.0) -> Box3D:
    return Box3D(
        cx=rng.uniform(-spread, spread),
        cy=rng.uniform(-spread, spread),
        cz=rng.uniform(-0.5, 0.5),
        l=rng.uniform(0.5, 4.0),
        w=rng.uniform(0.5, 2.5),
        h=rng.uniform(0.5, 2.0),
        yaw=rng.uniform(-math.pi, math.pi),
    )


def monte_carlo_bev_iou(a: Box3D, b: Box3D, rng, samples: int) -> float:
    corners = np.vstack([box_corners_bev(a), box_corners_bev(b)])
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    xy = rng.uniform(lo, hi, size=(samples, 2))
    cloud = PointCloud(points=np.column_stack([xy, np.zeros(samples), np.zeros(samples)]))
    flat_a = a.placed((a.cx, a.cy, 0.0), a.yaw)
    flat_b = b.placed((b.cx, b.cy, 0.0), b.yaw)
    in_a = np.zeros(samples, dtype=bool)
    in_b = np.zeros(samples, dtype=bool)
    in_a[points_in_box(cloud, flat_a)] = True
    in_b[points_in_box(cloud, flat_b)] = True
    union = (in_a | in_b).sum()
    return float((in_a & in_b).sum() / union) if union else 0.0


def test_identical_boxes_have_iou_one():
    b = make_box(1.0, 2.0, 0.5, 4.0, 1.8, 1.5, 0.7)
    assert bev_iou(b, b) == pytest.approx(1.0, abs=1e-12)
    assert iou_3d(b, b) == pytest.approx(1.0, abs=1e-12)


def test_rotated_unit_squares():
    a = make_box()
    b = make_box(yaw=math.pi / 4)
    assert bev_iou(a, b) == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-9)


def test_offset_unit_cubes():
    a = make_box()
    b = make_box(cx=0.5)
    assert iou_3d(a, b) == pytest.approx(1.0 / 3.0, abs=1e-9)
    assert bev_iou(a, b) == pytest.approx(1.0 / 3.0, abs=1e-9)


def test_disjoint_and_touching_boxes():
    a = make_box()
    assert bev_iou(a, make_box(cx=10.0)) == 0.0
    # shared edge has zero area
    assert bev_iou(a, make_box(cx=1.0)) == pytest.approx(0.0, abs=1e-12)
    # stacked boxes overlap in BEV but not in height
    assert bev_iou(a, make_box(cz=1.5)) == pytest.approx(1.0)
    assert iou_3d(a, make_box(cz=1.5)) == 0.0


def test_contained_box():
    outer = make_box(l=2.0, w=2.0, h=2.0)
    inner = make_box(l=1.0, w=1.0, h=1.0)
    assert iou_3d(outer, inner) == pytest.approx(1.0 / 8.0, abs=1e-12)
    assert bev_iou(outer, inner) == pytest.approx(0.25, abs=1e-12)


def test_iou_symmetric_and_yaw_pi_equivalent():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = random_box(rng), random_box(rng)
        assert bev_iou(a, b) == pytest.approx(bev_iou(b, a), abs=1e-9)
        assert iou_3d(a, b) == pytest.approx(iou_3d(b, a), abs=1e-9)
        flipped = a.placed(a.center, a.yaw + math.pi)
        assert bev_iou(flipped, b) == pytest.approx(bev_iou(a, b), abs=1e-9)
        assert 0.0 <= iou_3d(a, b) <= 1.0


def test_bev_iou_matches_monte_carlo():
    rng = np.random.default_rng(11)
    for _ in range(50):
        a, b = random_box(rng, spread=1.0), random_box(rng, spread=1.0)
        estimate = monte_carlo_bev_iou(a, b, rng, 1_000_000)
        assert abs(bev_iou(a, b) - estimate) <= 0.01


def test_clip_and_area_of_squares():
    square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    shifted = [(0.5, 0.5), (1.5, 0.5), (1.5, 1.5), (0.5, 1.5)]
    assert polygon_area(square) == pytest.approx(1.0)
    assert polygon_area(clip_convex(square, shifted)) == pytest.approx(0.25)
    assert polygon_area([(0.0, 0.0), (1.0, 1.0)]) == 0.0


def test_corners_are_counter_clockwise():
    corners = box_corners_bev(make_box(l=4.0, w=2.0, yaw=0.3))
    x, y = corners[:, 0], corners[:, 1]
    signed = 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    assert signed == pytest.approx(8.0)


def test_pairwise_iou_prefilter():
    boxes_a = [make_box(), make_box(cx=50.0)]
    boxes_b = [make_box(cx=0.5), make_box(cx=100.0)]
    matrix = pairwise_iou(boxes_a, boxes_b, "3d")
    assert matrix.shape == (2, 2)
    assert matrix[0, 0] == pytest.approx(1.0 / 3.0)
    assert matrix[0, 1] == 0.0 and matrix[1, 0] == 0.0 and matrix[1, 1] == 0.0
    assert pairwise_iou([], boxes_b).shape == (0, 2)


def test_normalize_yaw_range():
    assert normalize_yaw(math.pi) == pytest.approx(math.pi)
    assert normalize_yaw(-math.pi) == pytest.approx(math.pi)
    assert normalize_yaw(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert make_box(yaw=2 * math.pi + 0.25).yaw == pytest.approx(0.25)


def test_box_rejects_non_positive_dims():
    with pytest.raises(ValueError):
        make_box(l=0.0)
    with pytest.raises(ValueError):
        make_box(cx=float("nan"))


def test_points_in_box_includes_faces():
    box = make_box(l=2.0, w=2.0, h=2.0)
    pc = PointCloud(points=[[1.0, 0.0, 0.0, 0.1], [0.0, 0.0, 0.0, 0.1], [1.01, 0.0, 0.0, 0.1], [0.0, -1.0, 1.0, 0.1]])
    assert points_in_box(pc, box).tolist() == [0, 1, 3]
    assert points_in_box(PointCloud.empty(), box).size == 0


def test_local_frame_round_trip():
    rng = np.random.default_rng(5)
    box = random_box(rng)
    xyz = rng.normal(size=(20, 3))
    np.testing.assert_allclose(from_box_local(to_box_local(xyz, box), box), xyz, atol=1e-12)


def test_transform_object_keeps_points_inside():
    rng = np.random.default_rng(7)
    for _ in range(20):
        box = random_box(rng)
        local = rng.uniform(-0.5, 0.5, size=(30, 3)) * box.dims
        pc = PointCloud(points=np.column_stack([from_box_local(local, box), rng.uniform(0, 1, 30)]))
        moved, new_box = transform_object(pc, box, (30.0, -4.0, 0.2), 1.3)
        assert new_box.dims.tolist() == box.dims.tolist()
        assert new_box.yaw == pytest.approx(1.3)
        assert points_in_box(moved, new_box).size == 30
        np.testing.assert_array_equal(moved.intensity, pc.intensity)


def test_resize_object_scales_to_target():
    box = make_box(l=2.0, w=1.0, h=1.0)
    pc = PointCloud(points=[[1.0, 0.5, 0.5, 0.2], [-1.0, -0.5, -0.5, 0.3]])
    resized, new_box = resize_object(pc, box, (4.0, 3.0, 0.5))
    assert (new_box.l, new_box.w, new_box.h) == (4.0, 3.0, 0.5)
    np.testing.assert_allclose(resized.xyz, [[2.0, 1.5, 0.25], [-2.0, -1.5, -0.25]])
    assert points_in_box(resized, new_box).size == 2


def test_resize_object_rejects_bad_dims():
    with pytest.raises(InvalidInputError):
        resize_object(PointCloud.empty(), make_box(), (1.0, 0.0, 1.0))


def test_center_distance_is_3d():
    assert center_distance(make_box(), make_box(cx=3.0, cy=4.0)) == pytest.approx(5.0)
    assert center_distance(make_box(), make_box(cz=2.0)) == pytest.approx(2.0)
