import json
import math

import pytest

from conftest import make_box, make_detection
from owl3d.clients.codecs import (
    detections_by_scene,
    dump_annotations,
    parse_annotations,
    parse_detections,
    read_annotations,
    read_detections,
    write_annotations,
    write_detections,
)
from owl3d.schemas.scene import AnnotationFile, GtObject, SceneDetections, ScoreSpace
from owl3d.utils.errors import FormatError, SchemaError


def test_annotation_round_trip(tmp_path):
    objects = [
        GtObject(class_label="Car", box=make_box(10.0, 2.0, -0.9, 3.9, 1.6, 1.5, math.pi), num_points=120),
        GtObject(class_label="Misc", box=make_box(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, -0.7), num_points=0),
    ]
    path = tmp_path / "annotations" / "000001.json"
    write_annotations(path, "000001", objects)
    doc = read_annotations(path)
    assert doc.scene_id == "000001"
    assert doc.objects == objects
    assert doc.objects[0].box.yaw == 3.141592653589793


def test_annotation_uses_class_key():
    doc = AnnotationFile(scene_id="s", objects=[GtObject(class_label="Car", box=make_box())])
    data = json.loads(dump_annotations(doc))
    assert data["objects"][0]["class"] == "Car"
    assert set(data["objects"][0]["box"]) == {"cx", "cy", "cz", "l", "w", "h", "yaw"}


def test_missing_box_names_json_path():
    text = json.dumps({"scene_id": "s", "objects": [{"class": "Car", "num_points": 3}]})
    with pytest.raises(SchemaError) as exc:
        parse_annotations(text, path="s.json")
    assert exc.value.json_path == "objects[0].box"
    assert "objects[0].box" in str(exc.value)


def test_invalid_json_is_format_error():
    with pytest.raises(FormatError):
        parse_annotations("{not json")


def test_unknown_annotation_key_rejected():
    text = json.dumps({"scene_id": "s", "objects": [], "extra": 1})
    with pytest.raises(SchemaError):
        parse_annotations(text)


def test_detection_round_trip(tmp_path):
    scenes = [
        SceneDetections(
            scene_id="000001",
            detections=[make_detection(make_box(1.0, 2.0, 0.0), conf=0.9, scores=(1.2, -0.5, 0.3), objectness=0.7)],
        ),
        SceneDetections(scene_id="000002", detections=[]),
        SceneDetections(scene_id="000003", score_space=ScoreSpace.PROB, detections=[make_detection(make_box(), scores=(0.1, 0.2, 0.7))]),
    ]
    path = tmp_path / "dets.jsonl"
    write_detections(path, scenes)
    back = read_detections(path, num_classes=3)
    assert back == scenes
    assert back[0].detections[0].scores == [1.2, -0.5, 0.3]
    assert back[1].detections == []
    assert back[2].score_space == ScoreSpace.PROB
    assert len(path.read_text().splitlines()) == 3


def test_scores_arity_checked_against_catalog():
    line = json.dumps(
        {"scene_id": "s", "detections": [{"conf": 0.5, "scores": [0.1, 0.2], "box": make_box().model_dump()}]}
    )
    with pytest.raises(SchemaError) as exc:
        parse_detections(line, num_classes=3)
    assert exc.value.json_path == "detections[0].scores"
    assert exc.value.line == 1


def test_scores_arity_inferred_from_first_detection():
    box = make_box().model_dump()
    text = "\n".join(
        [
            json.dumps({"scene_id": "a", "detections": [{"conf": 0.5, "scores": [0.1, 0.2, 0.3], "box": box}]}),
            json.dumps({"scene_id": "b", "detections": [{"conf": 0.5, "scores": [0.1], "box": box}]}),
        ]
    )
    with pytest.raises(SchemaError) as exc:
        parse_detections(text)
    assert exc.value.line == 2


def test_duplicate_scene_rejected():
    text = '{"scene_id": "a", "detections": []}\n{"scene_id": "a", "detections": []}\n'
    with pytest.raises(FormatError):
        parse_detections(text)


def test_non_finite_conf_rejected():
    text = '{"scene_id": "a", "detections": [{"conf": NaN, "scores": [0.1], "box": {"cx": 0, "cy": 0, "cz": 0, "l": 1, "w": 1, "h": 1, "yaw": 0}}]}'
    with pytest.raises(SchemaError):
        parse_detections(text)


def test_detections_by_scene():
    scenes = parse_detections('{"scene_id": "a"}\n\n{"scene_id": "b"}\n')
    assert sorted(detections_by_scene(scenes)) == ["a", "b"]
