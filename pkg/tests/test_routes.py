import math

import pytest
from fastapi.testclient import TestClient

from owl3d.main import app


@pytest.fixture
def client():
    with TestClient(app) as c:
        yield c


def box(cx=0.0, cy=0.0, cz=0.0, l=1.0, w=1.0, h=1.0, yaw=0.0):
    return {"cx": cx, "cy": cy, "cz": cz, "l": l, "w": w, "h": h, "yaw": yaw}


def det(b, scores, conf=0.9):
    return {"conf": conf, "scores": scores, "box": b}


def ood_scene():
    car, ped, odd = box(0.0), box(5.0), box(10.0)
    return {
        "scene_id": "s",
        "gts": [{"class": "Car", "box": car}, {"class": "Pedestrian", "box": ped}, {"class": "Anomaly", "box": odd}],
        "detections": [det(car, [4.0, 0.0, 0.0]), det(ped, [0.0, 3.0, 0.0]), det(odd, [0.1, 0.0, -0.1])],
    }


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json() == {"status": "ok"}


def test_iou_identical_and_offset(client):
    response = client.post("/geometry/iou", json={"a": box(), "b": box()})
    assert response.status_code == 200
    assert response.json()["iou"] == pytest.approx(1.0)
    response = client.post("/geometry/iou", json={"a": box(), "b": box(0.5), "kind": "bev"})
    assert response.json()["iou"] == pytest.approx(1.0 / 3.0)


def test_iou_rejects_degenerate_box(client):
    response = client.post("/geometry/iou", json={"a": box(l=0.0), "b": box()})
    assert response.status_code == 422


def test_score_msp(client):
    response = client.post("/scoring/score", json={"logits": [0.0, 0.0, 0.0], "metric": "MSP"})
    assert response.status_code == 200
    assert response.json() == {"metric": "MSP", "score": pytest.approx(1.0 / 3.0)}


def test_score_energy_with_temperature(client):
    response = client.post("/scoring/score", json={"logits": [0.0, 0.0], "metric": "Energy", "temperature": 2.0})
    assert response.json()["score"] == pytest.approx(2.0 * math.log(2.0))


def test_score_prob_space_needs_prob_metric(client):
    response = client.post("/scoring/score", json={"logits": [0.2, 0.8], "metric": "Energy", "score_space": "prob"})
    assert response.status_code == 422


def test_score_empty_logits(client):
    assert client.post("/scoring/score", json={"logits": []}).status_code == 422


def test_recall_rows(client):
    payload = {"scenes": [ood_scene()], "eval": {"k_values": [1, 3]}, "id_classes": ["Car", "Pedestrian"], "ood_classes": ["Anomaly"]}
    response = client.post("/evaluation/recall", json=payload)
    assert response.status_code == 200
    rows = response.json()["rows"]
    by_key = {(r["class"], r["k"], r["iou_threshold"]): r for r in rows}
    assert by_key[("all", 3, 0.25)]["recall"] == 1.0
    assert by_key[("all", 1, 0.25)]["tp"] == 1
    assert by_key[("OOD", 3, 0.4)]["recall"] == 1.0


def test_ood_metrics(client):
    payload = {"scenes": [ood_scene()], "id_classes": ["Car", "Pedestrian"], "ood_classes": ["Anomaly"], "metrics": ["MSP", "Energy"]}
    response = client.post("/evaluation/ood", json=payload)
    assert response.status_code == 200
    body = response.json()
    assert set(body["metrics"]) == {"MSP", "Energy"}
    assert body["metrics"]["MSP"]["auroc"] == 1.0
    assert (body["n_id"], body["n_ood"], body["n_unmatched_ood"]) == (2, 1, 0)


def test_ood_defaults_to_every_metric(client):
    payload = {"scenes": [ood_scene()], "id_classes": ["Car", "Pedestrian"], "ood_classes": ["Anomaly"]}
    body = client.post("/evaluation/ood", json=payload).json()
    assert len(body["metrics"]) == 8


def test_ood_without_ood_objects(client):
    payload = {"scenes": [ood_scene()], "id_classes": ["Car"], "ood_classes": ["Truck"]}
    response = client.post("/evaluation/ood", json=payload)
    assert response.status_code == 422
    assert "OOD" in response.json()["detail"]
