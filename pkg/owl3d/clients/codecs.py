"""
Canonical JSON formats: per-scene annotation documents and detection JSON Lines.
Floats are written with Python's shortest round-trip repr, so read(write(x)) == x.
"""
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from pydantic import ValidationError

from owl3d.schemas.scene import AnnotationFile, GtObject, SceneDetections
from owl3d.utils.errors import FormatError, SchemaError, schema_error_from_validation

logger = logging.getLogger(__name__)


def dump_annotations(doc: AnnotationFile) -> str:
    return json.dumps(doc.model_dump(by_alias=True, mode="json"), indent=2) + "\n"


def write_annotations(path, scene_id: str, objects: List[GtObject]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_annotations(AnnotationFile(scene_id=scene_id, objects=objects)))


def parse_annotations(text: str, path: Optional[str] = None) -> AnnotationFile:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e.msg}", path=path, line=e.lineno)
    try:
        return AnnotationFile.model_validate(data)
    except ValidationError as e:
        raise schema_error_from_validation(e, path=path)


def read_annotations(path) -> AnnotationFile:
    return parse_annotations(Path(path).read_text(), path=str(path))


def dump_detection_line(scene: SceneDetections) -> str:
    return json.dumps(scene.model_dump(mode="json"), separators=(",", ":"))


def write_detections(path, scenes: Iterable[SceneDetections]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for scene in scenes:
            fh.write(dump_detection_line(scene) + "\n")


def parse_detections(text: str, num_classes: Optional[int] = None, path: Optional[str] = None) -> List[SceneDetections]:
    """
    Parse a detections JSON Lines document.
    When num_classes is None the first detection fixes K for the whole file.
    """
    out = []
    seen = set()
    expected = num_classes
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as e:
            raise FormatError(f"invalid JSON: {e.msg}", path=path, line=lineno)
        try:
            scene = SceneDetections.model_validate(data)
        except ValidationError as e:
            raise schema_error_from_validation(e, path=path, line=lineno)
        for i, det in enumerate(scene.detections):
            if expected is None:
                expected = len(det.scores)
            if len(det.scores) != expected:
                raise SchemaError(
                    f"expected {expected} class scores, got {len(det.scores)}",
                    f"detections[{i}].scores",
                    path=path,
                    line=lineno,
                )
        if scene.scene_id in seen:
            raise FormatError(f"duplicate scene_id {scene.scene_id!r}", path=path, line=lineno)
        seen.add(scene.scene_id)
        out.append(scene)
    return out


def read_detections(path, num_classes: Optional[int] = None) -> List[SceneDetections]:
    scenes = parse_detections(Path(path).read_text(), num_classes=num_classes, path=str(path))
    logger.info(f"Loaded detections for {len(scenes)} scenes from {path}")
    return scenes


def detections_by_scene(scenes: List[SceneDetections]) -> Dict[str, SceneDetections]:
    return {s.scene_id: s for s in scenes}
