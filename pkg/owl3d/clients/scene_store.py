import hashlib
import json
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from owl3d.clients.codecs import dump_annotations, read_annotations
from owl3d.clients.kitti import read_pointcloud, write_pointcloud
from owl3d.schemas.bank import BankEntry, BankIndex, BankIndexEntry, ObjectBank
from owl3d.schemas.scene import AnnotationFile, SceneRecord
from owl3d.utils.errors import FormatError, schema_error_from_validation
from owl3d.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

CLOUDS_DIR = "clouds"
ANNOTATIONS_DIR = "annotations"
BANK_INDEX = "index.json"
BANK_BLOBS_DIR = "points"


def _cloud_bytes(points: np.ndarray) -> bytes:
    return np.ascontiguousarray(points, dtype="<f4").tobytes()


class SceneStore:
    """
    Directory of scenes: clouds/<scene_id>.bin and annotations/<scene_id>.json.
    Benchmarks use the same layout with a manifest.json next to the two folders.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.clouds_dir = self.root / CLOUDS_DIR
        self.annotations_dir = self.root / ANNOTATIONS_DIR

    def cloud_path(self, scene_id: str) -> Path:
        return self.clouds_dir / f"{scene_id}.bin"

    def annotation_path(self, scene_id: str) -> Path:
        return self.annotations_dir / f"{scene_id}.json"

    def has_scene(self, scene_id: str) -> bool:
        return self.annotation_path(scene_id).is_file()

    def scene_ids(self) -> List[str]:
        if not self.annotations_dir.is_dir():
            return []
        return sorted(p.stem for p in self.annotations_dir.glob("*.json"))

    def load_annotations(self, scene_id: str) -> AnnotationFile:
        doc = read_annotations(self.annotation_path(scene_id))
        if doc.scene_id != scene_id:
            raise FormatError(f"scene_id {doc.scene_id!r} does not match file name", path=str(self.annotation_path(scene_id)))
        return doc

    def load(self, scene_id: str) -> SceneRecord:
        doc = self.load_annotations(scene_id)
        cloud = read_pointcloud(self.cloud_path(scene_id))
        return SceneRecord(scene_id=scene_id, cloud=cloud, annotations=doc.objects)

    def load_all(self, threads: int = 1, scene_ids: Optional[List[str]] = None) -> List[SceneRecord]:
        ids = self.scene_ids() if scene_ids is None else list(scene_ids)
        scenes = parallel_map(self.load, ids, threads)
        logger.info(f"Loaded {len(scenes)} scenes from {self.root}")
        return scenes

    def save(self, scene: SceneRecord):
        self.clouds_dir.mkdir(parents=True, exist_ok=True)
        self.annotations_dir.mkdir(parents=True, exist_ok=True)
        write_pointcloud(self.cloud_path(scene.scene_id), scene.cloud)
        self.annotation_path(scene.scene_id).write_text(
            dump_annotations(AnnotationFile(scene_id=scene.scene_id, objects=scene.annotations))
        )

    def prune(self, keep: List[str]) -> int:
        """Delete scene files whose id is not in keep. Returns the number of scenes removed."""
        keep = set(keep)
        removed = set()
        for folder, suffix in ((self.clouds_dir, ".bin"), (self.annotations_dir, ".json")):
            if not folder.is_dir():
                continue
            for path in folder.glob(f"*{suffix}"):
                if path.stem not in keep:
                    path.unlink()
                    removed.add(path.stem)
        return len(removed)


def _blob_name(index: int) -> str:
    return f"{BANK_BLOBS_DIR}/{index:06d}.bin"


def bank_index(bank: ObjectBank) -> BankIndex:
    return BankIndex(
        entries=[
            BankIndexEntry(
                file=_blob_name(i),
                class_label=e.class_label,
                box=e.box,
                source_scene=e.source_scene,
                num_points=e.num_points,
                resized=e.resized,
            )
            for i, e in enumerate(bank.entries)
        ]
    )


def dump_bank_index(bank: ObjectBank) -> str:
    return json.dumps(bank_index(bank).model_dump(by_alias=True, mode="json"), indent=2) + "\n"


def bank_digest(bank: ObjectBank) -> str:
    """SHA-256 over the persisted form: index JSON followed by every point blob in order."""
    digest = hashlib.sha256(dump_bank_index(bank).encode("utf-8"))
    for entry in bank.entries:
        digest.update(_cloud_bytes(entry.points.points))
    return digest.hexdigest()


def save_bank(bank: ObjectBank, root) -> str:
    root = Path(root)
    (root / BANK_BLOBS_DIR).mkdir(parents=True, exist_ok=True)
    for stale in (root / BANK_BLOBS_DIR).glob("*.bin"):
        stale.unlink()
    for i, entry in enumerate(bank.entries):
        write_pointcloud(root / _blob_name(i), entry.points)
    (root / BANK_INDEX).write_text(dump_bank_index(bank))
    digest = bank_digest(bank)
    logger.info(f"Saved bank of {len(bank)} objects to {root} (digest {digest[:12]})")
    return digest


def load_bank(root) -> ObjectBank:
    root = Path(root)
    index_path = root / BANK_INDEX
    try:
        index = BankIndex.model_validate(json.loads(index_path.read_text()))
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e.msg}", path=str(index_path), line=e.lineno)
    except ValidationError as e:
        raise schema_error_from_validation(e, path=str(index_path))

    entries = []
    for i, row in enumerate(index.entries):
        points = read_pointcloud(root / row.file)
        try:
            entries.append(
                BankEntry(
                    class_label=row.class_label,
                    box=row.box,
                    points=points,
                    source_scene=row.source_scene,
                    num_points=row.num_points,
                    resized=row.resized,
                )
            )
        except ValidationError as e:
            raise schema_error_from_validation(e, path=f"{index_path} entries[{i}]")
    logger.info(f"Loaded bank of {len(entries)} objects from {root}")
    return ObjectBank(entries=entries)
