"""
Frozen OOD benchmarks. A synthetic scene keeps the background of a source
scene, loses every annotated object together with its points, and receives
bank objects labeled as the unseen class. Generation happens once and is
written to disk with a manifest that lets anyone regenerate identical bytes.
"""
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from owl3d.clients.scene_store import SceneStore, bank_digest
from owl3d.schemas.bank import LocationPool, ObjectBank
from owl3d.schemas.benchmark import BenchmarkManifest, BenchmarkParams, InsertedObject, ManifestScene, SyntheticScene
from owl3d.schemas.scene import SceneRecord
from owl3d.utils.bank_augment import paste_samples, placement_of
from owl3d.utils.errors import FormatError, InvalidInputError, schema_error_from_validation
from owl3d.utils.geom import points_in_box
from owl3d.utils.parallel import parallel_map
from owl3d.utils.seeding import stream_rng

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"


def _in_range(center: np.ndarray, range_m: Tuple[float, float]) -> bool:
    distance = math.sqrt(float(np.dot(center, center)))
    return range_m[0] <= distance <= range_m[1]


def select_scenes(scenes: Sequence[SceneRecord], target_class: str, range_m: Tuple[float, float]) -> List[str]:
    """Scenes holding at least one target_class object whose center lies within range_m of the sensor."""
    return [
        s.scene_id
        for s in scenes
        if any(o.class_label == target_class and _in_range(o.box.center, range_m) for o in s.annotations)
    ]


def donor_digest(donors: Optional[LocationPool]) -> str:
    payload = json.dumps((donors or LocationPool()).model_dump(mode="json"), separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _scene_placements(scene: SceneRecord, donors: Optional[LocationPool], seed: int) -> LocationPool:
    rng = stream_rng(seed, f"placements/{scene.scene_id}")
    own = [placement_of(o.box) for o in scene.annotations]
    shared = list(donors.placements) if donors else []
    ordered = [own[i] for i in rng.permutation(len(own))] + [shared[i] for i in rng.permutation(len(shared))]
    return LocationPool(placements=ordered)


def build_synthetic_scene(
    scene: SceneRecord,
    bank: ObjectBank,
    samples_per_scene: int = 1,
    locations: Optional[LocationPool] = None,
    seed: int = 0,
    unseen_label: str = "Anomaly",
) -> SyntheticScene:
    """
    Strip all foreground from a scene and paste samples_per_scene bank objects.
    Placements are the scene's own removed boxes first, then the shared donor pool.
    """
    removed = set()
    for obj in scene.annotations:
        removed.update(points_in_box(scene.cloud, obj.box).tolist())
    background = SceneRecord(
        scene_id=scene.scene_id,
        cloud=scene.cloud.without(sorted(removed)) if removed else scene.cloud,
        annotations=[],
    )
    pool = _scene_placements(scene, locations, seed)
    result = paste_samples(
        background,
        bank,
        class_label=unseen_label,
        sample_number=samples_per_scene,
        locations=pool,
        seed=seed,
        shuffle_locations=False,
    )
    inserted = [
        InsertedObject(bank_index=p.bank_index, class_label=unseen_label, box=p.box, num_points=p.num_points)
        for p in result.pasted
    ]
    if not inserted:
        logger.debug(f"{scene.scene_id}: no insertion succeeded")
    return SyntheticScene(scene=result.scene, inserted=inserted, removed=len(removed), rejected=result.rejected)


def dump_manifest(manifest: BenchmarkManifest) -> str:
    return json.dumps(manifest.model_dump(by_alias=True, mode="json"), indent=2) + "\n"


def manifest_digest(manifest: BenchmarkManifest) -> str:
    return hashlib.sha256(dump_manifest(manifest).encode("utf-8")).hexdigest()


def load_manifest(path) -> BenchmarkManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_FILE
    try:
        return BenchmarkManifest.model_validate(json.loads(path.read_text()))
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON: {e.msg}", path=str(path), line=e.lineno)
    except ValidationError as e:
        raise schema_error_from_validation(e, path=str(path))


def freeze_benchmark(
    scenes: Sequence[SceneRecord],
    bank: ObjectBank,
    params: BenchmarkParams,
    out_dir,
    donors: Optional[LocationPool] = None,
    threads: int = 1,
) -> BenchmarkManifest:
    """Generate, filter by range and persist a benchmark. Output bytes depend only on the inputs and the seed."""
    params = params.model_copy(update={"bank_digest": bank_digest(bank), "donor_digest": donor_digest(donors)})
    ordered = sorted(scenes, key=lambda s: s.scene_id)
    results = parallel_map(
        lambda s: build_synthetic_scene(s, bank, params.samples_per_scene, donors, params.seed, params.unseen_label),
        ordered,
        threads,
    )

    flagged = [r.scene.scene_id for r in results if r.flagged]
    candidates = [r for r in results if not r.flagged]
    in_range = set(select_scenes([r.scene for r in candidates], params.unseen_label, params.range_m))
    kept = [r for r in candidates if r.scene.scene_id in in_range]
    out_of_range = [r.scene.scene_id for r in candidates if r.scene.scene_id not in in_range]

    store = SceneStore(out_dir)
    store.root.mkdir(parents=True, exist_ok=True)
    for r in kept:
        store.save(r.scene)
    stale = store.prune([r.scene.scene_id for r in kept])
    if stale:
        logger.info(f"Removed {stale} stale scenes from {store.root}")

    manifest = BenchmarkManifest(
        name=params.name,
        seed=params.seed,
        params=params,
        source_scene_ids=[s.scene_id for s in ordered],
        scene_ids=[r.scene.scene_id for r in kept],
        flagged=flagged,
        out_of_range=out_of_range,
        scenes=[ManifestScene(scene_id=r.scene.scene_id, inserted=r.inserted) for r in kept],
    )
    (store.root / MANIFEST_FILE).write_text(dump_manifest(manifest))
    logger.info(
        f"Froze benchmark {params.name!r}: {len(kept)} scenes kept, {len(flagged)} flagged, "
        f"{len(out_of_range)} out of range"
    )
    return manifest


def regenerate_benchmark(
    manifest: BenchmarkManifest,
    scenes: Sequence[SceneRecord],
    bank: ObjectBank,
    out_dir,
    donors: Optional[LocationPool] = None,
    threads: int = 1,
) -> BenchmarkManifest:
    """Rebuild a frozen benchmark from its manifest and the original inputs."""
    digest = bank_digest(bank)
    if manifest.params.bank_digest and manifest.params.bank_digest != digest:
        raise InvalidInputError(f"bank digest {digest[:12]} does not match manifest {manifest.params.bank_digest[:12]}")
    if manifest.params.donor_digest and manifest.params.donor_digest != donor_digest(donors):
        raise InvalidInputError("donor placements do not match the manifest")
    available = {s.scene_id for s in scenes}
    missing = [sid for sid in manifest.source_scene_ids if sid not in available]
    if missing:
        raise InvalidInputError(f"{len(missing)} source scenes missing, first {missing[0]!r}")
    sources = [s for s in scenes if s.scene_id in set(manifest.source_scene_ids)]
    rebuilt = freeze_benchmark(sources, bank, manifest.params, out_dir, donors=donors, threads=threads)
    if rebuilt != manifest:
        raise InvalidInputError("regenerated benchmark differs from its manifest")
    return rebuilt
