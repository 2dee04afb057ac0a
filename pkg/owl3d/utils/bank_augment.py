"""
Object banks and the two bank-driven augmentations: Anomaly Sample
copy-paste with collision rejection, and Multi-size Mix.
"""
import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from owl3d.schemas.bank import BankEntry, LocationPool, ObjectBank, PastedObject, PasteResult, Placement, SizePool
from owl3d.schemas.geometry import Box3D, PointCloud
from owl3d.schemas.scene import GtObject, SceneRecord
from owl3d.utils.errors import InvalidInputError
from owl3d.utils.geom import bev_iou, points_in_box, resize_object, to_box_local, transform_object
from owl3d.utils.parallel import parallel_map
from owl3d.utils.seeding import scene_rng, stream_rng

logger = logging.getLogger(__name__)

DEFAULT_MIN_POINTS = 5
DEFAULT_SAMPLE_NUMBER = 20
ANOMALY_LABEL = "Anomaly"


def _local_points(pc: PointCloud, box: Box3D) -> PointCloud:
    local = to_box_local(pc.xyz, box)
    # membership is tolerance-inclusive; pin stragglers onto the faces
    half = 0.5 * box.dims
    return pc.with_xyz(np.clip(local, -half, half))


def build_bank(scenes: Iterable[SceneRecord], classes: Iterable[str], min_points: int = DEFAULT_MIN_POINTS) -> ObjectBank:
    """Extract every object of the requested classes with at least min_points points."""
    classes = set(classes)
    entries = []
    skipped = 0
    for scene in scenes:
        for obj in scene.annotations:
            if obj.class_label not in classes:
                continue
            indices = points_in_box(scene.cloud, obj.box)
            if indices.size < min_points:
                skipped += 1
                continue
            entries.append(
                BankEntry(
                    class_label=obj.class_label,
                    box=obj.box,
                    points=_local_points(scene.cloud.subset(indices), obj.box),
                    source_scene=scene.scene_id,
                    num_points=int(indices.size),
                )
            )
    logger.info(f"Built bank with {len(entries)} objects ({skipped} below {min_points} points)")
    return ObjectBank(entries=entries)


def rgb_to_intensity(r, g, b) -> float:
    """Mean of 8-bit channels scaled to [0, 1]."""
    channels = (r, g, b)
    for value in channels:
        if not 0 <= value <= 255:
            raise InvalidInputError(f"color channel {value} outside [0, 255]")
    return (sum(channels) / 3.0) / 255.0


def rgb_array_to_intensity(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.size and (rgb.min() < 0 or rgb.max() > 255):
        raise InvalidInputError("color channels must lie in [0, 255]")
    return rgb.mean(axis=1) / 255.0


def bank_from_colored_objects(
    objects: Sequence[Tuple[str, np.ndarray]],
    class_label: str = ANOMALY_LABEL,
    min_points: int = DEFAULT_MIN_POINTS,
) -> ObjectBank:
    """
    Build a bank from external colored object scans, each an N x 6 array of
    x, y, z, r, g, b. Boxes are the axis-aligned extent of the points.
    """
    entries = []
    for name, array in objects:
        array = np.asarray(array, dtype=np.float64)
        if array.ndim != 2 or array.shape[1] != 6:
            raise InvalidInputError(f"{name}: expected N x 6 (x, y, z, r, g, b), got shape {array.shape}")
        bad_rows = np.flatnonzero(~np.isfinite(array).all(axis=1))
        if bad_rows.size:
            raise InvalidInputError(f"{name}: non-finite value in row {int(bad_rows[0]) + 1}")
        if array.shape[0] < min_points:
            continue
        xyz = array[:, :3]
        lo, hi = xyz.min(axis=0), xyz.max(axis=0)
        center = 0.5 * (lo + hi)
        dims = np.maximum(hi - lo, 1e-3)
        box = Box3D(cx=center[0], cy=center[1], cz=center[2], l=dims[0], w=dims[1], h=dims[2], yaw=0.0)
        cloud = PointCloud(points=np.column_stack([xyz, rgb_array_to_intensity(array[:, 3:])]))
        entries.append(
            BankEntry(
                class_label=class_label,
                box=box,
                points=_local_points(cloud, box),
                source_scene=name,
                num_points=int(array.shape[0]),
            )
        )
    logger.info(f"Imported {len(entries)} colored objects as {class_label}")
    return ObjectBank(entries=entries)


def size_pool_from_scenes(scenes: Iterable[SceneRecord], class_label: str = "Misc") -> SizePool:
    return SizePool(dims=[(o.box.l, o.box.w, o.box.h) for s in scenes for o in s.annotations if o.class_label == class_label])


def location_pool_from_scenes(scenes: Iterable[SceneRecord], classes: Iterable[str]) -> LocationPool:
    classes = set(classes)
    return LocationPool(placements=[placement_of(o.box) for s in scenes for o in s.annotations if o.class_label in classes])


def placement_of(box: Box3D) -> Placement:
    return Placement(cx=box.cx, cy=box.cy, cz=box.cz, yaw=box.yaw, bottom_z=box.cz - 0.5 * box.h)


def multi_size_mix(bank: ObjectBank, pool: SizePool, seed: int) -> ObjectBank:
    """Keep even-indexed entries; resize odd-indexed entries to sizes drawn from the pool."""
    if not pool.dims:
        raise InvalidInputError("size pool is empty")
    rng = stream_rng(seed, "multi_size_mix")
    entries = []
    for index, entry in enumerate(bank.entries):
        if index % 2 == 0:
            entries.append(entry)
            continue
        dims = pool.dims[int(rng.integers(len(pool.dims)))]
        points, _ = resize_object(entry.points, entry.local_box, dims)
        entries.append(entry.model_copy(update={"box": entry.box.resized(dims), "points": points, "resized": True}))
    logger.info(f"Multi-size mix resized {sum(e.resized for e in entries[1::2])} of {len(entries)} entries")
    return ObjectBank(entries=entries)


def materialize(entry: BankEntry, placement: Placement) -> Tuple[PointCloud, Box3D]:
    """Place a bank object at a donor location."""
    return transform_object(entry.points, entry.local_box, placement.center_for(entry.box.h), placement.yaw)


def _collides(box: Box3D, others: Sequence[Box3D]) -> bool:
    return any(bev_iou(box, other) > 0.0 for other in others)


def paste_samples(
    scene: SceneRecord,
    bank: ObjectBank,
    class_label: str = ANOMALY_LABEL,
    sample_number: int = DEFAULT_SAMPLE_NUMBER,
    locations: Optional[LocationPool] = None,
    seed: int = 0,
    shuffle_locations: bool = True,
) -> PasteResult:
    """
    Paste up to sample_number bank objects (drawn without replacement) at
    unused placements. A candidate whose footprint overlaps any existing or
    already pasted box is rejected; each candidate consumes one placement.
    """
    placements = locations.placements if locations else []
    n_draw = min(sample_number, len(bank.entries))
    if n_draw <= 0 or not placements:
        return PasteResult(scene=scene)

    rng = scene_rng(seed, scene.scene_id)
    chosen = rng.choice(len(bank.entries), size=n_draw, replace=False)
    order = rng.permutation(len(placements)) if shuffle_locations else np.arange(len(placements))

    occupied = [obj.box for obj in scene.annotations]
    clouds = [scene.cloud]
    annotations = list(scene.annotations)
    pasted = []
    rejected = 0
    for slot, bank_index in enumerate(chosen):
        if slot >= len(order):
            break
        entry = bank.entries[int(bank_index)]
        placement = placements[int(order[slot])]
        points, box = materialize(entry, placement)
        if _collides(box, occupied):
            rejected += 1
            continue
        occupied.append(box)
        clouds.append(points)
        annotations.append(GtObject(class_label=class_label, box=box, num_points=entry.num_points))
        pasted.append(PastedObject(bank_index=int(bank_index), placement=placement, box=box, num_points=entry.num_points))

    unplaced = max(0, n_draw - len(order))
    if unplaced:
        logger.debug(f"{scene.scene_id}: {unplaced} samples had no placement left")
    result_scene = SceneRecord(scene_id=scene.scene_id, cloud=PointCloud.concat(clouds), annotations=annotations)
    return PasteResult(scene=result_scene, accepted=len(pasted), rejected=rejected, pasted=pasted)


def augment_scenes(
    scenes: Sequence[SceneRecord],
    bank: ObjectBank,
    locations: LocationPool,
    seed: int,
    class_label: str = ANOMALY_LABEL,
    sample_number: int = DEFAULT_SAMPLE_NUMBER,
    threads: int = 1,
) -> List[PasteResult]:
    """Anomaly Sample augmentation over many scenes; per-scene streams keep it order independent."""
    results = parallel_map(
        lambda scene: paste_samples(scene, bank, class_label, sample_number, locations, seed),
        scenes,
        threads,
    )
    accepted = sum(r.accepted for r in results)
    rejected = sum(r.rejected for r in results)
    logger.info(f"Pasted {accepted} objects into {len(results)} scenes, {rejected} rejected by collision")
    return results
