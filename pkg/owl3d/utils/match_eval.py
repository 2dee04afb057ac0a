"""
Two-stage Hungarian matching of ground truth to detections and the top-k
proposal recall protocol.

Matching: ground truths overlapping at least one detection are assigned by
IoU (maximized); the remaining ground truths take the closest leftover
detections by center distance (minimized).
"""
import logging
from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from owl3d.schemas.evaluation import (
    EvalConfig,
    EvalScene,
    MatchPair,
    MatchResult,
    MatchStage,
    RecallMode,
    RecallReport,
    RecallRow,
)
from owl3d.schemas.scene import Detection, GtObject
from owl3d.utils.errors import InvalidInputError
from owl3d.utils.geom import center_distance, pairwise_iou
from owl3d.utils.parallel import parallel_map

logger = logging.getLogger(__name__)

ALL_GROUP = "all"
ID_GROUP = "ID"
OOD_GROUP = "OOD"


def hungarian(cost, objective: str = "minimize") -> List[Tuple[int, int]]:
    """Optimal one-to-one assignment of min(R, C) pairs, sorted by row."""
    matrix = np.asarray(cost, dtype=np.float64)
    if matrix.size == 0:
        return []
    if matrix.ndim != 2:
        raise InvalidInputError(f"cost must be a 2-D matrix, got shape {matrix.shape}")
    if not np.isfinite(matrix).all():
        raise InvalidInputError("cost matrix must be finite")
    if objective not in ("minimize", "maximize"):
        raise InvalidInputError(f"unknown objective {objective!r}")
    rows, cols = linear_sum_assignment(matrix, maximize=objective == "maximize")
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def assignment_cost(cost, pairs: Iterable[Tuple[int, int]]) -> float:
    matrix = np.asarray(cost, dtype=np.float64)
    return float(sum(matrix[r, c] for r, c in pairs))


def rank_by_conf(detections: Sequence[Detection]) -> np.ndarray:
    """Indices sorted by conf descending; ties keep input order."""
    conf = np.array([d.conf for d in detections], dtype=np.float64)
    return np.argsort(-conf, kind="stable")


def top_k(detections: Sequence[Detection], k: int) -> List[Detection]:
    return [detections[i] for i in rank_by_conf(detections)[:k]]


def match_scene(gts: Sequence[GtObject], dets: Sequence[Detection], cfg: Optional[EvalConfig] = None) -> MatchResult:
    """
    Step 0: split ground truths into A (no overlap with any detection) and B.
    Step 1: Hungarian over B x all detections maximizing IoU.
    Step 2: Hungarian over A x unused detections minimizing center distance.
    Detections must already be truncated to the top-k by conf.
    """
    cfg = cfg or EvalConfig()
    if not gts:
        return MatchResult()
    if not dets:
        return MatchResult(unmatched_gt=list(range(len(gts))))

    gt_boxes = [g.box for g in gts]
    det_boxes = [d.box for d in dets]
    iou = pairwise_iou(gt_boxes, det_boxes, cfg.iou_kind.value)

    overlapping = iou.max(axis=1) > 0.0
    set_b = np.flatnonzero(overlapping)
    set_a = np.flatnonzero(~overlapping)

    pairs: List[MatchPair] = []
    used_dets = set()
    matched_gts = set()

    for r, c in hungarian(iou[set_b], "maximize") if set_b.size else []:
        gt_index = int(set_b[r])
        pairs.append(
            MatchPair(
                gt_index=gt_index,
                det_index=c,
                stage=MatchStage.IOU,
                iou_value=float(iou[gt_index, c]),
                distance_value=center_distance(gt_boxes[gt_index], det_boxes[c]),
            )
        )
        used_dets.add(c)
        matched_gts.add(gt_index)

    remaining = [j for j in range(len(dets)) if j not in used_dets]
    if set_a.size and remaining:
        dist = np.array([[center_distance(gt_boxes[i], det_boxes[j]) for j in remaining] for i in set_a])
        for r, c in hungarian(dist, "minimize"):
            gt_index = int(set_a[r])
            pairs.append(
                MatchPair(
                    gt_index=gt_index,
                    det_index=remaining[c],
                    stage=MatchStage.DISTANCE,
                    iou_value=0.0,
                    distance_value=float(dist[r, c]),
                )
            )
            matched_gts.add(gt_index)

    pairs.sort(key=lambda p: p.gt_index)
    unmatched = [i for i in range(len(gts)) if i not in matched_gts]
    return MatchResult(pairs=pairs, unmatched_gt=unmatched)


def _as_eval_scene(item) -> EvalScene:
    if isinstance(item, EvalScene):
        return item
    gts, dets = item
    return EvalScene(gts=list(gts), detections=list(dets))


def _groups_for(label: str, id_classes, ood_classes) -> List[str]:
    groups = [ALL_GROUP, label]
    if label in id_classes:
        groups.append(ID_GROUP)
    if label in ood_classes:
        groups.append(OOD_GROUP)
    return groups


def clip_k_values(k_values: Iterable[int], proposal_k: int) -> List[int]:
    k_values = sorted(set(k_values))
    kept = [k for k in k_values if k <= proposal_k]
    if len(kept) < len(k_values) and proposal_k not in kept:
        kept.append(proposal_k)
    return kept


def _scene_recall_counts(scene: EvalScene, cfg: EvalConfig, k_values: List[int], id_classes, ood_classes) -> Dict[tuple, List[int]]:
    """(group, k, threshold) -> [tp, total] for one scene."""
    counts: Dict[tuple, List[int]] = defaultdict(lambda: [0, 0])
    if not scene.gts:
        return counts
    ranked = top_k(scene.detections, max(k_values))
    iou = pairwise_iou([g.box for g in scene.gts], [d.box for d in ranked], cfg.iou_kind.value)

    for k in k_values:
        window = iou[:, :k]
        if cfg.recall_mode == RecallMode.ONE_TO_ONE and window.shape[1]:
            best = np.zeros(len(scene.gts))
            for r, c in hungarian(window, "maximize"):
                best[r] = window[r, c]
        else:
            best = window.max(axis=1) if window.shape[1] else np.zeros(len(scene.gts))
        for t in cfg.iou_thresholds:
            hit = best >= t
            for i, gt in enumerate(scene.gts):
                for group in _groups_for(gt.class_label, id_classes, ood_classes):
                    cell = counts[(group, k, t)]
                    cell[0] += int(hit[i])
                    cell[1] += 1
    return counts


def recall_curve(
    scenes,
    cfg: Optional[EvalConfig] = None,
    k_values: Optional[List[int]] = None,
    id_classes: Iterable[str] = (),
    ood_classes: Iterable[str] = (),
    threads: int = 1,
) -> RecallReport:
    """
    Recall of ground truths by the top-k detections (ranked by conf) at each
    IoU threshold. Coverage mode counts a ground truth as found when any of the
    top-k detections reaches the threshold. The k sweep stops at
    cfg.proposal_k, which is itself reported when the sweep passes it.
    """
    cfg = cfg or EvalConfig()
    k_values = clip_k_values(k_values or cfg.k_values, cfg.proposal_k)
    id_classes, ood_classes = set(id_classes), set(ood_classes)
    eval_scenes = [_as_eval_scene(s) for s in scenes]

    per_scene = parallel_map(
        lambda s: _scene_recall_counts(s, cfg, k_values, id_classes, ood_classes),
        eval_scenes,
        threads,
    )
    totals: Dict[tuple, List[int]] = defaultdict(lambda: [0, 0])
    for counts in per_scene:
        for key, (tp, n) in counts.items():
            totals[key][0] += tp
            totals[key][1] += n

    fixed_groups = [ALL_GROUP]
    if id_classes:
        fixed_groups.append(ID_GROUP)
    if ood_classes:
        fixed_groups.append(OOD_GROUP)
    class_groups = sorted({g for (g, _, _) in totals} - {ALL_GROUP, ID_GROUP, OOD_GROUP})

    rows = []
    for group in fixed_groups + class_groups:
        for k in k_values:
            for t in cfg.iou_thresholds:
                tp, n = totals.get((group, k, t), (0, 0))
                rows.append(
                    RecallRow(
                        class_label=group,
                        k=k,
                        iou_threshold=t,
                        tp=tp,
                        fn=n - tp,
                        recall=(tp / n) if n else None,
                    )
                )
    logger.info(f"Recall computed over {len(eval_scenes)} scenes, {len(rows)} rows")
    return RecallReport(rows=rows)


def match_scenes(scenes, cfg: Optional[EvalConfig] = None, threads: int = 1) -> List[MatchResult]:
    """match_scene over many scenes, each truncated to cfg.proposal_k detections."""
    cfg = cfg or EvalConfig()
    eval_scenes = [_as_eval_scene(s) for s in scenes]
    return parallel_map(lambda s: _match_top_k(s, cfg), eval_scenes, threads)


def _match_top_k(scene: EvalScene, cfg: EvalConfig) -> MatchResult:
    # det_index in the result refers to the scene's original detection order
    kept = rank_by_conf(scene.detections)[: cfg.proposal_k]
    result = match_scene(scene.gts, [scene.detections[i] for i in kept], cfg)
    pairs = [p.model_copy(update={"det_index": int(kept[p.det_index])}) for p in result.pairs]
    return MatchResult(pairs=pairs, unmatched_gt=result.unmatched_gt)
