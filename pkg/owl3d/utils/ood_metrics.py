"""
OOD scoring of detections and the AUROC / AUPR / FPR@95TPR metrics.

Score functions return an in-distribution score (higher = more ID). The
metrics treat OOD as the positive class and rank by OOD-ness = -id_score.
"""
import logging
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.special import expit, logsumexp, softmax
from sklearn.metrics import average_precision_score, roc_auc_score, roc_curve

from owl3d.schemas.evaluation import EvalScene, MatchResult, MetricValues, OODReport, ScoreMetric
from owl3d.schemas.scene import ScoreSpace
from owl3d.utils.errors import InvalidInputError

logger = logging.getLogger(__name__)

PROB_SPACE_METRICS = {ScoreMetric.MAX_PROB, ScoreMetric.SUM_PROB}


def _logit_matrix(logits) -> np.ndarray:
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise InvalidInputError("logits need at least one class")
    if not np.isfinite(arr).all():
        raise InvalidInputError("logits must be finite")
    return arr


def id_scores(logits, metric: ScoreMetric, temperature: float = 1.0, score_space: ScoreSpace = ScoreSpace.LOGIT) -> np.ndarray:
    """Row-wise id_score for an N x K matrix."""
    metric = ScoreMetric(metric)
    f = _logit_matrix(logits)
    if temperature <= 0:
        raise InvalidInputError("temperature must be positive")

    if ScoreSpace(score_space) == ScoreSpace.PROB:
        if metric not in PROB_SPACE_METRICS:
            raise InvalidInputError(f"{metric.value} needs logits; detections carry probabilities")
        return f.max(axis=1) if metric == ScoreMetric.MAX_PROB else f.sum(axis=1)

    if metric == ScoreMetric.MSP:
        return softmax(f, axis=1).max(axis=1)
    if metric == ScoreMetric.MAX_LOGIT:
        return f.max(axis=1)
    if metric == ScoreMetric.SUM_LOGIT:
        return f.sum(axis=1)
    if metric == ScoreMetric.MAX_PROB:
        return expit(f.max(axis=1))
    if metric == ScoreMetric.SUM_PROB:
        return expit(f).sum(axis=1)
    if metric == ScoreMetric.MAX_ENERGY:
        return np.logaddexp(0.0, f).max(axis=1)
    if metric == ScoreMetric.JOINT_ENERGY:
        return np.logaddexp(0.0, f).sum(axis=1)
    # negated free energy: T * log sum exp(f / T)
    return temperature * logsumexp(f / temperature, axis=1)


def id_score(logits, metric: ScoreMetric, temperature: float = 1.0, score_space: ScoreSpace = ScoreSpace.LOGIT) -> float:
    return float(id_scores(logits, metric, temperature, score_space)[0])


def _pools(id_values, ood_values):
    id_arr = np.asarray(id_values, dtype=np.float64).ravel()
    ood_arr = np.asarray(ood_values, dtype=np.float64).ravel()
    if id_arr.size == 0:
        raise InvalidInputError("in-distribution score pool is empty")
    if ood_arr.size == 0:
        raise InvalidInputError("OOD score pool is empty")
    if not (np.isfinite(id_arr).all() and np.isfinite(ood_arr).all()):
        raise InvalidInputError("scores must be finite")
    labels = np.concatenate([np.zeros(id_arr.size), np.ones(ood_arr.size)])
    ood_ness = -np.concatenate([id_arr, ood_arr])
    return labels, ood_ness


def auroc(id_values, ood_values) -> float:
    """P(OOD ranked more OOD than ID) + 0.5 P(tie)."""
    labels, ood_ness = _pools(id_values, ood_values)
    return float(roc_auc_score(labels, ood_ness))


def aupr(id_values, ood_values) -> float:
    """Average precision with OOD as the positive class."""
    labels, ood_ness = _pools(id_values, ood_values)
    return float(average_precision_score(labels, ood_ness))


def fpr_at_tpr(id_values, ood_values, tpr_target: float = 0.95) -> float:
    """FPR on ID at the largest OOD-ness cutoff whose TPR on OOD reaches tpr_target."""
    if not 0.0 < tpr_target <= 1.0:
        raise InvalidInputError("tpr_target must lie in (0, 1]")
    labels, ood_ness = _pools(id_values, ood_values)
    fpr, tpr, _ = roc_curve(labels, ood_ness, drop_intermediate=False)
    return float(fpr[np.argmax(tpr >= tpr_target)])


def metric_values(id_values, ood_values) -> MetricValues:
    return MetricValues(
        auroc=auroc(id_values, ood_values),
        aupr=aupr(id_values, ood_values),
        fpr95=fpr_at_tpr(id_values, ood_values, 0.95),
    )


def _collect_pairs(matches: Sequence[MatchResult], scenes: Sequence[EvalScene], id_classes, ood_classes):
    """Matched detections split into ID / OOD pools by the ground-truth label."""
    if len(matches) != len(scenes):
        raise InvalidInputError(f"{len(matches)} match results for {len(scenes)} scenes")
    id_rows, ood_rows = [], []
    unmatched_ood = 0
    for match, scene in zip(matches, scenes):
        for pair in match.pairs:
            label = scene.gts[pair.gt_index].class_label
            det = scene.detections[pair.det_index]
            if label in id_classes:
                id_rows.append((det.scores, scene.score_space))
            elif label in ood_classes:
                ood_rows.append((det.scores, scene.score_space))
        unmatched_ood += sum(1 for i in match.unmatched_gt if scene.gts[i].class_label in ood_classes)
    return id_rows, ood_rows, unmatched_ood


def _score_rows(rows, metric: ScoreMetric, temperature: float) -> np.ndarray:
    return np.array([id_score(scores, metric, temperature, space) for scores, space in rows], dtype=np.float64)


def compare_score_metrics(
    matches: Sequence[MatchResult],
    scenes: Sequence[EvalScene],
    metrics: Iterable[ScoreMetric],
    id_classes: Iterable[str],
    ood_classes: Iterable[str],
    temperature: float = 1.0,
) -> OODReport:
    """One AUROC / AUPR / FPR95 block per score metric over the same matched pairs."""
    id_rows, ood_rows, unmatched_ood = _collect_pairs(matches, scenes, set(id_classes), set(ood_classes))
    if not id_rows:
        raise InvalidInputError("no matched in-distribution detections to score")
    if not ood_rows:
        raise InvalidInputError("no matched OOD detections to score")
    if unmatched_ood:
        logger.warning(f"{unmatched_ood} OOD ground truths had no detection left and are excluded from scoring")

    blocks: Dict[str, MetricValues] = {}
    for metric in metrics:
        metric = ScoreMetric(metric)
        blocks[metric.value] = metric_values(
            _score_rows(id_rows, metric, temperature),
            _score_rows(ood_rows, metric, temperature),
        )
    return OODReport(metrics=blocks, n_id=len(id_rows), n_ood=len(ood_rows), n_unmatched_ood=unmatched_ood)


def evaluate_ood(
    matches: Sequence[MatchResult],
    scenes: Sequence[EvalScene],
    metric: ScoreMetric,
    id_classes: Iterable[str],
    ood_classes: Iterable[str],
    temperature: float = 1.0,
) -> OODReport:
    return compare_score_metrics(matches, scenes, [metric], id_classes, ood_classes, temperature)
