import logging
from typing import List

from fastapi import APIRouter, HTTPException

from owl3d.schemas.evaluation import EvalScene, ScoreMetric
from owl3d.schemas.scene import ScoreSpace
from owl3d.schemas.service import OODRequest, OODResponse, RecallRequest, RecallResponse, SceneInput
from owl3d.utils.errors import Owl3dError
from owl3d.utils.match_eval import match_scenes, recall_curve
from owl3d.utils.ood_metrics import PROB_SPACE_METRICS, compare_score_metrics

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/evaluation", tags=["Evaluation"])


def _eval_scenes(scenes: List[SceneInput]) -> List[EvalScene]:
    return [
        EvalScene(scene_id=s.scene_id, gts=s.gts, detections=s.detections, score_space=s.score_space)
        for s in scenes
    ]


@router.post("/recall", response_model=RecallResponse, response_model_by_alias=True)
async def recall(data: RecallRequest):
    try:
        report = recall_curve(_eval_scenes(data.scenes), data.eval, id_classes=data.id_classes, ood_classes=data.ood_classes)
    except Owl3dError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return RecallResponse(rows=report.rows)


@router.post("/ood", response_model=OODResponse)
async def ood(data: OODRequest):
    """Match detections to ground truth and compare OOD score metrics on the matched pairs."""
    scenes = _eval_scenes(data.scenes)
    metrics = data.metrics
    if not metrics:
        prob = any(s.score_space == ScoreSpace.PROB for s in scenes)
        metrics = [m for m in ScoreMetric if not prob or m in PROB_SPACE_METRICS]
    try:
        matches = match_scenes(scenes, data.eval)
        report = compare_score_metrics(matches, scenes, metrics, data.id_classes, data.ood_classes, data.temperature)
    except Owl3dError as e:
        logger.warning(f"OOD evaluation rejected: {e}")
        raise HTTPException(status_code=422, detail=str(e))
    return OODResponse(**report.model_dump())
