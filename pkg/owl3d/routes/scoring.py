from fastapi import APIRouter, HTTPException

from owl3d.schemas.service import ScoreRequest, ScoreResponse
from owl3d.utils.errors import Owl3dError
from owl3d.utils.ood_metrics import id_score


router = APIRouter(prefix="/scoring", tags=["Scoring"])


@router.post("/score", response_model=ScoreResponse)
async def score_logits(data: ScoreRequest):
    """ID-ness score of one logit vector; higher means more in-distribution."""
    try:
        value = id_score(data.logits, data.metric, data.temperature, data.score_space)
    except Owl3dError as e:
        raise HTTPException(status_code=422, detail=str(e))
    return ScoreResponse(metric=data.metric, score=value)
