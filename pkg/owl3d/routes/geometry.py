from fastapi import APIRouter

from owl3d.schemas.evaluation import IouKind
from owl3d.schemas.service import IouRequest, IouResponse
from owl3d.utils.geom import bev_iou, iou_3d


router = APIRouter(prefix="/geometry", tags=["Geometry"])


@router.post("/iou", response_model=IouResponse)
async def box_iou(data: IouRequest):
    """3D or BEV IoU of two LiDAR-frame boxes."""
    value = bev_iou(data.a, data.b) if data.kind == IouKind.BEV else iou_3d(data.a, data.b)
    return IouResponse(iou=value)
