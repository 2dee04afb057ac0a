from fastapi import FastAPI
from contextlib import asynccontextmanager
from fastapi.middleware.cors import CORSMiddleware
from owl3d.clients.settings import CORS_ORIGINS
from owl3d.routes import geometry, scoring, evaluation
from owl3d.schemas.service import HealthResponse
import logging

logger = logging.getLogger(__name__)

@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info("owl3d service started")
    yield
    logger.info("owl3d service stopped")

app = FastAPI(
    title="owl3d API",
    description="Open-world 3D detection evaluation: box IoU, OOD scoring, proposal recall and OOD metrics",
    version="1.0.0",
    openapi_tags=[
        {
            "name": "Geometry",
            "description": "Oriented box IoU in 3D and bird's-eye view",
        },
        {
            "name": "Scoring",
            "description": "Post-hoc OOD score metrics over class logits",
        },
        {
            "name": "Evaluation",
            "description": "Two-stage matching, recall by proposal number and AUROC / AUPR / FPR95",
        },
    ],
    lifespan=lifespan
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=CORS_ORIGINS,
    allow_credentials=True,
    allow_methods=["GET", "POST", "OPTIONS"],
    allow_headers=["*"],
)


@app.get("/health", response_model=HealthResponse, tags=["Health"])
async def health():
    return HealthResponse()


app.include_router(geometry.router)
app.include_router(scoring.router)
app.include_router(evaluation.router)
