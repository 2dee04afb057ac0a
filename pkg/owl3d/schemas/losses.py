from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

OUT_LABEL = -1  # marks an Anomaly / outlier element in a contrastive batch


class LossConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = Field(0.25, gt=0.0, lt=1.0, description="Focal balance factor")
    gamma: float = Field(2.0, ge=0.0, description="Focal focusing exponent")
    T: float = Field(1.0, gt=0.0, description="Energy temperature")
    m_in: float = Field(-6.0, description="Energy margin for seen-class samples")
    m_out: float = Field(-3.0, description="Energy margin for Anomaly samples")
    tau_c: float = Field(0.10, gt=0.0, description="Contrastive temperature")
    lambda_en: float = Field(1.0, ge=0.0)
    lambda_c: float = Field(1.0, ge=0.0)

    @model_validator(mode="after")
    def _margins(self):
        if self.m_out < self.m_in:
            raise ValueError("m_out must be >= m_in")
        return self


class LogitBatch(BaseModel):
    """
    Rows of class logits for seen-class samples (id_logits) and Anomaly samples
    (ood_logits). When anomaly_column is set, that column is left out of the energy.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    id_logits: np.ndarray
    ood_logits: np.ndarray
    anomaly_column: Optional[int] = None

    @field_validator("id_logits", "ood_logits", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        arr = np.asarray(value, dtype=np.float64)
        if arr.size == 0:
            return arr.reshape(0, arr.shape[-1] if arr.ndim == 2 else 0)
        if arr.ndim != 2:
            raise ValueError("logits must be a 2-D matrix")
        if not np.isfinite(arr).all():
            raise ValueError("logits must be finite")
        return arr


class ContrastiveBatch(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    embeddings: np.ndarray = Field(..., description="n x d raw (un-normalized) embeddings")
    labels: List[int] = Field(..., description="Seen-class id per element, or OUT_LABEL")

    @field_validator("embeddings", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError("embeddings must be an n x d matrix with n >= 1")
        if not np.isfinite(arr).all():
            raise ValueError("embeddings must be finite")
        return arr

    @model_validator(mode="after")
    def _lengths(self):
        if len(self.labels) != self.embeddings.shape[0]:
            raise ValueError("one label per embedding is required")
        return self


class LossComponents(BaseModel):
    L_cls: float = 0.0
    L_reg: float = 0.0
    L_obj: float = 0.0
    L_en: float = 0.0
    L_c: float = 0.0


class GradCheckResult(BaseModel):
    name: str
    instances: int
    max_rel_error: float
    passed: bool


class LossCheckReport(BaseModel):
    seed: int
    epsilon: float
    tolerance: float
    losses: List[GradCheckResult] = Field(default_factory=list)
    passed: bool = True
