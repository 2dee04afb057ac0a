"""
Resolved configuration for each CLI subcommand. Values come from model
defaults, then the subcommand's block of a JSON config file, then flags.
"""
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from owl3d.schemas.benchmark import DEFAULT_RANGE_M
from owl3d.schemas.evaluation import EvalConfig, ScoreMetric
from owl3d.schemas.losses import LossConfig

ID_CLASSES = ["Car", "Pedestrian", "Cyclist"]
OOD_CLASSES = ["Misc", "Anomaly"]


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    threads: Optional[int] = Field(None, ge=1, exclude=True, description="Worker threads; never echoed so reports do not depend on it")

    def input_paths(self) -> List[Path]:
        return []


class IngestKittiConfig(RunConfig):
    velodyne_dir: Path
    label_dir: Path
    calib_dir: Path
    out_dir: Path

    def input_paths(self):
        return [self.velodyne_dir, self.label_dir, self.calib_dir]


class BuildBankConfig(RunConfig):
    scenes_dir: Optional[Path] = Field(None, description="Scene store to extract objects from")
    colored_dir: Optional[Path] = Field(None, description="Directory of N x 6 (x y z r g b) text scans")
    out_dir: Path
    classes: List[str] = Field(default_factory=lambda: ["Misc"])
    colored_label: str = "Anomaly"
    min_points: int = Field(5, ge=0)

    def input_paths(self):
        return [p for p in (self.scenes_dir, self.colored_dir) if p is not None]


class MixConfig(RunConfig):
    bank_dir: Path
    sizes_dir: Path = Field(..., description="Scene store whose size_class boxes form the size pool")
    out_dir: Path
    size_class: str = "Misc"
    seed: int

    def input_paths(self):
        return [self.bank_dir, self.sizes_dir]


class AugmentConfig(RunConfig):
    scenes_dir: Path
    bank_dir: Path
    out_dir: Path
    seed: int
    class_label: str = "Anomaly"
    sample_number: int = Field(20, ge=0)
    donor_classes: List[str] = Field(default_factory=lambda: list(ID_CLASSES))

    def input_paths(self):
        return [self.scenes_dir, self.bank_dir]


class SynthConfig(RunConfig):
    scenes_dir: Path
    bank_dir: Path
    out_dir: Path
    donors_dir: Optional[Path] = Field(None, description="Scene store providing the shared donor placements")
    donor_classes: List[str] = Field(default_factory=lambda: list(ID_CLASSES))
    seed: int
    name: str = "synthetic"
    samples_per_scene: int = Field(1, ge=1)
    range_m: Tuple[float, float] = DEFAULT_RANGE_M
    unseen_label: str = "Anomaly"

    def input_paths(self):
        return [p for p in (self.scenes_dir, self.bank_dir, self.donors_dir) if p is not None]


class EvalRunConfig(RunConfig):
    gt_dir: Path
    id_gt_dir: Optional[Path] = Field(
        None, description="Scene store whose ID-class objects join the ground truth of the same scene ids (source scenes of a synthetic benchmark)"
    )
    detections: Path
    eval: EvalConfig = Field(default_factory=EvalConfig)
    id_classes: List[str] = Field(default_factory=lambda: list(ID_CLASSES))
    ood_classes: List[str] = Field(default_factory=lambda: list(OOD_CLASSES))
    metrics: Optional[List[ScoreMetric]] = Field(None, description="Defaults to every metric the score space supports")
    temperature: float = Field(1.0, gt=0.0)
    num_classes: Optional[int] = Field(None, ge=1)

    def input_paths(self):
        return [self.gt_dir, self.detections] + ([self.id_gt_dir] if self.id_gt_dir else [])


class ScoreConfig(RunConfig):
    detections: Path
    metric: ScoreMetric = ScoreMetric.MSP
    temperature: float = Field(1.0, gt=0.0)

    def input_paths(self):
        return [self.detections]


class LosscheckConfig(RunConfig):
    seed: int = 0
    epsilon: float = Field(1e-4, gt=0.0)
    tolerance: float = Field(1e-5, gt=0.0)
    loss: LossConfig = Field(default_factory=LossConfig)
