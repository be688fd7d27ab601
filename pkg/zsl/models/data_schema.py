import os
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Dict, List, Optional


class GenConfig(BaseModel):
    """
    Synthetic benchmark generator settings.
    - branching: children per node, kingdom level first (the kingdom entry is the number of kingdoms)
    - diffusion_scales: prototype drift standard deviation per rank, kingdom first
    - attr_noise: share of attribute drift that is independent of the feature drift
    - subspace_dim: rank of the subspace each node's children drift in
    - basis_drift: how far a child's drift subspace turns away from its parent's
    """
    model_config = ConfigDict(extra="forbid")

    branching: List[int] = Field(default_factory=lambda: [2, 2, 2, 4, 3, 2, 4])
    feature_dim: int = Field(32, ge=2)
    attr_dim: int = Field(16, ge=2)
    diffusion_scales: List[float] = Field(default_factory=lambda: [4.0, 3.0, 2.5, 2.0, 1.5, 1.0, 0.5])
    attr_noise: float = Field(0.25, ge=0.0)
    subspace_dim: int = Field(4, ge=1)
    basis_drift: float = Field(0.5, ge=0.0)
    sample_noise: float = Field(1.0, gt=0.0)
    samples_per_class: int = Field(40, ge=1)
    n_seen: int = Field(20, ge=1)
    n_unseen: int = Field(10, ge=1)
    aux_pool_size: int = Field(50, ge=0)
    seed: int = 0

    @field_validator("branching")
    @classmethod
    def _check_branching(cls, v: List[int]) -> List[int]:
        if len(v) != 7 or any(b < 1 for b in v):
            raise ValueError("branching needs seven positive counts (kingdom first)")
        return v

    @field_validator("diffusion_scales")
    @classmethod
    def _check_scales(cls, v: List[float]) -> List[float]:
        if len(v) != 7 or any(s < 0 for s in v):
            raise ValueError("diffusion_scales needs seven non-negative values (kingdom first)")
        return v

    @model_validator(mode="after")
    def _subspace_fits(self) -> "GenConfig":
        if self.subspace_dim > self.feature_dim:
            raise ValueError(f"subspace_dim {self.subspace_dim} exceeds feature_dim {self.feature_dim}")
        return self


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lam: float = Field(1.0, ge=0.0)
    lr: float = Field(0.001, gt=0.0)
    epochs: int = Field(30, ge=0)
    batch_size: int = Field(32, ge=1)
    seed: int = 0
    feature_width: int = Field(64, ge=1)
    hidden_width: int = Field(64, ge=1)
    pretrain_epochs: int = Field(10, ge=0)
    pretrain_lr: float = Field(0.01, gt=0.0)
    pretext_classes: int = Field(20, ge=2)
    pretext_samples_per_class: int = Field(40, ge=1)


class VaeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    latent_width: int = Field(16, ge=1)
    hidden_width: int = Field(32, ge=1)
    beta: float = Field(0.5, ge=0.0)
    gamma: float = Field(1.0, ge=0.0)
    delta: float = Field(1.0, ge=0.0)
    lr: float = Field(0.005, gt=0.0)
    epochs: int = Field(50, ge=0)
    batch_size: int = Field(32, ge=1)
    seed: int = 0


class ClassifierConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(0.05, gt=0.0)
    epochs: int = Field(30, ge=0)
    batch_size: int = Field(32, ge=1)
    seed: int = 0


class PathsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    benchmark_dir: str = "./data/benchmark"
    output_dir: str = "./data/runs"


class RunSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    draws_per_item: int = Field(32, ge=1)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    seen_test_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    aux_classes: int = Field(50, ge=0)
    aux_per_class: Optional[int] = Field(None, ge=1)

    @field_validator("seeds")
    @classmethod
    def _check_seeds(cls, v: List[int]) -> List[int]:
        if not v:
            raise ValueError("seeds list must not be empty")
        return v


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    paths: PathsConfig = Field(default_factory=PathsConfig)
    gen: GenConfig = Field(default_factory=GenConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    vae: VaeConfig = Field(default_factory=VaeConfig)
    classifier: ClassifierConfig = Field(default_factory=ClassifierConfig)
    run: RunSection = Field(default_factory=RunSection)

    @model_validator(mode="after")
    def _distinct_paths(self) -> "RunConfig":
        if os.path.abspath(self.paths.benchmark_dir) == os.path.abspath(self.paths.output_dir):
            raise ValueError("paths.benchmark_dir and paths.output_dir must differ")
        return self


class EvalReport(BaseModel):
    """
    GZSL result of one method.
    - per_class: per-class accuracy in percent, seen classes first
    - a_s / a_u: unweighted mean over seen / unseen classes
    - h: harmonic mean of a_s and a_u
    """
    model_config = ConfigDict(ser_json_inf_nan="constants")

    method: str = Field(..., min_length=1)
    per_class: Dict[str, float] = Field(default_factory=dict)
    a_s: float = Field(..., ge=0.0, le=100.0)
    a_u: float = Field(..., ge=0.0, le=100.0)
    h: float = Field(..., ge=0.0, le=100.0)
    separability: Optional[float] = Field(None, ge=0.0)
    regime: Optional[str] = None
    seed: Optional[int] = None
    lam: Optional[float] = None

    @model_validator(mode="after")
    def _zero_side(self) -> "EvalReport":
        if (self.a_s == 0.0 or self.a_u == 0.0) and self.h != 0.0:
            raise ValueError("h must be 0 when either side accuracy is 0")
        return self
