from __future__ import annotations

from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from minimax_lab.core.weighting import Balancer

StudyName = Literal["train", "convergence", "compare-init", "sample-complexity", "compare-balancers", "gap"]


def _as_list(v: Any) -> Any:
    if v is None or isinstance(v, list):
        return v
    if isinstance(v, tuple):
        return list(v)
    return [v]


class FamilyConfig(BaseModel):
    """Which task family to build. ``centers`` holds one vector per task."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["gap", "quadratic", "random"] = "gap"
    T: Optional[int] = Field(None, ge=1, le=4096)
    dim: Optional[int] = Field(None, ge=1, le=3)
    centers: Optional[list[list[float]]] = None
    curvatures: Optional[list[float]] = None
    noise_sigma: float = Field(0.0, ge=0)
    domain_radius: Optional[float] = Field(None, gt=0)

    @field_validator("centers", mode="before")
    @classmethod
    def _centers(cls, v: Any) -> Any:
        v = _as_list(v)
        if v is None:
            return v
        # "0, 1" in the config file means two 1-D centers.
        return [c if isinstance(c, (list, tuple)) else [c] for c in v]

    @field_validator("curvatures", mode="before")
    @classmethod
    def _curvatures(cls, v: Any) -> Any:
        return _as_list(v)

    @field_validator("curvatures")
    @classmethod
    def _positive(cls, v: Optional[list[float]]) -> Optional[list[float]]:
        if v is not None and any(c <= 0 for c in v):
            raise ValueError("curvatures must be positive")
        return v

    @model_validator(mode="after")
    def _consistent(self) -> "FamilyConfig":
        if self.kind == "quadratic":
            if not self.centers or not self.curvatures:
                raise ValueError("quadratic family needs centers and curvatures")
            if len(self.centers) != len(self.curvatures):
                raise ValueError(f"{len(self.centers)} centers but {len(self.curvatures)} curvatures")
            if len({len(c) for c in self.centers}) != 1:
                raise ValueError("all centers must share one dimension")
        if self.kind == "gap" and self.T is not None and self.T < 2:
            raise ValueError("gap family needs T >= 2")
        return self


class AlphaConfig(BaseModel):
    """Softmax hyperparameter. Missing theoretical constants are filled from the family."""

    model_config = ConfigDict(extra="forbid")

    mode: Literal["constant", "theoretical"] = "theoretical"
    value: float = Field(1.0, ge=0)
    R0: Optional[float] = Field(None, gt=0)
    Lp: Optional[float] = Field(None, gt=0)
    T: Optional[int] = Field(None, ge=1)
    B: Optional[float] = Field(None, gt=0)


class StepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["constant", "theoretical"] = "theoretical"
    eta: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _eta_for_constant(self) -> "StepConfig":
        if self.mode == "constant" and self.eta is None:
            raise ValueError("constant step mode needs step.eta")
        return self


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    study: Optional[StudyName] = None
    seed: int = Field(0, ge=0)
    outdir: Optional[Path] = None

    family: FamilyConfig = Field(default_factory=FamilyConfig)
    alpha: AlphaConfig = Field(default_factory=AlphaConfig)
    step: StepConfig = Field(default_factory=StepConfig)

    balancer: Balancer = Balancer.MINIMAX
    methods: list[Balancer] = Field(default_factory=lambda: list(Balancer))
    theta0: Optional[list[float]] = None
    K: int = Field(3000, ge=1)
    K_list: list[int] = Field(default_factory=lambda: [100, 400, 1600, 6400])
    batch_size: Optional[int] = Field(None, ge=1)

    eps: float = Field(0.05, gt=0, lt=1)
    delta: float = Field(0.1, gt=0, lt=1)
    N_grid: list[int] = Field(default_factory=lambda: [2**i for i in range(11)])
    trials: int = Field(200, ge=1)
    lambda_: Optional[list[float]] = Field(None, alias="lambda")

    @field_validator("methods", "theta0", "K_list", "N_grid", "lambda_", mode="before")
    @classmethod
    def _wrap(cls, v: Any) -> Any:
        return _as_list(v)

    @field_validator("K_list", "N_grid")
    @classmethod
    def _positive_ints(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("must not be empty")
        if any(x < 1 for x in v):
            raise ValueError("entries must be >= 1")
        return v

    @field_validator("methods")
    @classmethod
    def _methods(cls, v: list[Balancer]) -> list[Balancer]:
        if not v:
            raise ValueError("must name at least one method")
        return v
