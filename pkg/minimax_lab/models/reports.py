from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field

from minimax_lab.utils.file_utils import format_float


def _vec(values: list[float]) -> str:
    return " ".join(format_float(x) for x in values)


class PropertyCheck(BaseModel):
    """One asserted property; rendered as a PASS/FAIL line in the summary."""

    name: str
    passed: bool
    detail: str = ""


class StudyReport(BaseModel):
    study: str
    family: str
    checks: list[PropertyCheck] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def table(self) -> list[dict[str, Any]]:
        """Rows of the study CSV."""
        raise NotImplementedError


# -----------------------------
# Convergence
# -----------------------------

class ConvergenceRow(BaseModel):
    K: int
    eta: float
    worst_risk: float
    excess: float
    bound_value: float
    bound_satisfied: bool


class ConvergenceReport(StudyReport):
    study: str = "convergence"
    schedule_mode: str = "theoretical"
    R0: float
    Lp: float
    oracle_theta_star: list[float]
    oracle_value: float
    rows: list[ConvergenceRow] = Field(default_factory=list)

    def table(self) -> list[dict[str, Any]]:
        star = _vec(self.oracle_theta_star)
        return [
            {
                **row.model_dump(),
                "R0": self.R0,
                "Lp": self.Lp,
                "oracle_theta_star": star,
                "oracle_value": self.oracle_value,
            }
            for row in self.rows
        ]


# -----------------------------
# Initialisation quality
# -----------------------------

class InitComparisonReport(StudyReport):
    study: str = "compare-init"
    theta_max: list[float]
    theta_average: list[float]
    worst_max: float
    worst_average: float
    ratio: float
    grid_value: float
    grid_error: float
    swgd_theta: Optional[list[float]] = None
    swgd_value: Optional[float] = None

    def table(self) -> list[dict[str, Any]]:
        star = _vec(self.theta_max)
        rows = [
            {"init": "minimax", "theta": star, "worst_risk": self.worst_max},
            {
                "init": "average",
                "theta": _vec(self.theta_average),
                "worst_risk": self.worst_average,
            },
        ]
        if self.swgd_theta is not None:
            rows.append(
                {
                    "init": "swgd",
                    "theta": _vec(self.swgd_theta),
                    "worst_risk": self.swgd_value,
                }
            )
        for row in rows:
            row.update(
                ratio=self.ratio,
                oracle_theta_star=star,
                oracle_value=self.grid_value,
                bound_value=self.grid_error,
            )
        return rows


class GapReport(StudyReport):
    study: str = "gap"
    T: int
    minimax_point: float
    minimax_value: float
    average_value: float
    analytic_ratio: float
    measured_ratio: float
    grid_value: float

    def table(self) -> list[dict[str, Any]]:
        return [
            {
                "T": self.T,
                "minimax_point": self.minimax_point,
                "minimax_value": self.minimax_value,
                "average_value": self.average_value,
                "analytic_ratio": self.analytic_ratio,
                "measured_ratio": self.measured_ratio,
                "oracle_value": self.grid_value,
                "bound_value": self.T / 8.0,
            }
        ]


# -----------------------------
# Sample complexity
# -----------------------------

class ComplexityRow(BaseModel):
    init: str
    vertex: int
    N: int
    success_rate: float
    N_hat: Optional[int] = None
    init_risk: float
    bound_value: float
    oracle_theta_star: str
    oracle_value: float


class ComplexityReport(StudyReport):
    study: str = "sample-complexity"
    eps: float
    delta: float
    trials: int
    worst_N_hat: dict[str, Optional[int]] = Field(default_factory=dict)
    worst_vertices: dict[str, list[int]] = Field(default_factory=dict)
    worst_bound: dict[str, float] = Field(default_factory=dict)
    rows: list[ComplexityRow] = Field(default_factory=list)

    def table(self) -> list[dict[str, Any]]:
        return [row.model_dump() for row in self.rows]


# -----------------------------
# Balancers and training
# -----------------------------

class BalancerRow(BaseModel):
    method: str
    theta: list[float]
    worst_risk: float
    avg_risk: float


class BalancerReport(StudyReport):
    study: str = "compare-balancers"
    eta: float
    K: int
    # Task-gradient evaluations per method; identical across methods.
    grad_evals: int
    oracle_theta_star: Optional[list[float]] = None
    oracle_value: Optional[float] = None
    rows: list[BalancerRow] = Field(default_factory=list)

    def row(self, method: str) -> BalancerRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def table(self) -> list[dict[str, Any]]:
        star = "" if self.oracle_theta_star is None else _vec(self.oracle_theta_star)
        return [
            {
                **r.model_dump(exclude={"theta"}),
                "theta": _vec(r.theta),
                "oracle_theta_star": star,
                "oracle_value": self.oracle_value,
            }
            for r in self.rows
        ]


class TrainReport(StudyReport):
    study: str = "train"
    method: str
    K: int
    eta: float
    theta_bar: list[float]
    theta_last: list[float]
    worst_risk_bar: float
    worst_risk_last: float
    wall_clock: float

    def table(self) -> list[dict[str, Any]]:
        # The train CSV is the trace itself; see optimizer.trace_frame.
        return []


# -----------------------------
# Runaway runs
# -----------------------------

class DivergedReport(StudyReport):
    """A study cut short by a diverging run. The study CSV holds that run's trace prefix."""

    iterations: int
    last_theta: Optional[list[float]] = None

    def table(self) -> list[dict[str, Any]]:
        return []
