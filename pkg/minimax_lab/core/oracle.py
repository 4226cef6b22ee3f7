"""Ground-truth solvers and bound calculators for desk-scale task families."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from minimax_lab.core.optimizer import RunTrace
from minimax_lab.core.tasks import ParamVector, SimplexPoint, TaskFamily, as_param_vector, downstream_risk
from minimax_lab.utils.workers import chunked, map_ordered

logger = logging.getLogger(__name__)

MAX_ORACLE_DIM = 3
DEFAULT_RESOLUTION = {1: 3001, 2: 401, 3: 101}
MIN_RESOLUTION = 101

Box = Sequence[tuple[float, float]]


class OracleUnavailableError(ValueError):
    """The family is outside what the desk-scale oracles can certify."""


class MinimaxSolution(NamedTuple):
    theta_star: ParamVector
    value: float


class GapValues(NamedTuple):
    minimax_point: float
    minimax_value: float
    average_point: float
    average_value: float
    ratio: float


def _max_risk(family: TaskFamily, theta: ParamVector) -> float:
    return float(family.risks(theta).max())


def default_box(family: TaskFamily) -> list[tuple[float, float]]:
    """Bounding box of the task centers (padded), or the domain cube otherwise."""
    if family.is_quadratic:
        centers = np.stack([t.center for t in family.tasks])
        lo, hi = centers.min(axis=0), centers.max(axis=0)
        pad = np.maximum(0.05 * (hi - lo), 0.1)
        return [(float(a), float(b)) for a, b in zip(lo - pad, hi + pad)]
    r = family.domain_radius
    return [(-r, r)] * family.dim


def _check_box(family: TaskFamily, box: Optional[Box], resolution: Optional[int]) -> tuple[list[tuple[float, float]], int]:
    if family.dim > MAX_ORACLE_DIM:
        raise OracleUnavailableError(f"grid oracle supports d <= {MAX_ORACLE_DIM}, family has d={family.dim}")
    box = list(box) if box is not None else default_box(family)
    if len(box) != family.dim:
        raise ValueError(f"box has {len(box)} axes, family has d={family.dim}")
    resolution = resolution if resolution is not None else DEFAULT_RESOLUTION[family.dim]
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be >= {MIN_RESOLUTION}, got {resolution}")
    return box, resolution


def grid_error_bound(family: TaskFamily, box: Optional[Box] = None, resolution: Optional[int] = None) -> float:
    box, resolution = _check_box(family, box, resolution)
    spacing = max((hi - lo) / (resolution - 1) for lo, hi in box)
    return family.lipschitz * spacing * math.sqrt(family.dim)


def _refine_axes(family: TaskFamily, theta: ParamVector, value: float, half_widths: np.ndarray) -> tuple[ParamVector, float]:
    for i, h in enumerate(half_widths):
        def along(s: float, i: int = i) -> float:
            probe = theta.copy()
            probe[i] = s
            return _max_risk(family, probe)

        res = minimize_scalar(along, bounds=(theta[i] - h, theta[i] + h), method="bounded", options={"xatol": 1e-12})
        if res.fun < value:
            theta = theta.copy()
            theta[i] = res.x
            value = float(res.fun)
    return theta, value


def _polish(family: TaskFamily, theta: ParamVector, value: float) -> tuple[ParamVector, float]:
    """Epigraph form: minimise s subject to s >= f_t(theta) for every task."""
    d = family.dim
    e_last = np.zeros(d + 1)
    e_last[-1] = 1.0
    constraint = {
        "type": "ineq",
        "fun": lambda x: x[-1] - family.risks(x[:-1]),
        "jac": lambda x: np.hstack([-family.gradients(x[:-1]), np.ones((family.T, 1))]),
    }
    res = minimize(
        lambda x: x[-1],
        np.append(theta, value),
        jac=lambda x: e_last,
        constraints=[constraint],
        method="SLSQP",
        options={"ftol": 1e-15, "maxiter": 200},
    )
    candidate = res.x[:-1]
    if np.all(np.isfinite(candidate)):
        cand_value = _max_risk(family, candidate)
        if cand_value < value:
            return candidate, cand_value
    return theta, value


def grid_minimax(
    family: TaskFamily,
    box: Optional[Box] = None,
    resolution: Optional[int] = None,
    *,
    jobs: int = 1,
    refine: bool = True,
) -> MinimaxSolution:
    """Exhaustive evaluation of max_t f_t on a grid, then a local refinement.

    Ties on the grid go to the lowest flat index. The returned value is always
    an actual evaluation, so it never undercuts the true minimax value.
    """
    box, resolution = _check_box(family, box, resolution)
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, family.dim)

    def evaluate(idx: range) -> np.ndarray:
        return family.risks_batch(points[idx.start : idx.stop]).max(axis=0)

    parts = map_ordered(evaluate, chunked(range(points.shape[0]), max(jobs, 1)), jobs=jobs)
    values = np.concatenate(parts)
    best = int(np.argmin(values))
    theta, value = points[best].copy(), float(values[best])

    if refine:
        spacing = np.array([(hi - lo) / (resolution - 1) for lo, hi in box])
        theta, value = _refine_axes(family, theta, value, spacing)
        theta, value = _polish(family, theta, value)
    logger.debug("grid minimax %s: theta*=%s value=%.12g", family.name, theta, value)
    return MinimaxSolution(theta, value)


def analytic_average_minimizer(family: TaskFamily) -> ParamVector:
    """``sum_t c_t m_t / sum_t c_t`` for quadratic families."""
    if not family.is_quadratic:
        raise OracleUnavailableError("analytic average minimiser needs an all-quadratic family")
    c = np.array([t.curvature for t in family.tasks])
    m = np.stack([t.center for t in family.tasks])
    return (c @ m) / c.sum()


def analytic_gap_values(T: int) -> GapValues:
    if T < 2:
        raise ValueError(f"gap family needs T >= 2, got {T}")
    root = math.sqrt(T - 1)
    minimax_point = 1.0 / (1.0 + root)
    minimax_value = minimax_point**2
    return GapValues(
        minimax_point=minimax_point,
        minimax_value=minimax_value,
        average_point=0.5,
        average_value=0.25,
        ratio=0.25 / minimax_value,
    )


# -----------------------------
# Basin of downstream gradient descent
# -----------------------------

@dataclass(frozen=True)
class BasinSpec:
    center: ParamVector
    radius_sq: float
    mu: Optional[float] = None
    smoothness: Optional[float] = None

    def __post_init__(self) -> None:
        if self.radius_sq < 0:
            raise ValueError("basin radius_sq must be nonnegative")
        object.__setattr__(self, "center", as_param_vector(self.center))

    @property
    def radius(self) -> float:
        return math.sqrt(self.radius_sq)


@dataclass(frozen=True)
class BasinReport:
    status: Literal["pass", "violation", "precondition unmet"]
    first_violation: Optional[int] = None
    max_dist_sq: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def downstream_minimizer(family: TaskFamily, lam: SimplexPoint) -> ParamVector:
    if not family.is_quadratic:
        raise OracleUnavailableError("downstream minimiser needs an all-quadratic family")
    wc = lam.weights * np.array([t.curvature for t in family.tasks])
    m = np.stack([t.center for t in family.tasks])
    return (wc @ m) / wc.sum()


def basin_for(family: TaskFamily, lam: SimplexPoint, theta0: ParamVector) -> BasinSpec:
    """Ball around theta*_lambda of squared radius (2/mu_lambda)(f(theta0) - f(theta*))."""
    theta0 = family.check_theta(theta0)
    center = downstream_minimizer(family, lam)
    mu = float(sum(w * t.mu for w, t in zip(lam.weights, family.tasks)))
    smoothness = float(sum(w * t.smoothness for w, t in zip(lam.weights, family.tasks)))
    gap = max(downstream_risk(family, lam, theta0) - downstream_risk(family, lam, center), 0.0)
    return BasinSpec(center=center, radius_sq=2.0 / mu * gap, mu=mu, smoothness=smoothness)


def basin_check(trace: RunTrace, basin: BasinSpec) -> BasinReport:
    if basin.smoothness is not None and trace.eta > (1.0 / basin.smoothness) * (1 + 1e-12):
        return BasinReport(status="precondition unmet")
    offsets = trace.iterates - basin.center
    dist_sq = np.sum(offsets * offsets, axis=1)
    limit = basin.radius_sq * (1 + 1e-12) + 1e-15
    bad = np.flatnonzero(dist_sq > limit)
    max_dist_sq = float(dist_sq.max()) if dist_sq.size else 0.0
    if bad.size:
        return BasinReport(status="violation", first_violation=int(bad[0]), max_dist_sq=max_dist_sq)
    return BasinReport(status="pass", max_dist_sq=max_dist_sq)


# -----------------------------
# Sample-complexity bounds
# -----------------------------

def sample_complexity_bound(
    *,
    eps: float,
    delta: float,
    d: int,
    B: float,
    Lp: float,
    mu: float,
    init_risk: float,
) -> float:
    """Worst-case ERM sample count for an eps-optimal point with probability 1 - delta.

    ``(8 d B^2 / eps^2) log(1 + (16 L'/eps) sqrt((2/mu) init_risk)) + (8 B^2 / eps^2) log(2/delta)``
    """
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError(f"eps and delta must lie in (0, 1), got eps={eps}, delta={delta}")
    if d < 1 or not (B > 0 and Lp > 0 and mu > 0) or init_risk < 0:
        raise ValueError("need d >= 1, positive B, L', mu and nonnegative init_risk")
    scale = 8.0 * B**2 / eps**2
    radius = math.sqrt(2.0 / mu * init_risk)
    return d * scale * math.log1p(16.0 * Lp / eps * radius) + scale * math.log(2.0 / delta)


def covering_number_bound(radius: float, eps: float, d: int) -> float:
    if not (radius > 0 and eps > 0 and d >= 1):
        raise ValueError("radius and eps must be positive and d >= 1")
    return (2.0 * radius / eps + 1.0) ** d
