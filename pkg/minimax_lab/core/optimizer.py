"""Softmax weighted gradient descent and the comparison optimizers.

All multi-task runs share one loop: at iterate k the per-task risks and
gradients are evaluated at theta_k, turned into a weight vector, and
theta_{k+1} = theta_k - eta_k * sum_t w_t grad_t. Iterates theta_0..theta_{K-1}
are kept and averaged.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Optional

import numpy as np
import pandas as pd

from minimax_lab.core.tasks import Objective, ParamVector, TaskFamily, as_param_vector
from minimax_lab.core.weighting import (
    AlphaSchedule,
    Balancer,
    BalancerState,
    baseline_weights,
    softmax_weights,
)
from minimax_lab.utils.file_utils import write_frame

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 1e3
R0_FLOOR = 1e-6

WeightFn = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


class DivergenceError(RuntimeError):
    """A run produced a non-finite or runaway iterate; ``trace`` holds the prefix."""

    def __init__(self, message: str, trace: "RunTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class Schedule:
    K: int
    eta: float
    alpha: AlphaSchedule
    step_mode: Literal["constant", "theoretical"] = "constant"

    def __post_init__(self) -> None:
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"step size must be positive, got {self.eta}")

    @classmethod
    def constant(cls, eta: float, alpha: AlphaSchedule | float, K: int) -> "Schedule":
        if not isinstance(alpha, AlphaSchedule):
            alpha = AlphaSchedule.constant(alpha)
        return cls(K=K, eta=eta, alpha=alpha, step_mode="constant")

    @classmethod
    def theoretical(
        cls,
        *,
        R0: float,
        Lp: float,
        K: int,
        T: int,
        B: float,
        alpha: Optional[AlphaSchedule] = None,
    ) -> "Schedule":
        """eta = R0 / (L' sqrt(K)) and, unless given, the matching increasing alpha schedule."""
        R0 = max(R0, R0_FLOOR)
        alpha = alpha if alpha is not None else AlphaSchedule.theoretical(R0, Lp, T, B)
        return cls(K=K, eta=R0 / (Lp * math.sqrt(K)), alpha=alpha, step_mode="theoretical")

    def step(self, k: int) -> float:
        return self.eta


@dataclass(frozen=True)
class StochasticOptions:
    batch_size: int
    seed: int

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class RunTrace:
    """Iterates of one run plus the per-iteration records (thinned by ``record_every``)."""

    method: str
    iterates: np.ndarray
    ks: np.ndarray
    risks: np.ndarray
    weights: np.ndarray
    worst_risks: np.ndarray
    grad_norms: np.ndarray
    eta: float
    seed: Optional[int] = None
    wall_clock: float = 0.0
    grad_evals: int = 0
    R0: Optional[float] = None
    extra: dict[str, float] = field(default_factory=dict)

    @property
    def K(self) -> int:
        return int(self.iterates.shape[0])

    @property
    def theta_bar(self) -> ParamVector:
        return self.iterates.mean(axis=0)

    @property
    def theta_last(self) -> ParamVector:
        return self.iterates[-1]


def _empty_trace(method: str, K: int, dim: int, T: int, n_records: int, eta: float, seed: Optional[int]) -> RunTrace:
    return RunTrace(
        method=method,
        iterates=np.empty((K, dim)),
        ks=np.empty(n_records, dtype=np.int64),
        risks=np.empty((n_records, T)),
        weights=np.empty((n_records, T)),
        worst_risks=np.empty(n_records),
        grad_norms=np.empty(n_records),
        eta=eta,
        seed=seed,
    )


def _truncate(trace: RunTrace, n_iterates: int, n_records: int) -> RunTrace:
    trace.iterates = trace.iterates[:n_iterates]
    trace.ks = trace.ks[:n_records]
    trace.risks = trace.risks[:n_records]
    trace.weights = trace.weights[:n_records]
    trace.worst_risks = trace.worst_risks[:n_records]
    trace.grad_norms = trace.grad_norms[:n_records]
    return trace


def _weighted_descent(
    family: TaskFamily,
    theta0: ParamVector,
    *,
    K: int,
    step: Callable[[int], float],
    weight_fn: WeightFn,
    method: str,
    stochastic: Optional[StochasticOptions] = None,
    record_every: int = 1,
) -> RunTrace:
    theta = family.check_theta(theta0)
    if record_every < 1:
        raise ValueError("record_every must be >= 1")
    T, dim = family.T, family.dim
    n_records = (K - 1) // record_every + 1
    trace = _empty_trace(method, K, dim, T, n_records, step(0), stochastic.seed if stochastic else None)
    limit = DIVERGENCE_FACTOR * family.domain_radius
    rng = np.random.default_rng(stochastic.seed) if stochastic else None
    start = time.perf_counter()
    r_i = 0

    for k in range(K):
        if not np.all(np.isfinite(theta)) or np.linalg.norm(theta) > limit:
            _truncate(trace, k, r_i)
            raise DivergenceError(f"{method}: iterate {k} left the domain (|theta|={np.linalg.norm(theta):.3g})", trace)
        trace.iterates[k] = theta
        risks = family.risks(theta)
        if rng is not None:
            seeds = rng.integers(0, 2**63 - 1, size=T)
            # Weights and gradients share the same minibatch per task.
            estimates = [t.sampler(int(s), theta, stochastic.batch_size) for t, s in zip(family.tasks, seeds)]
            est_risks = np.array([e[0] for e in estimates])
            grads = np.stack([e[1] for e in estimates])
        else:
            est_risks = risks
            grads = family.gradients(theta)
        trace.grad_evals += T

        w = weight_fn(k, est_risks, grads)
        direction = w @ grads
        if k % record_every == 0:
            trace.ks[r_i] = k
            trace.risks[r_i] = risks
            trace.weights[r_i] = w
            trace.worst_risks[r_i] = risks.max()
            trace.grad_norms[r_i] = np.linalg.norm(direction)
            r_i += 1
        if k < K - 1:
            theta = theta - step(k) * direction

    trace.wall_clock = time.perf_counter() - start
    return _truncate(trace, K, r_i)


def swgd_run(
    family: TaskFamily,
    theta0: ParamVector,
    schedule: Schedule,
    stochastic: Optional[StochasticOptions] = None,
    *,
    record_every: int = 1,
) -> RunTrace:
    """Softmax weighted gradient descent; weights at theta_k use alpha_k."""

    def weights(k: int, risks: np.ndarray, grads: np.ndarray) -> np.ndarray:
        return softmax_weights(risks, schedule.alpha.alpha(k))

    trace = _weighted_descent(
        family,
        theta0,
        K=schedule.K,
        step=schedule.step,
        weight_fn=weights,
        method=Balancer.MINIMAX.value,
        stochastic=stochastic,
        record_every=record_every,
    )
    logger.debug("swgd %s K=%d eta=%g done in %.3fs", family.name, schedule.K, schedule.eta, trace.wall_clock)
    return trace


def average_gd_run(
    family: TaskFamily,
    theta0: ParamVector,
    eta: float,
    K: int,
    *,
    record_every: int = 1,
) -> RunTrace:
    """Gradient descent on the average risk (1/T) sum_t f_t."""
    L_avg = float(np.mean([t.smoothness for t in family.tasks]))
    if eta > 1.0 / L_avg * (1 + 1e-12):
        raise ValueError(f"eta={eta} exceeds 1/L_avg={1.0 / L_avg}")
    uniform = np.full(family.T, 1.0 / family.T)
    return _weighted_descent(
        family,
        theta0,
        K=K,
        step=lambda k: eta,
        weight_fn=lambda k, r, g: uniform,
        method=Balancer.NONE.value,
        record_every=record_every,
    )


def balanced_run(
    family: TaskFamily,
    theta0: ParamVector,
    method: Balancer | str,
    eta: float,
    K: int,
    *,
    alpha: AlphaSchedule | float = 1.0,
    record_every: int = 1,
) -> RunTrace:
    """Same loop as ``swgd_run`` with weights from the selected balancing rule."""
    method = Balancer(method)
    if method is Balancer.MINIMAX:
        return swgd_run(family, theta0, Schedule.constant(eta, alpha, K), record_every=record_every)
    state = BalancerState(T=family.T)
    return _weighted_descent(
        family,
        theta0,
        K=K,
        step=lambda k: eta,
        weight_fn=lambda k, r, g: baseline_weights(method, state, r, g),
        method=method.value,
        record_every=record_every,
    )


# -----------------------------
# Single-objective descent
# -----------------------------

@dataclass(frozen=True)
class Ball:
    center: ParamVector
    radius: float

    def __post_init__(self) -> None:
        if self.radius < 0:
            raise ValueError("ball radius must be nonnegative")
        object.__setattr__(self, "center", as_param_vector(self.center))

    def contains(self, theta: ParamVector, tol: float = 1e-12) -> bool:
        return float(np.linalg.norm(theta - self.center)) <= self.radius * (1 + tol) + tol

    def project(self, theta: ParamVector) -> ParamVector:
        offset = theta - self.center
        norm = float(np.linalg.norm(offset))
        if norm <= self.radius:
            return theta
        return self.center + offset * (self.radius / norm)


def _objective_descent(
    objective: Objective,
    theta0: ParamVector,
    *,
    eta: float,
    K: int,
    ball: Optional[Ball],
    tol: Optional[float],
    method: str,
) -> RunTrace:
    if not eta > 0:
        raise ValueError(f"step size must be positive, got {eta}")
    theta = as_param_vector(theta0)
    trace = _empty_trace(method, K, theta.shape[0], 1, K, eta, None)
    start = time.perf_counter()
    n = K
    for k in range(K):
        if not np.all(np.isfinite(theta)):
            _truncate(trace, k, k)
            raise DivergenceError(f"{method}: non-finite iterate at step {k}", trace)
        g = np.asarray(objective.gradient(theta), dtype=np.float64)
        value = objective.value(theta)
        trace.iterates[k] = theta
        trace.ks[k] = k
        trace.risks[k, 0] = value
        trace.weights[k, 0] = 1.0
        trace.worst_risks[k] = value
        trace.grad_norms[k] = np.linalg.norm(g)
        trace.grad_evals += 1
        if k == K - 1:
            break
        nxt = theta - eta * g
        if ball is not None:
            nxt = ball.project(nxt)
        # Gradient mapping norm; equals |g| when the projection is inactive.
        if tol is not None and np.linalg.norm(nxt - theta) / eta <= tol:
            n = k + 1
            break
        theta = nxt
    trace.wall_clock = time.perf_counter() - start
    return _truncate(trace, n, n)


def gradient_descent_run(objective: Objective, theta0: ParamVector, eta: float, K: int) -> RunTrace:
    return _objective_descent(objective, theta0, eta=eta, K=K, ball=None, tol=None, method="gd")


def projected_gd_run(
    objective: Objective,
    ball: Ball,
    theta0: ParamVector,
    eta: float,
    K: int,
    *,
    tol: Optional[float] = None,
) -> RunTrace:
    """Gradient step followed by Euclidean projection onto ``ball``."""
    theta0 = as_param_vector(theta0, ball.center.shape[0])
    if not ball.contains(theta0):
        raise ValueError("theta0 lies outside the projection ball")
    return _objective_descent(objective, theta0, eta=eta, K=K, ball=ball, tol=tol, method="projected-gd")


# -----------------------------
# CSV surface
# -----------------------------

def trace_frame(trace: RunTrace) -> pd.DataFrame:
    T = trace.risks.shape[1]
    frame = pd.DataFrame({"k": trace.ks, "worst_risk": trace.worst_risks, "avg_risk": trace.risks.mean(axis=1)})
    for t in range(T):
        frame[f"risk_{t + 1}"] = trace.risks[:, t]
    for t in range(T):
        frame[f"w_{t + 1}"] = trace.weights[:, t]
    frame["grad_norm"] = trace.grad_norms
    return frame


def write_trace_csv(trace: RunTrace, path: Path) -> Path:
    return write_frame(trace_frame(trace), path)
