"""Upstream task families and downstream (convex-combination) tasks.

Every task exposes its expected risk in closed form together with the analytic
gradient. Risk and gradient callables are vectorised over leading axes: they
accept a single point of shape ``(d,)`` or a batch of shape ``(n, d)``.

Sampling is an optional overlay used by the stochastic optimizer path and by
the downstream ERM experiments.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

ParamVector = np.ndarray

# A sampler draws ``batch_size`` samples from a seeded stream and returns the
# minibatch means of the loss and its gradient at ``theta``.
Sampler = Callable[[int, ParamVector, int], tuple[float, ParamVector]]
DataWeight = Callable[[np.ndarray], np.ndarray]

TIE_TOL = 1e-12
SIMPLEX_TOL = 1e-12
QUADRATURE_NODES = 40
MAX_WEIGHTED_DIM = 3


class DimensionMismatchError(ValueError):
    """Raised when a vector does not match the family dimension or task count."""


def as_param_vector(x: Sequence[float] | np.ndarray | float, dim: Optional[int] = None) -> ParamVector:
    """Validate and copy ``x`` into a finite float64 vector of dimension ``dim``."""
    v = np.atleast_1d(np.asarray(x, dtype=np.float64)).copy()
    if v.ndim != 1:
        raise DimensionMismatchError(f"parameter must be a vector, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatchError(f"expected dimension {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("parameter vector has non-finite entries")
    return v


@dataclass(frozen=True)
class Objective:
    """A single differentiable objective, e.g. one downstream task."""

    value: Callable[[ParamVector], float]
    gradient: Callable[[ParamVector], ParamVector]
    mu: Optional[float] = None
    smoothness: Optional[float] = None


@dataclass(frozen=True)
class Task:
    expected_risk: Callable[[ParamVector], float]
    gradient: Callable[[ParamVector], ParamVector]
    mu: float
    smoothness: float
    lipschitz: float
    bound: float
    sampler: Optional[Sampler] = None
    data_weight: Optional[DataWeight] = None
    # Set for quadratic tasks c * ||theta - m||^2; the analytic oracles use them.
    center: Optional[ParamVector] = None
    curvature: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("mu", "smoothness", "lipschitz", "bound"):
            if not getattr(self, name) > 0:
                raise ValueError(f"task constant {name} must be positive, got {getattr(self, name)}")
        if self.mu > self.smoothness * (1 + 1e-12):
            raise ValueError(f"mu={self.mu} exceeds smoothness L={self.smoothness}")

    @property
    def is_quadratic(self) -> bool:
        return self.center is not None and self.curvature is not None


@dataclass(frozen=True)
class TaskFamily:
    tasks: tuple[Task, ...]
    name: str
    dim: int
    domain_radius: float

    def __post_init__(self) -> None:
        if len(self.tasks) < 1:
            raise ValueError("a task family needs at least one task")
        if not self.domain_radius > 0:
            raise ValueError("domain radius must be positive")

    @property
    def T(self) -> int:
        return len(self.tasks)

    @property
    def mu(self) -> float:
        return min(t.mu for t in self.tasks)

    @property
    def smoothness(self) -> float:
        return max(t.smoothness for t in self.tasks)

    @property
    def lipschitz(self) -> float:
        return max(t.lipschitz for t in self.tasks)

    @property
    def bound(self) -> float:
        return max(t.bound for t in self.tasks)

    @property
    def has_samplers(self) -> bool:
        return all(t.sampler is not None for t in self.tasks)

    @property
    def is_quadratic(self) -> bool:
        return all(t.is_quadratic for t in self.tasks)

    def check_theta(self, theta: Sequence[float] | np.ndarray) -> ParamVector:
        return as_param_vector(theta, self.dim)

    def risks(self, theta: ParamVector) -> np.ndarray:
        """Expected risks of every task at ``theta``, shape ``(T,)``."""
        theta = self.check_theta(theta)
        return np.array([t.expected_risk(theta) for t in self.tasks], dtype=np.float64)

    def gradients(self, theta: ParamVector) -> np.ndarray:
        """Per-task gradients at ``theta``, shape ``(T, d)``."""
        theta = self.check_theta(theta)
        return np.stack([np.asarray(t.gradient(theta), dtype=np.float64) for t in self.tasks])

    def risks_batch(self, points: np.ndarray) -> np.ndarray:
        """Risks on a batch of points ``(n, d)``, shape ``(T, n)``."""
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise DimensionMismatchError(f"expected points of shape (n, {self.dim}), got {points.shape}")
        return np.stack([np.asarray(t.expected_risk(points), dtype=np.float64) for t in self.tasks])


@dataclass(frozen=True)
class SimplexPoint:
    weights: np.ndarray = field(repr=True)

    def __post_init__(self) -> None:
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        if w.ndim != 1 or w.size == 0:
            raise ValueError("simplex point must be a non-empty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError(f"simplex weights must be finite and nonnegative, got {w}")
        if abs(float(w.sum()) - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"simplex weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "weights", w)

    @property
    def T(self) -> int:
        return int(self.weights.shape[0])

    @classmethod
    def uniform(cls, T: int) -> "SimplexPoint":
        return cls(np.full(T, 1.0 / T))

    @classmethod
    def vertex(cls, T: int, t: int) -> "SimplexPoint":
        w = np.zeros(T)
        w[t] = 1.0
        return cls(w)


def simplex_vertices(T: int) -> list[SimplexPoint]:
    return [SimplexPoint.vertex(T, t) for t in range(T)]


# -----------------------------
# Family constructors
# -----------------------------

def _weighted_moments(
    m: ParamVector, noise_sigma: float, data_weight: DataWeight
) -> tuple[float, ParamVector, float]:
    """``E[w(z)]``, ``E[w(z) z]`` and ``E[w(z) ||z||^2]`` for ``z ~ N(m, sigma^2 I)`` by Gauss-Hermite quadrature."""
    d = m.shape[0]
    if d > MAX_WEIGHTED_DIM:
        raise ValueError(f"data weighting supports d <= {MAX_WEIGHTED_DIM}, got d={d}")
    x, q = np.polynomial.hermite_e.hermegauss(QUADRATURE_NODES)
    q = q / math.sqrt(2.0 * math.pi)
    nodes = np.stack([g.ravel() for g in np.meshgrid(*([x] * d), indexing="ij")], axis=1)
    probs = np.prod(np.meshgrid(*([q] * d), indexing="ij"), axis=0).ravel()
    z = m + noise_sigma * nodes
    w = np.asarray(data_weight(z), dtype=np.float64)
    if w.shape != (z.shape[0],) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("data_weight must map (n, d) samples to n finite nonnegative weights")
    pw = probs * w
    M0 = float(pw.sum())
    if not M0 > 0:
        raise ValueError("data_weight has zero mass under the sampling distribution")
    return M0, pw @ z, float(pw @ np.sum(z * z, axis=1))


def _quadratic_task(
    m: ParamVector,
    c: float,
    *,
    noise_sigma: float,
    domain_radius: float,
    max_center_norm: float,
    data_weight: Optional[DataWeight],
) -> Task:
    """Task ``c * ||theta - z||^2`` with ``z ~ N(m, sigma^2 I)``.

    With a data weight ``w`` (the density ratio of the task's own data against
    the shared sampling distribution) the per-sample loss is ``w(z) * c * ||theta - z||^2``.
    Its expectation is again quadratic, ``c * E[w] * ||theta - E[w z] / E[w]||^2``
    plus a constant, so the analytic risk uses that effective curvature and center.
    """
    d = m.shape[0]
    if data_weight is None:
        c_eff, center = c, m
        offset = c * noise_sigma**2 * d
    else:
        M0, M1, M2 = _weighted_moments(m, noise_sigma, data_weight)
        c_eff, center = c * M0, M1 / M0
        offset = c * (M2 - float(M1 @ M1) / M0)

    def expected_risk(theta: np.ndarray) -> np.ndarray | float:
        diff = np.asarray(theta, dtype=np.float64) - center
        out = c_eff * np.sum(diff * diff, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def gradient(theta: np.ndarray) -> np.ndarray:
        return 2.0 * c_eff * (np.asarray(theta, dtype=np.float64) - center)

    def sampler(seed: int, theta: ParamVector, batch_size: int = 1) -> tuple[float, ParamVector]:
        rng = np.random.default_rng(seed)
        z = rng.normal(loc=m, scale=noise_sigma, size=(batch_size, d))
        diff = theta - z
        # Subtracting the constant keeps the sampled loss unbiased for the expected risk.
        losses = c * np.sum(diff * diff, axis=1)
        grads = 2.0 * c * diff
        if data_weight is not None:
            w = np.asarray(data_weight(z), dtype=np.float64)
            losses, grads = w * losses, w[:, None] * grads
        return float(losses.mean() - offset), grads.mean(axis=0)

    return Task(
        expected_risk=expected_risk,
        gradient=gradient,
        mu=2.0 * c_eff,
        smoothness=2.0 * c_eff,
        lipschitz=2.0 * c_eff * (domain_radius + max(max_center_norm, float(np.linalg.norm(center)))),
        bound=c_eff * (domain_radius + float(np.linalg.norm(center))) ** 2,
        sampler=sampler,
        data_weight=data_weight,
        center=center,
        curvature=c_eff,
    )


def quadratic_family(
    centers: Sequence[Sequence[float] | float],
    curvatures: Sequence[float],
    noise_sigma: float = 0.0,
    *,
    domain_radius: Optional[float] = None,
    data_weight: Optional[DataWeight] = None,
    name: str = "quadratic",
) -> TaskFamily:
    """Family of tasks ``c_t * ||theta - m_t||^2`` with Gaussian samplers around ``m_t``."""
    if len(centers) != len(curvatures):
        raise DimensionMismatchError(
            f"got {len(centers)} centers but {len(curvatures)} curvatures"
        )
    if len(centers) < 1:
        raise ValueError("need at least one task")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    ms = [as_param_vector(m) for m in centers]
    dim = ms[0].shape[0]
    for m in ms:
        if m.shape[0] != dim:
            raise DimensionMismatchError("all centers must share the same dimension")
    for c in curvatures:
        if not c > 0:
            raise ValueError(f"curvatures must be positive, got {c}")

    max_center_norm = max(float(np.linalg.norm(m)) for m in ms)
    radius = domain_radius if domain_radius is not None else 10.0 * max_center_norm + 1.0
    if not radius > 0:
        raise ValueError("domain radius must be positive")

    tasks = tuple(
        _quadratic_task(
            m,
            c,
            noise_sigma=noise_sigma,
            domain_radius=radius,
            max_center_norm=max_center_norm,
            data_weight=data_weight,
        )
        for m, c in zip(ms, curvatures)
    )
    return TaskFamily(tasks=tasks, name=name, dim=dim, domain_radius=radius)


def gap_family(T: int, noise_sigma: float = 0.0, *, domain_radius: float = 1.0) -> TaskFamily:
    """``f_1 = theta^2`` and ``f_t = (theta - 1)^2 / (T - 1)`` for t = 2..T.

    The average-risk minimiser sits at 1/2 with worst-case risk 1/4 while the
    minimax point 1/(1 + sqrt(T - 1)) has worst-case risk 1/(1 + sqrt(T - 1))^2,
    so the ratio between the two grows linearly in T.
    """
    if T < 2:
        raise ValueError(f"gap family needs T >= 2, got {T}")
    centers = [[0.0]] + [[1.0]] * (T - 1)
    curvatures = [1.0] + [1.0 / (T - 1)] * (T - 1)
    return quadratic_family(
        centers,
        curvatures,
        noise_sigma,
        domain_radius=domain_radius,
        name=f"gap-{T}",
    )


def random_quadratic_family(
    rng: np.random.Generator,
    *,
    T: Optional[int] = None,
    dim: Optional[int] = None,
    noise_sigma: float = 0.0,
) -> TaskFamily:
    """Random suite member: centers in [-1, 1]^d, curvatures in [0.5, 2]."""
    T = int(rng.integers(2, 9)) if T is None else T
    dim = int(rng.integers(1, 3)) if dim is None else dim
    centers = rng.uniform(-1.0, 1.0, size=(T, dim))
    curvatures = rng.uniform(0.5, 2.0, size=T)
    return quadratic_family(
        list(centers),
        list(curvatures),
        noise_sigma,
        name=f"random-T{T}-d{dim}",
    )


# -----------------------------
# Downstream tasks
# -----------------------------

def _check_lambda(family: TaskFamily, lam: SimplexPoint) -> np.ndarray:
    if lam.T != family.T:
        raise DimensionMismatchError(f"lambda has {lam.T} entries, family has {family.T} tasks")
    return lam.weights


def downstream_risk(family: TaskFamily, lam: SimplexPoint, theta: ParamVector) -> float:
    w = _check_lambda(family, lam)
    return float(w @ family.risks(theta))


def downstream_gradient(family: TaskFamily, lam: SimplexPoint, theta: ParamVector) -> ParamVector:
    w = _check_lambda(family, lam)
    return w @ family.gradients(theta)


def downstream_objective(family: TaskFamily, lam: SimplexPoint) -> Objective:
    w = _check_lambda(family, lam)
    return Objective(
        value=lambda theta: downstream_risk(family, lam, theta),
        gradient=lambda theta: downstream_gradient(family, lam, theta),
        mu=float(sum(wt * t.mu for wt, t in zip(w, family.tasks))),
        smoothness=float(sum(wt * t.smoothness for wt, t in zip(w, family.tasks))),
    )


def worst_case_risk(family: TaskFamily, theta: ParamVector) -> tuple[float, frozenset[int]]:
    """Max task risk at ``theta`` and every (0-based) index within ``TIE_TOL`` of it."""
    r = family.risks(theta)
    value = float(r.max())
    argmax = frozenset(int(i) for i in np.flatnonzero(r >= value - TIE_TOL))
    return value, argmax


def finite_difference_gradient(
    fn: Callable[[ParamVector], float],
    theta: ParamVector,
    h: Optional[float] = None,
) -> ParamVector:
    theta = np.asarray(theta, dtype=np.float64)
    h = 1e-6 * (1.0 + float(np.linalg.norm(theta))) if h is None else h
    steps = np.eye(theta.shape[0]) * h
    return np.array([(fn(theta + e) - fn(theta - e)) / (2.0 * h) for e in steps])
