"""Per-task weights for aggregating task gradients.

``softmax_weights`` gives the exponential weights of softmax weighted gradient
descent; ``baseline_weights`` gives the task-balancing rules it is compared with.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal, Optional

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

logger = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-3
DWA_TEMPERATURE = 2.0
UNCERTAINTY_LR = 0.05
GRADNORM_RATE = 0.5
LOG_VAR_CLIP = 30.0
_NORM_FLOOR = 1e-12


class Balancer(str, Enum):
    MINIMAX = "minimax"
    NONE = "none"
    UNCERTAINTY = "uncertainty"
    GRADNORM = "gradnorm"
    DWA = "dwa"


def _check_risks(risks: np.ndarray | list[float]) -> np.ndarray:
    r = np.atleast_1d(np.asarray(risks, dtype=np.float64))
    if r.ndim != 1 or r.size == 0:
        raise ValueError("risks must be a non-empty vector")
    if not np.all(np.isfinite(r)):
        raise ValueError(f"risks must be finite, got {r}")
    return r


def softmax_weights(risks: np.ndarray | list[float], alpha: float) -> np.ndarray:
    """``w_t = exp(alpha r_t) / sum_t' exp(alpha r_t')``, shifted by the max before exponentiation."""
    r = _check_risks(risks)
    if math.isnan(alpha) or alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    return softmax(alpha * r)


def softmax_surrogate_value(risks: np.ndarray | list[float], alpha: float) -> float:
    """The softmax-weighted risk ``sum_t w_t r_t``; never above ``max(r)``."""
    r = _check_risks(risks)
    return float(softmax_weights(r, alpha) @ r)


def surrogate_alpha(eps: float, T: int, B: float) -> float:
    """Smallest alpha with ``sum_t w_t r_t >= max(r) - 2 eps`` for risks in [0, B].

    The condition is ``alpha >= (1/eps) log(T B / eps)``; when the log is
    negative every alpha works and 0 is returned.
    """
    if eps <= 0 or T < 1 or B < 0:
        raise ValueError("eps must be positive, T >= 1 and B >= 0")
    if B == 0:
        return 0.0
    return max(0.0, math.log(T * B / eps) / eps)


def theoretical_alpha(k: int, R0: float, Lp: float, T: int, B: float, *, floor: float = ALPHA_FLOOR) -> float:
    """``4 sqrt(k+1) / (R0 L') * log(4 T B sqrt(k+1) / (R0 L'))``, clamped below by ``floor``."""
    if k < 0:
        raise ValueError(f"iteration index must be nonnegative, got {k}")
    if not (R0 > 0 and Lp > 0 and T > 0 and B > 0):
        raise ValueError("R0, L', T and B must all be positive")
    scale = 4.0 * math.sqrt(k + 1) / (R0 * Lp)
    value = scale * math.log(T * B * scale)
    if value < floor:
        logger.debug("alpha_%d=%g below floor, clamped to %g", k, value, floor)
        return floor
    return value


@dataclass(frozen=True)
class AlphaSchedule:
    mode: Literal["constant", "theoretical"]
    value: float = 1.0
    R0: Optional[float] = None
    Lp: Optional[float] = None
    T: Optional[int] = None
    B: Optional[float] = None
    floor: float = ALPHA_FLOOR

    def __post_init__(self) -> None:
        if self.mode == "constant":
            if self.value < 0:
                raise ValueError("constant alpha must be nonnegative")
        elif self.mode == "theoretical":
            if None in (self.R0, self.Lp, self.T, self.B):
                raise ValueError("theoretical alpha needs R0, Lp, T and B")
        else:
            raise ValueError(f"unknown alpha mode {self.mode!r}")

    @classmethod
    def constant(cls, value: float) -> "AlphaSchedule":
        return cls(mode="constant", value=value)

    @classmethod
    def theoretical(cls, R0: float, Lp: float, T: int, B: float) -> "AlphaSchedule":
        return cls(mode="theoretical", R0=R0, Lp=Lp, T=T, B=B)

    def alpha(self, k: int) -> float:
        if self.mode == "constant":
            return self.value
        return theoretical_alpha(k, self.R0, self.Lp, self.T, self.B, floor=self.floor)  # type: ignore[arg-type]

    def values(self, K: int) -> np.ndarray:
        return np.array([self.alpha(k) for k in range(K)])


# -----------------------------
# Baseline balancing rules
# -----------------------------

@dataclass
class BalancerState:
    """History owned by a single run; never shared across runs."""

    T: int
    risk_history: list[np.ndarray] = field(default_factory=list)
    log_vars: Optional[np.ndarray] = None
    log_weights: Optional[np.ndarray] = None
    dwa_temperature: float = DWA_TEMPERATURE
    uncertainty_lr: float = UNCERTAINTY_LR
    gradnorm_rate: float = GRADNORM_RATE

    def __post_init__(self) -> None:
        if self.log_vars is None:
            self.log_vars = np.zeros(self.T)
        if self.log_weights is None:
            self.log_weights = np.zeros(self.T)


def _uniform(T: int) -> np.ndarray:
    return np.full(T, 1.0 / T)


def _uncertainty(state: BalancerState, risks: np.ndarray) -> np.ndarray:
    # Objective sum_t exp(-2 s_t) r_t / 2 + s_t with s_t the log standard deviation.
    s = state.log_vars
    grad_s = -np.exp(-2.0 * s) * risks + 1.0
    state.log_vars = np.clip(s - state.uncertainty_lr * grad_s, -LOG_VAR_CLIP, LOG_VAR_CLIP)
    return softmax(-2.0 * state.log_vars)


def _dwa(state: BalancerState, risks: np.ndarray) -> np.ndarray:
    history = state.risk_history
    if len(history) < 2:
        logger.debug("dwa: %d risk snapshots recorded, using uniform weights", len(history))
        weights = _uniform(state.T)
    else:
        prev, prev2 = history[-1], history[-2]
        ratio = np.divide(prev, prev2, out=np.ones_like(prev), where=prev2 > _NORM_FLOOR)
        weights = softmax(ratio / state.dwa_temperature)
    state.risk_history = [*history[-1:], risks.copy()]
    return weights


def _gradnorm_lite(state: BalancerState, gradients: np.ndarray) -> np.ndarray:
    # Multiplicative step w_t <- w_t * (mean_s w_s |g_s| / (w_t |g_t|))^rate, in log space.
    norms = np.maximum(np.linalg.norm(gradients, axis=1), _NORM_FLOOR)
    log_w = log_softmax(state.log_weights)
    weighted = log_w + np.log(norms)
    target = logsumexp(weighted) - math.log(state.T)
    state.log_weights = log_w + state.gradnorm_rate * (target - weighted)
    return softmax(state.log_weights)


def baseline_weights(
    method: Balancer | str,
    state: BalancerState,
    risks: np.ndarray,
    gradients: np.ndarray,
) -> np.ndarray:
    """Weights of a comparison balancing rule; updates ``state`` in place."""
    method = Balancer(method)
    r = _check_risks(risks)
    if r.shape[0] != state.T:
        raise ValueError(f"expected {state.T} risks, got {r.shape[0]}")
    if method is Balancer.NONE:
        return _uniform(state.T)
    if method is Balancer.UNCERTAINTY:
        return _uncertainty(state, r)
    if method is Balancer.DWA:
        return _dwa(state, r)
    if method is Balancer.GRADNORM:
        return _gradnorm_lite(state, np.asarray(gradients, dtype=np.float64))
    raise ValueError(f"{method.value!r} is not a baseline balancer")
