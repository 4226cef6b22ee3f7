"""End-to-end studies: convergence rate, initialisation quality, downstream
ERM sample complexity and the balancer comparison.

Every study returns a report model whose ``checks`` carry the asserted
properties; nothing here writes files.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from minimax_lab.core.optimizer import (
    R0_FLOOR,
    Ball,
    Schedule,
    average_gd_run,
    balanced_run,
    projected_gd_run,
    swgd_run,
)
from minimax_lab.core.oracle import (
    OracleUnavailableError,
    analytic_average_minimizer,
    analytic_gap_values,
    downstream_minimizer,
    grid_error_bound,
    grid_minimax,
    sample_complexity_bound,
)
from minimax_lab.core.tasks import (
    Objective,
    ParamVector,
    SimplexPoint,
    TaskFamily,
    downstream_objective,
    downstream_risk,
    gap_family,
    simplex_vertices,
    worst_case_risk,
)
from minimax_lab.core.weighting import AlphaSchedule, Balancer
from minimax_lab.models.reports import (
    BalancerReport,
    BalancerRow,
    ComplexityReport,
    ComplexityRow,
    ConvergenceReport,
    ConvergenceRow,
    GapReport,
    InitComparisonReport,
    PropertyCheck,
)
from minimax_lab.utils.file_utils import format_float
from minimax_lab.utils.workers import map_ordered

logger = logging.getLogger(__name__)

DEFAULT_K_LIST = (100, 400, 1600, 6400)
DEFAULT_N_GRID = tuple(2**i for i in range(11))
DEFAULT_TRIALS = 200
DEFAULT_METHODS = tuple(b.value for b in Balancer)

RATE_FACTOR = 3.0
RATE_FLOOR = 1e-6
ERM_MAX_ITERS = 500
ERM_GRAD_TOL = 1e-10
SWGD_CHECK_ALPHAS = (10.0, 100.0, 1e3, 1e4)
SWGD_CHECK_ITERS = 4000
ORDER_TOL = 1e-9


# -----------------------------
# Convergence rate
# -----------------------------

def run_convergence_study(
    family: TaskFamily,
    theta0: ParamVector,
    K_list: Sequence[int] = DEFAULT_K_LIST,
    schedule_mode: Literal["theoretical", "constant"] = "theoretical",
    *,
    eta: Optional[float] = None,
    alpha: Optional[AlphaSchedule] = None,
    check_rate: bool = True,
    jobs: int = 1,
) -> ConvergenceReport:
    """Excess worst-case risk of the averaged SWGD iterate against ``2 R0 L' / sqrt(K)``."""
    theta0 = family.check_theta(theta0)
    oracle = grid_minimax(family, jobs=jobs)
    R0 = max(float(np.linalg.norm(theta0 - oracle.theta_star)), R0_FLOOR)
    Lp, B = family.lipschitz, family.bound

    def schedule_for(K: int) -> Schedule:
        if schedule_mode == "theoretical":
            return Schedule.theoretical(R0=R0, Lp=Lp, K=K, T=family.T, B=B, alpha=alpha)
        if eta is None:
            raise ValueError("constant step mode needs eta")
        return Schedule.constant(eta, alpha if alpha is not None else AlphaSchedule.theoretical(R0, Lp, family.T, B), K)

    def one(K: int) -> ConvergenceRow:
        schedule = schedule_for(K)
        trace = swgd_run(family, theta0, schedule, record_every=max(1, K // 1000))
        worst, _ = worst_case_risk(family, trace.theta_bar)
        excess = worst - oracle.value
        bound = 2.0 * R0 * Lp / math.sqrt(K)
        logger.info("%s K=%d excess=%.6g bound=%.6g", family.name, K, excess, bound)
        return ConvergenceRow(
            K=K,
            eta=schedule.eta,
            worst_risk=worst,
            excess=excess,
            bound_value=bound,
            bound_satisfied=excess <= bound + 1e-12,
        )

    rows = map_ordered(one, sorted(K_list), jobs=jobs)
    checks = [
        PropertyCheck(
            name=f"K={r.K} bound satisfied",
            passed=r.bound_satisfied,
            detail=f"excess {r.excess:.6g} <= {r.bound_value:.6g}",
        )
        for r in rows
    ]
    if check_rate:
        checks += _rate_checks(rows)
    return ConvergenceReport(
        family=family.name,
        schedule_mode=schedule_mode,
        R0=R0,
        Lp=Lp,
        oracle_theta_star=oracle.theta_star.tolist(),
        oracle_value=oracle.value,
        rows=rows,
        checks=checks,
    )


def _rate_checks(rows: list[ConvergenceRow]) -> list[PropertyCheck]:
    by_K = {r.K: r.excess for r in rows}
    checks = []
    for K, excess in by_K.items():
        later = by_K.get(16 * K)
        if later is None:
            continue
        if excess <= RATE_FLOOR:
            # Already at the optimum; there is no decay left to measure.
            checks.append(PropertyCheck(name=f"rate K={K}->{16 * K}", passed=True, detail=f"excess below {RATE_FLOOR:g}"))
            continue
        ratio = excess / later if later > 0 else math.inf
        checks.append(
            PropertyCheck(
                name=f"rate K={K}->{16 * K}",
                passed=ratio >= RATE_FACTOR,
                detail=f"excess ratio {ratio:.4g} (need >= {RATE_FACTOR:g})",
            )
        )
    return checks


# -----------------------------
# Initialisation quality
# -----------------------------

def average_minimizer(family: TaskFamily) -> ParamVector:
    try:
        return analytic_average_minimizer(family)
    except OracleUnavailableError:
        L_avg = float(np.mean([t.smoothness for t in family.tasks]))
        trace = average_gd_run(family, np.zeros(family.dim), 1.0 / L_avg, 5000, record_every=5000)
        return trace.theta_last


def swgd_minimax(family: TaskFamily, theta0: ParamVector, anchor: ParamVector) -> ParamVector:
    """Long SWGD run with alpha raised in stages; each stage restarts from the last iterate.

    The step for a stage is ``0.25 / (L + alpha G^2)`` with ``G^2`` the largest
    squared task-gradient norm seen at ``theta0`` and ``anchor``.
    """
    G2 = max(
        float(np.max(np.sum(family.gradients(p) ** 2, axis=1)))
        for p in (family.check_theta(theta0), family.check_theta(anchor))
    )
    theta = family.check_theta(theta0)
    for alpha in SWGD_CHECK_ALPHAS:
        eta = 0.25 / (family.smoothness + alpha * G2)
        trace = swgd_run(family, theta, Schedule.constant(eta, alpha, SWGD_CHECK_ITERS), record_every=SWGD_CHECK_ITERS)
        theta = trace.theta_last
    return theta


def run_init_comparison(family: TaskFamily, *, swgd_check: bool = True, jobs: int = 1) -> InitComparisonReport:
    """Worst-case downstream risk of the minimax and the average-risk initialisations."""
    oracle = grid_minimax(family, jobs=jobs)
    grid_err = grid_error_bound(family)
    theta_avg = average_minimizer(family)
    worst_max, _ = worst_case_risk(family, oracle.theta_star)
    worst_avg, _ = worst_case_risk(family, theta_avg)
    if worst_max > 0:
        ratio = worst_avg / worst_max
    else:
        ratio = 1.0 if worst_avg <= ORDER_TOL else math.inf

    checks = [
        PropertyCheck(
            name="minimax init no worse than average init",
            passed=worst_max <= worst_avg + ORDER_TOL,
            detail=f"{worst_max:.9g} vs {worst_avg:.9g}",
        ),
        PropertyCheck(name="ratio >= 1", passed=ratio >= 1.0 - ORDER_TOL, detail=f"ratio {ratio:.6g}"),
    ]

    swgd_theta = swgd_value = None
    if swgd_check:
        swgd_theta = swgd_minimax(family, theta_avg, oracle.theta_star)
        swgd_value, _ = worst_case_risk(family, swgd_theta)
        tol = max(1e-3, grid_err)
        checks.append(
            PropertyCheck(
                name="swgd agrees with grid oracle",
                passed=abs(swgd_value - oracle.value) <= tol,
                detail=f"|{swgd_value:.9g} - {oracle.value:.9g}| <= {tol:.3g}",
            )
        )
    logger.info("%s: worst(max)=%.6g worst(avg)=%.6g ratio=%.6g", family.name, worst_max, worst_avg, ratio)
    return InitComparisonReport(
        family=family.name,
        theta_max=oracle.theta_star.tolist(),
        theta_average=theta_avg.tolist(),
        worst_max=worst_max,
        worst_average=worst_avg,
        ratio=ratio,
        grid_value=oracle.value,
        grid_error=grid_err,
        swgd_theta=None if swgd_theta is None else swgd_theta.tolist(),
        swgd_value=swgd_value,
        checks=checks,
    )


def run_gap_study(T: int, *, jobs: int = 1) -> GapReport:
    family = gap_family(T)
    exact = analytic_gap_values(T)
    oracle = grid_minimax(family, jobs=jobs)
    worst_avg, _ = worst_case_risk(family, analytic_average_minimizer(family))
    worst_max, _ = worst_case_risk(family, oracle.theta_star)
    measured = worst_avg / worst_max
    rel = abs(measured - exact.ratio) / exact.ratio
    return GapReport(
        family=family.name,
        T=T,
        minimax_point=exact.minimax_point,
        minimax_value=exact.minimax_value,
        average_value=exact.average_value,
        analytic_ratio=exact.ratio,
        measured_ratio=measured,
        grid_value=oracle.value,
        checks=[
            PropertyCheck(
                name="ratio matches (1 + sqrt(T-1))^2 / 4",
                passed=rel <= 0.01,
                detail=f"measured {measured:.6g}, exact {exact.ratio:.6g}",
            ),
            PropertyCheck(name="ratio >= T/8", passed=measured >= T / 8.0, detail=f"{measured:.6g} >= {T / 8.0:g}"),
        ],
    )


# -----------------------------
# Downstream ERM
# -----------------------------

@dataclass(frozen=True)
class ErmTrialResult:
    lam: SimplexPoint
    theta0: ParamVector
    N: int
    trial: int
    excess_risk: float
    success: bool


@dataclass(frozen=True)
class ComplexityCurve:
    N_grid: np.ndarray
    successes: np.ndarray
    trials: int
    eps: float
    delta: float

    @property
    def success_rates(self) -> np.ndarray:
        return self.successes / self.trials

    @property
    def N_hat(self) -> Optional[int]:
        """Smallest grid N whose success rate reaches 1 - delta; None if the grid never gets there."""
        hits = np.flatnonzero(self.success_rates >= 1.0 - self.delta)
        return int(self.N_grid[hits[0]]) if hits.size else None


def complexity_curve_is_monotone(curve: ComplexityCurve) -> bool:
    """No drop between consecutive grid points beyond three binomial standard errors."""
    p = curve.success_rates
    for a, b in zip(p[:-1], p[1:]):
        p_bar = 0.5 * (a + b)
        slack = 3.0 * math.sqrt(2.0 * p_bar * (1.0 - p_bar) / curve.trials) + 1e-12
        if b < a - slack:
            return False
    return True


def erm_ball(family: TaskFamily, lam: SimplexPoint, theta0: ParamVector) -> tuple[Ball, Objective]:
    """Ball around theta*_lambda of squared radius (2/mu_lambda) E[l_lambda(theta0)]."""
    theta0 = family.check_theta(theta0)
    objective = downstream_objective(family, lam)
    center = downstream_minimizer(family, lam)
    radius_sq = 2.0 / objective.mu * downstream_risk(family, lam, theta0)
    if radius_sq <= 0 and np.linalg.norm(theta0 - center) > 1e-12:
        raise ValueError("zero basin radius but theta0 differs from the downstream minimiser")
    return Ball(center, math.sqrt(radius_sq)), objective


def _empirical_objective(family: TaskFamily, lam: SimplexPoint, seeds: np.ndarray, N: int) -> Objective:
    active = [(w, t, int(s)) for w, t, s in zip(lam.weights, family.tasks, seeds) if w > 0]

    def value(theta: ParamVector) -> float:
        return float(sum(w * t.sampler(s, theta, N)[0] for w, t, s in active))

    def gradient(theta: ParamVector) -> ParamVector:
        return sum(w * t.sampler(s, theta, N)[1] for w, t, s in active)

    return Objective(value=value, gradient=gradient)


def run_erm_trials(
    family: TaskFamily,
    lam: SimplexPoint,
    theta0: ParamVector,
    eps: float,
    N_grid: Sequence[int] = DEFAULT_N_GRID,
    R: int = DEFAULT_TRIALS,
    seed: int = 0,
    *,
    delta: float = 0.1,
    jobs: int = 1,
) -> ComplexityCurve:
    """Success curve of constrained ERM on the downstream task ``lam``.

    Each (N, trial) cell seeds its own stream from ``(seed, N index, trial)``.
    """
    if not family.has_samplers:
        raise ValueError(f"family {family.name} has no samplers")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    ball, true_objective = erm_ball(family, lam, theta0)
    start = family.check_theta(theta0)
    opt_value = true_objective.value(ball.center)
    L = true_objective.smoothness
    N_grid = [int(n) for n in N_grid]

    def cell(key: tuple[int, int]) -> ErmTrialResult:
        n_idx, trial = key
        rng = np.random.default_rng(np.random.SeedSequence([seed, n_idx, trial]))
        seeds = rng.integers(0, 2**63 - 1, size=family.T)
        empirical = _empirical_objective(family, lam, seeds, N_grid[n_idx])
        trace = projected_gd_run(empirical, ball, start, 1.0 / L, ERM_MAX_ITERS, tol=ERM_GRAD_TOL)
        excess = true_objective.value(trace.theta_last) - opt_value
        return ErmTrialResult(
            lam=lam,
            theta0=start,
            N=N_grid[n_idx],
            trial=trial,
            excess_risk=excess,
            success=excess <= eps,
        )

    keys = [(i, r) for i in range(len(N_grid)) for r in range(R)]
    results = map_ordered(cell, keys, jobs=jobs)
    successes = np.zeros(len(N_grid), dtype=np.int64)
    for res in results:
        if res.success:
            successes[N_grid.index(res.N)] += 1
    curve = ComplexityCurve(np.array(N_grid), successes, R, eps, delta)
    if curve.N_hat is None:
        logger.warning("success rate never reached %.3g on the N grid (max N=%d)", 1.0 - delta, max(N_grid))
    return curve


def _vertex_seed(seed: int, vertex: int) -> int:
    return int(np.random.SeedSequence([seed, vertex]).generate_state(1, dtype=np.uint64)[0] >> 1)


def run_worstcase_complexity_comparison(
    family: TaskFamily,
    eps: float,
    delta: float,
    N_grid: Sequence[int] = DEFAULT_N_GRID,
    R: int = DEFAULT_TRIALS,
    seed: int = 0,
    *,
    jobs: int = 1,
) -> ComplexityReport:
    """Worst-vertex N-hat of the minimax and the average initialisations.

    The per-vertex stream depends on (seed, vertex) only, so both
    initialisations see the same samples.
    """
    oracle = grid_minimax(family, jobs=jobs)
    inits = {"minimax": oracle.theta_star, "average": average_minimizer(family)}
    rows: list[ComplexityRow] = []
    worst_N: dict[str, Optional[int]] = {}
    worst_vertices: dict[str, list[int]] = {}
    worst_bound: dict[str, float] = {}
    checks: list[PropertyCheck] = []

    for name, theta0 in inits.items():
        per_vertex: list[Optional[int]] = []
        bounds: list[float] = []
        for t, lam in enumerate(simplex_vertices(family.T)):
            task = family.tasks[t]
            init_risk = downstream_risk(family, lam, theta0)
            bound = sample_complexity_bound(
                eps=eps, delta=delta, d=family.dim, B=task.bound, Lp=task.lipschitz, mu=task.mu, init_risk=init_risk
            )
            curve = run_erm_trials(family, lam, theta0, eps, N_grid, R, _vertex_seed(seed, t), delta=delta, jobs=jobs)
            center = downstream_minimizer(family, lam)
            for N, rate in zip(curve.N_grid, curve.success_rates):
                rows.append(
                    ComplexityRow(
                        init=name,
                        vertex=t,
                        N=int(N),
                        success_rate=float(rate),
                        N_hat=curve.N_hat,
                        init_risk=init_risk,
                        bound_value=bound,
                        oracle_theta_star=" ".join(format_float(x) for x in center),
                        oracle_value=downstream_risk(family, lam, center),
                    )
                )
            per_vertex.append(curve.N_hat)
            bounds.append(bound)
            checks.append(_bound_check(f"{name} vertex {t} N_hat <= bound", curve, bound))
            checks.append(
                PropertyCheck(
                    name=f"{name} vertex {t} success curve monotone",
                    passed=complexity_curve_is_monotone(curve),
                )
            )

        as_num = [math.inf if n is None else n for n in per_vertex]
        top = max(as_num)
        worst_N[name] = None if math.isinf(top) else int(top)
        worst_vertices[name] = [t for t, n in enumerate(as_num) if n >= top - ORDER_TOL]
        worst_bound[name] = max(bounds)
        logger.info("%s init: worst-vertex N_hat=%s at vertices %s", name, worst_N[name], worst_vertices[name])

    n_max = math.inf if worst_N["minimax"] is None else worst_N["minimax"]
    n_avg = math.inf if worst_N["average"] is None else worst_N["average"]
    checks.append(
        PropertyCheck(
            name="worst-vertex N_hat(minimax) <= N_hat(average)",
            passed=n_max <= n_avg,
            detail=f"{worst_N['minimax']} vs {worst_N['average']}",
        )
    )
    return ComplexityReport(
        family=family.name,
        eps=eps,
        delta=delta,
        trials=R,
        worst_N_hat=worst_N,
        worst_vertices=worst_vertices,
        worst_bound=worst_bound,
        rows=rows,
        checks=checks,
    )


def _bound_check(name: str, curve: ComplexityCurve, bound: float) -> PropertyCheck:
    n_hat = curve.N_hat
    if n_hat is None:
        # Not reached on the grid: only a violation when the grid already went past the bound.
        top = int(curve.N_grid.max())
        return PropertyCheck(name=name, passed=top < bound, detail=f"not reached up to N={top}, bound {bound:.6g}")
    return PropertyCheck(name=name, passed=n_hat <= bound, detail=f"{n_hat} <= {bound:.6g}")


def run_erm_study(
    family: TaskFamily,
    lam: SimplexPoint,
    theta0: ParamVector,
    eps: float,
    delta: float,
    N_grid: Sequence[int] = DEFAULT_N_GRID,
    R: int = DEFAULT_TRIALS,
    seed: int = 0,
    *,
    jobs: int = 1,
) -> ComplexityReport:
    """Single downstream task version of the complexity study."""
    theta0 = family.check_theta(theta0)
    objective = downstream_objective(family, lam)
    init_risk = downstream_risk(family, lam, theta0)
    bound = sample_complexity_bound(
        eps=eps,
        delta=delta,
        d=family.dim,
        B=float(lam.weights @ [t.bound for t in family.tasks]),
        Lp=float(lam.weights @ [t.lipschitz for t in family.tasks]),
        mu=objective.mu,
        init_risk=init_risk,
    )
    curve = run_erm_trials(family, lam, theta0, eps, N_grid, R, seed, delta=delta, jobs=jobs)
    center = downstream_minimizer(family, lam)
    star = " ".join(format_float(x) for x in center)
    rows = [
        ComplexityRow(
            init="given",
            vertex=-1,
            N=int(N),
            success_rate=float(rate),
            N_hat=curve.N_hat,
            init_risk=init_risk,
            bound_value=bound,
            oracle_theta_star=star,
            oracle_value=objective.value(center),
        )
        for N, rate in zip(curve.N_grid, curve.success_rates)
    ]
    return ComplexityReport(
        family=family.name,
        eps=eps,
        delta=delta,
        trials=R,
        worst_N_hat={"given": curve.N_hat},
        worst_bound={"given": bound},
        rows=rows,
        checks=[
            _bound_check("N_hat <= bound", curve, bound),
            PropertyCheck(name="success curve monotone", passed=complexity_curve_is_monotone(curve)),
        ],
    )


# -----------------------------
# Balancer comparison
# -----------------------------

def run_balancer_comparison(
    family: TaskFamily,
    theta0: ParamVector,
    eta: float,
    K: int,
    methods: Sequence[Balancer | str] = DEFAULT_METHODS,
    *,
    alpha: AlphaSchedule | float = 50.0,
    jobs: int = 1,
) -> BalancerReport:
    """Terminal (last-iterate) worst-case and average risk of each balancing rule."""
    methods = [Balancer(m) for m in methods]
    if not methods:
        raise ValueError("need at least one balancing method")
    theta0 = family.check_theta(theta0)

    def one(method: Balancer) -> tuple[BalancerRow, int]:
        trace = balanced_run(family, theta0, method, eta, K, alpha=alpha, record_every=K)
        risks = family.risks(trace.theta_last)
        logger.info("%s: %s worst=%.6g avg=%.6g", family.name, method.value, risks.max(), risks.mean())
        row = BalancerRow(
            method=method.value,
            theta=trace.theta_last.tolist(),
            worst_risk=float(risks.max()),
            avg_risk=float(risks.mean()),
        )
        return row, trace.grad_evals

    results = map_ordered(one, methods, jobs=jobs)
    rows = [r for r, _ in results]
    # Every rule runs through the same loop, so all spend T gradients per iteration.
    budgets = sorted({n for _, n in results})
    try:
        oracle = grid_minimax(family, jobs=jobs)
        star, value = oracle.theta_star.tolist(), oracle.value
    except OracleUnavailableError:
        star, value = None, None

    checks = [
        PropertyCheck(
            name="equal gradient budget",
            passed=len(budgets) == 1,
            detail=", ".join(str(n) for n in budgets),
        )
    ]
    by_method = {r.method: r for r in rows}
    if Balancer.MINIMAX.value in by_method:
        mm = by_method[Balancer.MINIMAX.value]
        for r in rows:
            if r.method == mm.method:
                continue
            checks.append(
                PropertyCheck(
                    name=f"minimax worst-case <= {r.method}",
                    passed=mm.worst_risk <= r.worst_risk + ORDER_TOL,
                    detail=f"{mm.worst_risk:.6g} vs {r.worst_risk:.6g}",
                )
            )
    if Balancer.NONE.value in by_method:
        avg = by_method[Balancer.NONE.value]
        checks.append(
            PropertyCheck(
                name="none has the lowest average risk",
                passed=all(avg.avg_risk <= r.avg_risk + ORDER_TOL for r in rows),
                detail=f"{avg.avg_risk:.6g}",
            )
        )
    return BalancerReport(
        family=family.name,
        eta=eta,
        K=K,
        grad_evals=budgets[0],
        oracle_theta_star=star,
        oracle_value=value,
        rows=rows,
        checks=checks,
    )
