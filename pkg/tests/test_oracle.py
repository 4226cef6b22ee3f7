import math

import numpy as np
import pytest

from minimax_lab.core.optimizer import Ball, gradient_descent_run, projected_gd_run
from minimax_lab.core.oracle import (
    BasinSpec,
    OracleUnavailableError,
    analytic_average_minimizer,
    analytic_gap_values,
    basin_check,
    basin_for,
    covering_number_bound,
    grid_error_bound,
    grid_minimax,
    sample_complexity_bound,
)
from minimax_lab.core.tasks import (
    Objective,
    SimplexPoint,
    downstream_objective,
    gap_family,
    quadratic_family,
    random_quadratic_family,
    simplex_vertices,
    worst_case_risk,
)


def test_grid_minimax_examples():
    sym = quadratic_family([[0.0], [1.0]], [1.0, 1.0])
    sol = grid_minimax(sym, box=[(-1.0, 2.0)], resolution=3001)
    assert sol.theta_star[0] == pytest.approx(0.5, abs=1e-3)
    assert sol.value == pytest.approx(0.25, abs=1e-3)

    skew = quadratic_family([[0.0], [1.0]], [1.0, 4.0])
    sol = grid_minimax(skew)
    assert sol.theta_star[0] == pytest.approx(2 / 3, abs=1e-3)
    assert sol.value == pytest.approx(4 / 9, abs=1e-3)

    single = quadratic_family([[0.0]], [1.0])
    sol = grid_minimax(single)
    assert sol.theta_star[0] == pytest.approx(0.0, abs=1e-3)
    assert sol.value == pytest.approx(0.0, abs=1e-6)


@pytest.mark.parametrize("T", [2, 4, 16, 64])
def test_grid_minimax_brackets_gap_value(T):
    fam = gap_family(T)
    exact = analytic_gap_values(T)
    sol = grid_minimax(fam)
    assert sol.value >= exact.minimax_value - 1e-15
    assert sol.value - exact.minimax_value <= grid_error_bound(fam)
    # Refinement lands far inside the grid error.
    assert sol.value == pytest.approx(exact.minimax_value, rel=1e-6)


def test_grid_minimax_without_refinement_is_a_grid_point():
    fam = quadratic_family([[0.0], [1.0]], [1.0, 4.0])
    box = [(0.0, 1.0)]
    sol = grid_minimax(fam, box=box, resolution=101, refine=False)
    grid = np.linspace(0.0, 1.0, 101)
    assert sol.theta_star[0] in grid
    assert sol.value >= 4 / 9


def test_grid_minimax_parallel_matches_serial():
    rng = np.random.default_rng(5)
    fam = random_quadratic_family(rng, T=5, dim=2)
    a = grid_minimax(fam, jobs=1)
    b = grid_minimax(fam, jobs=4)
    np.testing.assert_array_equal(a.theta_star, b.theta_star)
    assert a.value == b.value


def test_grid_minimax_limits():
    fam = quadratic_family([[0.0] * 4], [1.0])
    with pytest.raises(OracleUnavailableError):
        grid_minimax(fam)
    with pytest.raises(ValueError):
        grid_minimax(gap_family(4), resolution=50)


def test_analytic_average_minimizer():
    assert analytic_average_minimizer(quadratic_family([[0.0], [1.0]], [1.0, 1.0]))[0] == pytest.approx(0.5)
    assert analytic_average_minimizer(quadratic_family([[0.0], [1.0]], [1.0, 4.0]))[0] == pytest.approx(0.8)
    for T in (2, 4, 16, 64):
        assert analytic_average_minimizer(gap_family(T))[0] == pytest.approx(0.5)


def test_analytic_average_minimizer_needs_quadratics():
    fam = gap_family(4)
    plain = type(fam)(
        tasks=tuple(type(t)(t.expected_risk, t.gradient, t.mu, t.smoothness, t.lipschitz, t.bound) for t in fam.tasks),
        name="opaque",
        dim=1,
        domain_radius=1.0,
    )
    with pytest.raises(OracleUnavailableError):
        analytic_average_minimizer(plain)


@pytest.mark.parametrize("T", [4, 16, 64])
def test_gap_ratio(T):
    fam = gap_family(T)
    sol = grid_minimax(fam)
    worst_avg, _ = worst_case_risk(fam, analytic_average_minimizer(fam))
    worst_max, _ = worst_case_risk(fam, sol.theta_star)
    ratio = worst_avg / worst_max
    expected = (1 + math.sqrt(T - 1)) ** 2 / 4
    assert ratio == pytest.approx(expected, rel=0.01)
    assert ratio >= T / 8
    assert analytic_gap_values(T).ratio == pytest.approx(expected)


def test_gap_values_examples():
    assert analytic_gap_values(2).ratio == pytest.approx(1.0)
    v4 = analytic_gap_values(4)
    assert v4.minimax_value == pytest.approx(1 / (4 + 2 * math.sqrt(3)))
    assert v4.ratio == pytest.approx(1.866, abs=1e-3)
    assert analytic_gap_values(64).ratio == pytest.approx(19.97, abs=1e-2)


def test_minimax_init_never_worse_than_average():
    rng = np.random.default_rng(6)
    for _ in range(100):
        fam = random_quadratic_family(rng)
        sol = grid_minimax(fam)
        worst_max, _ = worst_case_risk(fam, sol.theta_star)
        worst_avg, _ = worst_case_risk(fam, analytic_average_minimizer(fam))
        assert worst_max <= worst_avg + 1e-9


def test_basin_check_examples():
    obj = Objective(value=lambda x: float(x @ x), gradient=lambda x: 2 * x, mu=2.0, smoothness=2.0)
    trace = gradient_descent_run(obj, [1.0], 0.5, 10)
    np.testing.assert_allclose(trace.iterates[:, 0], [1.0] + [0.0] * 9)
    basin = BasinSpec(center=[0.0], radius_sq=1.0, mu=2.0, smoothness=2.0)
    assert basin_check(trace, basin).passed

    still = gradient_descent_run(obj, [0.0], 0.5, 5)
    assert basin_check(still, BasinSpec(center=[0.0], radius_sq=0.0, mu=2.0, smoothness=2.0)).passed


def test_basin_check_reports_violation_and_precondition():
    obj = Objective(value=lambda x: float(x @ x), gradient=lambda x: 2 * x, mu=2.0, smoothness=2.0)
    trace = gradient_descent_run(obj, [1.0], 0.5, 3)
    report = basin_check(trace, BasinSpec(center=[0.0], radius_sq=0.5, mu=2.0, smoothness=2.0))
    assert report.status == "violation"
    assert report.first_violation == 0

    fast = gradient_descent_run(obj, [1.0], 0.9, 3)
    report = basin_check(fast, BasinSpec(center=[0.0], radius_sq=1.0, mu=2.0, smoothness=2.0))
    assert report.status == "precondition unmet"


def test_basin_holds_on_gap_family_from_minimax_point():
    fam = gap_family(4)
    theta0 = np.array([analytic_gap_values(4).minimax_point])
    lam = SimplexPoint.uniform(4)
    basin = basin_for(fam, lam, theta0)
    obj = downstream_objective(fam, lam)
    ball = Ball(basin.center, basin.radius)
    trace = projected_gd_run(obj, ball, theta0, 1.0 / obj.smoothness, 100)
    assert basin_check(trace, basin).passed


def test_basin_random_triples():
    rng = np.random.default_rng(7)
    for _ in range(50):
        fam = random_quadratic_family(rng)
        lam = simplex_vertices(fam.T)[int(rng.integers(fam.T))]
        theta0 = rng.uniform(-2, 2, size=fam.dim)
        basin = basin_for(fam, lam, theta0)
        obj = downstream_objective(fam, lam)
        eta = float(rng.uniform(0.1, 1.0)) / obj.smoothness
        trace = gradient_descent_run(obj, theta0, eta, 200)
        report = basin_check(trace, basin)
        assert report.status == "pass", report


def test_sample_complexity_bound_examples():
    value = sample_complexity_bound(eps=0.5, delta=0.1, d=1, B=1.0, Lp=1.0, mu=1.0, init_risk=0.5)
    assert value == pytest.approx(32 * math.log(33) + 32 * math.log(20), abs=1e-6)
    assert value == pytest.approx(207.75, abs=0.01)

    only_second = sample_complexity_bound(eps=0.5, delta=0.1, d=1, B=1.0, Lp=1.0, mu=1.0, init_risk=0.0)
    assert only_second == pytest.approx(32 * math.log(20))

    doubled = sample_complexity_bound(eps=0.5, delta=0.1, d=1, B=1.0, Lp=1.0, mu=1.0, init_risk=1.0)
    assert doubled > value

    with pytest.raises(ValueError):
        sample_complexity_bound(eps=1.5, delta=0.1, d=1, B=1.0, Lp=1.0, mu=1.0, init_risk=0.5)
    with pytest.raises(ValueError):
        sample_complexity_bound(eps=0.5, delta=0.0, d=1, B=1.0, Lp=1.0, mu=1.0, init_risk=0.5)


def test_sample_complexity_bound_partial_order():
    rng = np.random.default_rng(8)

    def draw():
        return dict(
            eps=float(rng.uniform(0.01, 0.99)),
            delta=float(rng.uniform(0.01, 0.99)),
            d=int(rng.integers(1, 5)),
            B=float(rng.uniform(0.1, 5)),
            Lp=float(rng.uniform(0.1, 5)),
            mu=float(rng.uniform(0.1, 5)),
            init_risk=float(rng.uniform(0, 5)),
        )

    for _ in range(200):
        p = draw()
        base = sample_complexity_bound(**p)
        assert sample_complexity_bound(**{**p, "init_risk": p["init_risk"] * 1.5 + 0.1}) >= base
        assert sample_complexity_bound(**{**p, "d": p["d"] + 1}) >= base
        assert sample_complexity_bound(**{**p, "B": p["B"] * 1.3}) >= base
        assert sample_complexity_bound(**{**p, "eps": p["eps"] * 0.9}) >= base
        assert sample_complexity_bound(**{**p, "delta": p["delta"] * 0.9}) >= base


def test_covering_number_bound():
    assert covering_number_bound(1.0, 2.0, 1) == pytest.approx(2.0)
    assert covering_number_bound(1.0, 2e6, 1) == pytest.approx(1.0, abs=1e-5)
    assert covering_number_bound(1.5, 0.3, 2) == pytest.approx(covering_number_bound(1.5, 0.3, 1) ** 2)
    with pytest.raises(ValueError):
        covering_number_bound(0.0, 1.0, 1)
