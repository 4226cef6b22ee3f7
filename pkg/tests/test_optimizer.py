import math

import numpy as np
import pandas as pd
import pytest

from minimax_lab.core.optimizer import (
    Ball,
    DivergenceError,
    Schedule,
    StochasticOptions,
    average_gd_run,
    balanced_run,
    gradient_descent_run,
    projected_gd_run,
    swgd_run,
    trace_frame,
    write_trace_csv,
)
from minimax_lab.core.oracle import grid_minimax
from minimax_lab.core.tasks import Objective, gap_family, quadratic_family, random_quadratic_family, worst_case_risk
from minimax_lab.core.weighting import AlphaSchedule


def _pair(c2=1.0):
    return quadratic_family([[0.0], [1.0]], [1.0, c2])


def test_swgd_single_task_is_plain_gd():
    fam = quadratic_family([[1.0, -1.0]], [1.5])
    trace = swgd_run(fam, [3.0, 2.0], Schedule.constant(0.1, 7.0, 50))
    theta = np.array([3.0, 2.0])
    for k in range(50):
        np.testing.assert_array_equal(trace.iterates[k], theta)
        theta = theta - 0.1 * fam.tasks[0].gradient(theta)
    np.testing.assert_array_equal(trace.weights, np.ones((50, 1)))


def test_swgd_symmetric_pair_reaches_balance_point():
    fam = _pair()
    trace = swgd_run(fam, [0.0], Schedule.constant(0.1, 10.0, 500))
    value, _ = worst_case_risk(fam, trace.theta_bar)
    assert abs(value - 0.25) <= 0.02


def test_swgd_theoretical_schedule_meets_rate_bound():
    fam = gap_family(4)
    theta_star = 1.0 / (1.0 + math.sqrt(3.0))
    theta0 = np.array([0.0])
    R0 = abs(theta0[0] - theta_star)
    K = 10_000
    schedule = Schedule.theoretical(R0=R0, Lp=fam.lipschitz, K=K, T=fam.T, B=fam.bound)
    assert schedule.eta == pytest.approx(R0 / (fam.lipschitz * math.sqrt(K)))
    trace = swgd_run(fam, theta0, schedule, record_every=100)
    excess = worst_case_risk(fam, trace.theta_bar)[0] - theta_star**2
    assert excess <= 2 * R0 * fam.lipschitz / math.sqrt(K)


def test_theoretical_schedule_keeps_risks_bounded():
    rng = np.random.default_rng(12)
    families = [gap_family(4)] + [random_quadratic_family(rng) for _ in range(5)]
    for fam in families:
        theta0 = np.zeros(fam.dim)
        R0 = float(np.linalg.norm(theta0 - grid_minimax(fam).theta_star))
        schedule = Schedule.theoretical(R0=R0, Lp=fam.lipschitz, K=2000, T=fam.T, B=fam.bound)
        trace = swgd_run(fam, theta0, schedule)
        assert trace.risks.max() <= fam.bound, fam.name
        assert trace.worst_risks.max() <= fam.bound, fam.name


def test_trace_layout_and_average():
    fam = gap_family(4)
    trace = swgd_run(fam, [0.2], Schedule.constant(0.05, 3.0, 40))
    assert trace.K == 40
    assert trace.iterates.shape == (40, 1)
    np.testing.assert_allclose(trace.theta_bar, trace.iterates.sum(axis=0) / 40)
    np.testing.assert_allclose(trace.weights.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(trace.worst_risks, trace.risks.max(axis=1))

    thinned = swgd_run(fam, [0.2], Schedule.constant(0.05, 3.0, 40), record_every=7)
    np.testing.assert_array_equal(thinned.ks, np.arange(0, 40, 7))
    np.testing.assert_array_equal(thinned.theta_bar, trace.theta_bar)


def test_swgd_is_deterministic():
    fam = quadratic_family([[0.0, 0.0], [1.0, 0.5]], [1.0, 2.0], noise_sigma=0.3)
    sched = Schedule.constant(0.05, 5.0, 200)
    opts = StochasticOptions(batch_size=8, seed=99)
    a = swgd_run(fam, [0.5, 0.5], sched, opts)
    b = swgd_run(fam, [0.5, 0.5], sched, opts)
    np.testing.assert_array_equal(a.iterates, b.iterates)
    np.testing.assert_array_equal(a.weights, b.weights)
    c = swgd_run(fam, [0.5, 0.5], sched, StochasticOptions(batch_size=8, seed=100))
    assert not np.array_equal(a.iterates, c.iterates)


def test_alpha_zero_reproduces_average_gd():
    fam = gap_family(4)
    a = swgd_run(fam, [0.9], Schedule.constant(0.2, 0.0, 100))
    b = average_gd_run(fam, [0.9], 0.2, 100)
    np.testing.assert_array_equal(a.iterates, b.iterates)


def test_uniform_balancer_equals_average_gd():
    fam = _pair(4.0)
    a = balanced_run(fam, [0.0], "none", 0.1, 200)
    b = average_gd_run(fam, [0.0], 0.1, 200)
    np.testing.assert_array_equal(a.iterates, b.iterates)


@pytest.mark.parametrize(
    "fam, expected",
    [(_pair(), 0.5), (_pair(4.0), 0.8), (gap_family(4), 0.5), (gap_family(16), 0.5)],
)
def test_average_gd_converges(fam, expected):
    L_avg = np.mean([t.smoothness for t in fam.tasks])
    trace = average_gd_run(fam, [0.0], 1.0 / L_avg, 2000)
    assert trace.theta_last[0] == pytest.approx(expected, abs=1e-9)


def test_average_gd_rejects_large_step():
    with pytest.raises(ValueError):
        average_gd_run(_pair(), [0.0], 1.5, 10)


def test_dwa_on_symmetric_pair_stays_on_axis():
    fam = _pair()
    trace = balanced_run(fam, [0.5], "dwa", 0.1, 100)
    np.testing.assert_allclose(trace.iterates[:, 0], 0.5, atol=1e-12)


def test_divergence_guard_keeps_prefix():
    fam = _pair()
    with pytest.raises(DivergenceError) as info:
        swgd_run(fam, [0.3], Schedule.constant(5.0, 1.0, 1000))
    prefix = info.value.trace
    assert 0 < prefix.K < 1000
    assert np.all(np.isfinite(prefix.iterates))


def test_dimension_mismatch_is_rejected():
    with pytest.raises(ValueError):
        swgd_run(_pair(), [0.0, 1.0], Schedule.constant(0.1, 1.0, 10))


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule.constant(0.0, 1.0, 10)
    with pytest.raises(ValueError):
        Schedule.constant(0.1, 1.0, 0)
    sched = Schedule.theoretical(R0=0.0, Lp=2.0, K=100, T=2, B=1.0)
    assert sched.eta > 0
    assert isinstance(sched.alpha, AlphaSchedule)


def _quadratic_objective(m, c=1.0):
    return Objective(
        value=lambda x: float(c * np.sum((x - m) ** 2)),
        gradient=lambda x: 2 * c * (x - m),
        mu=2 * c,
        smoothness=2 * c,
    )


def test_projected_gd_inactive_ball_matches_gd():
    obj = _quadratic_objective(np.array([0.3]))
    ball = Ball(np.array([0.0]), 10.0)
    a = projected_gd_run(obj, ball, [1.0], 0.2, 30)
    b = gradient_descent_run(obj, [1.0], 0.2, 30)
    np.testing.assert_allclose(a.iterates, b.iterates)


def test_projected_gd_stops_on_boundary():
    obj = _quadratic_objective(np.array([2.0]))
    ball = Ball(np.array([0.0]), 1.0)
    trace = projected_gd_run(obj, ball, [0.0], 0.25, 200)
    assert trace.theta_last[0] == pytest.approx(1.0)
    assert np.all(np.abs(trace.iterates) <= 1.0 + 1e-12)


def test_projected_gd_tolerance_stops_early():
    obj = _quadratic_objective(np.array([0.3]))
    trace = projected_gd_run(obj, Ball(np.array([0.0]), 1.0), [0.9], 0.5, 500, tol=1e-10)
    assert trace.K < 5
    assert trace.theta_last[0] == pytest.approx(0.3)


def test_projection_is_idempotent():
    ball = Ball(np.array([1.0, -1.0]), 0.5)
    p = ball.project(np.array([4.0, 3.0]))
    np.testing.assert_allclose(ball.project(p), p, rtol=1e-15, atol=1e-15)
    assert ball.contains(p)


def test_projected_gd_rejects_outside_start():
    with pytest.raises(ValueError):
        projected_gd_run(_quadratic_objective(np.array([0.0])), Ball(np.array([0.0]), 1.0), [2.0], 0.1, 10)


def test_trace_csv_columns_and_format(tmp_path):
    fam = gap_family(4)
    trace = swgd_run(fam, [0.0], Schedule.constant(0.05, 2.0, 20))
    frame = trace_frame(trace)
    assert list(frame.columns) == (
        ["k", "worst_risk", "avg_risk"]
        + [f"risk_{t}" for t in range(1, 5)]
        + [f"w_{t}" for t in range(1, 5)]
        + ["grad_norm"]
    )
    path = write_trace_csv(trace, tmp_path / "trace.csv")
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    back = pd.read_csv(path, float_precision="round_trip")
    np.testing.assert_array_equal(back["worst_risk"].to_numpy(), trace.worst_risks)

    again = write_trace_csv(swgd_run(fam, [0.0], Schedule.constant(0.05, 2.0, 20)), tmp_path / "again.csv")
    assert again.read_bytes() == raw
