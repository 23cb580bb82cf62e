import numpy as np
import pytest

from remec import InfeasibleTrajectoryError, TrajectoryError
from remec.trajectory import (
    estimate_durations,
    feasibility_check,
    generate_trajectory,
    time_scale_until_feasible,
)

SQUARE = np.array(
    [
        [0, 0, 0, 0, 0],
        [1, 0, 0, 0, 0],
        [1, 1, 0, 0, 0],
        [0, 1, 0, 0, 0],
        [0, 0, 0, 0, 0],
    ],
    dtype=float,
)


def knot_times(traj):
    return np.concatenate([[0.0], np.cumsum(traj.durations)])


class TestGeneration:
    def test_passes_through_waypoints(self):
        traj = generate_trajectory(SQUARE)
        for t, w in zip(knot_times(traj), SQUARE):
            assert np.abs(traj.evaluate(t) - w).max() < 1e-6

    def test_rest_boundary_conditions(self):
        traj = generate_trajectory(SQUARE)
        for d in (1, 2):
            assert np.abs(traj.evaluate(0.0, d)).max() < 1e-9
            assert np.abs(traj.evaluate(traj.total_time, d)).max() < 1e-9

    def test_smooth_at_interior_knots(self):
        traj = generate_trajectory(SQUARE)
        eps = 1e-9
        for t in knot_times(traj)[1:-1]:
            for d in (0, 1):
                left = traj.evaluate(t - eps, d)
                right = traj.evaluate(t + eps, d)
                assert np.abs(left - right).max() < 1e-6

    def test_two_point_line_midpoint_between_endpoints(self):
        traj = generate_trajectory([[0, 0, 0, 0, 0], [2, 0, 0, 0, 0]], durations=[4.0])
        mid = traj.evaluate(2.0)
        assert 0.0 < mid[0] < 2.0
        assert mid[0] == pytest.approx(1.0, abs=1e-9)  # symmetric rest-to-rest profile
        assert np.abs(mid[1:]).max() < 1e-12

    def test_identical_waypoints_give_constant_trajectory(self):
        traj = generate_trajectory([[0.3, -0.2, 0.1, 0, 0]] * 2)
        for t in np.linspace(0, traj.total_time, 17):
            assert np.abs(traj.evaluate(t) - [0.3, -0.2, 0.1, 0, 0]).max() < 1e-9
            assert np.abs(traj.evaluate(t, 1)).max() < 1e-9

    def test_rejects_degenerate_inputs(self):
        with pytest.raises(TrajectoryError):
            generate_trajectory([[0, 0, 0, 0, 0]])
        with pytest.raises(TrajectoryError):
            generate_trajectory([[0, 0, 0, 0, 0]] * 2, durations=[0.0])
        with pytest.raises(TrajectoryError):
            generate_trajectory(SQUARE, durations=[1.0, 1.0])

    def test_duration_estimation_floor(self):
        d = estimate_durations(np.array([[0, 0, 0, 0, 0], [0.01, 0, 0, 0, 0]]))
        assert d[0] == pytest.approx(0.75)


class TestFeasibility:
    def test_zero_trajectory_feasible(self, params):
        traj = generate_trajectory([[0, 0, 0, 0, 0]] * 2)
        rep = feasibility_check(traj, params)
        assert rep.feasible and rep.worst_ratio == 0.0

    def test_time_stretch_halves_ratio(self, params):
        traj = generate_trajectory(SQUARE)
        r1 = feasibility_check(traj, params).worst_ratio
        r2 = feasibility_check(traj.time_scaled(2.0), params).worst_ratio
        assert r2 == pytest.approx(r1 / 2.0, rel=1e-6)

    def test_fast_square_infeasible_with_interior_worst_point(self, params):
        fast = generate_trajectory(SQUARE, durations=[0.8] * 4)
        rep = feasibility_check(fast, params)
        assert not rep.feasible and rep.worst_ratio > 1.0
        assert 0.0 < rep.t_worst < fast.total_time
        # dense sampling finds the same worst ratio
        dense = feasibility_check(fast, params, dt_check=1e-3)
        assert dense.worst_ratio == pytest.approx(rep.worst_ratio, rel=1e-3)

    def test_joint_rates_checked_too(self, params):
        wp = np.array([[0, 0, 0, 0, 0], [0, 0, 0, np.deg2rad(90), 0]])
        fast = generate_trajectory(wp, durations=[0.3])
        rep = feasibility_check(fast, params)
        assert not rep.feasible
        assert rep.actuator >= 4  # a joint, not a wheel


class TestTimeScaling:
    def test_feasible_input_unchanged(self, params):
        traj = generate_trajectory(SQUARE)
        out, iters = time_scale_until_feasible(traj, params)
        assert iters == 0
        assert out is traj

    def test_scale_factor_is_ratio_plus_margin(self, params):
        fast = generate_trajectory(SQUARE, durations=[0.8] * 4)
        ratio = feasibility_check(fast, params).worst_ratio
        out, iters = time_scale_until_feasible(fast, params)
        assert iters >= 1
        # first stretch is exactly (ratio + 0.05); with one iteration the
        # total duration ratio equals it
        if iters == 1:
            assert out.total_time / fast.total_time == pytest.approx(ratio + 0.05, rel=1e-12)

    def test_post_condition_feasible_in_few_iterations(self, params, rng):
        for _ in range(10):
            wp = np.zeros((3, 5))
            wp[1, :2] = rng.uniform(-1.5, 1.5, 2)
            wp[2, :2] = rng.uniform(-1.5, 1.5, 2)
            wp[:, 2] = rng.uniform(-1.0, 1.0, 3)
            fast = generate_trajectory(wp, durations=rng.uniform(0.15, 0.6, 2))
            ratio = feasibility_check(fast, params).worst_ratio
            if ratio > 20.0:
                continue
            out, iters = time_scale_until_feasible(fast, params)
            assert feasibility_check(out, params).worst_ratio <= 1.0
            assert iters <= 2

    def test_path_shape_preserved(self, params):
        fast = generate_trajectory(SQUARE, durations=[0.8] * 4)
        out, _ = time_scale_until_feasible(fast, params)
        s = out.total_time / fast.total_time
        for t in np.linspace(0.0, fast.total_time, 33):
            assert np.abs(out.evaluate(s * t) - fast.evaluate(t)).max() < 1e-9

    def test_unreachable_cap_raises(self, params):
        fast = generate_trajectory(SQUARE, durations=[0.5] * 4)
        with pytest.raises(InfeasibleTrajectoryError):
            time_scale_until_feasible(fast, params, max_iterations=0)
