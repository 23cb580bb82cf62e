import json
import math

import numpy as np
import pytest

from remec.control import GainSet, Scenario, ate, load_scenario, pd_law, track, velocity_clamp
from remec.kinematics import stack_maps
from remec.trajectory import generate_trajectory

from conftest import random_state
from oracles import brute_force_clamp

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


class TestPdLaw:
    def test_zero_error_passes_feedforward(self):
        g = GainSet(3.0)
        x = np.array([0.2, -0.1, 0.4, 0.1, -0.2])
        xd_d = np.array([0.3, 0, 0.1, 0, 0])
        assert np.allclose(pd_law(x, xd_d, x, g), xd_d)

    def test_pure_proportional_action(self):
        g = GainSet(np.array([1.0, 2.0, 3.0, 4.0, 5.0]))
        e = np.array([0.1, -0.2, 0.05, 0.01, -0.02])
        out = pd_law(e, np.zeros(5), np.zeros(5), g)
        assert np.allclose(out, g.kp * e)

    def test_heading_error_wraps_short_way(self):
        g = GainSet(1.0)
        x_d = np.zeros(5)
        x_d[2] = math.radians(179.0)
        x = np.zeros(5)
        x[2] = math.radians(-179.0)
        out = pd_law(x_d, np.zeros(5), x, g)
        # the short way from -179 deg to +179 deg is -2 deg, not +358
        assert abs(out[2]) == pytest.approx(math.radians(2.0), abs=1e-12)
        assert out[2] < 0.0

    def test_positions_not_wrapped(self):
        g = GainSet(1.0)
        x_d = np.array([7.0, 0, 0, 0, 0])
        out = pd_law(x_d, np.zeros(5), np.zeros(5), g)
        assert out[0] == pytest.approx(7.0)

    def test_gain_validation(self):
        with pytest.raises(ValueError):
            GainSet(np.array([-1.0, 1, 1, 1, 1]))
        with pytest.raises(ValueError):
            GainSet(np.ones(3))


class TestVelocityClamp:
    def test_within_limits_untouched(self, params):
        maps = stack_maps(params, np.zeros(5))
        xdot = np.array([0.05, 0.02, 0.01, 0.0, 0.0])
        out, beta = velocity_clamp(xdot, maps, params.u_lim)
        assert beta == 1.0
        assert np.array_equal(out, xdot)

    def test_double_overshoot_halves(self, params):
        maps = stack_maps(params, np.zeros(5))
        # construct a command whose worst actuator sits at exactly 2x its limit
        xdot = np.array([1.0, 0, 0, 0, 0])
        u = maps.A @ xdot
        worst = np.max(np.abs(u) / params.u_lim)
        xdot *= 2.0 / worst
        out, beta = velocity_clamp(xdot, maps, params.u_lim)
        assert beta == pytest.approx(0.5, rel=1e-12)
        assert np.allclose(out, 0.5 * xdot, rtol=1e-12)

    def test_zero_command(self, params):
        maps = stack_maps(params, np.zeros(5))
        out, beta = velocity_clamp(np.zeros(5), maps, params.u_lim)
        assert beta == 1.0 and np.all(out == 0.0)

    def test_limits_never_exceeded_and_parallel(self, params, rng):
        for _ in range(300):
            x, _ = random_state(rng)
            maps = stack_maps(params, x)
            xdot_c = rng.uniform(-1, 1, 5) * rng.choice([0.1, 1.0, 10.0])
            out, beta = velocity_clamp(xdot_c, maps, params.u_lim)
            u = maps.A @ out
            assert np.all(np.abs(u) <= params.u_lim)  # exact, no tolerance
            assert 0.0 <= beta <= 1.0
            # parallel: cross terms vanish
            assert np.abs(np.outer(out, xdot_c) - np.outer(xdot_c, out)).max() < 1e-12

    def test_matches_brute_force_search(self, params, rng):
        for _ in range(50):
            x, _ = random_state(rng)
            maps = stack_maps(params, x)
            xdot_c = rng.uniform(-1, 1, 5) * 3.0
            _, beta = velocity_clamp(xdot_c, maps, params.u_lim)
            beta_bf = brute_force_clamp(maps.A @ xdot_c, params.u_lim)
            assert beta == pytest.approx(beta_bf, abs=1e-6)


class TestAte:
    def test_identical_traces_zero(self):
        a = np.random.default_rng(0).uniform(-1, 1, (50, 2))
        assert ate(a, a) == 0.0

    def test_constant_offset(self):
        a = np.zeros((20, 2))
        b = a + np.array([0.3, 0.0])
        assert ate(a, b) == pytest.approx(0.3, rel=1e-12)

    def test_direct_formula(self, rng):
        a = rng.uniform(-1, 1, (100, 2))
        b = rng.uniform(-1, 1, (100, 2))
        expected = np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1)))
        assert ate(a, b) == pytest.approx(expected, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ate(np.zeros((0, 2)), np.zeros((0, 2)))


@pytest.fixture(scope="module")
def square_traj():
    return generate_trajectory(SQUARE)


class TestTrack:
    def test_kinematic_tracking_tight(self, params, square_traj):
        res = track(square_traj, params, GainSet(4.0), dt=0.01)
        assert res.metrics.max_position_error_m < 0.005
        assert res.metrics.max_heading_error_deg < 0.2
        assert res.metrics.clamp_steps == 0

    def test_moving_legs_and_heading(self, params):
        wp = np.array(
            [
                [0, 0, 0, 0, 0],
                [0.5, 0.2, math.radians(30), math.radians(40), math.radians(-40)],
                [1.0, 0.0, math.radians(-20), 0, 0],
            ]
        )
        traj = generate_trajectory(wp)
        res = track(traj, params, GainSet(4.0), dt=0.01)
        assert res.metrics.max_position_error_m < 0.01
        assert res.metrics.max_heading_error_deg < 0.5

    def test_open_loop_feedforward_bounded_drift(self, params, square_traj):
        res = track(square_traj, params, GainSet(0.0), dt=0.01)
        # exact model: pure feedforward drifts only through discretization
        assert res.metrics.max_position_error_m < 0.02
        assert res.metrics.final_position_error_m < 0.02

    def test_halved_limits_clamp_but_stay_parallel(self, params, square_traj):
        res = track(square_traj, params, GainSet(4.0), dt=0.01, u_lim=params.u_lim / 2.0)
        assert res.metrics.clamp_steps > 0
        k = np.argmin(res.beta)
        c, f = res.commanded[k], res.clamped[k]
        assert np.abs(np.outer(f, c) - np.outer(c, f)).max() < 1e-12
        # lags behind the reference while saturated
        assert res.metrics.max_position_error_m > 0.005

    def test_error_decreases_once_unclamped(self, params):
        # step reference: constant target from an offset start
        wp = np.array([[0.4, 0.3, 0, 0, 0]] * 2)
        traj = generate_trajectory(wp, durations=[3.0])
        res = track(traj, params, GainSet(2.0), dt=0.01, x0=np.zeros(5))
        err = np.linalg.norm(res.trace.x[:, :2] - res.reference[:, :2], axis=1)
        diffs = np.diff(err)  # diffs[k] spans step k, which used beta[k]
        unclamped = res.beta[: len(diffs)] == 1.0
        assert np.all(diffs[unclamped] <= 1e-12)
        assert err[-1] < 0.01

    def test_torque_mode_inner_loop(self, params):
        wp = np.array([[0, 0, 0, 0, 0], [0.3, 0.0, 0, 0, 0]])
        traj = generate_trajectory(wp, durations=[3.0])
        res = track(traj, params, GainSet(2.0), sim_mode="torque", dt=0.01)
        assert res.metrics.final_position_error_m < 0.05


class TestScenario:
    def test_bundled_square_loads(self):
        from importlib import resources

        path = resources.files("remec.data").joinpath("square.json")
        sc = load_scenario(path)
        assert sc.waypoints.shape == (5, 5)
        assert sc.gains.kp.tolist() == [4.0] * 5

    def test_angles_converted(self, tmp_path):
        doc = {
            "schema": 1,
            "waypoints": [[0, 0, 0, 0, 0], [1, 0, 90, 45, -45]],
            "gains_kp": [1, 1, 1, 2, 2],
        }
        f = tmp_path / "s.json"
        f.write_text(json.dumps(doc))
        sc = load_scenario(f)
        assert sc.waypoints[1, 2] == pytest.approx(math.pi / 2)
        assert sc.waypoints[1, 0] == 1.0

    def test_plan_pipeline(self, params):
        sc = Scenario(waypoints=SQUARE, durations=np.full(4, 0.8), gains=GainSet(4.0))
        traj, iters, report = sc.plan(params)
        assert iters >= 1
        assert report.feasible

    def test_bad_scenarios_rejected(self, tmp_path):
        from remec import TrajectoryError

        f = tmp_path / "bad.json"
        f.write_text(json.dumps({"schema": 1, "waypoints": [[0, 0, 0, 0, 0]]}))
        with pytest.raises(TrajectoryError):
            load_scenario(f)
        f.write_text("{")
        with pytest.raises(TrajectoryError):
            load_scenario(f)
