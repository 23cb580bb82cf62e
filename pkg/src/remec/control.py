"""Trajectory-tracking control: PD law, actuator-limit clamp, closed loop.

The tracking controller outputs a commanded reduced velocity (feedforward
plus proportional position feedback with angle wrapping). Because actuator
velocity limits are configuration dependent, the command is scaled, not
saturated per-axis: the feasible velocity is the largest multiple
``beta * xdot_c`` with all six |u_i| inside the limits, which collapses the
constrained least-squares problem to a one-dimensional ratio.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import SimTrace, kinetic_energy, step
from .errors import TrajectoryError
from .kinematics import KinematicMaps, RobotState, stack_maps, wrap_angle
from .params import RobotParams
from .trajectory import Trajectory5D, feasibility_check, generate_trajectory, time_scale_until_feasible

_ANGLE_IDX = (2, 3, 4)  # theta, phi1, phi2


@dataclass
class GainSet:
    """Diagonal proportional gains (1/s) for the five reduced coordinates."""

    kp: np.ndarray

    def __post_init__(self):
        self.kp = np.atleast_1d(np.asarray(self.kp, dtype=float))
        if self.kp.shape == (1,):
            self.kp = np.full(5, float(self.kp[0]))
        if self.kp.shape != (5,):
            raise ValueError("kp must be scalar or a 5-vector")
        if np.any(self.kp < 0.0):
            raise ValueError("gains must be non-negative")


def pd_law(x_d, xdot_d, x, gains: GainSet) -> np.ndarray:
    """Commanded velocity: feedforward plus proportional error feedback.

    Angular errors (theta, phi1, phi2) are wrapped to (-pi, pi] so the
    controller always takes the short way around.
    """
    e = np.asarray(x_d, dtype=float) - np.asarray(x, dtype=float)
    e[list(_ANGLE_IDX)] = wrap_angle(e[list(_ANGLE_IDX)])
    return np.asarray(xdot_d, dtype=float) + gains.kp * e


def velocity_clamp(xdot_c: np.ndarray, maps: KinematicMaps, u_lim: np.ndarray):
    """Scale the commanded velocity onto the actuator-feasible set.

    Returns ``(xdot_f, beta)`` with ``xdot_f = beta * xdot_c`` parallel to
    the command, ``beta`` in [0, 1], and every |(A xdot_f)_i| <= u_lim_i
    (guaranteed, including float rounding). A zero command returns beta 1.
    """
    xdot_c = np.asarray(xdot_c, dtype=float)
    u_lim = np.asarray(u_lim, dtype=float)
    u_c = maps.A @ xdot_c
    worst = float(np.max(np.abs(u_c) / u_lim))
    if worst <= 1.0:
        return xdot_c.copy(), 1.0
    beta = 1.0 / worst
    xdot_f = beta * xdot_c
    # float rounding can overshoot by an ulp; nudge beta down until clean
    for _ in range(4):
        if np.all(np.abs(maps.A @ xdot_f) <= u_lim):
            break
        beta = math.nextafter(beta, 0.0)
        xdot_f = beta * xdot_c
    return xdot_f, beta


def ate(executed_xy: np.ndarray, reference_xy: np.ndarray) -> float:
    """Absolute trajectory error: RMS planar distance over aligned samples."""
    a = np.atleast_2d(np.asarray(executed_xy, dtype=float))[:, :2]
    b = np.atleast_2d(np.asarray(reference_xy, dtype=float))[:, :2]
    if a.size == 0 or b.size == 0:
        raise ValueError("empty trace")
    if a.shape != b.shape:
        raise ValueError("traces must be time-aligned with equal lengths")
    d2 = np.sum((a - b) ** 2, axis=1)
    return float(np.sqrt(d2.mean()))


@dataclass
class TrackMetrics:
    ate_m: float
    max_position_error_m: float
    max_heading_error_deg: float
    clamp_steps: int
    steps: int
    final_position_error_m: float

    def to_dict(self) -> dict:
        return {
            "ate_m": self.ate_m,
            "max_position_error_m": self.max_position_error_m,
            "max_heading_error_deg": self.max_heading_error_deg,
            "clamp_steps": self.clamp_steps,
            "steps": self.steps,
            "final_position_error_m": self.final_position_error_m,
        }


@dataclass
class TrackResult:
    trace: SimTrace
    metrics: TrackMetrics
    reference: np.ndarray  # (n, 5) sampled reference
    commanded: np.ndarray  # (n, 5) PD output before clamping
    clamped: np.ndarray  # (n, 5) after clamping
    beta: np.ndarray  # (n,)


def track(
    traj: Trajectory5D,
    params: RobotParams,
    gains: GainSet,
    sim_mode: str = "velocity",
    dt: float = 0.01,
    u_lim=None,
    x0=None,
) -> TrackResult:
    """Closed-loop tracking of a reference trajectory.

    Per control period: sample the reference, apply the PD law, clamp onto
    the feasible velocity set, map to actuator commands, advance the
    simulator one step (velocity mode by default; 'torque' wraps an inner
    proportional wheel/joint rate loop around the same command).
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    u_lim = params.u_lim if u_lim is None else np.asarray(u_lim, dtype=float)
    n_steps = int(round(traj.total_time / dt))
    state = RobotState.from_rest(traj.evaluate(0.0) if x0 is None else x0)

    t = np.zeros(n_steps + 1)
    xs = np.zeros((n_steps + 1, 5))
    xds = np.zeros((n_steps + 1, 5))
    us = np.zeros((n_steps + 1, 6))
    residual = np.zeros(n_steps + 1)
    energy = np.zeros(n_steps + 1)
    reference = np.zeros((n_steps + 1, 5))
    commanded = np.zeros((n_steps + 1, 5))
    clamped = np.zeros((n_steps + 1, 5))
    betas = np.ones(n_steps + 1)

    xs[0] = state.x
    reference[0] = traj.evaluate(0.0)
    energy[0] = kinetic_energy(params, state.x, state.xdot)
    clamp_steps = 0
    pos_err_max = 0.0
    head_err_max = 0.0

    for k in range(n_steps):
        now = k * dt
        x_d = traj.evaluate(now)
        xd_d = traj.evaluate(now, 1)
        xdot_c = pd_law(x_d, xd_d, state.x, gains)
        maps = stack_maps(params, state.x)
        xdot_f, beta = velocity_clamp(xdot_c, maps, u_lim)
        u = maps.A @ xdot_f
        if sim_mode == "torque":
            # inner proportional rate loop around the velocity command,
            # substepped: the rate loop is stiff at the control period
            n_sub, k_v = 10, 2.0
            for _ in range(n_sub):
                maps_i = stack_maps(params, state.x)
                actual = np.empty(6)
                actual[:4] = maps_i.D_w @ state.xdot
                actual[4:] = state.xdot[3:5]
                state, info = step(params, state, k_v * (u - actual), "torque", dt / n_sub)
        else:
            state, info = step(params, state, u, "velocity", dt)

        t[k + 1] = (k + 1) * dt
        xs[k + 1] = state.x
        xds[k + 1] = state.xdot
        us[k + 1] = u
        residual[k + 1] = info.constraint_residual
        energy[k + 1] = info.energy
        ref = traj.evaluate((k + 1) * dt)
        reference[k + 1] = ref
        commanded[k] = xdot_c
        clamped[k] = xdot_f
        betas[k] = beta
        clamp_steps += int(beta < 1.0)
        pos_err_max = max(pos_err_max, float(np.linalg.norm(state.x[:2] - ref[:2])))
        head_err_max = max(head_err_max, abs(float(wrap_angle(state.x[2] - ref[2]))))

    trace = SimTrace(
        t=t,
        x=xs,
        xdot=xds,
        u=us,
        residual=residual,
        energy=energy,
        extra_columns={
            "xdot_cmd": commanded,
            "xdot_clamped": clamped,
            "beta": betas,
        },
    )
    metrics = TrackMetrics(
        ate_m=ate(xs[:, :2], reference[:, :2]),
        max_position_error_m=pos_err_max,
        max_heading_error_deg=math.degrees(head_err_max),
        clamp_steps=clamp_steps,
        steps=n_steps,
        final_position_error_m=float(np.linalg.norm(xs[-1, :2] - reference[-1, :2])),
    )
    return TrackResult(trace=trace, metrics=metrics, reference=reference, commanded=commanded, clamped=clamped, beta=betas)


# -- scenario files ---------------------------------------------------------


@dataclass
class Scenario:
    """Tracking scenario: 5D waypoints plus controller settings.

    File waypoints are rows [px_m, py_m, theta_deg, phi1_deg, phi2_deg]
    (angles in degrees, converted on load); ``durations_s`` optional;
    ``u_lim_rad_s`` optionally overrides the actuator limits.
    """

    waypoints: np.ndarray  # (n, 5) radians internally
    durations: np.ndarray | None
    gains: GainSet
    dt: float = 0.01
    mode: str = "velocity"
    u_lim: np.ndarray | None = None
    name: str = "scenario"

    def plan(self, params: RobotParams, dt_check: float = 0.01):
        """generate -> feasibility -> time-scale pipeline."""
        traj = generate_trajectory(self.waypoints, self.durations)
        traj, iterations = time_scale_until_feasible(
            traj, params, dt_check=dt_check
        )
        report = feasibility_check(traj, params, dt_check)
        return traj, iterations, report


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise TrajectoryError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("schema") != 1:
        raise TrajectoryError(f"unsupported scenario schema: {doc.get('schema')!r}")
    wp_raw = np.asarray(doc.get("waypoints", []), dtype=float)
    if wp_raw.ndim != 2 or wp_raw.shape[0] < 2 or wp_raw.shape[1] != 5:
        raise TrajectoryError("scenario needs at least two 5D waypoints")
    waypoints = wp_raw.copy()
    waypoints[:, 2:] = np.deg2rad(wp_raw[:, 2:])
    durations = doc.get("durations_s")
    gains = GainSet(np.asarray(doc.get("gains_kp", 4.0)))
    u_lim = doc.get("u_lim_rad_s")
    return Scenario(
        waypoints=waypoints,
        durations=None if durations is None else np.asarray(durations, dtype=float),
        gains=gains,
        dt=float(doc.get("dt_s", 0.01)),
        mode=doc.get("mode", "velocity"),
        u_lim=None if u_lim is None else np.asarray(u_lim, dtype=float),
        name=doc.get("name", path.stem),
    )
