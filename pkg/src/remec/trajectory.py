"""Smooth reference trajectories through 5D waypoints.

Each reduced coordinate gets a piecewise polynomial (order 9) through its
waypoint values with zero velocity and acceleration at both ends, C4
continuity at interior knots, and the integrated squared snap minimized
over the remaining freedom. Plans are checked against the actuator rate
limits by exhaustive sampling through the configuration-dependent inverse
velocity map, and stretched uniformly in time until feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleTrajectoryError, TrajectoryError
from .kinematics import wheel_rate_maps
from .params import RobotParams

ORDER = 9  # polynomial order per segment
_NC = ORDER + 1
_SNAP_DERIV = 4
_CONTINUITY = 4  # derivatives matched at interior knots


def _basis_row(u: float, derivative: int) -> np.ndarray:
    """Row of the d-th derivative of the normalized monomial basis at u."""
    row = np.zeros(_NC)
    for k in range(derivative, _NC):
        f = 1.0
        for r in range(derivative):
            f *= k - r
        row[k] = f * u ** (k - derivative)
    return row


def _snap_cost_block() -> np.ndarray:
    """Integral of (d4/du4 basis)(d4/du4 basis)^T over u in [0, 1]."""
    Q = np.zeros((_NC, _NC))
    for i in range(_SNAP_DERIV, _NC):
        fi = math.factorial(i) / math.factorial(i - _SNAP_DERIV)
        for j in range(_SNAP_DERIV, _NC):
            fj = math.factorial(j) / math.factorial(j - _SNAP_DERIV)
            Q[i, j] = fi * fj / (i + j - 2 * _SNAP_DERIV + 1)
    return Q


_Q_BLOCK = _snap_cost_block()


@dataclass
class Trajectory5D:
    """Piecewise-polynomial time functions for the five reduced coordinates.

    ``coeffs[s, c, k]`` is the k-th local-time monomial coefficient of
    coordinate c on segment s (local time in seconds from the segment
    start).
    """

    coeffs: np.ndarray  # (n_seg, 5, 10)
    durations: np.ndarray  # (n_seg,)
    waypoints: np.ndarray  # (n_wp, 5)

    @property
    def total_time(self) -> float:
        return float(self.durations.sum())

    def _locate(self, t: float):
        t = min(max(t, 0.0), self.total_time)
        edges = np.concatenate([[0.0], np.cumsum(self.durations)])
        s = int(np.searchsorted(edges[1:-1], t, side="right"))
        return s, t - edges[s]

    def evaluate(self, t: float, derivative: int = 0) -> np.ndarray:
        """Value of the trajectory (or a time derivative) at time t."""
        s, tau = self._locate(float(t))
        row = np.zeros(_NC)
        for k in range(derivative, _NC):
            f = 1.0
            for r in range(derivative):
                f *= k - r
            row[k] = f * tau ** (k - derivative)
        return self.coeffs[s] @ row

    def sample(self, dt: float):
        """Times, positions and velocities on a uniform grid (endpoint kept)."""
        n = max(1, int(math.ceil(self.total_time / dt - 1e-9)))
        times = np.minimum(np.arange(n + 1) * dt, self.total_time)
        X = np.array([self.evaluate(t, 0) for t in times])
        Xd = np.array([self.evaluate(t, 1) for t in times])
        return times, X, Xd

    def time_scaled(self, s: float) -> "Trajectory5D":
        """Uniform time reparameterization t -> s t; the path is unchanged."""
        if s <= 0.0:
            raise TrajectoryError("time scale factor must be positive")
        powers = (1.0 / s) ** np.arange(_NC)
        return Trajectory5D(
            coeffs=self.coeffs * powers[None, None, :],
            durations=self.durations * s,
            waypoints=self.waypoints.copy(),
        )


def estimate_durations(
    waypoints: np.ndarray,
    nominal_speed: float = 0.25,
    nominal_rate: float = 0.5,
    floor: float = 0.75,
) -> np.ndarray:
    """Per-segment durations from a nominal translation speed (m/s) and
    angular rate (rad/s), with a floor for degenerate segments."""
    w = np.asarray(waypoints, dtype=float)
    out = np.empty(len(w) - 1)
    for s in range(len(w) - 1):
        d_lin = float(np.linalg.norm(w[s + 1, :2] - w[s, :2]))
        d_ang = float(np.abs(w[s + 1, 2:] - w[s, 2:]).max())
        out[s] = max(d_lin / nominal_speed, d_ang / nominal_rate, floor)
    return out


def generate_trajectory(
    waypoints,
    durations=None,
    nominal_speed: float = 0.25,
    nominal_rate: float = 0.5,
) -> Trajectory5D:
    """Minimum-snap splines through the waypoints, at rest at both ends.

    ``waypoints`` is (n, 5). Durations are estimated from the nominal
    speeds when not given. Raises TrajectoryError for fewer than two
    waypoints or non-positive durations (e.g. duplicate consecutive
    waypoints with an explicit zero duration).
    """
    W = np.atleast_2d(np.asarray(waypoints, dtype=float))
    if W.ndim != 2 or W.shape[1] != 5:
        raise TrajectoryError("waypoints must be an (n, 5) array")
    if len(W) < 2:
        raise TrajectoryError("need at least two waypoints")
    if durations is None:
        T = estimate_durations(W, nominal_speed, nominal_rate)
    else:
        T = np.asarray(durations, dtype=float)
        if T.shape != (len(W) - 1,):
            raise TrajectoryError("need one duration per segment")
        if np.any(T <= 0.0):
            raise TrajectoryError("segment durations must be positive (duplicate waypoints need time too)")

    n_seg = len(W) - 1
    coeffs = np.empty((n_seg, 5, _NC))
    for c in range(5):
        coeffs[:, c, :] = _solve_min_snap(W[:, c], T)
    return Trajectory5D(coeffs=coeffs, durations=T, waypoints=W)


def _solve_min_snap(values: np.ndarray, T: np.ndarray) -> np.ndarray:
    """Single-coordinate minimum-snap solve; returns (n_seg, 10) local-time
    coefficients.

    Works in per-segment normalized time for conditioning; the equality
    constraints (waypoint interpolation, endpoint rest, C1..C4 continuity)
    enter through a KKT system with the snap Hessian.
    """
    n_seg = len(T)
    n_var = n_seg * _NC

    H = np.zeros((n_var, n_var))
    for s in range(n_seg):
        H[s * _NC : (s + 1) * _NC, s * _NC : (s + 1) * _NC] = _Q_BLOCK / T[s] ** (2 * _SNAP_DERIV - 1)

    rows = []
    rhs = []

    def add(row, b):
        rows.append(row)
        rhs.append(b)

    def seg_row(s, u, d):
        row = np.zeros(n_var)
        row[s * _NC : (s + 1) * _NC] = _basis_row(u, d) / T[s] ** d
        return row

    for s in range(n_seg):
        add(seg_row(s, 0.0, 0), values[s])
        add(seg_row(s, 1.0, 0), values[s + 1])
    for d in (1, 2):
        add(seg_row(0, 0.0, d), 0.0)
        add(seg_row(n_seg - 1, 1.0, d), 0.0)
    for s in range(n_seg - 1):
        for d in range(1, _CONTINUITY + 1):
            add(seg_row(s, 1.0, d) - seg_row(s + 1, 0.0, d), 0.0)

    A = np.array(rows)
    b = np.array(rhs)
    m = len(b)
    KKT = np.zeros((n_var + m, n_var + m))
    KKT[:n_var, :n_var] = 2.0 * H
    KKT[:n_var, n_var:] = A.T
    KKT[n_var:, :n_var] = A
    sol = np.linalg.solve(KKT, np.concatenate([np.zeros(n_var), b]))
    c_norm = sol[:n_var].reshape(n_seg, _NC)
    # convert normalized-time coefficients to local seconds
    return c_norm / T[:, None] ** np.arange(_NC)[None, :]


@dataclass
class FeasibilityReport:
    feasible: bool
    worst_ratio: float
    t_worst: float
    actuator: int  # 0-based index into u_lim of the worst actuator


def feasibility_check(traj: Trajectory5D, params: RobotParams, dt_check: float = 0.01) -> FeasibilityReport:
    """Exhaustive actuator-rate check along the trajectory.

    Samples the planned rates every ``dt_check`` seconds, maps them through
    the inverse velocity map at the trajectory's own joint angles, and
    reports the worst |u_i| / u_lim_i ratio.
    """
    if dt_check <= 0.0:
        raise ValueError("dt_check must be positive")
    times, X, Xd = traj.sample(dt_check)
    worst = 0.0
    t_worst = 0.0
    act = 0
    for t, x, xd in zip(times, X, Xd):
        D_w, _ = wheel_rate_maps(params, x)
        u = np.empty(6)
        u[:4] = D_w @ xd
        u[4:] = xd[3:5]
        ratios = np.abs(u) / params.u_lim
        j = int(np.argmax(ratios))
        if ratios[j] > worst:
            worst, t_worst, act = float(ratios[j]), float(t), j
    return FeasibilityReport(feasible=worst <= 1.0, worst_ratio=worst, t_worst=t_worst, actuator=act)


def time_scale_until_feasible(
    traj: Trajectory5D,
    params: RobotParams,
    dt_check: float = 0.01,
    margin: float = 0.05,
    max_iterations: int = 50,
):
    """Stretch time by (worst ratio + margin) until the plan is feasible.

    Returns ``(trajectory, iterations)``; an already-feasible input comes
    back unchanged with zero iterations.
    """
    current = traj
    for iteration in range(max_iterations + 1):
        report = feasibility_check(current, params, dt_check)
        if report.feasible:
            return current, iteration
        current = current.time_scaled(report.worst_ratio + margin)
    raise InfeasibleTrajectoryError(f"not feasible after {max_iterations} scalings")
