"""Constrained Lagrangian dynamics and time integration.

Full generalized coordinates (13):

    q = [px, py, theta, phi1, phi2, sigma1..sigma4, psi1..psi4]

The eight rolling/no-slip constraints are Pfaffian, ``Lambda(q) qdot = 0``.
The reduction eliminates the Lagrange multipliers through the constraint
nullspace basis ``N`` with ``qdot = N xdot``, giving a 5-DOF model in the
reduced coordinates. The system is planar, so there is no gravity term.

Friction coefficients are stored as positive viscous constants and applied
dissipatively (the friction matrix carries the negative sign internally).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationDivergedError, NearSingularDynamicsError
from .kinematics import RobotState, rot2, stack_map_rates, stack_maps, wheel_rate_maps
from .params import WHEEL_LEG, RobotParams

N_Q = 13
_ANGLE_COORDS = (2, 3, 4)  # the mass matrix depends on q only through these


@dataclass
class FullModel:
    """Matrices of the full-coordinate equation of motion."""

    M_q: np.ndarray  # (13, 13)
    C_q: np.ndarray  # (13, 13)
    B: np.ndarray  # (13, 6)
    Lambda: np.ndarray  # (8, 13)
    Q_q: np.ndarray  # (13, 13)
    q: np.ndarray
    qdot: np.ndarray


@dataclass
class ReducedModel:
    """5-DOF model after nullspace reduction.

    ``xdot`` records the rates the velocity-dependent terms were assembled
    with; the forward dynamics evaluates C_x and Q_x against it.
    """

    M_x: np.ndarray  # (5, 5)
    C_x: np.ndarray  # (5, 5)
    B_x: np.ndarray  # (5, 6)
    Q_x: np.ndarray  # (5, 5)
    N: np.ndarray  # (13, 5)
    Ndot: np.ndarray  # (13, 5)
    xdot: np.ndarray = None  # (5,)


def state_to_q(x: np.ndarray, sigma=None, psi=None) -> np.ndarray:
    q = np.zeros(N_Q)
    q[:5] = x
    if sigma is not None:
        q[5:9] = sigma
    if psi is not None:
        q[9:13] = psi
    return q


def mass_matrix(params: RobotParams, q: np.ndarray) -> np.ndarray:
    """Symmetric positive definite 13x13 mass-inertia matrix.

    Assembled from per-link kinetic energy: body (with joint housings and
    payload as attached point masses), two legs (with counterweights), four
    wheels (translational + yaw + spin) and the roller spin inertias. Point
    masses enter through their world-frame velocity Jacobians; the blocks
    are written out explicitly for speed.
    """
    theta = float(q[2])
    ct, st = math.cos(theta), math.sin(theta)
    M = np.zeros((N_Q, N_Q))

    m02 = m12 = m22 = 0.0
    M[0, 0] = M[1, 1] = params.total_mass

    for m, cx, cy in params._body_points:
        # world arm w = R(theta) local; yaw column couples via z x w
        m02 -= m * (st * cx + ct * cy)
        m12 += m * (ct * cx - st * cy)
        m22 += m * (cx * cx + cy * cy)
    m22 += params.body_inertia

    for leg in range(2):
        phi = float(q[3 + leg])
        cp, sp = math.cos(phi), math.sin(phi)
        jx, jy = float(params._joint_positions[leg, 0]), float(params._joint_positions[leg, 1])
        col = 3 + leg
        m0c = m1c = m2c = mcc = 0.0
        for m, cx, cy in params._leg_points[leg]:
            rx = cp * cx - sp * cy  # R(phi) local
            ry = sp * cx + cp * cy
            px, py = jx + rx, jy + ry  # base-frame arm for the yaw column
            m02 -= m * (st * px + ct * py)
            m12 += m * (ct * px - st * py)
            m0c -= m * (st * rx + ct * ry)
            m1c += m * (ct * rx - st * ry)
            m22 += m * (px * px + py * py)
            m2c += m * (px * rx + py * ry)
            mcc += m * (cx * cx + cy * cy)
        I_yaw = params.leg_inertias[leg] + 2 * params.wheel_yaw_inertia
        m22 += I_yaw
        M[0, col] = M[col, 0] = m0c
        M[1, col] = M[col, 1] = m1c
        M[2, col] = M[col, 2] = m2c + I_yaw
        M[col, col] = mcc + I_yaw

    M[0, 2] = M[2, 0] = m02
    M[1, 2] = M[2, 1] = m12
    M[2, 2] = m22
    for i in range(4):
        M[5 + i, 5 + i] = params.wheel_spin_inertia
        M[9 + i, 9 + i] = params.roller_inertia
    return M


def mass_matrix_partials(params: RobotParams, q: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference partials dM/dq_k, shape (13, 13, 13).

    The mass matrix depends on q only through the three angle coordinates;
    the remaining slices are exactly zero.
    """
    q = np.asarray(q, dtype=float)
    dM = np.zeros((N_Q, N_Q, N_Q))
    for k in _ANGLE_COORDS:
        e = np.zeros(N_Q)
        e[k] = step
        dM[k] = (mass_matrix(params, q + e) - mass_matrix(params, q - e)) / (2 * step)
    return dM


def coriolis_matrix(params: RobotParams, q: np.ndarray, qdot: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Coriolis/centripetal matrix from Christoffel symbols of the mass matrix.

    C_ij = 1/2 sum_k (dM_ij/dq_k + dM_ik/dq_j - dM_jk/dq_i) qdot_k, with the
    partials taken by central finite differences. Guarantees that
    Mdot - 2C is skew-symmetric up to differencing error.
    """
    qdot = np.asarray(qdot, dtype=float)
    dM = mass_matrix_partials(params, q, step=step)
    return _coriolis_from_partials(dM, qdot)


def _coriolis_from_partials(dM: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    term1 = np.einsum("kij,k->ij", dM, qdot)
    term2 = np.einsum("jik,k->ij", dM, qdot)
    term3 = np.einsum("ijk,k->ij", dM, qdot)
    return 0.5 * (term1 + term2 - term3)


def actuation_matrix(params: RobotParams) -> np.ndarray:
    """13x6 map from [wheel torques 1-4, joint torques 1-2] to q-forces."""
    B = np.zeros((N_Q, 6))
    for i in range(4):
        B[5 + i, i] = 1.0
    B[3, 4] = 1.0
    B[4, 5] = 1.0
    return B


def friction_matrix(params: RobotParams) -> np.ndarray:
    """Viscous friction matrix (negative semidefinite diagonal)."""
    d = np.zeros(N_Q)
    d[3:5] = -params.joint_friction
    d[5:9] = -params.wheel_friction
    d[9:13] = -params.roller_friction
    return np.diag(d)


def pfaffian(params: RobotParams, x: np.ndarray) -> np.ndarray:
    """8x13 constraint matrix with Lambda(q) qdot = 0."""
    D_w, D_r = wheel_rate_maps(params, x)
    L = np.zeros((8, N_Q))
    L[:4, :5] = D_w
    L[:4, 5:9] = -np.eye(4)
    L[4:, :5] = D_r
    L[4:, 9:13] = -np.eye(4)
    return L


def nullspace_N(params: RobotParams, x: np.ndarray, xdot: np.ndarray | None = None):
    """Constraint nullspace basis N = [I5; D_w; D_r] and its time derivative.

    ``qdot = N xdot`` satisfies all eight rolling constraints by
    construction. Ndot is zero when no rates are supplied.
    """
    D_w, D_r = wheel_rate_maps(params, x)
    N = np.vstack([np.eye(5), D_w, D_r])
    Ndot = np.zeros((N_Q, 5))
    if xdot is not None and np.any(np.asarray(xdot) != 0.0):
        Dw_dot, Dr_dot = stack_map_rates(params, x, xdot)
        Ndot[5:9] = Dw_dot
        Ndot[9:13] = Dr_dot
    return N, Ndot


def full_model(params: RobotParams, q: np.ndarray, qdot: np.ndarray) -> FullModel:
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    return FullModel(
        M_q=mass_matrix(params, q),
        C_q=coriolis_matrix(params, q, qdot),
        B=actuation_matrix(params),
        Lambda=pfaffian(params, q[:5]),
        Q_q=friction_matrix(params),
        q=q,
        qdot=qdot,
    )


def reduce_model(full: FullModel, N: np.ndarray, Ndot: np.ndarray) -> ReducedModel:
    """Project the full model through the constraint nullspace."""
    return ReducedModel(
        M_x=N.T @ full.M_q @ N,
        C_x=N.T @ full.C_q @ N + N.T @ full.M_q @ Ndot,
        B_x=N.T @ full.B,
        Q_x=N.T @ full.Q_q @ N,
        N=N,
        Ndot=Ndot,
        xdot=full.qdot[:5].copy(),
    )


def reduced_model(params: RobotParams, x: np.ndarray, xdot: np.ndarray) -> ReducedModel:
    """Assemble the reduced model directly from the reduced state."""
    x = np.asarray(x, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    N, Ndot = nullspace_N(params, x, xdot)
    qdot = N @ xdot
    q = state_to_q(x)
    M_q = mass_matrix(params, q)
    dM = mass_matrix_partials(params, q)
    C_q = _coriolis_from_partials(dM, qdot)
    B = actuation_matrix(params)
    Q_q = friction_matrix(params)
    return ReducedModel(
        M_x=N.T @ M_q @ N,
        C_x=N.T @ C_q @ N + N.T @ M_q @ Ndot,
        B_x=N.T @ B,
        Q_x=N.T @ Q_q @ N,
        N=N,
        Ndot=Ndot,
        xdot=xdot.copy(),
    )


def forward_dynamics(reduced: ReducedModel, u_tau: np.ndarray) -> np.ndarray:
    """Reduced acceleration xddot = M_x^-1 (B_x u + Q_x xdot - C_x xdot)."""
    u_tau = np.asarray(u_tau, dtype=float)
    xdot = reduced.xdot if reduced.xdot is not None else np.zeros(5)
    M = reduced.M_x
    eigs = np.linalg.eigvalsh(M)
    if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > 1e12:
        raise NearSingularDynamicsError(f"reduced mass matrix condition {eigs[-1] / max(eigs[0], 1e-300):.3e}")
    rhs = reduced.B_x @ u_tau + reduced.Q_x @ xdot - reduced.C_x @ xdot
    return np.linalg.solve(M, rhs)


def forward_dynamics_at(params: RobotParams, x: np.ndarray, xdot: np.ndarray, u_tau: np.ndarray) -> np.ndarray:
    """Convenience wrapper: assemble the reduced model at (x, xdot) and solve."""
    return forward_dynamics(reduced_model(params, x, xdot), u_tau)


def kinetic_energy(params: RobotParams, x: np.ndarray, xdot: np.ndarray) -> float:
    """Total kinetic energy 1/2 qdot^T M_q qdot with qdot = N xdot."""
    N, _ = nullspace_N(params, x)
    qdot = N @ np.asarray(xdot, dtype=float)
    M_q = mass_matrix(params, state_to_q(x))
    return 0.5 * float(qdot @ M_q @ qdot)


@dataclass
class StepInfo:
    """Diagnostics emitted by one integration step."""

    constraint_residual: float
    energy: float
    joint_limit_violation: bool = False


def _augment(state: RobotState):
    sigma = np.zeros(4) if state.sigma is None else np.asarray(state.sigma, dtype=float)
    psi = np.zeros(4) if state.psi is None else np.asarray(state.psi, dtype=float)
    return sigma, psi


def step(params: RobotParams, state: RobotState, u, mode: str, dt: float):
    """Advance one fixed-step RK4 step in 'torque' or 'velocity' mode.

    Velocity mode maps the held actuator command through the pseudoinverse
    (xdot = A+ u) and integrates positions only; torque mode integrates the
    reduced second-order dynamics. Joint angles beyond the travel limit are
    clamped and flagged, not raised. Returns ``(new_state, StepInfo)``.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(state.x)) and np.all(np.isfinite(state.xdot))):
        raise IntegrationDivergedError("input or state is non-finite")
    sigma, psi = _augment(state)

    if mode == "velocity":
        x0 = state.x
        k1 = stack_maps(params, x0).A_pinv @ u
        x2 = x0 + 0.5 * dt * k1
        k2 = stack_maps(params, x2).A_pinv @ u
        x3 = x0 + 0.5 * dt * k2
        k3 = stack_maps(params, x3).A_pinv @ u
        x4 = x0 + dt * k3
        k4 = stack_maps(params, x4).A_pinv @ u
        x_new = x0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        xdot_new = stack_maps(params, x_new).A_pinv @ u
        stages = [(x0, k1, 1), (x2, k2, 2), (x3, k3, 2), (x4, k4, 1)]
    elif mode == "torque":

        def accel(x, xd):
            return forward_dynamics(reduced_model(params, x, xd), u)

        x0, v0 = state.x, state.xdot
        a1 = accel(x0, v0)
        x2, v2 = x0 + 0.5 * dt * v0, v0 + 0.5 * dt * a1
        a2 = accel(x2, v2)
        x3, v3 = x0 + 0.5 * dt * v2, v0 + 0.5 * dt * a2
        a3 = accel(x3, v3)
        x4, v4 = x0 + dt * v3, v0 + dt * a3
        a4 = accel(x4, v4)
        x_new = x0 + dt / 6.0 * (v0 + 2 * v2 + 2 * v3 + v4)
        xdot_new = v0 + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        stages = [(x0, v0, 1), (x2, v2, 2), (x3, v3, 2), (x4, v4, 1)]
    else:
        raise ValueError(f"unknown mode {mode!r}")

    # passive wheel/roller angles follow the same RK4 quadrature
    sdot = np.zeros(4)
    pdot = np.zeros(4)
    for xs, vs, w in stages:
        D_w_s, D_r_s = wheel_rate_maps(params, xs)
        sdot += w * (D_w_s @ vs)
        pdot += w * (D_r_s @ vs)
    sigma = sigma + dt / 6.0 * sdot
    psi = psi + dt / 6.0 * pdot

    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(xdot_new))):
        raise IntegrationDivergedError("state became non-finite")

    phi_clamped, violated = params.with_joint_angles_clamped(x_new[3:5])
    if violated:
        x_new = x_new.copy()
        x_new[3:5] = phi_clamped
        if mode == "torque":
            xdot_new = xdot_new.copy()
            xdot_new[3:5] = 0.0

    # constraint residual with qdot reconstructed through the nullspace
    N, _ = nullspace_N(params, x_new)
    residual = float(np.linalg.norm(pfaffian(params, x_new) @ (N @ xdot_new)))
    energy = kinetic_energy(params, x_new, xdot_new)
    new_state = RobotState(x_new, xdot_new, sigma=sigma, psi=psi)
    return new_state, StepInfo(residual, energy, violated)


@dataclass
class SimTrace:
    """Time-indexed arrays collected during a simulation run."""

    t: np.ndarray
    x: np.ndarray  # (n, 5)
    xdot: np.ndarray  # (n, 5)
    u: np.ndarray  # (n, 6)
    residual: np.ndarray
    energy: np.ndarray
    limit_violations: int = 0
    extra_columns: dict = field(default_factory=dict)

    def to_csv(self, path, decimation: int = 1):
        idx = np.arange(0, len(self.t), max(1, int(decimation)))
        header = (
            ["time_s"]
            + [f"x_{n}" for n in ("px", "py", "theta", "phi1", "phi2")]
            + [f"xdot_{n}" for n in ("px", "py", "theta", "phi1", "phi2")]
            + [f"u_{k}" for k in range(1, 7)]
            + ["constraint_residual", "energy_j"]
            + list(self.extra_columns)
        )
        cols = [self.t[idx, None], self.x[idx], self.xdot[idx], self.u[idx], self.residual[idx, None], self.energy[idx, None]]
        cols += [np.asarray(v)[idx].reshape(len(idx), -1) for v in self.extra_columns.values()]
        data = np.hstack(cols)
        lines = [",".join(header)]
        for row in data:
            lines.append(",".join(f"{v:.12g}" for v in row))
        from .io_utils import atomic_write_text

        atomic_write_text(path, "\n".join(lines) + "\n")


def simulate(params: RobotParams, state0: RobotState, u_of_t, mode: str, dt: float, duration: float) -> SimTrace:
    """Open-loop simulation with a (possibly time-varying) actuator input.

    ``u_of_t`` is either a 6-vector held constant or a callable t -> u(6).
    """
    n_steps = int(round(duration / dt))
    u_fn = u_of_t if callable(u_of_t) else (lambda t, _u=np.asarray(u_of_t, dtype=float): _u)
    state = state0
    t = np.zeros(n_steps + 1)
    xs = np.zeros((n_steps + 1, 5))
    xds = np.zeros((n_steps + 1, 5))
    us = np.zeros((n_steps + 1, 6))
    res = np.zeros(n_steps + 1)
    en = np.zeros(n_steps + 1)
    xs[0], xds[0] = state.x, state.xdot
    en[0] = kinetic_energy(params, state.x, state.xdot)
    violations = 0
    for k in range(n_steps):
        u = np.asarray(u_fn(k * dt), dtype=float)
        state, info = step(params, state, u, mode, dt)
        t[k + 1] = (k + 1) * dt
        xs[k + 1], xds[k + 1] = state.x, state.xdot
        us[k + 1] = u
        res[k + 1] = info.constraint_residual
        en[k + 1] = info.energy
        violations += int(info.joint_limit_violation)
    return SimTrace(t=t, x=xs, xdot=xds, u=us, residual=res, energy=en, limit_violations=violations)
