"""Configuration-dependent geometry and velocity maps.

Reduced generalized coordinates are ``x = [px, py, theta, phi1, phi2]``
(base position in the inertial frame, base yaw, leg joint angles). The
actuator velocity vector is ``u_v = [sigma_dot_1..4, phi_dot_1, phi_dot_2]``.

Each mecanum wheel contributes two velocity-level constraint rows:

* no slip along the roller axis, which fixes the wheel rate
  ``sigma_dot = d_w . xdot``;
* rolling about the roller axis, which fixes the passive roller rate
  ``psi_dot = d_r . xdot``.

Stacking the wheel rows over wheels 1-4 and appending the identity rows for
the two joints gives the 6x5 inverse map ``A`` with ``u_v = A xdot``; its
Moore-Penrose pseudoinverse gives the forward map.

Wheel indices in public functions are 1-based (wheels 1..4), matching the
hardware labelling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularWheelError
from .params import WHEEL_LEG, RobotParams

_COS_ALPHA_MIN = 1e-12


def rot2(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def wrap_angle(angle):
    """Wrap to (-pi, pi]."""
    wrapped = np.mod(-np.asarray(angle) + math.pi, 2 * math.pi)
    return -(wrapped - math.pi)


@dataclass
class RobotState:
    """Reduced state, optionally carrying the passive wheel/roller angles.

    Angles are stored unwrapped so trajectories remain continuous.
    """

    x: np.ndarray
    xdot: np.ndarray
    sigma: np.ndarray | None = None
    psi: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).copy()
        self.xdot = np.asarray(self.xdot, dtype=float).copy()
        if self.x.shape != (5,) or self.xdot.shape != (5,):
            raise ValueError("x and xdot must be 5-vectors")

    @classmethod
    def from_rest(cls, x=(0.0, 0.0, 0.0, 0.0, 0.0)) -> "RobotState":
        return cls(np.asarray(x, dtype=float), np.zeros(5))

    @property
    def phi(self) -> np.ndarray:
        return self.x[3:5]


@dataclass
class ControlInput:
    """Actuator command: wheel entries 1-4 then joints 1-2."""

    u: np.ndarray
    mode: str = "velocity"  # 'velocity' (rad/s) or 'torque' (N m)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).copy()
        if self.u.shape != (6,):
            raise ValueError("u must be a 6-vector")
        if not np.all(np.isfinite(self.u)):
            raise ValueError("u must be finite")
        if self.mode not in ("velocity", "torque"):
            raise ValueError(f"unknown input mode {self.mode!r}")


@dataclass
class KinematicMaps:
    """Velocity maps at one configuration."""

    D_w: np.ndarray  # (4, 5) wheel-rate map
    D_r: np.ndarray  # (4, 5) roller-rate map
    A: np.ndarray  # (6, 5) inverse map [D_w; 0 I2]
    A_pinv: np.ndarray  # (5, 6)
    rank: int
    frame_tag: str = "base"  # 'base' or 'center'
    singular_values: np.ndarray = field(default=None, repr=False)


def _check_wheel_index(wheel_index: int):
    if wheel_index not in (1, 2, 3, 4):
        raise IndexError(f"wheel_index must be in 1..4, got {wheel_index}")


def wheel_positions(params: RobotParams, x: np.ndarray) -> np.ndarray:
    """Base-frame wheel centers, shape (4, 2)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((4, 2))
    mounts = params.wheel_mounts
    joints = params.joint_positions
    for i in range(4):
        leg = WHEEL_LEG[i]
        out[i] = joints[leg] + rot2(x[3 + leg]) @ mounts[i]
    return out


def geometric_center(params: RobotParams, x: np.ndarray) -> np.ndarray:
    """Mean of the four wheel centers, base frame."""
    return wheel_positions(params, x).mean(axis=0)


def wheel_pose(params: RobotParams, x: np.ndarray, wheel_index: int):
    """Wheel position in the base frame and relative to the geometric center.

    Returns ``(p_bw, p_rw, heading)`` where the positions are 3-vectors
    (z = 0) and ``heading`` is the joint angle of the owning leg.
    """
    _check_wheel_index(wheel_index)
    pos = wheel_positions(params, x)
    center = pos.mean(axis=0)
    i = wheel_index - 1
    p_bw = np.array([pos[i, 0], pos[i, 1], 0.0])
    p_rw = np.array([pos[i, 0] - center[0], pos[i, 1] - center[1], 0.0])
    heading = float(x[3 + WHEEL_LEG[i]])
    return p_bw, p_rw, heading


def _hub_chain(params: RobotParams, x: np.ndarray, i: int, about_center: bool, positions=None) -> np.ndarray:
    """3x5 matrix mapping xdot to the wheel-hub velocity in the wheel frame.

    Composes base translation, base rotation about the chosen frame origin
    and the leg joint rotation, then rotates into the wheel frame (which is
    the leg frame).
    """
    theta = x[2]
    leg = WHEEL_LEG[i]
    phi = x[3 + leg]
    mount = params.wheel_mounts[i]
    if positions is None:
        positions = wheel_positions(params, x)
    p = positions[i]
    if about_center:
        p = p - positions.mean(axis=0)

    V = np.zeros((3, 5))
    cpt, spt = math.cos(phi + theta), math.sin(phi + theta)
    # inertial translation rotated into the wheel frame: R^T(phi + theta)
    V[0, 0], V[1, 0] = cpt, -spt
    V[0, 1], V[1, 1] = spt, cpt
    # base yaw: z x p, rotated by -phi into the wheel frame
    V[:2, 2] = rot2(phi).T @ np.array([-p[1], p[0]])
    # leg joint rate: z x mount (rotation commutes with the planar cross)
    V[:2, 3 + leg] = [-mount[1], mount[0]]
    return V


def _roller_axes(alpha: float):
    """No-slip and rolling direction unit vectors in the wheel frame."""
    u_s = np.array([math.cos(alpha), math.sin(alpha), 0.0])
    u_r = np.array([math.sin(alpha), -math.cos(alpha), 0.0])
    return u_s, u_r


def contact_velocity(
    params: RobotParams,
    x: np.ndarray,
    xdot: np.ndarray,
    sigma_dot: float,
    wheel_index: int,
) -> np.ndarray:
    """Velocity of the wheel's ground contact point, in the wheel frame.

    Includes the hub velocity from the base/joint chain plus the wheel-spin
    term ``sigma_dot * e_y x p_wc`` with contact lever ``p_wc = (0,0,-r_w)``.
    """
    _check_wheel_index(wheel_index)
    x = np.asarray(x, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    V = _hub_chain(params, x, wheel_index - 1, about_center=False)
    v_hub = V @ xdot
    spin = sigma_dot * np.array([-params.wheel_radius, 0.0, 0.0])
    return v_hub + spin


def constraint_rows(params: RobotParams, x: np.ndarray, wheel_index: int):
    """Rows d_w, d_r with sigma_dot = d_w . xdot and psi_dot = d_r . xdot.

    Derived by substituting the contact velocity into the no-slip and
    rolling constraints. The wheel row divides by r_w cos(alpha); a roller
    angle of +/-90 deg therefore has no valid solution.
    """
    _check_wheel_index(wheel_index)
    i = wheel_index - 1
    alpha = params.alpha[i]
    c_a = math.cos(alpha)
    if abs(c_a) < _COS_ALPHA_MIN:
        raise SingularWheelError(f"wheel {wheel_index}: roller axis parallel to wheel axis")
    x = np.asarray(x, dtype=float)
    V = _hub_chain(params, x, i, about_center=False)
    u_s, u_r = _roller_axes(alpha)
    d_w = (u_s @ V) / (params.wheel_radius * c_a)
    # rolling constraint with the wheel-spin term eliminated via d_w:
    # (u_r - tan(alpha) u_s) collapses to -e_y / cos(alpha)
    d_r = -(V[1, :]) / (params.roller_radius * c_a)
    return d_w, d_r


def wheel_rate_maps(params: RobotParams, x: np.ndarray, about_center: bool = False):
    """The stacked 4x5 wheel-rate and roller-rate maps (D_w, D_r) only.

    Cheaper than :func:`stack_maps` when the pseudoinverse is not needed
    (dynamics assembly, passive-angle integration).
    """
    x = np.asarray(x, dtype=float)
    D_w = np.zeros((4, 5))
    D_r = np.zeros((4, 5))
    positions = wheel_positions(params, x)
    for i in range(4):
        alpha = params.alpha[i]
        c_a = math.cos(alpha)
        if abs(c_a) < _COS_ALPHA_MIN:
            raise SingularWheelError(f"wheel {i + 1}: roller axis parallel to wheel axis")
        V = _hub_chain(params, x, i, about_center=about_center, positions=positions)
        u_s, _ = _roller_axes(alpha)
        D_w[i] = (u_s @ V) / (params.wheel_radius * c_a)
        D_r[i] = -(V[1, :]) / (params.roller_radius * c_a)
    return D_w, D_r


def stack_maps(params: RobotParams, x: np.ndarray, about_center: bool = False) -> KinematicMaps:
    """Stack the per-wheel rows into D_w, D_r and build A and its pseudoinverse.

    ``about_center`` replaces the base-frame wheel position with the
    position relative to the wheels' geometric center in the yaw column, so
    the commanded rotation is about that center instead of the base origin.
    Singular values of A below 1e-10 of the largest are treated as zero.
    """
    D_w, D_r = wheel_rate_maps(params, x, about_center=about_center)
    A = np.vstack([D_w, np.hstack([np.zeros((2, 3)), np.eye(2)])])
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    cutoff = 1e-10 * s[0] if s.size else 0.0
    s_inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    A_pinv = Vt.T @ np.diag(s_inv) @ U.T
    rank = int(np.count_nonzero(s > cutoff))
    return KinematicMaps(
        D_w=D_w,
        D_r=D_r,
        A=A,
        A_pinv=A_pinv,
        rank=rank,
        frame_tag="center" if about_center else "base",
        singular_values=s,
    )


def stack_map_rates(params: RobotParams, x: np.ndarray, xdot: np.ndarray):
    """Time derivatives (D_w_dot, D_r_dot) along the state flow.

    Analytic differentiation of the closed-form rows; used for the
    nullspace-basis derivative in the dynamics reduction.
    """
    x = np.asarray(x, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    theta = x[2]
    theta_dot = xdot[2]
    Dw_dot = np.zeros((4, 5))
    Dr_dot = np.zeros((4, 5))
    joints = params.joint_positions
    mounts = params.wheel_mounts
    for i in range(4):
        leg = WHEEL_LEG[i]
        phi, phi_dot = x[3 + leg], xdot[3 + leg]
        alpha = params.alpha[i]
        c_al, s_al = math.cos(alpha), math.sin(alpha)
        jx, jy = joints[leg]
        wx, wy = mounts[i]
        a = alpha + phi + theta
        b = alpha + phi
        g = phi + theta
        a_dot = theta_dot + phi_dot
        kw = 1.0 / (params.wheel_radius * c_al)
        Dw_dot[i, 0] = -math.sin(a) * a_dot * kw
        Dw_dot[i, 1] = math.cos(a) * a_dot * kw
        Dw_dot[i, 2] = (jx * math.cos(b) + jy * math.sin(b)) * phi_dot * kw
        kr = 1.0 / (params.roller_radius * c_al)
        Dr_dot[i, 0] = math.cos(g) * a_dot * kr
        Dr_dot[i, 1] = math.sin(g) * a_dot * kr
        Dr_dot[i, 2] = (jx * math.sin(phi) - jy * math.cos(phi)) * phi_dot * kr
        # joint-rate columns are configuration-independent (wx, wy constant)
    return Dw_dot, Dr_dot


def inverse_map(maps: KinematicMaps, xdot: np.ndarray) -> np.ndarray:
    """Actuator velocities for a reduced velocity: u_v = A xdot."""
    return maps.A @ np.asarray(xdot, dtype=float)


def forward_map(maps: KinematicMaps, u_v: np.ndarray):
    """Least-squares reduced velocity for an actuator command.

    Returns ``(xdot, residual)`` with ``residual = ||A xdot - u_v||_2``; a
    residual above tolerance means ``u_v`` is not in the range space of A
    (kinematically inconsistent command).
    """
    u_v = np.asarray(u_v, dtype=float)
    xdot = maps.A_pinv @ u_v
    residual = float(np.linalg.norm(maps.A @ xdot - u_v))
    return xdot, residual
