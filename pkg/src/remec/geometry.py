"""Stance geometry and mass-balance arithmetic.

Footprint width is the lateral (y) extent of the wheel-contact region at a
given leg configuration, wheel thickness included: the proxy used to judge
rollover stability of narrow stances. The counterbalance solver finds the
per-leg masses at the leg-end attachment points that move the robot's
planar center of mass onto the wheels' geometric center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kinematics import rot2, wheel_positions
from .params import WHEEL_LEG, RobotParams


def footprint_width(params: RobotParams, phi1: float, phi2: float) -> float:
    """Lateral extent of the four wheel contacts, including wheel width."""
    x = np.array([0.0, 0.0, 0.0, phi1, phi2])
    y = wheel_positions(params, x)[:, 1]
    return float(y.max() - y.min() + params.wheel_width)


def center_of_mass(params: RobotParams, phi1: float, phi2: float, include_payload: bool = False) -> np.ndarray:
    """Planar CoM in the base frame at the given configuration.

    Counterweight masses stored in the parameter set are included; the
    payload only when requested.
    """
    total = 0.0
    moment = np.zeros(2)

    def add(mass, pos):
        nonlocal total, moment
        total += mass
        moment += mass * np.asarray(pos)

    add(params.body_mass, params.body_com)
    for leg in range(2):
        add(params.joint_mass, params.joint_positions[leg])
    if include_payload and params.payload_mass > 0.0:
        add(params.payload_mass, params.payload_position)
    for leg, phi in ((0, phi1), (1, phi2)):
        R = rot2(phi)
        j = params.joint_positions[leg]
        add(params.leg_masses[leg], j + R @ params.leg_coms[leg])
        if params.counterweight_masses[leg] > 0.0:
            add(params.counterweight_masses[leg], j + R @ params.counterweight_attach)
    x = np.array([0.0, 0.0, 0.0, phi1, phi2])
    for i, pos in enumerate(wheel_positions(params, x)):
        add(params.wheel_mass, pos)
    return moment / total


@dataclass
class CounterbalanceSolution:
    """Per-leg counterweights placed at the leg-end attachment points."""

    per_leg_kg: np.ndarray  # (2,)
    total_kg: float
    residual_m: float  # CoM distance from the geometric center after placing
    attach_points: np.ndarray  # (2, 2) base frame
    negative_mass_clamped: bool


def solve_counterbalance(
    params: RobotParams,
    phi1: float = 0.0,
    phi2: float = 0.0,
    payload_kg: float = 0.0,
) -> CounterbalanceSolution:
    """Masses m1, m2 at the leg ends that center the CoM.

    Solves the 2x2 planar moment balance
    ``M_tot e + m_p p + m1 r1 + m2 r2 = 0`` about the wheels' geometric
    center. Negative solutions (attachments on the wrong side) are clamped
    to zero and flagged; the residual reports how far off-center the CoM
    remains.
    """
    x = np.array([0.0, 0.0, 0.0, phi1, phi2])
    center = wheel_positions(params, x).mean(axis=0)

    total = (
        params.body_mass
        + params.leg_masses.sum()
        + 4 * params.wheel_mass
        + 2 * params.joint_mass
        + params.counterweight_masses.sum()
    )
    com = center_of_mass(params, phi1, phi2, include_payload=False)
    moment = total * (com - center)
    if payload_kg > 0.0:
        moment += payload_kg * (np.asarray(params.payload_position) - center)

    attach = np.empty((2, 2))
    for leg, phi in ((0, phi1), (1, phi2)):
        attach[leg] = params.joint_positions[leg] + rot2(phi) @ params.counterweight_attach
    arms = attach - center[None, :]

    # columns are the two attachment arms
    A = arms.T
    if abs(np.linalg.det(A)) > 1e-12:
        masses = np.linalg.solve(A, -moment)
    else:
        masses, *_ = np.linalg.lstsq(A, -moment, rcond=None)
    clamped = bool(np.any(masses < -1e-12))
    masses = np.clip(masses, 0.0, None)
    residual_vec = moment + arms.T @ masses
    # residual as CoM offset of the weighted assembly
    m_total_after = total + payload_kg + masses.sum()
    residual = float(np.linalg.norm(residual_vec) / m_total_after)
    return CounterbalanceSolution(
        per_leg_kg=masses,
        total_kg=float(masses.sum()),
        residual_m=residual,
        attach_points=attach,
        negative_mass_clamped=clamped,
    )


@dataclass
class GeometryReport:
    """Everything the geometry command prints for one configuration."""

    phi1_deg: float
    phi2_deg: float
    footprint_width_m: float
    wheel_positions_m: np.ndarray  # (4, 2)
    geometric_center_m: np.ndarray  # (2,)
    com_m: np.ndarray  # (2,)
    com_offset_m: float
    counterbalance: CounterbalanceSolution
    counterbalance_with_payload: CounterbalanceSolution
    payload_kg: float

    def to_dict(self) -> dict:
        return {
            "phi1_deg": self.phi1_deg,
            "phi2_deg": self.phi2_deg,
            "footprint_width_m": self.footprint_width_m,
            "wheel_positions_m": self.wheel_positions_m.tolist(),
            "geometric_center_m": self.geometric_center_m.tolist(),
            "com_m": self.com_m.tolist(),
            "com_offset_m": self.com_offset_m,
            "counterbalance": {
                "per_leg_kg": self.counterbalance.per_leg_kg.tolist(),
                "total_kg": self.counterbalance.total_kg,
                "residual_m": self.counterbalance.residual_m,
                "negative_mass_clamped": self.counterbalance.negative_mass_clamped,
            },
            "counterbalance_with_payload": {
                "payload_kg": self.payload_kg,
                "per_leg_kg": self.counterbalance_with_payload.per_leg_kg.tolist(),
                "total_kg": self.counterbalance_with_payload.total_kg,
                "residual_m": self.counterbalance_with_payload.residual_m,
            },
        }


def geometry_report(params: RobotParams, phi1_deg: float, phi2_deg: float, payload_kg: float = 2.0) -> GeometryReport:
    p1, p2 = math.radians(phi1_deg), math.radians(phi2_deg)
    x = np.array([0.0, 0.0, 0.0, p1, p2])
    positions = wheel_positions(params, x)
    center = positions.mean(axis=0)
    com = center_of_mass(params, p1, p2)
    return GeometryReport(
        phi1_deg=phi1_deg,
        phi2_deg=phi2_deg,
        footprint_width_m=footprint_width(params, p1, p2),
        wheel_positions_m=positions,
        geometric_center_m=center,
        com_m=com,
        com_offset_m=float(np.linalg.norm(com - center)),
        counterbalance=solve_counterbalance(params, p1, p2),
        counterbalance_with_payload=solve_counterbalance(params, p1, p2, payload_kg=payload_kg),
        payload_kg=payload_kg,
    )
