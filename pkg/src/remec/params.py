"""Robot parameter set: geometry, masses, actuator limits, friction.

All angles are stored in radians and all lengths in meters. Parameter files
on disk use degrees for angles (converted on load) and are versioned with a
``schema`` field.

Frames and indexing conventions used across the package:

* base frame: origin at the body center, x along the body tube;
* leg joints: leg 1 at (-l1, 0), leg 2 at (+l1, 0);
* wheels 1,2 ride on leg 1 (joint angle phi1), wheels 3,4 on leg 2 (phi2);
* each leg frame rotates with its joint; wheels sit on the leg's y-axis at
  signed offsets derived from (l2, l3) and the ``leg_layout`` field:

  - ``split``:     (+l3, -l2) on leg 1 and (+l2, -l3) on leg 2, i.e. the
                   two wheels of a leg straddle the joint;
  - ``one_sided``: (+l3, +l2) and (+l2, +l3), i.e. both wheels on the same
                   side of the joint (U-shaped stance at phi = 0).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ParameterError

SCHEMA_VERSION = 1

LEG_LAYOUTS = ("split", "one_sided")

#: leg index (0-based) owning each wheel
WHEEL_LEG = (0, 0, 1, 1)


@dataclass(frozen=True)
class RobotParams:
    """Single source of truth for the robot model.

    Velocity limits ``u_lim`` are ordered wheels 1-4 then joints 1-2, in
    rad/s. Friction coefficients are viscous (N m s) and applied
    dissipatively regardless of sign convention in the stored value.
    """

    # geometry
    l1: float = 0.20
    l2: float = 0.125
    l3: float = 0.125
    wheel_radius: float = 0.065
    roller_radius: float = 0.012
    wheel_width: float = 0.13
    alpha: np.ndarray = None  # (4,) roller angles, rad
    leg_layout: str = "split"
    joint_limit: float = math.radians(95.0)
    u_lim: np.ndarray = None  # (6,)

    # masses (kg)
    body_mass: float = 3.1
    leg_masses: np.ndarray = None  # (2,)
    wheel_mass: float = 1.15
    joint_mass: float = 0.3
    payload_mass: float = 0.0

    # planar inertias (kg m^2)
    body_inertia: float = 0.05
    leg_inertias: np.ndarray = None  # (2,)
    wheel_spin_inertia: float = 2.4e-3
    wheel_yaw_inertia: float = 2.8e-3
    roller_inertia: float = 1.0e-5

    # CoM offsets in local frames (m)
    body_com: np.ndarray = None  # (2,)
    leg_coms: np.ndarray = None  # (2, 2)
    payload_position: np.ndarray = None  # (2,) body frame

    # counterweights attached to the legs (leg-local attach point shared
    # by both legs; per-leg masses)
    counterweight_attach: np.ndarray = None  # (2,)
    counterweight_masses: np.ndarray = None  # (2,)

    # viscous friction coefficients (N m s), stored positive
    wheel_friction: float = 0.0
    roller_friction: float = 0.0
    joint_friction: float = 0.0

    name: str = "custom"

    def __post_init__(self):
        def arr(value, default, shape):
            a = np.array(default if value is None else value, dtype=float)
            if a.shape != shape:
                raise ParameterError(f"expected shape {shape}, got {a.shape}")
            return a

        object.__setattr__(self, "alpha", arr(self.alpha, np.deg2rad([45.0, -45.0, -45.0, 45.0]), (4,)))
        object.__setattr__(self, "u_lim", arr(self.u_lim, [12.0] * 4 + [3.0] * 2, (6,)))
        object.__setattr__(self, "leg_masses", arr(self.leg_masses, [0.75, 0.75], (2,)))
        object.__setattr__(self, "leg_inertias", arr(self.leg_inertias, [0.004, 0.004], (2,)))
        object.__setattr__(self, "body_com", arr(self.body_com, [0.0, 0.0], (2,)))
        object.__setattr__(self, "leg_coms", arr(self.leg_coms, [[0.0, 0.0], [0.0, 0.0]], (2, 2)))
        object.__setattr__(self, "payload_position", arr(self.payload_position, [0.0, 0.0], (2,)))
        object.__setattr__(self, "counterweight_attach", arr(self.counterweight_attach, [0.0, self.l3], (2,)))
        object.__setattr__(self, "counterweight_masses", arr(self.counterweight_masses, [0.0, 0.0], (2,)))

        # derived geometry, cached once (hot path in dynamics assembly)
        joints = np.array([[-self.l1, 0.0], [self.l1, 0.0]])
        l2, l3 = self.l2, self.l3
        if self.leg_layout == "split":
            y = [l3, -l2, l2, -l3]
        elif self.leg_layout == "one_sided":
            y = [l3, l2, l2, l3]
        else:
            raise ParameterError(f"leg_layout must be one of {LEG_LAYOUTS}")
        mounts = np.array([[0.0, yi] for yi in y])
        joints.setflags(write=False)
        mounts.setflags(write=False)
        object.__setattr__(self, "_joint_positions", joints)
        object.__setattr__(self, "_wheel_mounts", mounts)

        # plain-float point-mass tables for the dynamics hot path:
        # (mass, local_x, local_y) attached to the body / each leg
        body_points = [
            (float(self.body_mass), float(self.body_com[0]), float(self.body_com[1])),
            (float(self.joint_mass), float(joints[0, 0]), float(joints[0, 1])),
            (float(self.joint_mass), float(joints[1, 0]), float(joints[1, 1])),
        ]
        if self.payload_mass > 0.0:
            body_points.append(
                (float(self.payload_mass), float(self.payload_position[0]), float(self.payload_position[1]))
            )
        leg_points = ([], [])
        for leg in range(2):
            leg_points[leg].append(
                (float(self.leg_masses[leg]), float(self.leg_coms[leg, 0]), float(self.leg_coms[leg, 1]))
            )
            if self.counterweight_masses[leg] > 0.0:
                leg_points[leg].append(
                    (
                        float(self.counterweight_masses[leg]),
                        float(self.counterweight_attach[0]),
                        float(self.counterweight_attach[1]),
                    )
                )
        for i, leg in enumerate(WHEEL_LEG):
            leg_points[leg].append((float(self.wheel_mass), float(mounts[i, 0]), float(mounts[i, 1])))
        object.__setattr__(self, "_body_points", tuple(body_points))
        object.__setattr__(self, "_leg_points", (tuple(leg_points[0]), tuple(leg_points[1])))

    # -- derived geometry -------------------------------------------------

    @property
    def joint_positions(self) -> np.ndarray:
        """Leg joint positions in the base frame, shape (2, 2)."""
        return self._joint_positions

    @property
    def wheel_mounts(self) -> np.ndarray:
        """Leg-local wheel mount points, shape (4, 2)."""
        return self._wheel_mounts

    @property
    def total_mass(self) -> float:
        return float(
            self.body_mass
            + self.leg_masses.sum()
            + 4 * self.wheel_mass
            + 2 * self.joint_mass
            + self.payload_mass
            + self.counterweight_masses.sum()
        )

    def with_joint_angles_clamped(self, phi: np.ndarray) -> tuple[np.ndarray, bool]:
        """Clamp joint angles to the travel limit; returns (clamped, violated)."""
        lim = self.joint_limit
        clamped = np.clip(phi, -lim, lim)
        return clamped, bool(np.any(np.abs(phi) > lim))

    def scaled_inertial(self, factor: float) -> "RobotParams":
        """All masses and inertias multiplied by ``factor`` (test hook)."""
        return replace(
            self,
            body_mass=self.body_mass * factor,
            leg_masses=self.leg_masses * factor,
            wheel_mass=self.wheel_mass * factor,
            joint_mass=self.joint_mass * factor,
            payload_mass=self.payload_mass * factor,
            body_inertia=self.body_inertia * factor,
            leg_inertias=self.leg_inertias * factor,
            wheel_spin_inertia=self.wheel_spin_inertia * factor,
            wheel_yaw_inertia=self.wheel_yaw_inertia * factor,
            roller_inertia=self.roller_inertia * factor,
            counterweight_masses=self.counterweight_masses * factor,
        )


def validate(params: RobotParams) -> RobotParams:
    """Check parameter invariants; raises ParameterError on violation.

    The rank condition on the inverse velocity map at phi = (0, 0) guards
    against roller-angle sign patterns that make the robot uncontrollable
    in its default configuration.
    """
    p = params
    for attr in ("l1", "l2", "l3", "wheel_radius", "roller_radius"):
        if getattr(p, attr) <= 0.0:
            raise ParameterError(f"{attr} must be positive")
    if p.wheel_width < 0.0:
        raise ParameterError("wheel_width must be non-negative")
    if p.leg_layout not in LEG_LAYOUTS:
        raise ParameterError(f"leg_layout must be one of {LEG_LAYOUTS}")
    a = np.abs(p.alpha)
    if np.any(a <= 0.0) or np.any(a >= math.pi / 2):
        raise ParameterError("roller angles must satisfy 0 < |alpha| < 90 deg")
    if np.any(p.u_lim <= 0.0):
        raise ParameterError("actuator velocity limits must be positive")
    if p.joint_limit <= 0.0:
        raise ParameterError("joint_limit must be positive")
    if p.total_mass <= 0.0:
        raise ParameterError("total mass must be positive")
    for attr in ("body_mass", "wheel_mass", "joint_mass"):
        if getattr(p, attr) < 0.0:
            raise ParameterError(f"{attr} must be non-negative")
    if np.any(p.leg_masses < 0.0) or np.any(p.counterweight_masses < 0.0):
        raise ParameterError("link masses must be non-negative")
    for attr in ("wheel_spin_inertia", "roller_inertia", "wheel_yaw_inertia"):
        if getattr(p, attr) <= 0.0:
            raise ParameterError(f"{attr} must be positive for a well-posed mass matrix")

    from . import kinematics  # deferred: kinematics imports this module

    maps = kinematics.stack_maps(p, np.zeros(5))
    if maps.rank != 5:
        raise ParameterError(
            "inverse velocity map is rank-deficient at phi = (0, 0); "
            "check the roller angle sign pattern"
        )
    return p


# -- JSON I/O ---------------------------------------------------------------


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ParameterError(f"missing key '{key}' in {where}")
    return doc[key]


def params_from_dict(doc: dict, name: str = "custom") -> RobotParams:
    """Build a parameter set from a schema-1 JSON document (angles in deg)."""
    if doc.get("schema") != SCHEMA_VERSION:
        raise ParameterError(f"unsupported params schema: {doc.get('schema')!r}")
    geo = _require(doc, "geometry", "params")
    joints = _require(doc, "joints", "params")
    act = _require(doc, "actuators", "params")
    masses = _require(doc, "masses_kg", "params")
    inertias = _require(doc, "inertias_kg_m2", "params")
    coms = doc.get("com_offsets_m", {})
    cw = doc.get("counterweights", {})
    fric = doc.get("friction_n_m_s", {})

    u_lim = [float(act["wheel_rate_limit_rad_s"])] * 4 + [float(act["joint_rate_limit_rad_s"])] * 2
    params = RobotParams(
        l1=float(geo["l1_m"]),
        l2=float(geo["l2_m"]),
        l3=float(geo["l3_m"]),
        wheel_radius=float(geo["wheel_radius_m"]),
        roller_radius=float(geo["roller_radius_m"]),
        wheel_width=float(geo.get("wheel_width_m", 0.0)),
        alpha=np.deg2rad(geo["roller_angles_deg"]),
        leg_layout=geo.get("leg_layout", "split"),
        joint_limit=math.radians(float(joints["limit_deg"])),
        u_lim=u_lim,
        body_mass=float(masses["body"]),
        leg_masses=masses["legs"],
        wheel_mass=float(masses["wheel"]),
        joint_mass=float(masses["joint"]),
        payload_mass=float(masses.get("payload", 0.0)),
        body_inertia=float(inertias["body"]),
        leg_inertias=inertias["legs"],
        wheel_spin_inertia=float(inertias["wheel_spin"]),
        wheel_yaw_inertia=float(inertias["wheel_yaw"]),
        roller_inertia=float(inertias["roller"]),
        body_com=coms.get("body", [0.0, 0.0]),
        leg_coms=coms.get("legs", [[0.0, 0.0], [0.0, 0.0]]),
        payload_position=coms.get("payload", [0.0, 0.0]),
        counterweight_attach=cw.get("attach_leg_local_m", [0.0, float(geo["l3_m"])]),
        counterweight_masses=cw.get("masses_kg", [0.0, 0.0]),
        wheel_friction=float(fric.get("wheel", 0.0)),
        roller_friction=float(fric.get("roller", 0.0)),
        joint_friction=float(fric.get("joint", 0.0)),
        name=doc.get("name", name),
    )
    return validate(params)


def load_params(path: str | Path) -> RobotParams:
    """Load and validate a parameter file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: not valid JSON ({exc})") from exc
    return params_from_dict(doc, name=path.stem)


def load_bundled(name: str) -> RobotParams:
    """Load one of the packaged parameter files ('default', 'deployment-fit')."""
    text = resources.files("remec.data").joinpath(f"{name}.json").read_text()
    return params_from_dict(json.loads(text), name=name)


def default_params() -> RobotParams:
    """The clean fitted geometry with centered CoMs."""
    return load_bundled("default")


def deployment_params() -> RobotParams:
    """One-sided leg geometry calibrated against the hardware mass balance."""
    return load_bundled("deployment-fit")
