"""Simulation and analysis engine for a reconfigurable four-mecanum-wheel
robot with two actuated leg joints: velocity maps, constrained Lagrangian
dynamics, controllability sweeps and trajectory-tracking control."""

__version__ = "0.1.0"

from .errors import (
    IntegrationDivergedError,
    InfeasibleTrajectoryError,
    NearSingularDynamicsError,
    ParameterError,
    RemecError,
    SingularWheelError,
    TrajectoryError,
)
from .kinematics import (
    ControlInput,
    KinematicMaps,
    RobotState,
    constraint_rows,
    contact_velocity,
    forward_map,
    geometric_center,
    inverse_map,
    stack_maps,
    wheel_pose,
    wheel_positions,
)
from .params import (
    RobotParams,
    default_params,
    deployment_params,
    load_bundled,
    load_params,
    params_from_dict,
    validate,
)
