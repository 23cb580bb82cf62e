"""Exception types shared across the package."""


class RemecError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(RemecError):
    """Invalid robot parameter set (bad value, bad schema, rank check failed)."""


class SingularWheelError(RemecError):
    """Roller axis parallel to the wheel axis (cos(alpha) == 0)."""


class NearSingularDynamicsError(RemecError):
    """Reduced mass matrix is numerically singular."""


class IntegrationDivergedError(RemecError):
    """Simulation state became non-finite."""


class TrajectoryError(RemecError):
    """Invalid waypoint list or segment durations."""


class InfeasibleTrajectoryError(RemecError):
    """Time scaling failed to produce a feasible trajectory."""
