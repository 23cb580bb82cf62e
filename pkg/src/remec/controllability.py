"""Controllability analyses over the leg-joint configuration grid.

Three analyses, all evaluated at fixed joint angles:

* a normalized condition measure of the wheel Jacobian's translational /
  rotational block (``gsi``), where zero means uncontrollable;
* a 3x3 determinant built from three wheel contacts' positions and roller
  axis directions (``determinant_criterion``), nonzero iff the three
  no-slip axes are neither concurrent nor parallel;
* numerical rank of the Kalman controllability matrix of the dynamics
  linearized at the configuration's equilibrium (``stlc_sweep``), full rank
  certifying small-time local controllability there.

Wheel-combination conventions: c1..c4 are the three-wheel subsets
(1,2,3), (1,2,4), (1,3,4), (2,3,4) modelling loss of one wheel contact;
c5 is all four wheels. The determinant statistics aggregate c1..c4 on
|d|; the condition-measure statistics aggregate c1..c5.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _pkg_version
from .dynamics import (
    _coriolis_from_partials,
    actuation_matrix,
    friction_matrix,
    mass_matrix,
    mass_matrix_partials,
    nullspace_N,
    state_to_q,
)
from .errors import NearSingularDynamicsError, RemecError
from .io_utils import atomic_write_text, fmt
from .kinematics import wheel_positions, wheel_rate_maps, stack_maps
from .params import RobotParams

THREE_WHEEL_COMBOS = ((1, 2, 3), (1, 2, 4), (1, 3, 4), (2, 3, 4))
ALL_WHEELS = (1, 2, 3, 4)
CONDITION_COMBOS = THREE_WHEEL_COMBOS + (ALL_WHEELS,)

#: relative singular-value threshold for numerical rank decisions
RANK_RTOL = 1e-8
#: relative threshold below which the condition-measure Gram matrix is
#: treated as singular (measure = 0)
SINGULAR_RTOL = 1e-12


@dataclass
class GridSpec:
    """Uniform joint-angle grid, degrees in the spec, radians when expanded."""

    start_deg: float = -180.0
    stop_deg: float = 180.0
    step_deg: float = 5.0

    def axis_deg(self) -> np.ndarray:
        n = int(round((self.stop_deg - self.start_deg) / self.step_deg))
        if n <= 0:
            raise ValueError("grid must contain at least two points")
        return self.start_deg + self.step_deg * np.arange(n + 1)

    def axis_rad(self) -> np.ndarray:
        return np.deg2rad(self.axis_deg())


@dataclass
class SweepGrid:
    """Joint-angle grid of scalar analysis results.

    ``values[i, j]`` corresponds to (phi1_values[i], phi2_values[j]).
    """

    phi1_values: np.ndarray  # rad, strictly increasing
    phi2_values: np.ndarray  # rad
    values: np.ndarray  # (n1, n2)
    analysis: str  # 'gsi' | 'det' | 'kcm-rank'
    statistic: str  # 'min' | 'max' | 'value'
    combo_set: tuple = ()
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        """Header row carries the phi2 axis; one row per phi1 value."""
        p2 = np.rad2deg(self.phi2_values)
        lines = ["phi1_deg\\phi2_deg," + ",".join(fmt(v) for v in p2)]
        for i, p1 in enumerate(np.rad2deg(self.phi1_values)):
            lines.append(fmt(p1) + "," + ",".join(fmt(v) for v in self.values[i]))
        atomic_write_text(path, "\n".join(lines) + "\n")

    def write_sidecar(self, path, params_sha256: str = "", extra: dict | None = None):
        doc = {
            "schema": 1,
            "analysis": self.analysis,
            "statistic": self.statistic,
            "combos": [list(c) for c in self.combo_set],
            "phi1_deg": [float(v) for v in np.rad2deg(self.phi1_values)],
            "phi2_deg": [float(v) for v in np.rad2deg(self.phi2_values)],
            "rank_threshold": RANK_RTOL,
            "singular_threshold": SINGULAR_RTOL,
            "params_sha256": params_sha256,
            "package_version": _pkg_version,
        }
        doc.update(self.meta)
        if extra:
            doc.update(extra)
        atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _weighted_norm(s: np.ndarray) -> float:
    # ||C|| = sqrt(Tr(C C^T) / 3) in terms of singular values
    return math.sqrt(float(np.sum(s * s)) / 3.0)


def gsi(params: RobotParams, x: np.ndarray, combo=ALL_WHEELS) -> float:
    """Normalized condition measure of the translational/rotational block.

    ``W`` is the first three columns of the wheel-rate map restricted to the
    combo's rows (the leg-joint columns are excluded: the analysis treats
    the configuration as fixed). Returns 1/(||C|| ||C^-1||) with
    C = W^T W and the trace norm above; 0 if C is singular.
    """
    combo = tuple(combo)
    if len(combo) < 3:
        raise ValueError("combo must contain at least three wheels")
    D_w, _ = wheel_rate_maps(params, np.asarray(x, dtype=float))
    W = D_w[np.asarray(combo) - 1][:, :3]
    C = W.T @ W
    s = np.linalg.svd(C, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= SINGULAR_RTOL * s[0]:
        return 0.0
    return 1.0 / (_weighted_norm(s) * _weighted_norm(1.0 / s))


def gsi_full_map(params: RobotParams, x: np.ndarray) -> float:
    """Condition measure applied to the full 6x5 inverse map (demonstration).

    Mixing wheel and joint rows makes the Gram matrix badly scaled, which
    collapses the measure to approximately zero even at well-conditioned
    configurations; kept as a documented demonstration of why the
    fixed-configuration analysis excludes the joint rows/columns.
    """
    maps = stack_maps(params, np.asarray(x, dtype=float))
    C = maps.A.T @ maps.A
    s = np.linalg.svd(C, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= SINGULAR_RTOL * s[0]:
        return 0.0
    return 1.0 / (math.sqrt(float(np.sum(s * s)) / 5.0) * math.sqrt(float(np.sum(s**-2.0)) / 5.0))


def determinant_criterion(params: RobotParams, x: np.ndarray, combo) -> float:
    """3x3 controllability determinant for three wheels in ground contact.

    Columns hold each wheel's roller-axis direction (rotated into the robot
    frame) and the moment of that axis about the frame origin; a zero
    determinant means the three no-slip axes are concurrent or parallel and
    the robot can move (or be moved) without violating them.
    """
    combo = tuple(combo)
    if len(combo) != 3:
        raise ValueError("determinant criterion needs exactly three wheels")
    x = np.asarray(x, dtype=float)
    positions = wheel_positions(params, x)
    cols = np.empty((3, 3))
    for k, wheel in enumerate(combo):
        i = wheel - 1
        leg = 0 if i < 2 else 1
        b = params.alpha[i] + x[3 + leg]  # roller axis angle in the robot frame
        ax, ay = math.cos(b), math.sin(b)
        px, py = positions[i]
        cols[:, k] = (ax, ay, -py * ax + px * ay)  # (J p) . axis
    return float(np.linalg.det(cols))


def _cell_value(params: RobotParams, phi1: float, phi2: float, analysis: str, statistic: str) -> float:
    x = np.array([0.0, 0.0, 0.0, phi1, phi2])
    if analysis == "gsi":
        vals = [gsi(params, x, c) for c in CONDITION_COMBOS]
    elif analysis == "det":
        vals = [abs(determinant_criterion(params, x, c)) for c in THREE_WHEEL_COMBOS]
    else:
        raise ValueError(f"unknown analysis {analysis!r}")
    return min(vals) if statistic == "min" else max(vals)


def _sweep_rows(args):
    params, phi1_list, phi2_list, analysis, statistic = args
    out = np.empty((len(phi1_list), len(phi2_list)))
    for i, p1 in enumerate(phi1_list):
        for j, p2 in enumerate(phi2_list):
            out[i, j] = _cell_value(params, p1, p2, analysis, statistic)
    return out


def sweep(
    params: RobotParams,
    analysis: str,
    statistic: str,
    grid_spec: GridSpec | None = None,
    workers: int = 0,
) -> SweepGrid:
    """Evaluate the Jacobian controllability statistic over the joint grid.

    ``analysis`` is 'gsi' or 'det'; ``statistic`` 'min' (worst wheel
    combination, modelling contact loss) or 'max' (best). Cells are
    independent; ``workers`` > 1 distributes grid rows across processes
    with results assembled deterministically by index.
    """
    if statistic not in ("min", "max"):
        raise ValueError("statistic must be 'min' or 'max'")
    spec = grid_spec or GridSpec()
    phi1 = spec.axis_rad()
    phi2 = spec.axis_rad()
    combos = CONDITION_COMBOS if analysis == "gsi" else THREE_WHEEL_COMBOS
    if workers and workers > 1:
        chunks = np.array_split(np.arange(len(phi1)), workers)
        jobs = [(params, phi1[c], phi2, analysis, statistic) for c in chunks if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sweep_rows, jobs))
        values = np.vstack(parts)
    else:
        values = _sweep_rows((params, phi1, phi2, analysis, statistic))
    return SweepGrid(
        phi1_values=phi1,
        phi2_values=phi2,
        values=values,
        analysis=analysis,
        statistic=statistic,
        combo_set=combos,
        meta={"grid_deg": [spec.start_deg, spec.stop_deg, spec.step_deg]},
    )


# -- linearized dynamics and the Kalman rank test ---------------------------


def linearize(params: RobotParams, x_eq: np.ndarray, step: float = 1e-6):
    """Linearize the forward dynamics about an equilibrium (xdot = 0, u = 0).

    State z = [x, xdot] (10), input the six actuator torques. Returns
    (A_L, B_L) with A_L = [[0, I], [0, dD/dxdot]] and
    B_L = [[0], [dD/du]]; the Jacobian blocks are central finite
    differences of the forward dynamics at the equilibrium. There is no
    position-dependent force term in the planar model, so the lower-left
    block is exactly zero.
    """
    x_eq = np.asarray(x_eq, dtype=float)
    N, _ = nullspace_N(params, x_eq)
    q = state_to_q(x_eq)
    M_q = mass_matrix(params, q)
    dM = mass_matrix_partials(params, q)
    B = actuation_matrix(params)
    Q_q = friction_matrix(params)
    M_x = N.T @ M_q @ N
    eigs = np.linalg.eigvalsh(M_x)
    if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > 1e12:
        raise NearSingularDynamicsError("reduced mass matrix near-singular at equilibrium")
    B_x = N.T @ B
    Q_x = N.T @ Q_q @ N
    M_inv = np.linalg.inv(M_x)

    def dyn(xdot, u):
        qdot = N @ xdot
        C_q = _coriolis_from_partials(dM, qdot)
        _, Ndot = nullspace_N(params, x_eq, xdot)
        C_x = N.T @ C_q @ N + N.T @ M_q @ Ndot
        return M_inv @ (B_x @ u + Q_x @ xdot - C_x @ xdot)

    dD_dxdot = np.empty((5, 5))
    for j in range(5):
        e = np.zeros(5)
        e[j] = step
        dD_dxdot[:, j] = (dyn(e, np.zeros(6)) - dyn(-e, np.zeros(6))) / (2 * step)
    dD_du = np.empty((5, 6))
    for j in range(6):
        e = np.zeros(6)
        e[j] = step
        dD_du[:, j] = (dyn(np.zeros(5), e) - dyn(np.zeros(5), -e)) / (2 * step)

    A_L = np.zeros((10, 10))
    A_L[:5, 5:] = np.eye(5)
    A_L[5:, 5:] = dD_dxdot
    B_L = np.zeros((10, 6))
    B_L[5:, :] = dD_du
    return A_L, B_L


def controllability_matrix(A_L: np.ndarray, B_L: np.ndarray) -> np.ndarray:
    """Kalman controllability matrix [B, AB, ..., A^(n-1) B]."""
    n = A_L.shape[0]
    blocks = [B_L]
    for _ in range(n - 1):
        blocks.append(A_L @ blocks[-1])
    return np.hstack(blocks)

def kcm_rank(A_L: np.ndarray, B_L: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Numerical rank of the controllability matrix (SVD, relative cutoff)."""
    s = np.linalg.svd(controllability_matrix(A_L, B_L), compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def _stlc_rows(args):
    params, phi1_list, phi2_list = args
    out = np.empty((len(phi1_list), len(phi2_list)))
    for i, p1 in enumerate(phi1_list):
        for j, p2 in enumerate(phi2_list):
            try:
                A_L, B_L = linearize(params, np.array([0.0, 0.0, 0.0, p1, p2]))
                out[i, j] = kcm_rank(A_L, B_L)
            except (RemecError, np.linalg.LinAlgError):
                out[i, j] = -1
    return out


def stlc_sweep(params: RobotParams, grid_spec: GridSpec | None = None, workers: int = 0) -> SweepGrid:
    """Kalman-rank map over the joint travel range (default 5 deg steps).

    Rank 10 at a cell certifies small-time local controllability of the
    linearized dynamics there; failed linearizations are recorded as -1.
    """
    lim = math.degrees(params.joint_limit)
    spec = grid_spec or GridSpec(start_deg=-lim, stop_deg=lim, step_deg=5.0)
    phi1 = spec.axis_rad()
    phi2 = spec.axis_rad()
    if workers and workers > 1:
        chunks = np.array_split(np.arange(len(phi1)), workers * 2)
        jobs = [(params, phi1[c], phi2) for c in chunks if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_stlc_rows, jobs))
        values = np.vstack(parts)
    else:
        values = _stlc_rows((params, phi1, phi2))
    return SweepGrid(
        phi1_values=phi1,
        phi2_values=phi2,
        values=values,
        analysis="kcm-rank",
        statistic="value",
        combo_set=(ALL_WHEELS,),
        meta={"grid_deg": [spec.start_deg, spec.stop_deg, spec.step_deg]},
    )
