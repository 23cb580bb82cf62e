"""Batch command-line front end.

Subcommands: ``sweep``, ``track``, ``simulate``, ``geometry``,
``clamp-demo``. Every run writes a manifest listing its inputs (content
hashes), seed and output files; outputs are written atomically and reruns
with identical inputs produce byte-identical CSVs.

Exit codes: 0 success, 2 usage error, 3 infeasible trajectory or diverged
simulation, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .control import GainSet, load_scenario, track, velocity_clamp
from .controllability import GridSpec, gsi, gsi_full_map, stlc_sweep, sweep
from .dynamics import SimTrace, simulate
from .errors import (
    InfeasibleTrajectoryError,
    IntegrationDivergedError,
    ParameterError,
    RemecError,
    TrajectoryError,
)
from .geometry import geometry_report
from .io_utils import atomic_write_text, sha256_file
from .kinematics import RobotState, inverse_map, stack_maps
from .params import load_params

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4

_PLOT_SWEEP = '''#!/usr/bin/env python3
"""Render a sweep CSV as a heatmap (requires matplotlib)."""
import csv
import sys

import matplotlib.pyplot as plt
import numpy as np

path = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
with open(path) as fh:
    rows = list(csv.reader(fh))
phi2 = np.array([float(v) for v in rows[0][1:]])
phi1 = np.array([float(r[0]) for r in rows[1:]])
vals = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
fig, ax = plt.subplots(figsize=(6.4, 5.2))
im = ax.pcolormesh(phi2, phi1, vals, shading="nearest", cmap="viridis")
ax.set_xlabel("phi2 [deg]")
ax.set_ylabel("phi1 [deg]")
fig.colorbar(im, ax=ax)
ax.set_title(path)
fig.tight_layout()
out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=150)
print("wrote", out)
'''

_PLOT_TRACE = '''#!/usr/bin/env python3
"""Plot the planar path and state columns of a trace CSV (matplotlib)."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
with open(path) as fh:
    reader = csv.reader(fh)
    header = next(reader)
    cols = {{name: [] for name in header}}
    for row in reader:
        for name, val in zip(header, row):
            cols[name].append(float(val))
fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4.2))
ax1.plot(cols["x_px"], cols["x_py"])
ax1.set_xlabel("x [m]")
ax1.set_ylabel("y [m]")
ax1.axis("equal")
for name in ("x_theta", "x_phi1", "x_phi2"):
    ax2.plot(cols["time_s"], cols[name], label=name)
ax2.set_xlabel("t [s]")
ax2.legend()
fig.tight_layout()
out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=150)
print("wrote", out)
'''


def _write_manifest(out_dir: Path, command: str, argv, outputs, t_start: float, params_path=None, scenario_path=None, seed=0):
    doc = {
        "schema": 1,
        "command": command,
        "argv": list(argv),
        "package_version": __version__,
        "params_sha256": sha256_file(params_path) if params_path else None,
        "scenario_sha256": sha256_file(scenario_path) if scenario_path else None,
        "seed": seed,
        "outputs": sorted(str(Path(o).name) for o in outputs),
        "wall_time_s": round(time.perf_counter() - t_start, 6),
    }
    atomic_write_text(out_dir / "manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _add_common(sub):
    sub.add_argument("--params", required=True, help="robot parameter JSON file")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--seed", type=int, default=0, help="recorded in the manifest")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="remec", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"remec {__version__}")
    subs = ap.add_subparsers(dest="command", required=True)

    sw = subs.add_parser("sweep", help="configuration-space controllability sweep")
    _add_common(sw)
    sw.add_argument("--analysis", choices=("gsi", "det", "kcm"), default="gsi")
    sw.add_argument("--statistic", choices=("min", "max"), default="max")
    sw.add_argument(
        "--grid-deg",
        nargs=3,
        type=float,
        metavar=("START", "STOP", "STEP"),
        default=None,
        help="grid range and spacing in degrees (default: ±180/5 for gsi|det, ±joint limit/5 for kcm)",
    )
    sw.add_argument("--workers", type=int, default=0)

    tr = subs.add_parser("track", help="plan and track a waypoint scenario")
    _add_common(tr)
    tr.add_argument("--scenario", required=True, help="scenario JSON file")

    si = subs.add_parser("simulate", help="open-loop simulation from an input profile")
    _add_common(si)
    si.add_argument("--profile", required=True, help="input profile JSON file")

    ge = subs.add_parser("geometry", help="footprint, CoM and counterbalance report")
    ge.add_argument("--params", required=True)
    ge.add_argument("--config", nargs=2, type=float, metavar=("PHI1_DEG", "PHI2_DEG"), default=(0.0, 0.0))
    ge.add_argument("--payload", type=float, default=2.0, help="payload mass for the second counterbalance solve (kg)")
    ge.add_argument("--out", default=None, help="optional output directory")
    ge.add_argument("--seed", type=int, default=0)

    cd = subs.add_parser("clamp-demo", help="show the actuator-limit velocity clamp on one command")
    cd.add_argument("--params", required=True)
    cd.add_argument("--config", nargs=2, type=float, metavar=("PHI1_DEG", "PHI2_DEG"), default=(0.0, 0.0))
    cd.add_argument("--xdot", nargs=5, type=float, default=(0.9, 0.0, 0.0, 0.0, 0.0), help="commanded reduced velocity")
    return ap


def cmd_sweep(args, argv) -> int:
    t0 = time.perf_counter()
    params = load_params(args.params)
    out_dir = Path(args.out)
    spec = GridSpec(*args.grid_deg) if args.grid_deg else None
    if args.analysis == "kcm":
        grid = stlc_sweep(params, spec, workers=args.workers)
        name = "sweep_kcm_rank"
    else:
        grid = sweep(params, args.analysis, args.statistic, spec, workers=args.workers)
        name = f"sweep_{args.analysis}_{args.statistic}"
    csv_path = out_dir / f"{name}.csv"
    grid.to_csv(csv_path)
    grid.write_sidecar(out_dir / f"{name}.json", params_sha256=sha256_file(args.params))
    plot = out_dir / "plot_sweep.py"
    atomic_write_text(plot, _PLOT_SWEEP.format(csv_name=csv_path.name))
    outputs = [csv_path, out_dir / f"{name}.json", plot]
    _write_manifest(out_dir, "sweep", argv, outputs, t0, params_path=args.params, seed=args.seed)
    print(f"wrote {csv_path}")
    if args.analysis == "kcm":
        full = int(np.count_nonzero(grid.values == 10))
        print(f"rank 10 at {full}/{grid.values.size} cells")
    return EXIT_OK


def cmd_track(args, argv) -> int:
    t0 = time.perf_counter()
    params = load_params(args.params)
    scenario = load_scenario(args.scenario)
    out_dir = Path(args.out)
    traj, iterations, report = scenario.plan(params)
    u_lim = params.u_lim if scenario.u_lim is None else scenario.u_lim
    result = track(traj, params, scenario.gains, sim_mode=scenario.mode, dt=scenario.dt, u_lim=u_lim)
    trace_path = out_dir / "track_trace.csv"
    result.trace.to_csv(trace_path)
    metrics = {
        "scenario": scenario.name,
        "planned_total_time_s": traj.total_time,
        "time_scaling_iterations": iterations,
        "post_scaling_worst_ratio": report.worst_ratio,
        "clamp_activations": int(result.metrics.clamp_steps),
        **result.metrics.to_dict(),
    }
    metrics_path = out_dir / "metrics.json"
    atomic_write_text(metrics_path, _json_text(metrics))
    plot = out_dir / "plot_trace.py"
    atomic_write_text(plot, _PLOT_TRACE.format(csv_name=trace_path.name))
    _write_manifest(
        out_dir, "track", argv, [trace_path, metrics_path, plot], t0,
        params_path=args.params, scenario_path=args.scenario, seed=args.seed,
    )
    print(f"tracked {scenario.name}: ate {metrics['ate_m']:.4g} m, max err {metrics['max_position_error_m']:.4g} m")
    return EXIT_OK


def _load_profile(path: Path) -> dict:
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise TrajectoryError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("schema") != 1:
        raise TrajectoryError(f"unsupported profile schema: {doc.get('schema')!r}")
    if doc.get("mode") not in ("velocity", "torque"):
        raise TrajectoryError("profile mode must be 'velocity' or 'torque'")
    return doc


def cmd_simulate(args, argv) -> int:
    t0 = time.perf_counter()
    params = load_params(args.params)
    doc = _load_profile(Path(args.profile))
    out_dir = Path(args.out)
    dt = float(doc.get("dt_s", 1e-3))
    duration = float(doc.get("duration_s", 1.0))
    x0 = np.asarray(doc.get("x0", [0.0] * 5), dtype=float)
    xdot0 = np.asarray(doc.get("xdot0", [0.0] * 5), dtype=float)
    spec = doc.get("input", {"type": "constant", "u": [0.0] * 6})
    u_vec = np.asarray(spec.get("u", [0.0] * 6), dtype=float)
    if spec.get("type", "constant") == "pulse":
        t_on = float(spec.get("t_on", 0.0))
        t_off = float(spec.get("t_off", duration))

        def u_fn(t):
            return u_vec if t_on <= t < t_off else np.zeros(6)

    else:
        u_fn = u_vec

    state = RobotState(x0, xdot0, sigma=np.zeros(4), psi=np.zeros(4))
    diverged_at = None
    try:
        trace = simulate(params, state, u_fn, doc["mode"], dt, duration)
    except IntegrationDivergedError:
        diverged_at = "unknown"
        trace = None
    trace_path = out_dir / "sim_trace.csv"
    summary_path = out_dir / "summary.json"
    if trace is not None:
        trace.to_csv(trace_path, decimation=int(doc.get("decimation", 1)))
        unforced = bool(np.all(u_vec == 0.0)) and doc["mode"] == "torque"
        frictionless = params.wheel_friction == params.roller_friction == params.joint_friction == 0.0
        drift = float(np.abs(trace.energy - trace.energy[0]).max() / trace.energy[0]) if trace.energy[0] > 0 else 0.0
        summary = {
            "steps": len(trace.t) - 1,
            "duration_s": float(trace.t[-1]),
            "max_constraint_residual": float(trace.residual.max()),
            "joint_limit_violations": trace.limit_violations,
            "energy_drift_rel": drift,
            "energy_check": ("PASS" if drift < 1e-3 else "FAIL") if (unforced and frictionless) else None,
            "final_x": trace.x[-1].tolist(),
            "final_xdot": trace.xdot[-1].tolist(),
        }
        atomic_write_text(summary_path, _json_text(summary))
        _write_manifest(out_dir, "simulate", argv, [trace_path, summary_path], t0, params_path=args.params, seed=args.seed)
        print(f"simulated {summary['duration_s']} s, {summary['steps']} steps")
        return EXIT_OK
    atomic_write_text(summary_path, _json_text({"diverged": True, "last_valid_time_s": diverged_at}))
    _write_manifest(out_dir, "simulate", argv, [summary_path], t0, params_path=args.params, seed=args.seed)
    print("simulation diverged", file=sys.stderr)
    return EXIT_INFEASIBLE


def cmd_geometry(args, argv) -> int:
    t0 = time.perf_counter()
    params = load_params(args.params)
    rep = geometry_report(params, args.config[0], args.config[1], payload_kg=args.payload)
    text = _json_text(rep.to_dict())
    print(text, end="")
    if args.out:
        out_dir = Path(args.out)
        path = out_dir / "geometry.json"
        atomic_write_text(path, text)
        _write_manifest(out_dir, "geometry", argv, [path], t0, params_path=args.params, seed=args.seed)
    return EXIT_OK


def cmd_clamp_demo(args, argv) -> int:
    params = load_params(args.params)
    x = np.array([0.0, 0.0, 0.0, math.radians(args.config[0]), math.radians(args.config[1])])
    maps = stack_maps(params, x)
    xdot_c = np.asarray(args.xdot, dtype=float)
    u_raw = inverse_map(maps, xdot_c)
    xdot_f, beta = velocity_clamp(xdot_c, maps, params.u_lim)
    u_clamped = inverse_map(maps, xdot_f)
    print(f"configuration phi = ({args.config[0]}, {args.config[1]}) deg")
    print(f"commanded xdot : {np.array2string(xdot_c, precision=4)}")
    print(f"raw u          : {np.array2string(u_raw, precision=4)}")
    print(f"limits         : {np.array2string(params.u_lim, precision=4)}")
    print(f"beta           : {beta:.6f}")
    print(f"clamped u      : {np.array2string(u_clamped, precision=4)}")
    print(f"feasible xdot  : {np.array2string(xdot_f, precision=4)}")
    print(f"fixed-config condition measure: {gsi(params, x):.4f}")
    print(f"full-map condition measure    : {gsi_full_map(params, x):.6f} (demonstrates why joint rows are excluded)")
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return int(exc.code or 0)
    try:
        if args.command == "sweep":
            return cmd_sweep(args, argv)
        if args.command == "track":
            return cmd_track(args, argv)
        if args.command == "simulate":
            return cmd_simulate(args, argv)
        if args.command == "geometry":
            return cmd_geometry(args, argv)
        if args.command == "clamp-demo":
            return cmd_clamp_demo(args, argv)
        parser.error(f"unknown command {args.command!r}")
    except (ParameterError, TrajectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleTrajectoryError, IntegrationDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RemecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
