import dataclasses
import json
import math

import numpy as np
import pytest

from remec import ParameterError, RobotParams, load_params, params_from_dict, validate
from remec.params import default_params, deployment_params


def test_bundled_files_load_and_validate():
    p = default_params()
    assert p.name == "default"
    assert p.leg_layout == "split"
    assert p.u_lim.tolist() == [12.0] * 4 + [3.0, 3.0]
    assert p.joint_limit == pytest.approx(math.radians(95.0))
    d = deployment_params()
    assert d.leg_layout == "one_sided"
    assert d.total_mass == pytest.approx(9.8)


def test_angles_converted_from_degrees():
    p = default_params()
    assert np.allclose(np.abs(p.alpha), math.radians(45.0))


def test_wheel_mount_layouts():
    p = default_params()
    assert p.wheel_mounts[:, 1].tolist() == [p.l3, -p.l2, p.l2, -p.l3]
    d = deployment_params()
    assert d.wheel_mounts[:, 1].tolist() == [d.l3, d.l2, d.l2, d.l3]


def test_load_params_roundtrip(tmp_path):
    src = json.loads(
        __import__("importlib.resources", fromlist=["files"])
        .files("remec.data")
        .joinpath("default.json")
        .read_text()
    )
    path = tmp_path / "p.json"
    path.write_text(json.dumps(src))
    p = load_params(path)
    assert p.l1 == 0.2


def test_schema_version_required():
    with pytest.raises(ParameterError, match="schema"):
        params_from_dict({"schema": 99})


def test_negative_length_rejected():
    with pytest.raises(ParameterError, match="must be positive"):
        validate(dataclasses.replace(default_params(), l1=-0.1))


def test_roller_angle_bounds():
    p = default_params()
    with pytest.raises(ParameterError, match="alpha"):
        validate(dataclasses.replace(p, alpha=np.array([0.0, -0.7, 0.7, -0.7])))
    with pytest.raises(ParameterError, match="alpha"):
        validate(dataclasses.replace(p, alpha=np.array([math.pi / 2, -0.7, 0.7, -0.7])))


def test_rank_check_rejects_degenerate_sign_pattern():
    # all-equal roller angles collapse the lateral column of the wheel map
    p = default_params()
    bad = dataclasses.replace(p, alpha=np.deg2rad([45.0, 45.0, 45.0, 45.0]))
    with pytest.raises(ParameterError, match="rank"):
        validate(bad)


def test_joint_limit_clamp_reports_violation():
    p = default_params()
    clamped, violated = p.with_joint_angles_clamped(np.array([2.0, -0.1]))
    assert violated
    assert clamped[0] == pytest.approx(p.joint_limit)
    _, ok = p.with_joint_angles_clamped(np.array([0.5, -0.5]))
    assert not ok


def test_inertial_scaling_helper():
    p = default_params()
    q = p.scaled_inertial(2.0)
    assert q.body_mass == 2 * p.body_mass
    assert q.roller_inertia == 2 * p.roller_inertia
    assert q.l1 == p.l1


def test_u_lim_positive_required():
    p = default_params()
    with pytest.raises(ParameterError, match="limits"):
        validate(dataclasses.replace(p, u_lim=np.array([12, 12, 12, 0.0, 3, 3])))


def test_malformed_json_reported(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ParameterError, match="JSON"):
        load_params(bad)
