import dataclasses
import math

import numpy as np
import pytest

from remec.geometry import (
    center_of_mass,
    footprint_width,
    geometry_report,
    solve_counterbalance,
)
from remec.kinematics import wheel_positions


class TestFootprint:
    def test_default_config_spans_full_width(self, params):
        w = footprint_width(params, 0.0, 0.0)
        assert w == pytest.approx(params.l2 + params.l3 + params.wheel_width)

    def test_narrows_toward_straight_line(self, dep_params):
        widths = [footprint_width(dep_params, math.radians(a), math.radians(-a)) for a in (0, 30, 60, 85)]
        assert all(b < a for a, b in zip(widths, widths[1:]))
        # at the straight-line pose only the wheel width remains
        w90 = footprint_width(dep_params, math.pi / 2, -math.pi / 2)
        assert w90 == pytest.approx(dep_params.wheel_width, abs=1e-12)

    def test_calibrated_width_at_70(self, dep_params):
        w = footprint_width(dep_params, math.radians(70), math.radians(-70))
        assert w == pytest.approx(0.26, abs=0.03)


class TestCenterOfMass:
    def test_symmetric_model_centered(self, params):
        com = center_of_mass(params, 0.0, 0.0)
        assert np.abs(com).max() < 1e-12

    def test_deployment_model_offset_toward_body(self, dep_params):
        com = center_of_mass(dep_params, 0.0, 0.0)
        center = wheel_positions(dep_params, np.zeros(5)).mean(axis=0)
        # CoM sits on the body side of the wheel-rectangle center
        assert com[1] < center[1]

    def test_counterweights_shift_com(self, dep_params):
        sol = solve_counterbalance(dep_params)
        weighted = dataclasses.replace(dep_params, counterweight_masses=sol.per_leg_kg)
        com = center_of_mass(weighted, 0.0, 0.0)
        center = wheel_positions(weighted, np.zeros(5)).mean(axis=0)
        assert np.linalg.norm(com - center) < 1e-12


class TestCounterbalance:
    def test_symmetric_model_needs_none(self, params):
        sol = solve_counterbalance(params)
        assert sol.total_kg == 0.0
        assert not sol.negative_mass_clamped

    def test_deployment_fit_masses(self, dep_params):
        sol = solve_counterbalance(dep_params)
        assert sol.total_kg == pytest.approx(5.44, abs=0.01)
        assert sol.per_leg_kg[0] == pytest.approx(2.72, abs=0.01)
        assert sol.per_leg_kg[1] == pytest.approx(2.72, abs=0.01)
        assert sol.residual_m < 1e-12

    def test_deployment_fit_with_payload(self, dep_params):
        sol = solve_counterbalance(dep_params, payload_kg=2.0)
        assert sol.per_leg_kg[0] == pytest.approx(4.24, abs=0.01)
        assert sol.per_leg_kg[1] == pytest.approx(4.24, abs=0.01)

    def test_moment_balance_holds(self, dep_params, rng):
        # independent check: total moment about the geometric center is zero
        for _ in range(5):
            p1, p2 = rng.uniform(-1.0, 1.0, 2)
            sol = solve_counterbalance(dep_params, p1, p2)
            if sol.negative_mass_clamped:
                continue
            weighted = dataclasses.replace(dep_params, counterweight_masses=sol.per_leg_kg)
            x = np.array([0, 0, 0, p1, p2])
            center = wheel_positions(weighted, x).mean(axis=0)
            com = center_of_mass(weighted, p1, p2)
            assert np.linalg.norm(com - center) < 1e-10


def test_geometry_report_roundtrip(dep_params):
    # counterbalance figures are defined at the default (U) configuration
    rep0 = geometry_report(dep_params, 0.0, 0.0)
    doc0 = rep0.to_dict()
    assert doc0["counterbalance"]["total_kg"] == pytest.approx(5.44, abs=0.01)
    assert doc0["counterbalance_with_payload"]["per_leg_kg"][0] == pytest.approx(4.24, abs=0.01)

    rep = geometry_report(dep_params, 70.0, -70.0)
    doc = rep.to_dict()
    assert doc["footprint_width_m"] == pytest.approx(0.26, abs=1e-12)
    assert len(doc["wheel_positions_m"]) == 4
