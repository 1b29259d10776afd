import math

import numpy as np
import pytest

from core.dynamics import RigidBodyState
from core.errors import DomainError
from core.kinematics import (BladeElement, StrokeFrame, WingGeometry, WingJointState, blade_wind_velocity,
                             element_body_positions, element_positions, joint_rate_vector, local_flow_angles,
                             reduced_frequency, stroke_to_body, wing_flow, wing_to_stroke, wing_wind_acceleration,
                             wing_wind_velocity)

HOVER = RigidBodyState()
LEVEL = StrokeFrame(0.0)


class TestFrames:
    def test_stroke_to_body_layout(self):
        s = math.sin(0.3)
        T = stroke_to_body(0.3)
        assert T[0, 2] == pytest.approx(s)
        assert T[2, 0] == pytest.approx(-s)
        np.testing.assert_allclose(T @ T.T, np.eye(3), atol=1e-15)

    @pytest.mark.parametrize("side", ["right", "left"])
    def test_wing_to_stroke_is_a_rotation(self, side):
        T = wing_to_stroke(0.4, -0.2, side)
        np.testing.assert_allclose(T @ T.T, np.eye(3), atol=1e-15)
        assert np.linalg.det(T) == pytest.approx(1.0)

    def test_left_wing_mirrors_right(self):
        right = element_body_positions(LEVEL, WingJointState(phi=0.5, psi=0.2), np.array([0.2]))[0]
        left = element_body_positions(LEVEL.mirrored(), WingJointState(phi=0.5, psi=0.2), np.array([0.2]))[0]
        np.testing.assert_allclose(left, right * np.array([1.0, -1.0, 1.0]), atol=1e-15)

    def test_element_positions_on_span_axis(self):
        np.testing.assert_allclose(element_positions(np.array([0.1]), "right"), [[0.0, 0.1, 0.0]])
        np.testing.assert_allclose(element_positions(np.array([0.1]), "left"), [[0.0, -0.1, 0.0]])

    def test_joint_rate_vector_right(self):
        joints = WingJointState(psi=0.3, phi_rate=2.0, psi_rate=0.5)
        frame = StrokeFrame(0.0, theta_s_rate=0.1)
        expected = [-math.cos(0.3) * 2.0, math.sin(0.3) * 2.0 + 0.1, -0.5]
        np.testing.assert_allclose(joint_rate_vector(joints, frame), expected)

    def test_bad_side(self):
        with pytest.raises(DomainError):
            StrokeFrame(0.0, side="middle")


class TestWindVelocity:
    def test_hover_flapping(self):
        joints = WingJointState(phi_rate=10.0)
        v = wing_wind_velocity(HOVER, LEVEL, joints, np.array([0.2]))[0]
        np.testing.assert_allclose(v, [0.0, 0.0, -2.0], atol=1e-12)

    def test_hover_flapping_left_wing_matches(self):
        joints = WingJointState(phi_rate=10.0)
        v = wing_wind_velocity(HOVER, LEVEL.mirrored(), joints, np.array([0.2]))[0]
        np.testing.assert_allclose(v, [0.0, 0.0, -2.0], atol=1e-12)

    def test_forward_flight_incident_angle(self):
        body = RigidBodyState(v_body=[5.0, 0.0, 0.0])
        v = wing_wind_velocity(body, LEVEL, WingJointState(phi_rate=10.0), np.array([0.2]))[0]
        flow = local_flow_angles(v, 0.0)
        assert math.degrees(flow.beta) == pytest.approx(21.8014, abs=1e-3)
        assert flow.beta == pytest.approx(math.atan(0.4))

    def test_downstroke_flips_incident_angle(self):
        body = RigidBodyState(v_body=[5.0, 0.0, 0.0])
        v = wing_wind_velocity(body, LEVEL, WingJointState(phi_rate=-10.0), np.array([0.2]))[0]
        assert local_flow_angles(v, 0.0).beta < 0.0

    def test_body_rotation_about_offset_root(self):
        body = RigidBodyState(omega_body=[0.0, 0.0, 1.0])
        frame = StrokeFrame(0.0, offset=[0.1, 0.0, 0.0])
        v = wing_wind_velocity(body, frame, WingJointState(), np.array([0.0]))[0]
        np.testing.assert_allclose(v, [0.0, 0.1, 0.0], atol=1e-12)

    def test_headwind_adds_to_body_velocity(self):
        body = RigidBodyState(v_body=[4.0, 0.0, 0.0])
        v = wing_wind_velocity(body, LEVEL, WingJointState(), np.array([0.1]), wind=[1.0, 0.0, 0.0])[0]
        np.testing.assert_allclose(v, [5.0, 0.0, 0.0], atol=1e-12)

    def test_deformation_rate_is_added(self):
        v = wing_wind_velocity(HOVER, LEVEL, WingJointState(), np.array([0.1]),
                               deformation_rate=np.array([[0.0, 0.0, 0.3]]))[0]
        np.testing.assert_allclose(v, [0.0, 0.0, 0.3], atol=1e-12)

    @pytest.mark.parametrize("side", ["right", "left"])
    def test_matches_numerical_point_velocity(self, side):
        """The rigid-wing formula agrees with differentiating p(r) in time."""
        theta_s, theta_s_rate = math.radians(20.0), 0.4
        offset = np.array([0.02, 0.05 if side == "right" else -0.05, -0.01])
        body = RigidBodyState(v_body=[4.0, 0.3, -0.5], omega_body=[0.2, -0.4, 0.7])
        joints = WingJointState(phi=0.35, psi=-0.15, theta=0.2, phi_rate=9.0, psi_rate=-2.5, theta_rate=1.0)
        r = np.array([0.05, 0.16, 0.3])

        def positions(h):
            frame = StrokeFrame(theta_s + h * theta_s_rate, offset=offset, side=side)
            moved = WingJointState(phi=joints.phi + h * joints.phi_rate, psi=joints.psi + h * joints.psi_rate)
            return element_body_positions(frame, moved, r)

        h = 1e-6
        relative = (positions(h) - positions(-h)) / (2.0 * h)
        p = positions(0.0)
        body_frame = body.v_body + np.cross(body.omega_body, p) + relative
        rot = stroke_to_body(theta_s) @ wing_to_stroke(joints.phi, joints.psi, side)
        expected = body_frame @ rot

        frame = StrokeFrame(theta_s, theta_s_rate, offset, side)
        actual = wing_wind_velocity(body, frame, joints, r)
        np.testing.assert_allclose(actual, expected, atol=1e-7)

    @pytest.mark.parametrize("side", ["right", "left"])
    def test_acceleration_matches_central_difference(self, side):
        theta_s, theta_s_rate = math.radians(20.0), 0.4
        offset = np.array([0.02, 0.05 if side == "right" else -0.05, -0.01])
        body = RigidBodyState(v_body=[4.0, 0.3, -0.5], omega_body=[0.2, -0.4, 0.7])
        joints = WingJointState(phi=0.35, theta=0.2, psi=-0.15, phi_rate=9.0, theta_rate=1.0, psi_rate=-2.5,
                                phi_accel=-40.0, theta_accel=5.0, psi_accel=12.0)
        r = np.array([0.05, 0.16, 0.3])
        wind = np.array([1.0, 0.0, 0.2])

        def velocity(t):
            frame = StrokeFrame(theta_s + t * theta_s_rate, theta_s_rate, offset, side)
            moved = WingJointState(
                phi=joints.phi + t * joints.phi_rate + 0.5 * t * t * joints.phi_accel,
                theta=joints.theta + t * joints.theta_rate + 0.5 * t * t * joints.theta_accel,
                psi=joints.psi + t * joints.psi_rate + 0.5 * t * t * joints.psi_accel,
                phi_rate=joints.phi_rate + t * joints.phi_accel,
                theta_rate=joints.theta_rate + t * joints.theta_accel,
                psi_rate=joints.psi_rate + t * joints.psi_accel)
            return wing_wind_velocity(body, frame, moved, r, wind=wind)

        h = 1e-5
        numeric = (velocity(h) - velocity(-h)) / (2.0 * h)
        frame = StrokeFrame(theta_s, theta_s_rate, offset, side)
        analytic = wing_wind_acceleration(body, frame, joints, r, wind=wind)
        assert analytic.shape == (3, 3)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-6)

    def test_blade_element_rejects_position_outside_span(self):
        with pytest.raises(DomainError):
            BladeElement(r=0.4, dr=0.01, chord=0.15, span=0.32)

    def test_blade_element_velocity(self):
        elem = BladeElement(r=0.2, dr=0.01, chord=0.15, span=0.32)
        v = blade_wind_velocity(HOVER, LEVEL, WingJointState(phi_rate=10.0), elem)
        np.testing.assert_allclose(v, [0.0, 0.0, -2.0], atol=1e-12)


class TestFlowAngles:
    def test_angle_of_attack_subtracts_incident_angle(self):
        flow = local_flow_angles(np.array([5.0, 0.0, -2.0]), math.radians(30.0))
        assert flow.alpha == pytest.approx(math.radians(30.0) - math.atan(0.4))
        assert flow.v_r == pytest.approx(math.hypot(5.0, 2.0))

    def test_spanwise_only_flow_is_degenerate(self):
        flow = local_flow_angles(np.array([0.0, 3.0, 0.0]), 0.2)
        assert flow.degenerate
        assert flow.beta == 0.0
        assert flow.v_r == 0.0

    def test_stacked_samples(self):
        v = np.array([[5.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
        flow = local_flow_angles(v, 0.0)
        np.testing.assert_array_equal(flow.degenerate, [False, True, False])
        np.testing.assert_allclose(flow.beta, [0.0, 0.0, math.pi / 2])

    def test_reduced_frequency_links_tip_incidence(self):
        geometry = WingGeometry(span=0.32, chord=0.15, dr=0.32)
        strips = geometry.strips()
        body = RigidBodyState(v_body=[5.0, 0.0, 0.0])
        joints = WingJointState(phi_rate=10.0)
        v_tip = wing_wind_velocity(body, LEVEL, joints, np.array([geometry.span]))[0]
        k_r = reduced_frequency(joints.phi_rate, geometry.chord, 5.0)
        assert k_r == pytest.approx(0.15)
        beta_tip = local_flow_angles(v_tip, 0.0).beta
        assert beta_tip == pytest.approx(math.atan(2.0 * geometry.span * k_r / geometry.chord))
        assert wing_flow(body, LEVEL, joints, strips).k_r == pytest.approx(0.15)

    def test_reduced_frequency_needs_forward_speed(self):
        with pytest.raises(DomainError):
            reduced_frequency(10.0, 0.15, 0.0)


class TestWingGeometry:
    def test_uniform_strips_tile_the_span(self):
        strips = WingGeometry(span=0.32, chord=0.15, dr=0.01).strips()
        assert len(strips) == 32
        assert strips.dr.sum() == pytest.approx(0.32)
        assert strips.r[0] == pytest.approx(0.005)
        assert strips.r[-1] == pytest.approx(0.315)

    def test_area(self):
        assert WingGeometry(span=0.32, chord=0.15).area == pytest.approx(0.048)

    def test_chord_table_is_interpolated(self):
        geometry = WingGeometry(span=0.2, chord=0.1, dr=0.1, chord_table=((0.0, 0.2), (0.2, 0.1)))
        strips = geometry.strips()
        np.testing.assert_allclose(strips.chord, [0.175, 0.125])

    def test_rejects_bad_geometry(self):
        with pytest.raises(DomainError):
            WingGeometry(span=-1.0)
        with pytest.raises(DomainError):
            WingGeometry(chord_table=((0.1, 0.1), (0.05, 0.1)))
