import math

import numpy as np
import pytest

from core.controller import (ControlGains, Controller, ControllerState, FlightMode, ModeParameters, PidGains,
                             SwitchThresholds, WingLayout, correction_feed, delta_offset_law, frequency_law,
                             glide_bias_law, glide_bias_rate_law, mode_switch_law, omega_rate, pitch_phase_law,
                             roll_symmetry_law)
from core.dynamics import RigidBodyState
from core.errors import DomainError
from core.topology import CONFIG_A_JOINTS, MatrixCache, config_a, config_a_phases

rad = math.radians
REFERENCE_RHO = np.radians([50.0, 30.0, 15.0, 30.0, 50.0, 30.0, 15.0, 30.0])


def make_controller(mode=FlightMode.FLAPPING, **gains):
    return Controller(ControlGains(**gains), SwitchThresholds(), ModeParameters(), REFERENCE_RHO,
                      np.zeros(8), config_a_phases(), CONFIG_A_JOINTS, omega0=15.0, initial_mode=mode)


class TestLaws:
    def test_roll_symmetry(self):
        gains = ControlGains(k_r_roll=rad(10.0))
        roll = roll_symmetry_law(gains, phi_b=0.2, phi_rate=0.0)
        assert math.degrees(roll.rho3) == pytest.approx(13.0)
        assert math.degrees(roll.rho7) == pytest.approx(17.0)
        assert not roll.saturated

    def test_roll_tracks_commanded_bank(self):
        gains = ControlGains(k_r_roll=rad(10.0))
        roll = roll_symmetry_law(gains, phi_b=0.2, phi_rate=0.0, bank_desired=0.2)
        assert roll.rho3 == pytest.approx(rad(15.0))
        assert roll.rho7 == pytest.approx(rad(15.0))

    def test_roll_saturates_at_minimum_radius(self):
        gains = ControlGains(k_r_roll=1.0)
        roll = roll_symmetry_law(gains, phi_b=1.0, phi_rate=0.5)
        assert roll.saturated
        assert roll.rho3 == gains.rho_min
        assert roll.rho3_rate == 0.0
        assert roll.rho7_rate == pytest.approx(0.5)

    def test_pitch_phase(self):
        gains = ControlGains(k_delta32=2.0, delta0=rad(90.0))
        delta32, rate = pitch_phase_law(gains, theta_b=0.1, omega_body=[0.0, 0.5, 0.0])
        assert math.degrees(delta32) == pytest.approx(90.0 - 11.459156, abs=1e-5)
        assert rate == pytest.approx(-1.0)

    def test_glide_bias(self):
        gains = ControlGains(glide_pid=PidGains(1.0, 0.0, 0.0), psi_bias=rad(-5.0))
        biases = glide_bias_law(gains, theta_b=0.1, q=0.0, theta_integral=0.0, pitch_integral=0.0)
        assert biases["leadlag"] == pytest.approx(rad(-5.0) - 0.1)
        assert biases["flap"] == 0.0

    def test_glide_pitch_bias_is_integral_only(self):
        biases = glide_bias_law(ControlGains(), theta_b=0.3, q=1.0, theta_integral=0.0, pitch_integral=0.25)
        assert biases["pitch"] == -0.25

    def test_glide_bias_rate_matches_central_difference(self):
        gains = ControlGains(glide_pid=PidGains(1.0, 0.5, 0.2), flap_pid=PidGains(0.5, 0.1, 0.3), flap_bias=0.05)
        g = gains.pitch_bias_integral_gain

        def biases(t):
            integral = 0.1 * t + 0.2 * t * t
            return glide_bias_law(gains, theta_b=0.1 + 0.4 * t, q=0.3 - 1.5 * t,
                                  theta_integral=0.05 + integral, pitch_integral=0.02 + g * integral)

        h = 1e-4
        rates = glide_bias_rate_law(gains, theta_b=0.1, theta_b_rate=0.4, q_rate=-1.5)
        for joint in ("flap", "pitch", "leadlag"):
            numeric = (biases(h)[joint] - biases(-h)[joint]) / (2.0 * h)
            assert rates[joint] == pytest.approx(numeric, abs=1e-9)

    def test_delta_offset(self):
        d65, d21 = delta_offset_law(ControlGains(), delta=rad(10.0))
        assert d65 == pytest.approx(rad(100.0))
        assert d21 == pytest.approx(rad(80.0))

    def test_frequency_law_integrates_speed_error(self):
        gains = ControlGains(k_omega=2.0, v_x_desired=6.0)
        ctrl = ControllerState(omega_integral=10.0)
        assert frequency_law(gains, 5.0, 0.1, ctrl) == pytest.approx(10.2)
        ctrl.hold_frequency = True
        assert frequency_law(gains, 5.0, 0.1, ctrl) == pytest.approx(10.2)

    def test_frequency_clamp_stops_windup(self):
        gains = ControlGains(omega_max=20.0)
        assert omega_rate(gains, 0.0, 20.0) == 0.0
        assert omega_rate(gains, 10.0, 20.0) < 0.0
        ctrl = ControllerState(omega_integral=19.9)
        assert frequency_law(gains, 0.0, 1.0, ctrl) == 20.0


class TestModeSwitch:
    thresholds = SwitchThresholds()

    def test_flapping_high_and_fast_glides(self):
        assert mode_switch_law(self.thresholds, 1, z_b=-12.0, v_bx=6.0) is FlightMode.GLIDING

    def test_gliding_too_low_flaps(self):
        assert mode_switch_law(self.thresholds, -1, z_b=-4.0, v_bx=6.0) is FlightMode.FLAPPING

    def test_hysteresis_band(self):
        assert mode_switch_law(self.thresholds, 1, z_b=-8.0, v_bx=6.0) is FlightMode.FLAPPING
        assert mode_switch_law(self.thresholds, -1, z_b=-8.0, v_bx=4.0) is FlightMode.GLIDING

    def test_thresholds_must_be_ordered(self):
        with pytest.raises(DomainError):
            SwitchThresholds(h_max_flap=5.0, h_min_glide=10.0)

    def test_flight_mode_sigma(self):
        assert FlightMode.from_sigma(-1) is FlightMode.GLIDING
        assert FlightMode.GLIDING.sigma == -1
        with pytest.raises(DomainError):
            FlightMode.from_sigma(0)


class TestCorrectionFeed:
    def test_matches_numerical_transform_derivative(self):
        cache = MatrixCache(config_a())
        phases = config_a_phases()
        phase_rates = np.array([0.0, 0.4, -0.7, -0.7, 0.0, 0.2, 0.5, 0.5])
        rho_rates = np.array([0.0, 0.0, 0.3, 0.0, 0.0, 0.0, -0.3, 0.0])
        x = np.random.default_rng(5).normal(size=(8, 2))

        h = 1e-6
        ahead = cache.get(REFERENCE_RHO + h * rho_rates, phases + h * phase_rates)
        behind = cache.get(REFERENCE_RHO - h * rho_rates, phases - h * phase_rates)
        now = cache.get(REFERENCE_RHO, phases)
        dT = (ahead.T - behind.T) / (2.0 * h)
        expected = now.T_inv @ dT @ x.reshape(-1)

        actual = correction_feed(now, phase_rates, rho_rates, x)
        np.testing.assert_allclose(actual, expected, atol=1e-7)

    def test_rejects_wrong_length(self):
        now = MatrixCache(config_a()).get(REFERENCE_RHO)
        with pytest.raises(DomainError):
            correction_feed(now, np.zeros(7), np.zeros(8), np.zeros((8, 2)))


class TestController:
    def test_layout_from_roles(self):
        layout = WingLayout.from_roles(CONFIG_A_JOINTS)
        assert layout.right == (0, 1, 2, 3)
        assert layout.left == (4, 5, 6, 7)
        with pytest.raises(DomainError):
            WingLayout.from_roles(CONFIG_A_JOINTS[:4])

    def test_level_flapping_command(self):
        ctrl = make_controller(k_delta32=1.0, delta0=rad(-180.0))
        cmd = ctrl.command(RigidBodyState(v_body=[6.0, 0.0, 0.0]), [15.0, 0.0, 0.0])
        assert cmd.mode is FlightMode.FLAPPING
        assert (cmd.k, cmd.lam, cmd.omega) == (60.0, 10.0, 15.0)
        assert cmd.delta32 == pytest.approx(-math.pi)
        # nominal lead-lag radii from the gains, not from the node table
        assert cmd.rho[2] == pytest.approx(rad(15.0))
        assert cmd.rho[6] == pytest.approx(rad(15.0))
        assert cmd.node_phases[2] == pytest.approx(cmd.node_phases[1] - math.pi)

    def test_pitch_rate_schedules_lead_lag_phase_rate(self):
        ctrl = make_controller(k_delta32=2.0)
        cmd = ctrl.command(RigidBodyState(omega_body=[0.0, 0.5, 0.0]), [15.0, 0.0, 0.0])
        assert cmd.node_phase_rates[2] == pytest.approx(-1.0)
        assert cmd.node_phase_rates[6] == pytest.approx(-1.0)
        assert cmd.node_phase_rates[0] == 0.0

    def test_bias_rates_follow_body_pitch_while_gliding(self):
        ctrl = make_controller(FlightMode.GLIDING, glide_pid=PidGains(1.0, 0.5, 0.2),
                               flap_pid=PidGains(0.5, 0.0, 0.0))
        body = RigidBodyState(euler=[0.0, 0.1, 0.0])
        body_rates = np.zeros(12)
        body_rates[4], body_rates[7] = -1.5, 0.4
        per_wing = [-0.2, -0.02, 0.33, 0.0]
        np.testing.assert_allclose(ctrl.bias_rates(body, body_rates), per_wing * 2, atol=1e-12)
        assert not make_controller().bias_rates(body, body_rates).any()

    def test_glide_command_sets_biases(self):
        ctrl = make_controller(mode=FlightMode.GLIDING, glide_pid=PidGains(1.0, 0.0, 0.0), psi_bias=0.0)
        body = RigidBodyState(euler=[0.0, 0.1, 0.0])
        cmd = ctrl.command(body, [15.0, 0.0, 0.0])
        assert cmd.sigma == -1
        assert (cmd.k, cmd.lam) == (0.0, 30.0)
        assert cmd.bias[2] == pytest.approx(-0.1)
        assert cmd.bias[6] == pytest.approx(-0.1)

    def test_integrator_rates_follow_mode(self):
        flap = make_controller()
        rates = flap.integrator_rates(RigidBodyState(v_body=[5.0, 0.0, 0.0]), [15.0, 0.0, 0.0])
        np.testing.assert_allclose(rates, [2.0, 0.0, 0.0])
        glide = make_controller(mode=FlightMode.GLIDING)
        rates = glide.integrator_rates(RigidBodyState(euler=[0.0, 0.1, 0.0]), [15.0, 0.0, 0.0])
        np.testing.assert_allclose(rates, [0.0, 0.1, 0.02])

    def test_mode_switch_honours_dwell(self):
        ctrl = make_controller()
        high_fast = RigidBodyState(v_body=[6.0, 0.0, 0.0], position=[0.0, 0.0, -12.0])
        low = RigidBodyState(v_body=[6.0, 0.0, 0.0], position=[0.0, 0.0, -4.0])
        assert ctrl.update_mode(1.0, high_fast) == (FlightMode.FLAPPING, FlightMode.GLIDING)
        assert ctrl.update_mode(1.2, low) is None
        assert ctrl.update_mode(1.6, low) == (FlightMode.GLIDING, FlightMode.FLAPPING)

    def test_events(self):
        ctrl = make_controller()
        ctrl.apply_event("set_bank", rad(40.0))
        ctrl.apply_event("hold_frequency", True)
        assert ctrl.state.turn_command == pytest.approx(rad(40.0))
        assert ctrl.state.hold_frequency
        with pytest.raises(DomainError):
            ctrl.apply_event("barrel_roll")

    def test_disabled_laws_hold_nominal_parameters(self):
        ctrl = Controller(ControlGains(), SwitchThresholds(), ModeParameters(), REFERENCE_RHO, np.zeros(8),
                          config_a_phases(), CONFIG_A_JOINTS, omega0=10.0,
                          initial_mode=FlightMode.FLAPPING, laws_enabled=False)
        cmd = ctrl.command(RigidBodyState(euler=[0.3, 0.2, 0.0]), [10.0, 0.0, 0.0])
        np.testing.assert_array_equal(cmd.rho, REFERENCE_RHO)
        np.testing.assert_array_equal(cmd.node_phases, config_a_phases())
        assert ctrl.update_mode(5.0, RigidBodyState(v_body=[9.0, 0.0, 0.0], position=[0.0, 0.0, -50.0])) is None
