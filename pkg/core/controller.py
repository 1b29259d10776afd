"""
Outer-loop flight control acting on the CPG parameters.

The laws steer the network through its frequency, the pitch/lead-lag phase
difference, the lead-lag radii and, in glide, the oscillation biases.
Everything the integrator needs is returned as a ControlCommand evaluated
from the current body state and controller integrators, so one command is
consistent within a single derivative evaluation.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from core.dynamics import RigidBodyState
from core.errors import DomainError, StaleMatricesError
from core.oscillator import NetworkState
from core.topology import CONFIG_A_JOINTS, CouplingMatrices

logger = logging.getLogger(__name__)

FLAP2_MODES = ("leadlag", "flap")
INTEGRATOR_SIZE = 3


class FlightMode(Enum):
    FLAPPING = "flapping"
    GLIDING = "gliding"

    @property
    def sigma(self) -> int:
        return 1 if self is FlightMode.FLAPPING else -1

    @classmethod
    def from_sigma(cls, sigma: int) -> "FlightMode":
        if sigma == 1:
            return cls.FLAPPING
        if sigma == -1:
            return cls.GLIDING
        raise DomainError(f"sigma must be +1 or -1, got {sigma!r}")


@dataclass(frozen=True)
class PidGains:
    kp: float = 0.0
    kd: float = 0.0
    ki: float = 0.0


@dataclass(frozen=True)
class ControlGains:
    """Gains of every law. Angles in rad; defaults are desk estimates."""
    k_omega: float = 2.0
    v_x_desired: float = 6.0
    omega_min: float = 1.0
    omega_max: float = 80.0
    k_delta32: float = 1.0
    delta0: float = -math.pi
    k_r_roll: float = 0.3
    rho3_nominal: float = math.radians(15.0)
    rho7_nominal: float = math.radians(15.0)
    rho_min: float = math.radians(1.0)
    delta_offset: float = 0.0
    delta_law_enabled: bool = False
    glide_pid: PidGains = PidGains(1.0, 0.1, 0.5)
    psi_bias: float = math.radians(-5.0)
    flap_pid: PidGains = PidGains()
    flap_bias: float = 0.0
    pitch_bias_integral_gain: float = 0.2

    def __post_init__(self):
        values = (self.k_omega, self.v_x_desired, self.omega_min, self.omega_max, self.k_delta32,
                  self.delta0, self.k_r_roll, self.rho3_nominal, self.rho7_nominal, self.rho_min,
                  self.delta_offset, self.psi_bias, self.flap_bias, self.pitch_bias_integral_gain,
                  *vars(self.glide_pid).values(), *vars(self.flap_pid).values())
        if not all(math.isfinite(v) for v in values):
            raise DomainError("control gains must be finite")
        if self.rho3_nominal <= 0 or self.rho7_nominal <= 0 or self.rho_min <= 0:
            raise DomainError("nominal lead-lag radii and rho_min must be positive")
        if not 0 < self.omega_min < self.omega_max:
            raise DomainError(f"omega clamp [{self.omega_min}, {self.omega_max}] is not well-formed")


@dataclass(frozen=True)
class SwitchThresholds:
    h_max_flap: float = 10.0
    h_min_glide: float = 5.0
    v_x_max: float = 5.0
    v_x_min: float = 3.0
    dwell: float = 0.5

    def __post_init__(self):
        if not self.h_max_flap > self.h_min_glide:
            raise DomainError("h_max_flap must exceed h_min_glide")
        if not self.v_x_max > self.v_x_min:
            raise DomainError("v_x_max must exceed v_x_min")
        if self.dwell < 0:
            raise DomainError("dwell time must be non-negative")


@dataclass(frozen=True)
class ModeParameters:
    """Coupling gain and convergence rate used in each flight mode."""
    k_flap: float = 60.0
    k_glide: float = 0.0
    lambda_flap: float = 10.0
    lambda_glide: float = 30.0

    def k(self, mode: FlightMode) -> float:
        return self.k_flap if mode is FlightMode.FLAPPING else self.k_glide

    def lam(self, mode: FlightMode) -> float:
        return self.lambda_flap if mode is FlightMode.FLAPPING else self.lambda_glide


@dataclass
class ControllerState:
    """
    Controller memory. The three integrators are mirrored here from the
    integrated state vector after every step; the rest is event-driven.
    """
    omega_integral: float
    glide_theta_integral: float = 0.0
    pitch_bias_integral: float = 0.0
    mode: FlightMode = FlightMode.FLAPPING
    turn_command: float = 0.0
    v_x_desired: Optional[float] = None
    hold_frequency: bool = False
    delta_law_enabled: bool = False
    delta_offset: float = 0.0
    delta0: Optional[float] = None
    last_switch_time: float = -math.inf
    rho_saturated: bool = False

    def integrators(self) -> np.ndarray:
        return np.array([self.omega_integral, self.glide_theta_integral, self.pitch_bias_integral])

    def load_integrators(self, values: Sequence[float]):
        self.omega_integral, self.glide_theta_integral, self.pitch_bias_integral = (float(v) for v in values)


@dataclass(frozen=True)
class RollCommand:
    rho3: float
    rho7: float
    rho3_rate: float
    rho7_rate: float
    saturated: bool = False


@dataclass(frozen=True)
class ControlCommand:
    """Everything the network and joint chain need for one time slice."""
    mode: FlightMode
    omega: float
    k: float
    lam: float
    node_phases: np.ndarray
    node_phase_rates: np.ndarray
    rho: np.ndarray
    rho_rates: np.ndarray
    bias: np.ndarray
    delta32: float
    delta32_rate: float
    saturated: bool = False

    @property
    def sigma(self) -> int:
        return self.mode.sigma


@dataclass(frozen=True)
class WingLayout:
    """Node indices (0-based) of the four joints on each wing."""
    right: Tuple[int, int, int, int]
    left: Tuple[int, int, int, int]

    @classmethod
    def from_roles(cls, roles: Sequence[str]) -> "WingLayout":
        lookup = {role: idx for idx, role in enumerate(roles)}
        missing = [role for role in CONFIG_A_JOINTS if role not in lookup]
        if missing:
            raise DomainError(f"wing control needs joints {', '.join(missing)}")
        right = tuple(lookup[r] for r in CONFIG_A_JOINTS[:4])
        left = tuple(lookup[r] for r in CONFIG_A_JOINTS[4:])
        return cls(right=right, left=left)


def frequency_law(gains: ControlGains, v_x_actual: float, dt: float, ctrl: ControllerState) -> float:
    """
    Advance the frequency integrator by one explicit step and return omega.

    Integration stops at the clamp so omega never winds up past it.
    """
    if ctrl.mode is not FlightMode.FLAPPING or ctrl.hold_frequency:
        return ctrl.omega_integral
    rate = omega_rate(gains, v_x_actual, ctrl.omega_integral, ctrl.v_x_desired)
    ctrl.omega_integral = min(max(ctrl.omega_integral + rate * dt, gains.omega_min), gains.omega_max)
    return ctrl.omega_integral


def omega_rate(gains: ControlGains, v_x_actual: float, omega: float,
               v_x_desired: Optional[float] = None) -> float:
    target = gains.v_x_desired if v_x_desired is None else v_x_desired
    rate = gains.k_omega * (target - v_x_actual)
    if (omega >= gains.omega_max and rate > 0) or (omega <= gains.omega_min and rate < 0):
        return 0.0
    return rate


def pitch_phase_law(gains: ControlGains, theta_b: float, omega_body: Sequence[float],
                    phi_b: float = 0.0, delta0: Optional[float] = None) -> Tuple[float, float]:
    """
    Delta_32 = Delta_76 = -K theta_b + Delta_0 and its rate from the body
    rates, so no numerical differentiation is needed.
    """
    base = gains.delta0 if delta0 is None else delta0
    _, q, r = omega_body
    theta_rate = q * math.cos(phi_b) - r * math.sin(phi_b)
    return -gains.k_delta32 * theta_b + base, -gains.k_delta32 * theta_rate


def roll_symmetry_law(gains: ControlGains, phi_b: float, phi_rate: float,
                      bank_desired: float = 0.0) -> RollCommand:
    """Lead-lag radii split that rolls the vehicle toward the commanded bank."""
    shift = gains.k_r_roll * (phi_b - bank_desired)
    rho3 = gains.rho3_nominal - shift
    rho7 = gains.rho7_nominal + shift
    rho3_rate = -gains.k_r_roll * phi_rate
    rho7_rate = gains.k_r_roll * phi_rate
    saturated = False
    if rho3 < gains.rho_min:
        rho3, rho3_rate, saturated = gains.rho_min, 0.0, True
    if rho7 < gains.rho_min:
        rho7, rho7_rate, saturated = gains.rho_min, 0.0, True
    return RollCommand(rho3, rho7, rho3_rate, rho7_rate, saturated)


def delta_offset_law(gains: ControlGains, delta: Optional[float] = None,
                     nominal: float = math.pi / 2) -> Tuple[float, float]:
    """(Delta_65, Delta_21) = (nominal + delta, nominal - delta)."""
    d = gains.delta_offset if delta is None else delta
    return nominal + d, nominal - d


def glide_bias_law(gains: ControlGains, theta_b: float, q: float,
                   theta_integral: float, pitch_integral: float) -> Dict[str, float]:
    """
    Glide biases for the flap, pitch and lead-lag joints (same on both wings).

    Lead-lag and flapping angle use PID on the body pitch; the wing pitch
    bias is pure integral action.
    """
    lead = (-gains.glide_pid.kp * theta_b - gains.glide_pid.kd * q
            - gains.glide_pid.ki * theta_integral + gains.psi_bias)
    flap = (-gains.flap_pid.kp * theta_b - gains.flap_pid.kd * q
            - gains.flap_pid.ki * theta_integral + gains.flap_bias)
    return {"flap": flap, "pitch": -pitch_integral, "leadlag": lead}


def glide_bias_rate_law(gains: ControlGains, theta_b: float, theta_b_rate: float,
                        q_rate: float) -> Dict[str, float]:
    """Time derivative of glide_bias_law given the body pitch rate and pitch acceleration."""
    lead = -gains.glide_pid.kp * theta_b_rate - gains.glide_pid.kd * q_rate - gains.glide_pid.ki * theta_b
    flap = -gains.flap_pid.kp * theta_b_rate - gains.flap_pid.kd * q_rate - gains.flap_pid.ki * theta_b
    return {"flap": flap, "pitch": -gains.pitch_bias_integral_gain * theta_b, "leadlag": lead}


def mode_switch_law(thresholds: SwitchThresholds, sigma: int, z_b: float, v_bx: float) -> FlightMode:
    """Glide when high and fast enough, flap otherwise. z_b is positive down."""
    altitude = -z_b
    if sigma == 1 and altitude > thresholds.h_max_flap and v_bx > thresholds.v_x_max:
        return FlightMode.GLIDING
    if sigma == -1 and altitude > thresholds.h_min_glide and v_bx > thresholds.v_x_min:
        return FlightMode.GLIDING
    return FlightMode.FLAPPING


def correction_feed(mat: CouplingMatrices, node_phase_rates: Sequence[float],
                    rho_rates: Sequence[float], net) -> np.ndarray:
    """
    T^-1 dT/dt {x} for the block-diagonal transform of node phases and radii.

    Each block of T is (rho_1/rho_i) R(-phi_i), so its contribution is
    (d/dt ln(rho_1/rho_i)) I - (d phi_i/dt) J applied to x_i.

    Args:
        mat: Matrices built for the current radii and phases
        node_phase_rates: d phi_i / dt (rad/s)
        rho_rates: d rho_i / dt (rad/s)
        net: NetworkState, or shifted states (n, 2) when ``mat`` radii are trusted
    """
    if isinstance(net, NetworkState):
        try:
            mat.check_current(net.rho)
        except StaleMatricesError:
            raise StaleMatricesError("correction feed needs matrices built for the current radii")
        x = net.shifted()
    else:
        x = np.asarray(net, dtype=float).reshape(mat.n, 2)
    phase_rates = np.asarray(node_phase_rates, dtype=float)
    rho_rates = np.asarray(rho_rates, dtype=float)
    if phase_rates.shape != (mat.n,) or rho_rates.shape != (mat.n,):
        raise DomainError(f"correction rates need {mat.n} entries")
    scale_rate = rho_rates[0] / mat.rho[0] - rho_rates / mat.rho
    rotated = np.stack((-x[:, 1], x[:, 0]), axis=-1)
    out = scale_rate[:, None] * x - phase_rates[:, None] * rotated
    return out.reshape(-1)


class Controller:
    """
    Stateful outer loop owned by one simulation.

    With ``laws_enabled`` false the controller only holds the network at its
    nominal parameters in the initial mode; no law or switch is applied.
    """

    def __init__(self, gains: ControlGains, thresholds: SwitchThresholds, modes: ModeParameters,
                 nominal_rho: Sequence[float], nominal_bias: Sequence[float],
                 nominal_phases: Sequence[float], roles: Sequence[str], omega0: float,
                 initial_mode: FlightMode, laws_enabled: bool = True, flap2_follows: str = "leadlag"):
        if flap2_follows not in FLAP2_MODES:
            raise DomainError(f"flap2_follows must be one of {FLAP2_MODES}, got {flap2_follows!r}")
        self.gains = gains
        self.thresholds = thresholds
        self.modes = modes
        self.nominal_rho = np.asarray(nominal_rho, dtype=float)
        self.nominal_bias = np.asarray(nominal_bias, dtype=float)
        self.nominal_phases = np.asarray(nominal_phases, dtype=float)
        self.laws_enabled = laws_enabled
        self.flap2_follows = flap2_follows
        self.layout = WingLayout.from_roles(roles) if laws_enabled else None
        self.state = ControllerState(omega_integral=omega0, mode=initial_mode,
                                     delta_law_enabled=gains.delta_law_enabled,
                                     delta_offset=gains.delta_offset)
        self.saturation_events = 0

    @property
    def n(self) -> int:
        return len(self.nominal_rho)

    def _schedule_phases(self, delta21: float, delta65: float, delta32: float,
                         delta32_rate: float) -> Tuple[np.ndarray, np.ndarray]:
        nom = self.nominal_phases
        phases = nom.copy()
        rates = np.zeros(self.n)
        for (flap, pitch, lead, flap2), delta_pf in ((self.layout.right, delta21),
                                                      (self.layout.left, delta65)):
            phases[pitch] = phases[flap] + delta_pf
            phases[lead] = phases[pitch] + delta32
            rates[lead] = delta32_rate
            if self.flap2_follows == "leadlag":
                phases[flap2] = phases[lead] + (nom[flap2] - nom[lead])
                rates[flap2] = delta32_rate
            else:
                phases[flap2] = phases[flap] + (nom[flap2] - nom[flap])
        return phases, rates

    def nominal_delta21(self) -> Tuple[float, float]:
        r, l = self.layout.right, self.layout.left
        nom = self.nominal_phases
        return nom[r[1]] - nom[r[0]], nom[l[1]] - nom[l[0]]

    def command(self, body: RigidBodyState, integrators: Sequence[float]) -> ControlCommand:
        """Algebraic control outputs for one derivative evaluation."""
        ctrl = self.state
        mode = ctrl.mode
        omega = float(integrators[0])
        rho = self.nominal_rho.copy()
        rho_rates = np.zeros(self.n)
        bias = self.nominal_bias.copy()
        phases = self.nominal_phases.copy()
        phase_rates = np.zeros(self.n)
        delta32 = delta32_rate = 0.0
        saturated = False

        if self.laws_enabled:
            phi_b, theta_b, _ = body.euler
            p, q, r = body.omega_body
            r_idx, l_idx = self.layout.right, self.layout.left
            base21, base65 = self.nominal_delta21()
            if ctrl.delta_law_enabled:
                base65, base21 = base65 + ctrl.delta_offset, base21 - ctrl.delta_offset
            if mode is FlightMode.FLAPPING:
                delta32, delta32_rate = pitch_phase_law(self.gains, theta_b, body.omega_body, phi_b,
                                                        ctrl.delta0)
                phi_rate = p + (q * math.sin(phi_b) + r * math.cos(phi_b)) * math.tan(theta_b)
                roll = roll_symmetry_law(self.gains, phi_b, phi_rate, ctrl.turn_command)
                rho[r_idx[2]], rho[l_idx[2]] = roll.rho3, roll.rho7
                rho_rates[r_idx[2]], rho_rates[l_idx[2]] = roll.rho3_rate, roll.rho7_rate
                saturated = roll.saturated
            else:
                delta32 = self.nominal_phases[r_idx[2]] - self.nominal_phases[r_idx[1]]
                biases = glide_bias_law(self.gains, theta_b, q, float(integrators[1]),
                                        float(integrators[2]))
                for wing in (r_idx, l_idx):
                    bias[wing[0]] = biases["flap"]
                    bias[wing[1]] = biases["pitch"]
                    bias[wing[2]] = biases["leadlag"]
            phases, phase_rates = self._schedule_phases(base21, base65, delta32, delta32_rate)

        return ControlCommand(mode=mode, omega=omega, k=self.modes.k(mode), lam=self.modes.lam(mode),
                              node_phases=phases, node_phase_rates=phase_rates, rho=rho,
                              rho_rates=rho_rates, bias=bias, delta32=delta32,
                              delta32_rate=delta32_rate, saturated=saturated)

    def integrator_rates(self, body: RigidBodyState, integrators: Sequence[float]) -> np.ndarray:
        """Time derivatives of (omega, glide pitch integral, pitch-bias integral)."""
        rates = np.zeros(INTEGRATOR_SIZE)
        if not self.laws_enabled:
            return rates
        ctrl = self.state
        theta_b = body.euler[1]
        if ctrl.mode is FlightMode.FLAPPING:
            if not ctrl.hold_frequency:
                rates[0] = omega_rate(self.gains, body.v_body[0], float(integrators[0]), ctrl.v_x_desired)
        else:
            rates[1] = theta_b
            rates[2] = self.gains.pitch_bias_integral_gain * theta_b
        return rates

    def bias_rates(self, body: RigidBodyState, body_rates: Sequence[float]) -> np.ndarray:
        """
        d a_i / dt per node. Non-zero only while gliding, where the biases
        follow the body pitch through glide_bias_law; ``body_rates`` is the
        derivative of the 12-value rigid-body state.
        """
        rates = np.zeros(self.n)
        if not self.laws_enabled or self.state.mode is not FlightMode.GLIDING:
            return rates
        biases = glide_bias_rate_law(self.gains, body.euler[1], float(body_rates[7]), float(body_rates[4]))
        for wing in (self.layout.right, self.layout.left):
            rates[wing[0]] = biases["flap"]
            rates[wing[1]] = biases["pitch"]
            rates[wing[2]] = biases["leadlag"]
        return rates

    def clamp_integrators(self, integrators: np.ndarray) -> np.ndarray:
        out = np.array(integrators, dtype=float)
        out[0] = min(max(out[0], self.gains.omega_min), self.gains.omega_max)
        return out

    def update_mode(self, t: float, body: RigidBodyState) -> Optional[Tuple[FlightMode, FlightMode]]:
        """
        Evaluate the switching predicate once per step. Returns the
        (old, new) transition when the mode changes.
        """
        if not self.laws_enabled:
            return None
        ctrl = self.state
        wanted = mode_switch_law(self.thresholds, ctrl.mode.sigma, body.position[2], body.v_body[0])
        if wanted is ctrl.mode or t - ctrl.last_switch_time < self.thresholds.dwell:
            return None
        old = ctrl.mode
        ctrl.mode = wanted
        ctrl.last_switch_time = t
        if wanted is FlightMode.GLIDING:
            ctrl.glide_theta_integral = 0.0
            ctrl.pitch_bias_integral = 0.0
        logger.info(f"Mode switch at t={t:.3f}s: {old.value} -> {wanted.value} "
                    f"(altitude {-body.position[2]:.2f} m, V_x {body.v_body[0]:.2f} m/s)")
        return old, wanted

    def note_saturation(self, t: float, saturated: bool):
        if saturated and not self.state.rho_saturated:
            self.saturation_events += 1
            logger.warning(f"Lead-lag radius clamped at rho_min={math.degrees(self.gains.rho_min):.2f} deg "
                           f"at t={t:.3f}s")
        self.state.rho_saturated = saturated

    def apply_event(self, action: str, value=None):
        """Apply one timed scenario command. Angles arrive in radians."""
        ctrl = self.state
        if action == "set_bank":
            ctrl.turn_command = float(value)
        elif action == "set_speed":
            ctrl.v_x_desired = float(value)
        elif action == "hold_frequency":
            ctrl.hold_frequency = bool(value)
        elif action == "enable_delta_law":
            ctrl.delta_law_enabled = True
            if value is not None:
                ctrl.delta_offset = float(value)
        elif action == "disable_delta_law":
            ctrl.delta_law_enabled = False
        elif action == "set_delta0":
            ctrl.delta0 = float(value)
        else:
            raise DomainError(f"unknown control event {action!r}")
        logger.debug(f"Control event {action} ({value})")
