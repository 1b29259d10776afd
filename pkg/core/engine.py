"""
Fixed-step RK4 integration of the coupled CPG, vehicle and controller state.

State vector layout: raw oscillator coordinates (u_i, v_i) for every node,
then the 12 rigid-body values, then the three controller integrators
(omega, glide pitch integral, pitch-bias integral).
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from core.aerodynamics import AeroModel, WingLoads, integrate_wing
from core.controller import (INTEGRATOR_SIZE, ControlCommand, Controller, FlightMode, WingLayout,
                             correction_feed)
from core.dynamics import (STATE_SIZE, AuxiliaryLoads, MassProperties, RigidBodyState, body_loads,
                           rigid_body_derivative)
from core.errors import DomainError, SimulationAborted
from core.kinematics import StripSet, StrokeFrame, WingGeometry, WingJointState, wing_flow
from core.oscillator import network_derivative, network_second_derivative
from core.topology import MatrixCache, NetworkTopology, sync_error

logger = logging.getLogger(__name__)

SUBSYSTEMS = ("oscillator-network", "aerodynamics", "vehicle-dynamics", "flight-control")

EVENT_ACTIONS = {
    "set_bank": "deg",
    "set_speed": "m/s",
    "hold_frequency": "bool",
    "enable_delta_law": "deg",
    "disable_delta_law": None,
    "set_delta0": "deg",
}

BODY_COLUMNS = ("V_bx", "V_by", "V_bz", "p_dps", "q_dps", "r_dps",
                "phi_b_deg", "theta_b_deg", "psi_b_deg", "x_e", "y_e", "z_e")
LOAD_COLUMNS = ("F_x", "F_y", "F_z", "M_x", "M_y", "M_z")
JOINT_NAMES = ("phi", "theta", "psi")


@dataclass(frozen=True)
class TimedEvent:
    """A scenario command applied at the step nearest to ``t``. Angles in rad."""
    t: float
    action: str
    value: object = None

    def __post_init__(self):
        if self.action not in EVENT_ACTIONS:
            raise DomainError(f"unknown event action {self.action!r}")
        if not (math.isfinite(self.t) and self.t >= 0):
            raise DomainError(f"event time must be finite and non-negative, got {self.t}")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    duration: float = 25.0
    record_stride: int = 10
    events: Tuple[TimedEvent, ...] = ()
    max_rate: float = 1e6
    record_strip_alpha: bool = False

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(sorted(self.events, key=lambda e: e.t)))
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise DomainError(f"dt must be positive, got {self.dt}")
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise DomainError(f"duration must be non-negative, got {self.duration}")
        if isinstance(self.record_stride, bool) or int(self.record_stride) != self.record_stride \
                or self.record_stride < 1:
            raise DomainError(f"record_stride must be an integer >= 1, got {self.record_stride}")
        if not self.max_rate > 0:
            raise DomainError(f"max_rate must be positive, got {self.max_rate}")

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def event_step(self, event: TimedEvent) -> int:
        return int(round(event.t / self.dt))


@dataclass
class SimState:
    t: float
    cpg: np.ndarray
    body: RigidBodyState
    integrators: np.ndarray

    @property
    def n(self) -> int:
        return len(self.cpg)

    def to_vector(self) -> np.ndarray:
        return np.concatenate((np.asarray(self.cpg, dtype=float).reshape(-1), self.body.to_array(),
                               np.asarray(self.integrators, dtype=float)))

    @classmethod
    def from_vector(cls, t: float, y: np.ndarray, n: int) -> "SimState":
        cpg, body, integ = _split(y, n)
        return cls(t, cpg.copy(), RigidBodyState.from_array(body), integ.copy())


def _split(y: np.ndarray, n: int):
    m = 2 * n
    return y[:m].reshape(n, 2), y[m:m + STATE_SIZE], y[m + STATE_SIZE:m + STATE_SIZE + INTEGRATOR_SIZE]


def _bias_offset(bias: np.ndarray) -> np.ndarray:
    """Biases as an (n, 2) shift of the u coordinate; v is never shifted."""
    bias = np.asarray(bias, dtype=float)
    return np.stack((bias, np.zeros_like(bias)), axis=-1)


def rk4_step(fn: Callable[[float, np.ndarray], np.ndarray], t: float, y, dt: float):
    """
    One classical Runge-Kutta step of dy/dt = fn(t, y).

    Raises SimulationAborted when a stage or the result is not finite.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    y = np.asarray(y, dtype=float)
    half = 0.5 * dt
    k1 = np.asarray(fn(t, y))
    k2 = np.asarray(fn(t + half, y + half * k1))
    k3 = np.asarray(fn(t + half, y + half * k2))
    k4 = np.asarray(fn(t + dt, y + dt * k3))
    y_next = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(y_next)):
        raise SimulationAborted("sim-engine", t, "non-finite state after RK4 step")
    return y_next


@dataclass(frozen=True)
class FlightModel:
    """Fixed physical description of one simulated vehicle."""
    topology: NetworkTopology
    roles: Tuple[str, ...]
    wing: WingGeometry = field(default_factory=WingGeometry)
    stroke: StrokeFrame = field(default_factory=lambda: StrokeFrame(math.radians(20.0)))
    aero: AeroModel = field(default_factory=AeroModel)
    aero_enabled: bool = True
    wind: Optional[np.ndarray] = None
    mass: MassProperties = field(default_factory=MassProperties)
    aux: AuxiliaryLoads = field(default_factory=AuxiliaryLoads)
    vehicle_enabled: bool = True
    correction_enabled: bool = True
    seed_fraction: float = 0.05

    @property
    def n(self) -> int:
        return self.topology.n


@dataclass
class Snapshot:
    command: ControlCommand
    shifted: np.ndarray
    dx: np.ndarray
    sync_error: float
    joints: Tuple[Optional[WingJointState], Optional[WingJointState]]
    loads: Tuple[WingLoads, WingLoads]
    force: np.ndarray
    moment: np.ndarray
    strip_alpha: Tuple[Optional[np.ndarray], Optional[np.ndarray]] = (None, None)


@dataclass
class SimResult:
    columns: List[str]
    rows: List[list] = field(default_factory=list)
    transitions: List[Tuple[float, str, str]] = field(default_factory=list)
    error: Optional[SimulationAborted] = None
    steps_completed: int = 0
    final_state: Optional[SimState] = None
    saturation_events: int = 0
    wall_time: float = 0.0

    @property
    def aborted(self) -> bool:
        return self.error is not None

    def column(self, name: str) -> np.ndarray:
        idx = self.columns.index(name)
        values = [row[idx] for row in self.rows]
        if name == "mode":
            return np.array(values, dtype=object)
        return np.array(values, dtype=float)

    def as_array(self) -> np.ndarray:
        """Numeric columns as a 2-D array; the mode column becomes sigma."""
        mode_idx = self.columns.index("mode")
        data = [[(1.0 if v == FlightMode.FLAPPING.value else -1.0) if i == mode_idx else v
                 for i, v in enumerate(row)] for row in self.rows]
        return np.array(data, dtype=float).reshape(len(self.rows), len(self.columns))


class RowWriter(Protocol):
    def write_header(self, columns: Sequence[str]): ...

    def write_row(self, row: Sequence): ...

    def write_error(self, error: SimulationAborted): ...


class Simulation:
    """
    One scenario run: owns the state vector, the controller and the
    coupling-matrix cache. Not shareable between threads.
    """

    def __init__(self, model: FlightModel, controller: Controller, initial: SimState,
                 config: SimConfig):
        self.model = model
        self.controller = controller
        self.initial = initial
        self.config = config
        self.cache = MatrixCache(model.topology)
        self.strips: StripSet = model.wing.strips()
        self.left_stroke = model.stroke.mirrored()
        self._layout = controller.layout
        if self._layout is None and model.aero_enabled:
            self._layout = WingLayout.from_roles(model.roles)
        self._flow_rates = model.aero.alpha_rate == "flow"
        self.columns = self._columns()

    @property
    def n(self) -> int:
        return self.model.n

    def _columns(self) -> List[str]:
        cols = ["t", "mode", "sigma", "omega", "k", "delta32_deg", "rho3_deg", "rho7_deg", "sync_error"]
        for i in range(1, self.n + 1):
            cols += [f"u{i}_deg", f"v{i}_deg"]
        for side in ("right", "left"):
            cols += [f"{side}_{name}_deg" for name in JOINT_NAMES]
            cols += [f"{side}_{name}_rate_dps" for name in JOINT_NAMES]
        cols += list(BODY_COLUMNS) + list(LOAD_COLUMNS)
        if self.config.record_strip_alpha:
            for side in ("right", "left"):
                cols += [f"alpha_{side}_{j + 1}_deg" for j in range(len(self.strips))]
        return cols

    def _abort(self, subsystem: str, t: float, reason: str):
        raise SimulationAborted(subsystem, t, reason)

    def _joint_states(self, cpg: np.ndarray, dx: np.ndarray, ddx: Optional[np.ndarray]):
        if self._layout is None:
            return None, None
        states = []
        for flap, pitch, lead, _ in (self._layout.right, self._layout.left):
            accel = (0.0, 0.0, 0.0) if ddx is None else (ddx[flap, 0], ddx[pitch, 0], ddx[lead, 0])
            states.append(WingJointState(
                phi=cpg[flap, 0], theta=cpg[pitch, 0], psi=cpg[lead, 0],
                phi_rate=dx[flap, 0], theta_rate=dx[pitch, 0], psi_rate=dx[lead, 0],
                phi_accel=accel[0], theta_accel=accel[1], psi_accel=accel[2]))
        return states[0], states[1]

    def evaluate(self, t: float, y: np.ndarray, full: bool = False):
        """
        Derivative of the full state at one time slice.

        Order: controller command, coupling matrices, CPG field, joint
        mapping, strip aerodynamics, body loads, rigid-body dynamics.
        Returns (dy, snapshot) where snapshot is None unless ``full``.
        """
        cpg, body_vec, integ = _split(y, self.n)
        try:
            body = RigidBodyState.from_array(body_vec)
            command = self.controller.command(body, integ)
        except (DomainError, ArithmeticError, ValueError) as e:
            self._abort("flight-control", t, str(e))

        try:
            mat = self.cache.get(command.rho, command.node_phases)
            x = cpg - _bias_offset(command.bias)
            lam = np.full(self.n, command.lam)
            correction = None
            if self.model.correction_enabled and (np.any(command.node_phase_rates)
                                                  or np.any(command.rho_rates)):
                correction = correction_feed(mat, command.node_phase_rates, command.rho_rates, x)
            dx = network_derivative(x, lam, command.rho, command.sigma, command.omega, command.k,
                                    mat.G, correction)
        except (DomainError, ArithmeticError, ValueError) as e:
            self._abort("oscillator-network", t, str(e))
        if not np.all(np.isfinite(dx)):
            self._abort("oscillator-network", t, "non-finite oscillator derivative")

        ddx = None
        if self._flow_rates:
            ddx = network_second_derivative(x, dx, lam, command.rho, command.sigma, command.omega,
                                            command.k, mat.G)
        joints = self._joint_states(cpg, dx, ddx)

        loads = (WingLoads.zero(), WingLoads.zero())
        alphas = (None, None)
        if self.model.aero_enabled:
            try:
                results = []
                flows = []
                for joint, frame in zip(joints, (self.model.stroke, self.left_stroke)):
                    flow = wing_flow(body, frame, joint, self.strips, self.model.wind, self._flow_rates)
                    flows.append(flow)
                    results.append(integrate_wing(flow, self.strips, joint, frame, self.model.aero))
                loads = tuple(results)
                alphas = tuple(np.asarray(f.alpha) for f in flows)
            except (DomainError, ArithmeticError, ValueError) as e:
                self._abort("aerodynamics", t, str(e))
            for wing in loads:
                if not (np.all(np.isfinite(wing.f_body)) and np.all(np.isfinite(wing.m_body))):
                    self._abort("aerodynamics", t, "non-finite wing loads")

        extra_force, extra_moment = body_loads(body, self.model.aux, self.model.aero.air_density)
        force = loads[0].f_body + loads[1].f_body + extra_force
        moment = loads[0].m_body + loads[1].m_body + extra_moment

        d_body = np.zeros(STATE_SIZE)
        if self.model.vehicle_enabled:
            try:
                d_body = rigid_body_derivative(body, force, moment, self.model.mass)
            except (DomainError, ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
                self._abort("vehicle-dynamics", t, str(e))
            if not np.all(np.isfinite(d_body)):
                self._abort("vehicle-dynamics", t, "non-finite body derivative")

        d_integ = self.controller.integrator_rates(body, integ)
        if not np.all(np.isfinite(d_integ)):
            self._abort("flight-control", t, "non-finite controller integrator rate")

        limit = self.config.max_rate
        for name, part in (("oscillator-network", dx), ("vehicle-dynamics", d_body),
                           ("flight-control", d_integ)):
            peak = float(np.max(np.abs(part))) if np.size(part) else 0.0
            if peak > limit:
                self._abort(name, t, f"derivative magnitude {peak:.3g} exceeds sanity limit {limit:.3g}")

        # raw u_i = x_i + a_i, so a moving bias feeds straight into du_i/dt
        du = dx.copy()
        du[:, 0] += self.controller.bias_rates(body, d_body)
        dy = np.concatenate((du.reshape(-1), d_body, d_integ))
        if not full:
            return dy, None
        snapshot = Snapshot(command=command, shifted=x, dx=dx, sync_error=float(sync_error(x, mat)),
                            joints=joints, loads=loads, force=force, moment=moment, strip_alpha=alphas)
        return dy, snapshot

    def assemble_derivative(self, t: float, y: np.ndarray) -> np.ndarray:
        return self.evaluate(t, y)[0]

    def _row(self, t: float, y: np.ndarray, snap: Snapshot) -> list:
        cpg, body_vec, _ = _split(y, self.n)
        cmd = snap.command
        deg = math.degrees
        if self._layout is not None:
            rho3, rho7 = cmd.rho[self._layout.right[2]], cmd.rho[self._layout.left[2]]
        else:
            rho3 = rho7 = math.nan
        row = [t, cmd.mode.value, cmd.sigma, cmd.omega, cmd.k, deg(cmd.delta32), deg(rho3), deg(rho7),
               snap.sync_error]
        row += [deg(v) for v in cpg.reshape(-1)]
        for joint in snap.joints:
            if joint is None:
                row += [math.nan] * 6
            else:
                row += [deg(joint.phi), deg(joint.theta), deg(joint.psi),
                        deg(joint.phi_rate), deg(joint.theta_rate), deg(joint.psi_rate)]
        body = body_vec.tolist()
        row += body[0:3] + [deg(v) for v in body[3:9]] + body[9:12]
        row += snap.force.tolist() + snap.moment.tolist()
        if self.config.record_strip_alpha:
            for alpha in snap.strip_alpha:
                if alpha is None:
                    row += [math.nan] * len(self.strips)
                else:
                    row += np.degrees(alpha).tolist()
        return [float(v) if isinstance(v, (np.floating, np.integer)) else v for v in row]

    def _reseed(self, y: np.ndarray) -> np.ndarray:
        """Lift oscillators resting near their bias back onto the synchronized cycle."""
        body = RigidBodyState.from_array(_split(y, self.n)[1])
        command = self.controller.command(body, _split(y, self.n)[2])
        cpg = _split(y, self.n)[0].copy()
        x = cpg - _bias_offset(command.bias)
        radius = np.hypot(x[:, 0], x[:, 1])
        small = radius < self.model.seed_fraction * command.rho
        if not np.any(small):
            return y
        live = np.flatnonzero(~small)
        angle = 0.0
        if len(live):
            j = live[0]
            angle = float(math.atan2(x[j, 1], x[j, 0]) - command.node_phases[j])
        theta = angle + command.node_phases[small]
        x[small, 0] = command.rho[small] * np.cos(theta)
        x[small, 1] = command.rho[small] * np.sin(theta)
        logger.info(f"Re-seeded {int(np.sum(small))} oscillators onto the synchronized cycle")
        out = y.copy()
        out[:2 * self.n] = (x + _bias_offset(command.bias)).reshape(-1)
        return out

    def _apply_events(self, step: int, pending: List[TimedEvent]) -> List[TimedEvent]:
        remaining = []
        for event in pending:
            if self.config.event_step(event) == step:
                self.controller.apply_event(event.action, event.value)
                logger.info(f"Event {event.action} applied at step {step} (requested t={event.t:g}s)")
            else:
                remaining.append(event)
        return remaining

    def run(self, writer: Optional[RowWriter] = None) -> SimResult:
        """
        Integrate from t=0 to the configured duration and record every
        ``record_stride``-th step. An abort keeps the rows recorded so far.
        """
        started = time.perf_counter()
        cfg = self.config
        result = SimResult(columns=list(self.columns))
        if writer is not None:
            writer.write_header(result.columns)
        steps = cfg.steps
        y = self.initial.to_vector()
        self.controller.state.load_integrators(_split(y, self.n)[2])
        if steps == 0:
            result.final_state = SimState.from_vector(0.0, y, self.n)
            return result

        pending = list(cfg.events)
        logger.info(f"Running {steps} steps at dt={cfg.dt:g}s ({self.n} oscillators)")
        t = 0.0
        try:
            for idx in range(steps + 1):
                t = idx * cfg.dt
                pending = self._apply_events(idx, pending)
                y = self._update_mode(t, y, result)
                if idx % cfg.record_stride == 0:
                    _, snap = self.evaluate(t, y, full=True)
                    row = self._row(t, y, snap)
                    result.rows.append(row)
                    if writer is not None:
                        writer.write_row(row)
                if idx == steps:
                    break
                y = rk4_step(self.assemble_derivative, t, y, cfg.dt)
                cpg, body_vec, integ = _split(y, self.n)
                integ[:] = self.controller.clamp_integrators(integ)
                self.controller.state.load_integrators(integ)
                result.steps_completed = idx + 1
                if self.controller.laws_enabled:
                    body = RigidBodyState.from_array(body_vec)
                    self.controller.note_saturation(t + cfg.dt, self.controller.command(body, integ).saturated)
        except SimulationAborted as e:
            logger.error(f"Simulation aborted: {e}")
            result.error = e
            if writer is not None:
                writer.write_error(e)

        result.final_state = SimState.from_vector(t, y, self.n)
        result.saturation_events = self.controller.saturation_events
        result.wall_time = time.perf_counter() - started
        logger.info(f"Run finished: {len(result.rows)} rows, {len(result.transitions)} mode transitions, "
                    f"{result.wall_time:.2f}s wall clock")
        return result

    def _update_mode(self, t: float, y: np.ndarray, result: SimResult) -> np.ndarray:
        body = RigidBodyState.from_array(_split(y, self.n)[1])
        transition = self.controller.update_mode(t, body)
        if transition is None:
            return y
        old, new = transition
        result.transitions.append((t, old.value, new.value))
        y = y.copy()
        _, _, integ = _split(y, self.n)
        integ[:] = self.controller.state.integrators()
        if new is FlightMode.FLAPPING:
            y = self._reseed(y)
        return y


def run_scenario(scenario, config: Optional[SimConfig] = None,
                 writer: Optional[RowWriter] = None) -> SimResult:
    """Build a fresh simulation from a parsed scenario and run it."""
    return scenario.build_simulation(config).run(writer)
