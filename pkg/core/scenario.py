"""
Scenario files: parsing, validation, serialization and simulation assembly.

A scenario is a JSON document with the sections oscillators, topology,
wing, aero, vehicle, control, sim and events. Values are kept in file units
(angles in degrees, SI otherwise) so a parsed scenario serializes back to
an identical document; conversion to radians happens when the runtime
objects are built.
"""

import dataclasses
import hashlib
import json
import logging
import math
import os
import typing
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np

from core.aerodynamics import AeroModel, ConstantCoefficients, DickinsonCoefficients, SinusoidCoefficient
from core.controller import (ControlGains, Controller, FlightMode, ModeParameters, PidGains,
                             SwitchThresholds, WingLayout)
from core.dynamics import AuxiliaryLoads, MassProperties, RigidBodyState
from core.engine import EVENT_ACTIONS, FlightModel, SimConfig, SimState, Simulation, TimedEvent
from core.errors import DomainError, ScenarioError, TopologyError
from core.kinematics import StrokeFrame, WingGeometry
from core.topology import CONFIG_A_EDGES, CONFIG_A_JOINTS, Edge, NetworkTopology, validate_topology

logger = logging.getLogger(__name__)

REQUIRED_SECTIONS = ("oscillators", "topology")
INITIAL_MODES = ("synchronized", "bias", "random")
COEFFICIENT_MODELS = ("dickinson", "constant")

# Reference radii; the second flapping joint uses 30 deg.
REFERENCE_RHO_DEG = (50.0, 30.0, 15.0, 30.0, 50.0, 30.0, 15.0, 30.0)
CONFIG_A_PHASES_DEG = (0.0, 90.0, -90.0, -90.0, 0.0, 90.0, -90.0, -90.0)
REFERENCE_BIAS_DEG = (0.0, 0.0, -5.0, 0.0, 0.0, 0.0, -5.0, 0.0)


def _wrap_deg(angle: float) -> float:
    return (angle + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class NodeSpec:
    joint: str
    rho_deg: float
    a_deg: float = 0.0
    state_deg: Optional[Tuple[float, float]] = None


@dataclass(frozen=True)
class EdgeSpec:
    to: int
    source: int
    delta_deg: float


def _reference_nodes() -> Tuple[NodeSpec, ...]:
    return tuple(NodeSpec(joint, rho, a) for joint, rho, a in zip(CONFIG_A_JOINTS, REFERENCE_RHO_DEG, REFERENCE_BIAS_DEG))


def _config_a_edges() -> Tuple[EdgeSpec, ...]:
    phases = CONFIG_A_PHASES_DEG
    return tuple(EdgeSpec(i, j, _wrap_deg(phases[i - 1] - phases[j - 1])) for i, j in CONFIG_A_EDGES)


@dataclass(frozen=True)
class OscillatorsSection:
    omega0: float = 15.0
    sigma0: int = -1
    lambda_flap: float = 10.0
    lambda_glide: float = 30.0
    seed_fraction: float = 0.05
    initial: str = "synchronized"
    seed: int = 0
    nodes: Tuple[NodeSpec, ...] = field(default_factory=_reference_nodes)


@dataclass(frozen=True)
class TopologySection:
    k: float = 60.0
    k_glide: float = 0.0
    edges: Tuple[EdgeSpec, ...] = field(default_factory=_config_a_edges)


@dataclass(frozen=True)
class WingSection:
    span: float = 0.32
    chord: float = 0.15
    chord_table: Tuple[Tuple[float, float], ...] = ()
    dr: float = 0.01
    theta_s_deg: float = 20.0
    theta_s_rate_dps: float = 0.0
    offset: Tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class CoefficientSpec:
    offset: float
    amplitude: float
    slope: float
    shift_deg: float


@dataclass(frozen=True)
class AeroSection:
    enabled: bool = True
    air_density: float = 1.225
    x0_hat: float = 0.25
    model: str = "dickinson"
    lift: CoefficientSpec = CoefficientSpec(**DickinsonCoefficients().lift.as_dict())
    drag: CoefficientSpec = CoefficientSpec(**DickinsonCoefficients().drag.as_dict())
    constant_cl: float = 1.0
    constant_cd: float = 0.0
    cl0: float = 0.0
    cm0: float = -0.2
    cm_alpha: float = -0.12
    cn0: float = 0.0
    alpha_rate: str = "pitch"
    wind: Tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class InitialBodySection:
    velocity: Tuple[float, float, float] = (6.0, 0.0, 0.0)
    rates_dps: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    euler_deg: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    position: Tuple[float, float, float] = (0.0, 0.0, -8.0)


@dataclass(frozen=True)
class VehicleSection:
    enabled: bool = True
    mass: float = 0.3
    inertia: Tuple[Tuple[float, float, float], ...] = (
        (0.0012, 0.0, 0.0), (0.0, 0.0012, 0.0), (0.0, 0.0, 0.0012))
    gravity: float = 9.81
    body_cm0: float = 0.1
    body_cm_alpha: float = -0.2
    s_ref: Optional[float] = None
    c_ref: Optional[float] = None
    extra_force: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    initial: InitialBodySection = InitialBodySection()


@dataclass(frozen=True)
class PidSpec:
    kp: float = 0.0
    kd: float = 0.0
    ki: float = 0.0


@dataclass(frozen=True)
class ThresholdSpec:
    h_max_flap: float = 10.0
    h_min_glide: float = 5.0
    v_x_max: float = 5.0
    v_x_min: float = 3.0
    dwell: float = 0.5


@dataclass(frozen=True)
class ControlSection:
    enabled: bool = True
    correction_feed: bool = True
    flap2_follows: str = "leadlag"
    k_omega: float = 2.0
    v_x_desired: float = 6.0
    omega_min: float = 1.0
    omega_max: float = 80.0
    k_delta32: float = 1.0
    delta0_deg: float = -180.0
    k_r_roll: float = 0.3
    rho3_nominal_deg: float = 15.0
    rho7_nominal_deg: float = 15.0
    rho_min_deg: float = 1.0
    delta_offset_deg: float = 0.0
    delta_law_enabled: bool = False
    glide_pid: PidSpec = PidSpec(1.0, 0.1, 0.5)
    psi_bias_deg: float = -5.0
    flap_pid: PidSpec = PidSpec()
    flap_bias_deg: float = 0.0
    pitch_bias_integral_gain: float = 0.2
    thresholds: ThresholdSpec = ThresholdSpec()


@dataclass(frozen=True)
class SimSection:
    dt: float = 0.001
    duration: float = 25.0
    record_stride: int = 10
    max_rate: float = 1e6
    record_strip_alpha: bool = False


@dataclass(frozen=True)
class EventSpec:
    t: float
    action: str
    value: Optional[typing.Union[bool, float]] = None


@dataclass(frozen=True)
class Scenario:
    """A validated scenario in file units. Build runtime objects with the helper methods."""
    oscillators: OscillatorsSection
    topology: TopologySection
    wing: WingSection = WingSection()
    aero: AeroSection = AeroSection()
    vehicle: VehicleSection = VehicleSection()
    control: ControlSection = ControlSection()
    sim: SimSection = SimSection()
    events: Tuple[EventSpec, ...] = ()
    name: str = "scenario"

    @property
    def n(self) -> int:
        return len(self.oscillators.nodes)

    @property
    def roles(self) -> Tuple[str, ...]:
        return tuple(node.joint for node in self.oscillators.nodes)

    def to_dict(self) -> Dict[str, Any]:
        return _dump(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def digest(self) -> str:
        """SHA-256 of the canonical serialized form."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_sim(self, **changes) -> "Scenario":
        return replace(self, sim=replace(self.sim, **changes))

    # Runtime objects (SI, radians)

    def network_topology(self, k: Optional[float] = None) -> NetworkTopology:
        edges = tuple(Edge(e.to, e.source, math.radians(e.delta_deg)) for e in self.topology.edges)
        return NetworkTopology(n=self.n, edges=edges, k=self.topology.k if k is None else k)

    def radii(self) -> np.ndarray:
        return np.radians([node.rho_deg for node in self.oscillators.nodes])

    def biases(self) -> np.ndarray:
        return np.radians([node.a_deg for node in self.oscillators.nodes])

    def node_phases(self) -> np.ndarray:
        report = validate_topology(self.network_topology())
        report.raise_for_errors()
        return report.node_phases

    def wing_geometry(self) -> WingGeometry:
        w = self.wing
        return WingGeometry(span=w.span, chord=w.chord, dr=w.dr, chord_table=w.chord_table)

    def stroke_frame(self) -> StrokeFrame:
        w = self.wing
        return StrokeFrame(math.radians(w.theta_s_deg), math.radians(w.theta_s_rate_dps),
                           np.array(w.offset, dtype=float), "right")

    def aero_model(self) -> AeroModel:
        a = self.aero
        if a.model == "constant":
            coefficients = ConstantCoefficients(a.constant_cl, a.constant_cd)
        else:
            coefficients = DickinsonCoefficients(SinusoidCoefficient(**dataclasses.asdict(a.lift)),
                                                 SinusoidCoefficient(**dataclasses.asdict(a.drag)))
        return AeroModel(coefficients=coefficients, x0_hat=a.x0_hat, air_density=a.air_density,
                         cl0=a.cl0, cm0=a.cm0, cm_alpha=a.cm_alpha, cn0=a.cn0, alpha_rate=a.alpha_rate)

    def mass_properties(self) -> MassProperties:
        v = self.vehicle
        return MassProperties(mass=v.mass, inertia=np.array(v.inertia, dtype=float), gravity=v.gravity)

    def auxiliary_loads(self) -> AuxiliaryLoads:
        v = self.vehicle
        geometry = self.wing_geometry()
        s_ref = 2.0 * geometry.area if v.s_ref is None else v.s_ref
        c_ref = self.wing.chord if v.c_ref is None else v.c_ref
        return AuxiliaryLoads(cm0=v.body_cm0, cm_alpha=v.body_cm_alpha, s_ref=s_ref, c_ref=c_ref,
                              extra_force=v.extra_force)

    def initial_body(self) -> RigidBodyState:
        init = self.vehicle.initial
        return RigidBodyState(np.array(init.velocity, dtype=float), np.radians(init.rates_dps),
                              np.radians(init.euler_deg), np.array(init.position, dtype=float))

    def control_gains(self) -> ControlGains:
        c = self.control
        rad = math.radians
        return ControlGains(
            k_omega=c.k_omega, v_x_desired=c.v_x_desired, omega_min=c.omega_min, omega_max=c.omega_max,
            k_delta32=c.k_delta32, delta0=rad(c.delta0_deg), k_r_roll=c.k_r_roll,
            rho3_nominal=rad(c.rho3_nominal_deg), rho7_nominal=rad(c.rho7_nominal_deg),
            rho_min=rad(c.rho_min_deg), delta_offset=rad(c.delta_offset_deg),
            delta_law_enabled=c.delta_law_enabled,
            glide_pid=PidGains(c.glide_pid.kp, c.glide_pid.kd, c.glide_pid.ki), psi_bias=rad(c.psi_bias_deg),
            flap_pid=PidGains(c.flap_pid.kp, c.flap_pid.kd, c.flap_pid.ki), flap_bias=rad(c.flap_bias_deg),
            pitch_bias_integral_gain=c.pitch_bias_integral_gain)

    def switch_thresholds(self) -> SwitchThresholds:
        return SwitchThresholds(**dataclasses.asdict(self.control.thresholds))

    def mode_parameters(self) -> ModeParameters:
        o = self.oscillators
        return ModeParameters(k_flap=self.topology.k, k_glide=self.topology.k_glide,
                              lambda_flap=o.lambda_flap, lambda_glide=o.lambda_glide)

    def timed_events(self) -> Tuple[TimedEvent, ...]:
        out = []
        for e in self.events:
            value = e.value
            if EVENT_ACTIONS[e.action] == "deg" and value is not None:
                value = math.radians(value)
            out.append(TimedEvent(e.t, e.action, value))
        return tuple(out)

    def sim_config(self) -> SimConfig:
        s = self.sim
        return SimConfig(dt=s.dt, duration=s.duration, record_stride=s.record_stride,
                         events=self.timed_events(), max_rate=s.max_rate,
                         record_strip_alpha=s.record_strip_alpha)

    def initial_cpg(self, phases: Optional[np.ndarray] = None) -> np.ndarray:
        """Raw oscillator coordinates (n, 2) at t=0 in radians."""
        o = self.oscillators
        rho, bias = self.radii(), self.biases()
        if o.initial == "synchronized":
            phases = self.node_phases() if phases is None else phases
            x = rho[:, None] * np.stack((np.cos(phases), np.sin(phases)), axis=-1)
        elif o.initial == "random":
            x = np.random.default_rng(o.seed).uniform(-1.0, 1.0, size=(self.n, 2))
        else:
            x = np.zeros((self.n, 2))
        raw = x + np.stack((bias, np.zeros(self.n)), axis=-1)
        for i, node in enumerate(o.nodes):
            if node.state_deg is not None:
                raw[i] = np.radians(node.state_deg)
        return raw

    def build_simulation(self, config: Optional[SimConfig] = None) -> Simulation:
        """Assemble a fresh Simulation; every call gets its own controller state."""
        topo = self.network_topology()
        phases = self.node_phases()
        c = self.control
        model = FlightModel(
            topology=topo, roles=self.roles, wing=self.wing_geometry(), stroke=self.stroke_frame(),
            aero=self.aero_model(), aero_enabled=self.aero.enabled,
            wind=np.array(self.aero.wind, dtype=float) if any(self.aero.wind) else None,
            mass=self.mass_properties(), aux=self.auxiliary_loads(), vehicle_enabled=self.vehicle.enabled,
            correction_enabled=c.correction_feed, seed_fraction=self.oscillators.seed_fraction)
        controller = Controller(
            gains=self.control_gains(), thresholds=self.switch_thresholds(), modes=self.mode_parameters(),
            nominal_rho=self.radii(), nominal_bias=self.biases(), nominal_phases=phases, roles=self.roles,
            omega0=self.oscillators.omega0, initial_mode=FlightMode.from_sigma(self.oscillators.sigma0),
            laws_enabled=c.enabled, flap2_follows=c.flap2_follows)
        initial = SimState(0.0, self.initial_cpg(phases), self.initial_body(),
                           np.array([self.oscillators.omega0, 0.0, 0.0]))
        return Simulation(model, controller, initial, config or self.sim_config())


# Generic dataclass <-> JSON conversion

def _dump(value):
    if dataclasses.is_dataclass(value):
        out = {}
        for f in dataclasses.fields(value):
            out[_json_key(f.name)] = _dump(getattr(value, f.name))
        return out
    if isinstance(value, tuple):
        return [_dump(v) for v in value]
    return value


def _json_key(name: str) -> str:
    return "from" if name == "source" else name


def _attr_name(key: str) -> str:
    return "source" if key == "from" else key


def _type_name(tp) -> str:
    return getattr(tp, "__name__", str(tp))


def _coerce(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        options = [a for a in args if a is not type(None)]
        if len(options) == 1:
            return _coerce(options[0], value, path)
        for option in options:
            if option is bool and isinstance(value, bool):
                return value
            if option is float and isinstance(value, (int, float)) and not isinstance(value, bool):
                return _coerce(float, value, path)
        raise ScenarioError(f"expected one of {[_type_name(o) for o in options]}, got {value!r}", path)
    if origin is tuple:
        if not isinstance(value, list):
            raise ScenarioError(f"expected a list, got {type(value).__name__}", path)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ScenarioError(f"expected {len(args)} values, got {len(value)}", path)
        return tuple(_coerce(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if dataclasses.is_dataclass(tp):
        return _parse_dataclass(tp, value, path)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScenarioError(f"expected a number, got {value!r}", path)
        if not math.isfinite(value):
            raise ScenarioError("value must be finite", path)
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ScenarioError(f"expected an integer, got {value!r}", path)
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ScenarioError(f"expected true or false, got {value!r}", path)
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ScenarioError(f"expected a string, got {value!r}", path)
        return value
    raise ScenarioError(f"unsupported field type {tp!r}", path)


def _parse_dataclass(cls, data, path: str):
    if not isinstance(data, dict):
        raise ScenarioError(f"expected an object, got {type(data).__name__}", path or None)
    hints = typing.get_type_hints(cls)
    known = {_json_key(f.name): f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            where = f"{path}.{key}" if path else key
            raise ScenarioError(f"unknown key '{key}'", where)
    kwargs = {}
    for key, f in known.items():
        where = f"{path}.{key}" if path else key
        if key in data:
            kwargs[f.name] = _coerce(hints[f.name], data[key], where)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ScenarioError("missing required field", where)
    return cls(**kwargs)


# Semantic validation

def _check(condition: bool, message: str, path: str):
    if not condition:
        raise ScenarioError(message, path)


def _validate(sc: Scenario):
    o = sc.oscillators
    _check(len(o.nodes) >= 1, "at least one oscillator node is required", "oscillators.nodes")
    _check(o.sigma0 in (1, -1), f"sigma0 must be +1 or -1, got {o.sigma0}", "oscillators.sigma0")
    _check(o.omega0 >= 0, "omega0 must be non-negative", "oscillators.omega0")
    _check(o.lambda_flap > 0, "lambda_flap must be positive", "oscillators.lambda_flap")
    _check(o.lambda_glide > 0, "lambda_glide must be positive", "oscillators.lambda_glide")
    _check(0 <= o.seed_fraction < 1, "seed_fraction must lie in [0, 1)", "oscillators.seed_fraction")
    _check(o.initial in INITIAL_MODES, f"initial must be one of {INITIAL_MODES}", "oscillators.initial")
    for i, node in enumerate(o.nodes):
        _check(node.rho_deg > 0, f"rho_deg must be positive, got {node.rho_deg}",
               f"oscillators.nodes[{i}].rho_deg")
    _check(sc.topology.k >= 0, "coupling gain k must be non-negative", "topology.k")
    _check(sc.topology.k_glide >= 0, "coupling gain k_glide must be non-negative", "topology.k_glide")

    report = validate_topology(sc.network_topology())
    if not report.valid:
        field_path = "topology.edges"
        if report.offending and report.offending.startswith("edge "):
            field_path = f"topology.edges[{report.offending.split()[1]}]"
        elif report.offending and report.offending.startswith("cycle through edge "):
            field_path = f"topology.edges[{report.offending.split()[3]}]"
        raise ScenarioError(report.errors[0], field_path)
    _check(report.connected, "coupling graph is disconnected", "topology.edges")

    wing_roles_needed = sc.control.enabled or sc.aero.enabled
    if wing_roles_needed:
        try:
            WingLayout.from_roles(sc.roles)
        except DomainError as e:
            where = "control.enabled" if sc.control.enabled else "aero.enabled"
            raise ScenarioError(f"{e} (name the nodes with wing joint roles or disable it)", where)

    _check(sc.aero.model in COEFFICIENT_MODELS, f"model must be one of {COEFFICIENT_MODELS}", "aero.model")
    _check(sc.control.flap2_follows in ("leadlag", "flap"), "flap2_follows must be 'leadlag' or 'flap'",
           "control.flap2_follows")
    for i, e in enumerate(sc.events):
        where = f"events[{i}]"
        _check(e.action in EVENT_ACTIONS, f"unknown action '{e.action}'", f"{where}.action")
        kind = EVENT_ACTIONS[e.action]
        if kind is None:
            _check(e.value is None, f"{e.action} takes no value", f"{where}.value")
        elif kind == "bool":
            _check(isinstance(e.value, bool), f"{e.action} needs true or false", f"{where}.value")
        elif e.action != "enable_delta_law" or e.value is not None:
            _check(isinstance(e.value, float), f"{e.action} needs a numeric value", f"{where}.value")
        _check(e.t >= 0, "event time must be non-negative", f"{where}.t")

    builders = (("wing", sc.wing_geometry), ("wing", sc.stroke_frame), ("aero", sc.aero_model),
                ("vehicle", sc.mass_properties), ("vehicle", sc.auxiliary_loads),
                ("control", sc.control_gains), ("control.thresholds", sc.switch_thresholds),
                ("sim", sc.sim_config))
    for section, build in builders:
        try:
            build()
        except (DomainError, TopologyError) as e:
            raise ScenarioError(str(e), section)
    _check(sc.sim.duration < 1e7, "duration is unreasonably long", "sim.duration")


def scenario_from_dict(data, source: Optional[str] = None) -> Scenario:
    """Validate a decoded document and apply defaults."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object", source=source)
    for section in REQUIRED_SECTIONS:
        if section not in data:
            raise ScenarioError(f"missing required section: {section}", source=source)
    try:
        scenario = _parse_dataclass(Scenario, data, "")
        _validate(scenario)
    except ScenarioError as e:
        if e.source is None:
            raise ScenarioError(e.message, e.field, e.line, source) from None
        raise
    return scenario


def loads_scenario(text: str, source: Optional[str] = None, default_name: Optional[str] = None) -> Scenario:
    if not text.strip():
        return scenario_from_dict({}, source)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"syntax error: {e.msg}", line=e.lineno, source=source)
    if default_name is not None and isinstance(data, dict) and "name" not in data:
        data = dict(data, name=default_name)
    return scenario_from_dict(data, source)


def parse_scenario(path: str) -> Scenario:
    """
    Read and validate a scenario file.

    Args:
        path: Path to a JSON scenario

    Returns:
        Validated Scenario with every default applied

    Raises:
        ScenarioError: Syntax, unknown key, unit or topology problem
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario: {e.strerror}", source=path)
    default_name = os.path.splitext(os.path.basename(path))[0]
    scenario = loads_scenario(text, source=path, default_name=default_name)
    logger.info(f"Loaded scenario {scenario.name} from {path} ({scenario.n} oscillators)")
    return scenario


def dump_scenario(scenario: Scenario, path: str):
    with open(path, "w", encoding="utf-8") as f:
        f.write(scenario.to_json())
        f.write("\n")


def default_scenario(**sections) -> Scenario:
    """Reference flight defaults, optionally with whole sections replaced."""
    return Scenario(oscillators=sections.pop("oscillators", OscillatorsSection()),
                    topology=sections.pop("topology", TopologySection()), **sections)


def bundled_scenarios_dir() -> str:
    return os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "assets", "scenarios")
