"""
Studies built on top of the simulator: synchronization reports, decay-rate
fits, the time-varying phase comparison, the pitch-synchronization lift
study, phase sweeps and flight-run summaries.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.aerodynamics import AeroModel, integrate_wing
from core.controller import correction_feed
from core.dynamics import RigidBodyState, euler_rates
from core.engine import SimResult, rk4_step
from core.errors import DomainError
from core.kinematics import StrokeFrame, WingGeometry, WingJointState, wing_flow
from core.oscillator import network_derivative
from core.topology import (MatrixCache, NetworkTopology, SyncThreshold, build_matrices, config_a,
                           config_a_phases, sync_error, sync_gain_threshold, topology_from_node_phases)

logger = logging.getLogger(__name__)


@dataclass
class SyncReport:
    lambda_min: float
    k_min: float
    k: float
    lam: float
    verifiable: bool
    satisfied: bool
    verdict: str
    contraction_rate: float
    measured_rate: Optional[float] = None

    def lines(self) -> List[str]:
        out = [f"lambda_min = {self.lambda_min:.6f}",
               f"k_min      = {self.k_min:.4f} (lambda = {self.lam:g})",
               f"verdict    : {self.verdict}"]
        if self.verifiable:
            out.append(f"guaranteed contraction rate k*lambda_min - lambda = {self.contraction_rate:.4f} 1/s")
        if self.measured_rate is not None:
            out.append(f"measured decay rate = {self.measured_rate:.4f} 1/s")
        return out


def sync_report(topo: NetworkTopology, rho: Sequence[float], lam: float,
                k: Optional[float] = None) -> SyncReport:
    """Gain-threshold verdict for one topology at convergence rate ``lam``."""
    mat = build_matrices(topo, rho)
    threshold: SyncThreshold = sync_gain_threshold(mat, lam)
    k = topo.k if k is None else k
    rate = k * threshold.lambda_min - lam if threshold.verifiable else math.nan
    return SyncReport(lambda_min=threshold.lambda_min, k_min=threshold.k_min, k=k, lam=lam,
                      verifiable=threshold.verifiable, satisfied=threshold.satisfied_by(k),
                      verdict=threshold.verdict(k), contraction_rate=rate)


def integrate_network(x0: np.ndarray, topo: NetworkTopology, rho: Sequence[float], lam: float,
                      omega: float, duration: float, dt: float = 1e-3, sigma: int = 1,
                      phases_fn: Optional[Callable[[float], Tuple[np.ndarray, np.ndarray]]] = None,
                      corrected: bool = True, sample_every: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integrate one or many independent copies of a coupled network with RK4.

    Args:
        x0: Shifted initial states, shape (n, 2) or (trials, n, 2)
        topo: Coupling graph; its k is used
        rho: Radii (rad)
        lam: Convergence rate
        omega: Shared frequency (rad/s)
        duration: Simulated time (s)
        dt: Step (s)
        sigma: Bifurcation parameter
        phases_fn: Optional t -> (node phases, node phase rates) for time-varying shifts
        corrected: Subtract T^-1 dT/dt {x} when the phases vary
        sample_every: Record every this many steps

    Returns:
        (times, sync errors) with errors of shape (samples,) or (samples, trials)
    """
    rho = np.asarray(rho, dtype=float)
    lam_vec = np.full(topo.n, lam)
    cache = MatrixCache(topo)
    zero_rates = np.zeros(topo.n)

    def matrices(t):
        if phases_fn is None:
            return cache.get(rho), zero_rates
        phases, rates = phases_fn(t)
        return cache.get(rho, phases), rates

    def field_fn(t, x):
        mat, rates = matrices(t)
        correction = None
        if corrected and phases_fn is not None:
            if x.ndim == 3:
                correction = np.stack([correction_feed(mat, rates, zero_rates, xi) for xi in x])
            else:
                correction = correction_feed(mat, rates, zero_rates, x)
        return network_derivative(x, lam_vec, rho, sigma, omega, topo.k, mat.G, correction)

    x = np.array(x0, dtype=float)
    steps = int(round(duration / dt))
    times, errors = [], []
    for idx in range(steps + 1):
        t = idx * dt
        if idx % sample_every == 0:
            times.append(t)
            errors.append(sync_error(x, matrices(t)[0]))
        if idx < steps:
            x = rk4_step(field_fn, t, x, dt)
    return np.array(times), np.array(errors, dtype=float)


def fit_decay_rate(times: np.ndarray, errors: np.ndarray, transient: float = 0.2,
                   floor: float = 1e-12) -> float:
    """Exponential decay rate from a least-squares line through log(error)."""
    times, errors = np.asarray(times), np.asarray(errors)
    mask = (times >= transient) & (errors > floor)
    if np.count_nonzero(mask) < 2:
        raise DomainError("not enough samples above the noise floor to fit a decay rate")
    slope, _ = np.polyfit(times[mask], np.log(errors[mask]), 1)
    return float(-slope)


def decay_bound_violations(times: np.ndarray, errors: np.ndarray, rate: float, transient: float = 0.2,
                           margin: float = 0.05, floor: float = 1e-12) -> int:
    """
    Count samples exceeding C exp(-rate (t - t0)) with C the error at the
    end of the transient and a relative margin.
    """
    times, errors = np.asarray(times), np.asarray(errors)
    start = int(np.searchsorted(times, transient))
    if start >= len(times):
        return 0
    c0 = errors[start]
    bound = c0 * np.exp(-rate * (times[start:] - times[start])) * (1.0 + margin)
    tail = errors[start:]
    return int(np.count_nonzero((tail > bound) & (tail > floor)))


def measure_decay(topo: NetworkTopology, rho: Sequence[float], lam: float, omega: float = 10.0,
                  duration: float = 2.0, dt: float = 1e-3, seed: int = 0) -> float:
    """Decay rate of the sync error from one random start in [-1, 1]^2n."""
    x0 = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(topo.n, 2))
    times, errors = integrate_network(x0, topo, rho, lam, omega, duration, dt)
    return fit_decay_rate(times, errors)


@dataclass
class PhaseStudy:
    times: np.ndarray
    corrected: np.ndarray
    uncorrected: np.ndarray
    transient: float

    def steady(self) -> Tuple[np.ndarray, np.ndarray]:
        mask = self.times >= self.transient
        return self.corrected[mask], self.uncorrected[mask]

    @property
    def corrected_peak(self) -> float:
        return float(np.max(self.steady()[0]))

    @property
    def corrected_mean(self) -> float:
        return float(np.mean(self.steady()[0]))

    @property
    def uncorrected_mean(self) -> float:
        return float(np.mean(self.steady()[1]))


def time_varying_phase_study(k: float = 60.0, lam: float = 10.0, omega: float = 10.0,
                             base_deg: float = 90.0, amplitude_deg: float = 20.0, rate: float = 2.0,
                             duration: float = 6.0, dt: float = 1e-3, transient: float = 1.0,
                             rho_deg: Sequence[float] = (50, 30, 15, 30, 50, 30, 15, 30)) -> PhaseStudy:
    """
    Eight-joint network with Delta_32(t) = base + amplitude sin(rate t) on
    both wings, integrated with and without the T^-1 dT/dt correction from
    the same synchronized start.
    """
    rho = np.radians(rho_deg)
    topo = config_a(k=k)
    nominal = config_a_phases()
    base, amp = math.radians(base_deg), math.radians(amplitude_deg)

    def phases_fn(t):
        d32 = base + amp * math.sin(rate * t)
        d32_rate = amp * rate * math.cos(rate * t)
        phases = nominal.copy()
        rates = np.zeros(8)
        for pitch, lead, flap2 in ((1, 2, 3), (5, 6, 7)):
            phases[lead] = phases[pitch] + d32
            phases[flap2] = phases[lead]
            rates[lead] = rates[flap2] = d32_rate
        return phases, rates

    phases0, _ = phases_fn(0.0)
    x0 = rho[:, None] * np.stack((np.cos(phases0), np.sin(phases0)), axis=-1)
    times, corrected = integrate_network(x0, topo, rho, lam, omega, duration, dt, phases_fn=phases_fn,
                                         corrected=True, sample_every=10)
    _, uncorrected = integrate_network(x0, topo, rho, lam, omega, duration, dt, phases_fn=phases_fn,
                                       corrected=False, sample_every=10)
    logger.info(f"Time-varying phase study: corrected peak {np.max(corrected[times >= transient]):.3e}, "
                f"uncorrected mean {np.mean(uncorrected[times >= transient]):.3e}")
    return PhaseStudy(times, corrected, uncorrected, transient)


@dataclass
class LiftStudy:
    mean_lift_synchronized: float
    mean_lift_baseline: float
    cycles: int
    delta21_deg: float

    @property
    def ratio(self) -> float:
        if self.mean_lift_baseline == 0:
            return math.inf
        return self.mean_lift_synchronized / self.mean_lift_baseline


def _mean_vertical_force(phi, theta, phi_rate, theta_rate, body, frame, strips, model) -> float:
    total = 0.0
    for i in range(len(phi)):
        joints = WingJointState(phi=phi[i], theta=theta[i], phi_rate=phi_rate[i], theta_rate=theta_rate[i])
        flow = wing_flow(body, frame, joints, strips)
        total += -integrate_wing(flow, strips, joints, frame, model).f_body[2]
    return total / len(phi)


def pitch_sync_lift_study(rho_flap_deg: float = 50.0, rho_pitch_deg: float = 30.0,
                          delta21_deg: float = 90.0, omega: float = 10.0, speed: float = 5.0,
                          cycles: int = 10, dt: float = 1e-3, k: float = 60.0, lam: float = 10.0,
                          wing: Optional[WingGeometry] = None,
                          model: Optional[AeroModel] = None) -> LiftStudy:
    """
    Mean vertical force of one wing over whole flapping cycles with the
    pitch joint synchronized to the flap joint, against a wing held at zero
    pitch. The stroke plane is vertical-free (theta_s = 0), lead-lag is zero
    and the free stream is along body x.
    """
    wing = wing or WingGeometry()
    model = model or AeroModel()
    strips = wing.strips()
    frame = StrokeFrame(theta_s=0.0)
    body = RigidBodyState(v_body=np.array([speed, 0.0, 0.0]))

    rho = np.radians([rho_flap_deg, rho_pitch_deg])
    delta = math.radians(delta21_deg)
    topo = topology_from_node_phases(2, [(2, 1), (1, 2)], [0.0, delta], k=k)
    mat = build_matrices(topo, rho)
    lam_vec = np.full(2, lam)
    x = rho[:, None] * np.array([[1.0, 0.0], [math.cos(delta), math.sin(delta)]])

    def field_fn(t, state):
        return network_derivative(state, lam_vec, rho, 1, omega, k, mat.G)

    steps = int(round(cycles * 2.0 * math.pi / omega / dt))
    phi, theta, phi_rate, theta_rate = (np.empty(steps) for _ in range(4))
    for idx in range(steps):
        dx = field_fn(idx * dt, x)
        phi[idx], theta[idx] = x[0, 0], x[1, 0]
        phi_rate[idx], theta_rate[idx] = dx[0, 0], dx[1, 0]
        x = rk4_step(field_fn, idx * dt, x, dt)

    synced = _mean_vertical_force(phi, theta, phi_rate, theta_rate, body, frame, strips, model)
    zeros = np.zeros(steps)
    baseline = _mean_vertical_force(phi, zeros, phi_rate, zeros, body, frame, strips, model)
    study = LiftStudy(synced, baseline, cycles, delta21_deg)
    logger.info(f"Pitch-sync lift study: {synced:.5f} N vs {baseline:.5f} N (ratio {study.ratio:.3f})")
    return study


def phase_sweep(delta21_values_deg: Sequence[float], **kwargs) -> List[LiftStudy]:
    """pitch_sync_lift_study over several flap-to-pitch phase differences."""
    return [pitch_sync_lift_study(delta21_deg=float(d), **kwargs) for d in delta21_values_deg]


@dataclass
class FlightSummary:
    transitions: List[Tuple[float, str, str]]
    final_mode: str
    final_altitude: float
    final_speed: float
    peak_sync_error: float
    max_flapping_pitch_deg: float
    turn_mean_bank_deg: Optional[float] = None
    turn_mean_yaw_rate_dps: Optional[float] = None
    aborted: Optional[str] = None

    def lines(self) -> List[str]:
        out = [f"final mode      : {self.final_mode}",
               f"final altitude  : {self.final_altitude:.3f} m",
               f"final speed     : {self.final_speed:.3f} m/s",
               f"peak sync error : {self.peak_sync_error:.3e}",
               f"max |theta_b| while flapping: {self.max_flapping_pitch_deg:.2f} deg",
               f"mode transitions: {len(self.transitions)}"]
        out += [f"  t={t:.3f}s  {old} -> {new}" for t, old, new in self.transitions]
        if self.turn_mean_bank_deg is not None:
            out.append(f"turn window: mean bank {self.turn_mean_bank_deg:.2f} deg, "
                       f"mean yaw rate {self.turn_mean_yaw_rate_dps:.2f} deg/s")
        if self.aborted:
            out.append(f"ABORTED: {self.aborted}")
        return out


def _heading_rates_dps(result: SimResult, mask: np.ndarray) -> np.ndarray:
    """d psi_b / dt of the selected rows, from the Euler kinematics rather than the body rate r."""
    def stack(names):
        return np.radians(np.column_stack([result.column(c)[mask] for c in names]))

    euler, omega = stack(("phi_b_deg", "theta_b_deg", "psi_b_deg")), stack(("p_dps", "q_dps", "r_dps"))
    return np.degrees([euler_rates(e, w)[2] for e, w in zip(euler, omega)])


def summarize_flight(result: SimResult, turn_window: Optional[Tuple[float, float]] = None) -> FlightSummary:
    """Mode timeline, peak sync error and turn statistics of a recorded run."""
    if not result.rows:
        return FlightSummary(transitions=list(result.transitions), final_mode="-", final_altitude=math.nan,
                             final_speed=math.nan, peak_sync_error=math.nan, max_flapping_pitch_deg=math.nan,
                             aborted=str(result.error) if result.error else None)
    t = result.column("t")
    mode = result.column("mode")
    flapping = mode == "flapping"
    theta = np.abs(result.column("theta_b_deg"))
    summary = FlightSummary(
        transitions=list(result.transitions),
        final_mode=str(mode[-1]),
        final_altitude=-float(result.column("z_e")[-1]),
        final_speed=float(result.column("V_bx")[-1]),
        peak_sync_error=float(np.nanmax(result.column("sync_error"))),
        max_flapping_pitch_deg=float(np.max(theta[flapping])) if np.any(flapping) else 0.0,
        aborted=str(result.error) if result.error else None)
    if turn_window is not None:
        mask = (t >= turn_window[0]) & (t <= turn_window[1])
        if np.any(mask):
            summary.turn_mean_bank_deg = float(np.mean(result.column("phi_b_deg")[mask]))
            summary.turn_mean_yaw_rate_dps = float(np.mean(_heading_rates_dps(result, mask)))
    return summary


def turn_window_from_events(events) -> Optional[Tuple[float, float]]:
    """First nonzero set_bank command up to the next set_bank back to zero."""
    start = None
    for e in sorted(events, key=lambda e: e.t):
        if e.action != "set_bank":
            continue
        if start is None and e.value:
            start = e.t
        elif start is not None and not e.value:
            return start, e.t
    return None


def angle_of_attack_envelope(result: SimResult, side: str = "right") -> Dict[str, np.ndarray]:
    """Per-strip min, mean and max angle of attack (deg) over the recorded rows."""
    prefix = f"alpha_{side}_"
    idx = [i for i, name in enumerate(result.columns) if name.startswith(prefix)]
    if not idx:
        raise DomainError("run was recorded without per-strip angle of attack")
    data = np.array([[row[i] for i in idx] for row in result.rows], dtype=float)
    return {"strip": np.arange(1, len(idx) + 1), "min": data.min(axis=0), "mean": data.mean(axis=0),
            "max": data.max(axis=0)}
