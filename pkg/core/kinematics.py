"""
Wing kinematics: body -> stroke plane -> wing frame chain, blade-element
wind velocity and local flow angles.

Frames: the stroke frame is the body frame pitched by the stroke-plane
inclination theta_s and offset by d. The wing frame rotates with the
flapping angle phi_w and lead-lag angle psi_w; the span runs along +y_w
for the right wing and -y_w for the left wing.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from core.dynamics import RigidBodyState
from core.errors import DomainError

logger = logging.getLogger(__name__)

SIDES = ("right", "left")
MIRROR = np.diag([1.0, -1.0, 1.0])


def _check_side(side: str) -> str:
    if side not in SIDES:
        raise DomainError(f"wing side must be 'right' or 'left', got {side!r}")
    return side


@dataclass(frozen=True)
class StrokeFrame:
    theta_s: float
    theta_s_rate: float = 0.0
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    side: str = "right"

    def __post_init__(self):
        _check_side(self.side)
        offset = np.asarray(self.offset, dtype=float).reshape(-1)
        if offset.shape != (3,):
            raise DomainError("stroke frame offset must have three components")
        object.__setattr__(self, "offset", offset)

    def mirrored(self) -> "StrokeFrame":
        """The same stroke plane seen from the other wing root."""
        other = "left" if self.side == "right" else "right"
        return StrokeFrame(self.theta_s, self.theta_s_rate, MIRROR @ self.offset, other)


@dataclass(frozen=True)
class WingJointState:
    """Joint angles (rad), rates (rad/s) and optional accelerations (rad/s^2)."""
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    phi_rate: float = 0.0
    theta_rate: float = 0.0
    psi_rate: float = 0.0
    phi_accel: float = 0.0
    theta_accel: float = 0.0
    psi_accel: float = 0.0

    def __post_init__(self):
        values = (self.phi, self.theta, self.psi, self.phi_rate, self.theta_rate, self.psi_rate)
        if not all(math.isfinite(v) for v in values):
            raise DomainError(f"non-finite wing joint state: {self}")


@dataclass(frozen=True)
class BladeElement:
    r: float
    dr: float
    chord: float
    span: float
    deformation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    deformation_rate: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not 0.0 <= self.r <= self.span:
            raise DomainError(f"strip position r={self.r} outside [0, {self.span}]")
        if self.dr <= 0:
            raise DomainError(f"strip width must be positive, got {self.dr}")
        if self.chord <= 0:
            raise DomainError(f"chord must be positive, got {self.chord}")
        for name in ("deformation", "deformation_rate"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))


@dataclass(frozen=True)
class StripSet:
    """Uniform midpoint strips tiling [0, span]; arrays are indexed by strip."""
    r: np.ndarray
    dr: np.ndarray
    chord: np.ndarray
    span: float

    def __len__(self) -> int:
        return len(self.r)

    def element(self, idx: int) -> BladeElement:
        return BladeElement(float(self.r[idx]), float(self.dr[idx]), float(self.chord[idx]), self.span)


@dataclass(frozen=True)
class WingGeometry:
    """
    Rigid wing planform.

    ``chord_table`` holds (r, c) pairs; when present the chord at each
    strip midpoint is linearly interpolated from it, otherwise the chord
    is constant.
    """
    span: float = 0.32
    chord: float = 0.15
    dr: float = 0.01
    chord_table: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        if not (math.isfinite(self.span) and self.span > 0):
            raise DomainError(f"wing span must be positive, got {self.span}")
        if not (math.isfinite(self.chord) and self.chord > 0):
            raise DomainError(f"chord must be positive, got {self.chord}")
        if not (math.isfinite(self.dr) and 0 < self.dr <= self.span):
            raise DomainError(f"strip width must lie in (0, span], got {self.dr}")
        table = tuple((float(r), float(c)) for r, c in self.chord_table)
        if table:
            radii = [r for r, _ in table]
            if any(b <= a for a, b in zip(radii, radii[1:])):
                raise DomainError("chord table radii must be strictly increasing")
            if any(c <= 0 for _, c in table):
                raise DomainError("chord table entries must be positive")
        object.__setattr__(self, "chord_table", table)

    @property
    def area(self) -> float:
        """Planform area of one wing."""
        s = self.strips()
        return float(np.sum(s.chord * s.dr))

    def strips(self, dr: Optional[float] = None) -> StripSet:
        width = self.dr if dr is None else dr
        n = max(1, math.ceil(self.span / width - 1e-12))
        widths = np.full(n, self.span / n)
        r = (np.arange(n) + 0.5) * (self.span / n)
        if self.chord_table:
            radii, chords = zip(*self.chord_table)
            chord = np.interp(r, radii, chords)
        else:
            chord = np.full(n, self.chord)
        return StripSet(r=r, dr=widths, chord=chord, span=self.span)


@dataclass(frozen=True)
class FlowSample:
    """
    Local flow at one strip or, with array fields, at every strip of a wing.

    ``degenerate`` marks strips where the in-plane wind vanishes; their
    incident angle is reported as zero and their loads are zeroed.
    """
    v_wind: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    v_r: np.ndarray
    k_r: float = 0.0
    degenerate: np.ndarray = False
    beta_rate: Optional[np.ndarray] = None


def stroke_to_body(theta_s: float) -> np.ndarray:
    """T_bs: rotation about y by the stroke-plane inclination."""
    c, s = math.cos(theta_s), math.sin(theta_s)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _stroke_to_body_derivative(theta_s: float) -> np.ndarray:
    c, s = math.cos(theta_s), math.sin(theta_s)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def _rz(psi: float) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def _rx(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def _rz_derivative(psi: float) -> np.ndarray:
    c, s = math.cos(psi), math.sin(psi)
    return np.array([[-s, c, 0.0], [-c, -s, 0.0], [0.0, 0.0, 0.0]])


def _rx_derivative(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, c], [0.0, -c, -s]])


def wing_to_stroke(phi_w: float, psi_w: float, side: str = "right") -> np.ndarray:
    """
    T_sw for one wing. The left wing is the right-wing transform conjugated
    by the y-axis mirror, so a positive phi_w is an upstroke and a positive
    psi_w sweeps forward on both sides.
    """
    T = _rz(psi_w) @ _rx(phi_w)
    if _check_side(side) == "left":
        T = MIRROR @ T @ MIRROR
    return T


def _wing_to_stroke_rate(joints: WingJointState, side: str) -> np.ndarray:
    dT = (_rz_derivative(joints.psi) @ _rx(joints.phi) * joints.psi_rate
          + _rz(joints.psi) @ _rx_derivative(joints.phi) * joints.phi_rate)
    if side == "left":
        dT = MIRROR @ dT @ MIRROR
    return dT


def joint_rate_vector(joints: WingJointState, frame: StrokeFrame) -> np.ndarray:
    """Angular rate of the wing relative to the body, in stroke-frame axes."""
    cp, sp = math.cos(joints.psi), math.sin(joints.psi)
    flap = joints.phi_rate
    if frame.side == "right":
        return np.array([-cp * flap, sp * flap + frame.theta_s_rate, -joints.psi_rate])
    return np.array([cp * flap, sp * flap + frame.theta_s_rate, joints.psi_rate])


def _joint_rate_vector_derivative(joints: WingJointState, frame: StrokeFrame) -> np.ndarray:
    cp, sp = math.cos(joints.psi), math.sin(joints.psi)
    flap, flap_dot = joints.phi_rate, joints.phi_accel
    sweep = joints.psi_rate
    lateral = cp * sweep * flap + sp * flap_dot
    if frame.side == "right":
        return np.array([sp * sweep * flap - cp * flap_dot, lateral, -joints.psi_accel])
    return np.array([-sp * sweep * flap + cp * flap_dot, lateral, joints.psi_accel])


def element_positions(r: np.ndarray, side: str, deformation: Optional[np.ndarray] = None) -> np.ndarray:
    """Strip reference points in wing axes, shape (m, 3)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    pos = np.zeros((len(r), 3))
    pos[:, 1] = r if side == "right" else -r
    if deformation is not None:
        pos = pos + deformation
    return pos


def wing_wind_velocity(body: RigidBodyState, frame: StrokeFrame, joints: WingJointState,
                       r: np.ndarray, deformation: Optional[np.ndarray] = None,
                       deformation_rate: Optional[np.ndarray] = None,
                       wind: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Wing-frame wind velocity at every strip, shape (m, 3).

    Args:
        body: Vehicle state supplying V_b and Omega_b
        frame: Stroke plane of this wing
        joints: Joint angles and rates of this wing
        r: Strip span coordinates (m)
        deformation: Optional (m, 3) elastic displacement of each strip
        deformation_rate: Optional (m, 3) displacement rate
        wind: Constant body-frame increment added to V_b, positive for a headwind
    """
    T_sb = stroke_to_body(frame.theta_s).T
    T_ws = wing_to_stroke(joints.phi, joints.psi, frame.side).T
    v_air = body.v_body + np.cross(body.omega_body, frame.offset)
    if wind is not None:
        v_air = v_air + np.asarray(wind, dtype=float)
    translation = T_ws @ (T_sb @ v_air)

    omega_total = T_sb @ body.omega_body + joint_rate_vector(joints, frame)
    omega_wing = T_ws @ omega_total
    pos = element_positions(r, frame.side, deformation)
    v = translation + np.cross(omega_wing, pos)
    if deformation_rate is not None:
        v = v + deformation_rate
    return v


def wing_wind_acceleration(body: RigidBodyState, frame: StrokeFrame, joints: WingJointState,
                           r: np.ndarray, wind: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Time derivative of the rigid-wing wind velocity with the body state held
    fixed; driven by the joint rates and accelerations.
    """
    T_bs = stroke_to_body(frame.theta_s)
    T_sb = T_bs.T
    dT_sb = _stroke_to_body_derivative(frame.theta_s).T * frame.theta_s_rate
    T_ws = wing_to_stroke(joints.phi, joints.psi, frame.side).T
    dT_ws = _wing_to_stroke_rate(joints, frame.side).T

    v_air = body.v_body + np.cross(body.omega_body, frame.offset)
    if wind is not None:
        v_air = v_air + np.asarray(wind, dtype=float)
    a_stroke = T_sb @ v_air
    da_stroke = dT_sb @ v_air

    omega_total = T_sb @ body.omega_body + joint_rate_vector(joints, frame)
    domega_total = dT_sb @ body.omega_body + _joint_rate_vector_derivative(joints, frame)
    domega_wing = dT_ws @ omega_total + T_ws @ domega_total

    pos = element_positions(r, frame.side)
    return dT_ws @ a_stroke + T_ws @ da_stroke + np.cross(domega_wing, pos)


def blade_wind_velocity(body: RigidBodyState, frame: StrokeFrame, joints: WingJointState,
                        elem: BladeElement, wind: Optional[np.ndarray] = None) -> np.ndarray:
    """Wing-frame wind velocity (V_wx, V_wy, V_wz) at one blade element."""
    if not 0.0 <= elem.r <= elem.span:
        raise DomainError(f"strip position r={elem.r} outside [0, {elem.span}]")
    return wing_wind_velocity(body, frame, joints, np.array([elem.r]),
                              elem.deformation[None, :], elem.deformation_rate[None, :], wind)[0]


def local_flow_angles(v_wind: np.ndarray, theta_w: float,
                      v_wind_rate: Optional[np.ndarray] = None) -> FlowSample:
    """
    Incident angle, angle of attack and in-plane speed from wing-frame wind.

    Accepts one velocity (3,) or a stack (m, 3). The spanwise component is
    ignored.
    """
    v = np.asarray(v_wind, dtype=float)
    vx, vz = v[..., 0], v[..., 2]
    degenerate = (vx == 0.0) & (vz == 0.0)
    beta = np.where(degenerate, 0.0, np.arctan2(-vz, vx))
    v_r = np.hypot(vx, vz)
    beta_rate = None
    if v_wind_rate is not None:
        dv = np.asarray(v_wind_rate, dtype=float)
        denom = np.where(degenerate, 1.0, vx * vx + vz * vz)
        beta_rate = np.where(degenerate, 0.0, (vz * dv[..., 0] - vx * dv[..., 2]) / denom)
    if v.ndim == 1:
        return FlowSample(v_wind=v, beta=float(beta), alpha=theta_w - float(beta), v_r=float(v_r),
                          degenerate=bool(degenerate),
                          beta_rate=None if beta_rate is None else float(beta_rate))
    return FlowSample(v_wind=v, beta=beta, alpha=theta_w - beta, v_r=v_r,
                      degenerate=degenerate, beta_rate=beta_rate)


def reduced_frequency(phi_w_rate: float, chord: float, v_body: float) -> float:
    """k_r = phi_w_rate * c / (2 V_b)."""
    if not v_body > 0:
        raise DomainError(f"reduced frequency is undefined for forward speed {v_body}")
    return phi_w_rate * chord / (2.0 * v_body)


def wing_flow(body: RigidBodyState, frame: StrokeFrame, joints: WingJointState, strips: StripSet,
              wind: Optional[np.ndarray] = None, with_rates: bool = False) -> FlowSample:
    """Flow samples for every strip of one wing."""
    v = wing_wind_velocity(body, frame, joints, strips.r, wind=wind)
    dv = wing_wind_acceleration(body, frame, joints, strips.r, wind=wind) if with_rates else None
    sample = local_flow_angles(v, joints.theta, dv)
    speed = float(np.linalg.norm(body.v_body))
    k_r = reduced_frequency(joints.phi_rate, float(np.mean(strips.chord)), speed) if speed > 0 else math.nan
    return FlowSample(v_wind=sample.v_wind, beta=sample.beta, alpha=sample.alpha, v_r=sample.v_r,
                      k_r=k_r, degenerate=sample.degenerate, beta_rate=sample.beta_rate)


def element_body_positions(frame: StrokeFrame, joints: WingJointState, r: np.ndarray) -> np.ndarray:
    """p(r) = T_bs T_sw e_r + d for every strip, shape (m, 3)."""
    rot = stroke_to_body(frame.theta_s) @ wing_to_stroke(joints.phi, joints.psi, frame.side)
    return element_positions(r, frame.side) @ rot.T + frame.offset


def wing_pitch_matrix(theta_w: float) -> np.ndarray:
    c, s = math.cos(theta_w), math.sin(theta_w)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
