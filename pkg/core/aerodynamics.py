"""
Quasi-steady blade-element aerodynamics for a rigid flapping wing.

Strip loads are lift and drag from the steady coefficient model plus a
rotational-lift term proportional to the rate of change of the angle of
attack. Strips are summed with the midpoint rule in a fixed order.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from core.errors import DomainError
from core.kinematics import (BladeElement, FlowSample, StripSet, StrokeFrame, WingJointState,
                             element_body_positions, stroke_to_body, wing_pitch_matrix,
                             wing_to_stroke)

logger = logging.getLogger(__name__)

ALPHA_RATE_MODES = ("pitch", "flow")


@dataclass(frozen=True)
class SinusoidCoefficient:
    """c = offset + amplitude * trig(slope * alpha + shift), alpha in rad, shift in deg."""
    offset: float
    amplitude: float
    slope: float
    shift_deg: float

    def as_dict(self) -> dict:
        return {"offset": self.offset, "amplitude": self.amplitude,
                "slope": self.slope, "shift_deg": self.shift_deg}


DICKINSON_LIFT = SinusoidCoefficient(0.225, 1.58, 2.13, -7.2)
DICKINSON_DRAG = SinusoidCoefficient(1.92, -1.55, 2.04, -9.82)


@dataclass(frozen=True)
class DickinsonCoefficients:
    """
    Lift and drag coefficients fitted to revolving-wing measurements.

    The fits are written with alpha in degrees; evaluating slope * alpha in
    radians and converting only the phase shift gives the same numbers.
    """
    lift: SinusoidCoefficient = DICKINSON_LIFT
    drag: SinusoidCoefficient = DICKINSON_DRAG

    def __call__(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        cl = self.lift.offset + self.lift.amplitude * np.sin(
            self.lift.slope * alpha + math.radians(self.lift.shift_deg))
        cd = self.drag.offset + self.drag.amplitude * np.cos(
            self.drag.slope * alpha + math.radians(self.drag.shift_deg))
        if cl.ndim == 0:
            return float(cl), float(cd)
        return cl, cd


@dataclass(frozen=True)
class ConstantCoefficients:
    cl: float = 1.0
    cd: float = 0.0

    def __call__(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        if alpha.ndim == 0:
            return self.cl, self.cd
        return np.full(alpha.shape, self.cl), np.full(alpha.shape, self.cd)


CoefficientModel = Union[DickinsonCoefficients, ConstantCoefficients]


@dataclass(frozen=True)
class AeroModel:
    coefficients: CoefficientModel = field(default_factory=DickinsonCoefficients)
    x0_hat: float = 0.25
    air_density: float = 1.225
    cl0: float = 0.0
    cm0: float = -0.2
    cm_alpha: float = -0.12
    cn0: float = 0.0
    alpha_rate: str = "pitch"

    def __post_init__(self):
        if not (math.isfinite(self.air_density) and self.air_density > 0):
            raise DomainError(f"air density must be positive, got {self.air_density}")
        if not 0.0 <= self.x0_hat < 0.75:
            raise DomainError(f"pitch-axis location x0_hat must lie in [0, 0.75), got {self.x0_hat}")
        if self.alpha_rate not in ALPHA_RATE_MODES:
            raise DomainError(f"alpha_rate must be one of {ALPHA_RATE_MODES}, got {self.alpha_rate!r}")

    @property
    def rotational_factor(self) -> float:
        return 2.0 * math.pi * (0.75 - self.x0_hat)


@dataclass(frozen=True)
class WingLoads:
    f_wing: np.ndarray
    f_body: np.ndarray
    m_body: np.ndarray

    @classmethod
    def zero(cls) -> "WingLoads":
        return cls(np.zeros(3), np.zeros(3), np.zeros(3))


def lift_drag_coefficients(alpha_w, model: Optional[CoefficientModel] = None):
    """(C_L, C_D) at angle of attack alpha_w in radians."""
    return (model or DickinsonCoefficients())(alpha_w)


def _geometry(elem: Union[BladeElement, StripSet]) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(elem, BladeElement):
        return np.asarray(elem.chord), np.asarray(elem.dr)
    return elem.chord, elem.dr


def _alpha_dot(sample: FlowSample, joints_theta_rate: float, alpha_rate: str):
    if alpha_rate == "flow":
        if sample.beta_rate is None:
            raise DomainError("alpha_rate='flow' needs flow samples evaluated with incident-angle rates")
        return joints_theta_rate - np.asarray(sample.beta_rate)
    return joints_theta_rate


def strip_loads(sample: FlowSample, elem: Union[BladeElement, StripSet], model: AeroModel,
                alpha_rate: float):
    """
    Lift, drag and rotational lift of one strip or of every strip.

    Args:
        sample: Local flow (scalar or per-strip arrays)
        elem: Strip geometry
        model: Coefficient model and air properties
        alpha_rate: Rate of change of the angle of attack (rad/s), scalar or per strip

    Returns:
        (dL, dD, dL_rot) in newtons; zero on degenerate strips
    """
    chord, dr = _geometry(elem)
    if np.any(dr <= 0):
        raise DomainError("strip width must be positive")
    cl, cd = model.coefficients(sample.alpha)
    q = 0.5 * model.air_density * np.asarray(sample.v_r) ** 2 * chord * dr
    dL = cl * q
    dD = cd * q
    dL_rot = (0.5 * model.air_density * model.rotational_factor * chord ** 2
              * np.asarray(sample.v_r) * alpha_rate * dr)
    live = ~np.asarray(sample.degenerate, dtype=bool)
    dL, dD, dL_rot = (np.where(live, x, 0.0) for x in (dL, dD, dL_rot))
    if np.ndim(dL) == 0:
        return float(dL), float(dD), float(dL_rot)
    return dL, dD, dL_rot


def strip_forces(flow: FlowSample, strips: StripSet, joints: WingJointState, model: AeroModel) -> np.ndarray:
    """Wing-frame force of every strip, shape (m, 3) with a zero spanwise column."""
    alpha_dot = _alpha_dot(flow, joints.theta_rate, model.alpha_rate)
    dL, dD, dL_rot = strip_loads(flow, strips, model, alpha_dot)
    lift = np.asarray(dL) + np.asarray(dL_rot)
    sb, cb = np.sin(flow.beta), np.cos(flow.beta)
    forces = np.zeros((len(strips), 3))
    forces[:, 0] = -lift * sb - dD * cb
    forces[:, 2] = dD * sb - lift * cb
    return forces


def wing_moments(flow: FlowSample, strips: StripSet, joints: WingJointState, frame: StrokeFrame,
                 model: AeroModel, forces: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Body-frame moment about the c.g.: strip forces acting at p(r) plus the
    section moments from the roll, pitch and yaw coefficients.
    """
    if forces is None:
        forces = strip_forces(flow, strips, joints, model)
    rot = stroke_to_body(frame.theta_s) @ wing_to_stroke(joints.phi, joints.psi, frame.side)
    arm = element_body_positions(frame, joints, strips.r)
    moment = np.sum(np.cross(arm, forces @ rot.T), axis=0)

    live = ~np.asarray(flow.degenerate, dtype=bool)
    q = np.where(live, 0.5 * model.air_density * np.asarray(flow.v_r) ** 2 * strips.chord * strips.dr, 0.0)
    sign = 1.0 if frame.side == "right" else -1.0
    section = np.stack((
        sign * strips.r * model.cl0,
        strips.chord * (model.cm0 + model.cm_alpha * np.asarray(flow.alpha)),
        sign * strips.r * model.cn0,
    ), axis=-1) * q[:, None]
    section_rot = rot @ wing_pitch_matrix(joints.theta)
    return moment + section_rot @ np.sum(section, axis=0)


def integrate_wing(flow: FlowSample, strips: StripSet, joints: WingJointState, frame: StrokeFrame,
                   model: AeroModel) -> WingLoads:
    """
    Sum strip loads over the span into wing-frame and body-frame resultants.

    Left and right wings are integrated separately with their own joint
    angles; the stroke-plane inclination is shared.
    """
    forces = strip_forces(flow, strips, joints, model)
    f_wing = np.sum(forces, axis=0)
    rot = stroke_to_body(frame.theta_s) @ wing_to_stroke(joints.phi, joints.psi, frame.side)
    m_body = wing_moments(flow, strips, joints, frame, model, forces)
    return WingLoads(f_wing=f_wing, f_body=rot @ f_wing, m_body=m_body)


def coefficient_table(alpha_start_deg: float, alpha_stop_deg: float, step_deg: float,
                      model: Optional[CoefficientModel] = None) -> np.ndarray:
    """Rows of (alpha_deg, C_L, C_D) from start to stop inclusive."""
    if not step_deg > 0:
        raise DomainError(f"alpha step must be positive, got {step_deg}")
    if alpha_stop_deg < alpha_start_deg:
        raise DomainError("alpha range must be increasing")
    count = int(math.floor((alpha_stop_deg - alpha_start_deg) / step_deg + 1e-9)) + 1
    alpha_deg = alpha_start_deg + step_deg * np.arange(count)
    cl, cd = lift_drag_coefficients(np.radians(alpha_deg), model)
    return np.column_stack((alpha_deg, cl, cd))
