"""
Six degree-of-freedom rigid-body equations of motion.

Body axes: x forward, y right, z down. Inertial z is positive down, so
altitude is -z. Euler angles follow the Z-Y-X (yaw, pitch, roll) sequence.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from core.errors import DomainError, GimbalLockError

logger = logging.getLogger(__name__)

GIMBAL_GUARD = math.radians(88.0)
STATE_SIZE = 12


def _vec3(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise DomainError(f"{name} must have three components, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class RigidBodyState:
    v_body: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_body: np.ndarray = field(default_factory=lambda: np.zeros(3))
    euler: np.ndarray = field(default_factory=lambda: np.zeros(3))
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("v_body", "omega_body", "euler", "position"):
            object.__setattr__(self, name, _vec3(getattr(self, name), name))

    @property
    def altitude(self) -> float:
        return -float(self.position[2])

    def to_array(self) -> np.ndarray:
        return np.concatenate((self.v_body, self.omega_body, self.euler, self.position))

    @classmethod
    def from_array(cls, values: np.ndarray) -> "RigidBodyState":
        values = np.asarray(values, dtype=float)
        if values.shape != (STATE_SIZE,):
            raise DomainError(f"rigid-body state needs {STATE_SIZE} values, got {values.shape}")
        return cls(values[0:3], values[3:6], values[6:9], values[9:12])


@dataclass(frozen=True)
class MassProperties:
    mass: float = 0.3
    inertia: np.ndarray = field(default_factory=lambda: 0.0012 * np.eye(3))
    gravity: float = 9.81

    def __post_init__(self):
        inertia = np.asarray(self.inertia, dtype=float)
        object.__setattr__(self, "inertia", inertia)
        if not math.isfinite(self.mass) or self.mass <= 0:
            raise DomainError(f"mass must be positive, got {self.mass}")
        if inertia.shape != (3, 3) or not np.allclose(inertia, inertia.T):
            raise DomainError("inertia must be a symmetric 3x3 matrix")
        try:
            np.linalg.cholesky(inertia)
        except np.linalg.LinAlgError:
            raise DomainError("inertia must be positive definite")


@dataclass(frozen=True)
class AuxiliaryLoads:
    """
    Fuselage loads. Only a body pitching moment is modeled; the extra
    force A stays at its configured constant (zero by default).
    """
    cm0: float = 0.1
    cm_alpha: float = -0.2
    s_ref: float = 0.096
    c_ref: float = 0.15
    extra_force: Tuple[float, float, float] = (0.0, 0.0, 0.0)


def inertial_to_body(euler: Sequence[float]) -> np.ndarray:
    """Direction cosine matrix T_be taking inertial components to body components."""
    phi, theta, psi = euler
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array([
        [ct * cp, ct * sp, -st],
        [sf * st * cp - cf * sp, sf * st * sp + cf * cp, sf * ct],
        [cf * st * cp + sf * sp, cf * st * sp - sf * cp, cf * ct],
    ])


def gravity_in_body(euler: Sequence[float], mass_props: MassProperties) -> np.ndarray:
    phi, theta, _ = euler
    weight = mass_props.mass * mass_props.gravity
    return weight * np.array([-math.sin(theta),
                              math.sin(phi) * math.cos(theta),
                              math.cos(phi) * math.cos(theta)])


def translational_derivative(state: RigidBodyState, total_force: Sequence[float],
                             mass_props: MassProperties) -> np.ndarray:
    """
    dV_b/dt for the sum of wing and auxiliary forces; gravity is added here.

    Args:
        state: Current rigid-body state
        total_force: F_right + F_left + A in body axes (N)
        mass_props: Mass, inertia and gravitational acceleration
    """
    force = gravity_in_body(state.euler, mass_props) + np.asarray(total_force, dtype=float)
    return force / mass_props.mass - np.cross(state.omega_body, state.v_body)


def rotational_derivative(state: RigidBodyState, total_moment: Sequence[float],
                          mass_props: MassProperties) -> np.ndarray:
    omega = state.omega_body
    gyroscopic = np.cross(omega, mass_props.inertia @ omega)
    return np.linalg.solve(mass_props.inertia, np.asarray(total_moment, dtype=float) - gyroscopic)


def euler_rates(euler: Sequence[float], omega_body: Sequence[float],
                guard: float = GIMBAL_GUARD) -> np.ndarray:
    phi, theta, _ = euler
    if abs(theta) >= guard:
        raise GimbalLockError(
            f"pitch angle {math.degrees(theta):.2f} deg reached the gimbal guard of "
            f"{math.degrees(guard):.1f} deg")
    p, q, r = omega_body
    sf, cf = math.sin(phi), math.cos(phi)
    tt, ct = math.tan(theta), math.cos(theta)
    return np.array([
        p + q * sf * tt + r * cf * tt,
        q * cf - r * sf,
        (q * sf + r * cf) / ct,
    ])


def position_rate(euler: Sequence[float], v_body: Sequence[float]) -> np.ndarray:
    return inertial_to_body(euler).T @ np.asarray(v_body, dtype=float)


def body_angle_of_attack(v_body: Sequence[float]) -> Tuple[float, float]:
    """Body angle of attack alpha_x and side-slip alpha_y (rad)."""
    vx, vy, vz = v_body
    speed = math.sqrt(vx * vx + vy * vy + vz * vz)
    alpha_y = math.asin(vy / speed) if speed > 0 else 0.0
    return math.atan2(vz, vx), alpha_y


def body_loads(state: RigidBodyState, aux: AuxiliaryLoads,
               air_density: float = 1.225) -> Tuple[np.ndarray, np.ndarray]:
    """Auxiliary force A and moment B of the fuselage."""
    v = state.v_body
    speed2 = float(v @ v)
    extra = np.asarray(aux.extra_force, dtype=float)
    if speed2 == 0.0:
        return extra, np.zeros(3)
    alpha_x, _ = body_angle_of_attack(v)
    pitch = 0.5 * air_density * speed2 * aux.s_ref * aux.c_ref * (aux.cm0 + aux.cm_alpha * alpha_x)
    return extra, np.array([0.0, pitch, 0.0])


def rigid_body_derivative(state: RigidBodyState, force: Sequence[float], moment: Sequence[float],
                          mass_props: MassProperties, guard: float = GIMBAL_GUARD) -> np.ndarray:
    """Full 12-component derivative (V_b, Omega_b, Euler angles, inertial position)."""
    return np.concatenate((
        translational_derivative(state, force, mass_props),
        rotational_derivative(state, moment, mass_props),
        euler_rates(state.euler, state.omega_body, guard),
        position_rate(state.euler, state.v_body),
    ))


def kinetic_energy(state: RigidBodyState, mass_props: MassProperties) -> float:
    v, w = state.v_body, state.omega_body
    return 0.5 * mass_props.mass * float(v @ v) + 0.5 * float(w @ mass_props.inertia @ w)
