"""
Hopf oscillator dynamics for single oscillators and coupled CPG networks.

Each oscillator keeps its raw output coordinates (u, v). The shifted vector
x = (u - a, v) is formed on the fly so the bias a may change without
rewriting state.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Optional, Sequence, Tuple

import numpy as np

from core.errors import DomainError

if TYPE_CHECKING:
    from core.topology import CouplingMatrices, NetworkTopology

logger = logging.getLogger(__name__)

SIGMA_VALUES = (1, -1)


def _check_sigma(sigma) -> int:
    if sigma not in SIGMA_VALUES or isinstance(sigma, bool):
        raise DomainError(f"sigma must be +1 or -1, got {sigma!r}")
    return int(sigma)


@dataclass(frozen=True)
class HopfParams:
    """Parameters of one Hopf oscillator. ``lam`` is the convergence rate lambda."""
    lam: float
    rho: float
    a: float = 0.0
    sigma: int = 1
    omega: float = 0.0

    def __post_init__(self):
        values = (self.lam, self.rho, self.a, self.omega)
        if not all(math.isfinite(v) for v in values):
            raise DomainError(f"non-finite Hopf parameters: {self}")
        if self.lam <= 0:
            raise DomainError(f"lambda must be positive, got {self.lam}")
        if self.rho <= 0:
            raise DomainError(f"rho must be positive, got {self.rho}")
        if self.omega < 0:
            raise DomainError(f"omega must be non-negative, got {self.omega}")
        _check_sigma(self.sigma)


@dataclass(frozen=True)
class OscillatorState:
    u: float
    v: float

    def shifted(self, a: float) -> np.ndarray:
        return np.array([self.u - a, self.v])


@dataclass(frozen=True)
class NetworkState:
    """Ordered oscillator states with their parameters, indexed like the topology nodes."""
    states: Tuple[OscillatorState, ...]
    params: Tuple[HopfParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "params", tuple(self.params))
        if len(self.states) != len(self.params):
            raise DomainError(
                f"network has {len(self.states)} states but {len(self.params)} parameter sets")

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def rho(self) -> np.ndarray:
        return np.array([p.rho for p in self.params])

    @property
    def bias(self) -> np.ndarray:
        return np.array([p.a for p in self.params])

    def shifted(self) -> np.ndarray:
        """Stacked shifted states as an (n, 2) array."""
        return np.array([[s.u - p.a, s.v] for s, p in zip(self.states, self.params)], dtype=float)

    def raw(self) -> np.ndarray:
        return np.array([[s.u, s.v] for s in self.states], dtype=float)

    @classmethod
    def from_shifted(cls, x: np.ndarray, params: Sequence[HopfParams]) -> "NetworkState":
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        states = tuple(OscillatorState(float(xi[0] + p.a), float(xi[1])) for xi, p in zip(x, params))
        return cls(states, tuple(params))


def rotation2(delta: float) -> np.ndarray:
    """Planar rotation R(delta); R(-delta) is its transpose and inverse."""
    c, s = math.cos(delta), math.sin(delta)
    return np.array([[c, -s], [s, c]])


def rotation2_stack(deltas: np.ndarray) -> np.ndarray:
    """R(delta) for every entry of ``deltas``, shape (m, 2, 2)."""
    deltas = np.asarray(deltas, dtype=float)
    c, s = np.cos(deltas), np.sin(deltas)
    return np.stack((np.stack((c, -s), axis=-1), np.stack((s, c), axis=-1)), axis=-2)


def hopf_derivative(state: OscillatorState, p: HopfParams,
                    input: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    Time derivative of the shifted state (u - a, v) of one oscillator.

    Args:
        state: Raw oscillator coordinates
        p: Oscillator parameters
        input: External 2-vector added to the field, zero when omitted

    Returns:
        2-vector in rad/s
    """
    if not (math.isfinite(state.u) and math.isfinite(state.v)):
        raise DomainError(f"non-finite oscillator state: {state}")
    x = state.shifted(p.a)
    dx = network_field(x[None, :], np.array([p.lam]), np.array([p.rho]), p.sigma, p.omega)[0]
    if input is not None:
        extra = np.asarray(input, dtype=float)
        if extra.shape != (2,) or not np.all(np.isfinite(extra)):
            raise DomainError(f"oscillator input must be a finite 2-vector, got {input!r}")
        dx = dx + extra
    return dx


def network_field(x: np.ndarray, lam: np.ndarray, rho: np.ndarray,
                  sigma: float, omega: float) -> np.ndarray:
    """
    Uncoupled Hopf field for shifted states of shape (..., n, 2).

    ``lam`` and ``rho`` hold one entry per oscillator; ``sigma`` and
    ``omega`` are shared by the whole network.
    """
    r2 = np.sum(x * x, axis=-1)
    radial = -lam * (r2 / (rho * rho) - sigma)
    quadrature = np.stack((-x[..., 1], x[..., 0]), axis=-1)
    return radial[..., None] * x + omega * quadrature


def network_derivative(x: np.ndarray, lam: np.ndarray, rho: np.ndarray, sigma: float,
                       omega: float, k: float, G: np.ndarray,
                       correction: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Coupled network field [f(x_i)] - k G {x} - correction on stacked arrays.

    ``x`` has shape (..., n, 2) so independent networks can be integrated
    side by side; the result has the same shape.
    """
    field = network_field(x, lam, rho, sigma, omega)
    flat = x.reshape(x.shape[:-2] + (-1,))
    coupling = (flat @ G.T).reshape(x.shape)
    dx = field - k * coupling
    if correction is not None:
        dx = dx - np.asarray(correction).reshape(x.shape)
    return dx


def network_second_derivative(x: np.ndarray, dx: np.ndarray, lam: np.ndarray, rho: np.ndarray,
                              sigma: float, omega: float, k: float, G: np.ndarray) -> np.ndarray:
    """
    Jacobian of the coupled field applied to ``dx``, i.e. the second time
    derivative of x with parameters frozen. Shapes as network_derivative.
    """
    r2 = np.sum(x * x, axis=-1)
    radial = -lam * (r2 / (rho * rho) - sigma)
    along = -2.0 * lam / (rho * rho) * np.sum(x * dx, axis=-1)
    quadrature = np.stack((-dx[..., 1], dx[..., 0]), axis=-1)
    ddx = radial[..., None] * dx + along[..., None] * x + omega * quadrature
    flat = dx.reshape(dx.shape[:-2] + (-1,))
    return ddx - k * (flat @ G.T).reshape(dx.shape)


def coupled_derivative(net: NetworkState, topo: "NetworkTopology",
                       correction: Optional[Sequence[float]] = None,
                       matrices: Optional["CouplingMatrices"] = None) -> np.ndarray:
    """
    Derivative of the stacked shifted network state, dimension 2n.

    Args:
        net: Oscillator states and parameters; all share sigma and omega
        topo: Validated coupling topology providing k and the phase shifts
        correction: Optional time-varying feed T^-1 dT/dt {x} to subtract
        matrices: Prebuilt coupling matrices; built from ``topo`` when omitted
    """
    if net.n != topo.n:
        raise DomainError(f"network has {net.n} oscillators but topology has {topo.n} nodes")
    if matrices is None:
        from core.topology import build_matrices
        matrices = build_matrices(topo, net.rho)

    sigmas = {p.sigma for p in net.params}
    omegas = {p.omega for p in net.params}
    if len(sigmas) != 1 or len(omegas) != 1:
        raise DomainError("all oscillators of a network must share sigma and omega")

    corr = None
    if correction is not None:
        corr = np.asarray(correction, dtype=float)
        if corr.shape != (2 * net.n,):
            raise DomainError(f"correction must have length {2 * net.n}, got {corr.shape}")

    x = net.shifted()
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite network state")
    lam = np.array([p.lam for p in net.params])
    dx = network_derivative(x, lam, net.rho, sigmas.pop(), omegas.pop(), topo.k,
                            matrices.G, corr)
    return dx.reshape(-1)


def bifurcation_set(params: Sequence[HopfParams], sigma: int) -> Tuple[HopfParams, ...]:
    """Switch every oscillator to the same sigma. States are left untouched."""
    sigma = _check_sigma(sigma)
    updated = tuple(replace(p, sigma=sigma) for p in params)
    logger.debug(f"Bifurcation parameter set to {sigma:+d} on {len(updated)} oscillators")
    return updated


def synchronized_pattern(rho: np.ndarray, node_phases: np.ndarray, angle: float = 0.0) -> np.ndarray:
    """Shifted states lying on the synchronized limit cycle, shape (n, 2)."""
    theta = angle + np.asarray(node_phases, dtype=float)
    return np.asarray(rho, dtype=float)[:, None] * np.stack((np.cos(theta), np.sin(theta)), axis=-1)
