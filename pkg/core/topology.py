"""
Balanced coupling graphs for CPG networks and the matrices derived from them.

Edges are written i <- j: oscillator i receives the phase-rotated state of
oscillator j, rotated by the phase shift Delta_ij. Node indices are 1-based
to match how networks are drawn and configured.
"""

import logging
import math
from collections import OrderedDict, deque
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import null_space

from core.errors import DomainError, StaleMatricesError, TopologyError
from core.oscillator import HopfParams, NetworkState, rotation2_stack

logger = logging.getLogger(__name__)

PHASE_TOLERANCE = 1e-9

# Wing network with four joints per wing: flap, pitch, lead-lag, second flap.
# Pairs are (i, j) for the coupling i <- j.
CONFIG_A_EDGES: Tuple[Tuple[int, int], ...] = (
    (1, 4), (1, 5), (2, 1), (3, 2), (4, 3),
    (5, 1), (5, 8), (6, 5), (7, 6), (8, 7),
)
CONFIG_A_JOINTS: Tuple[str, ...] = (
    "right_flap", "right_pitch", "right_leadlag", "right_flap2",
    "left_flap", "left_pitch", "left_leadlag", "left_flap2",
)


def wrap_angle(angle):
    """Map an angle (or array of angles) into [-pi, pi)."""
    return (np.asarray(angle) + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class Edge:
    target: int
    source: int
    delta: float

    def label(self) -> str:
        return f"{self.target} <- {self.source}"


@dataclass(frozen=True)
class NetworkTopology:
    n: int
    edges: Tuple[Edge, ...]
    k: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        if not math.isfinite(self.k) or self.k < 0:
            raise DomainError(f"coupling gain must be finite and non-negative, got {self.k}")

    def with_gain(self, k: float) -> "NetworkTopology":
        return replace(self, k=float(k))

    def in_degree(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for e in self.edges:
            deg[e.target - 1] += 1
        return deg

    def out_degree(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for e in self.edges:
            deg[e.source - 1] += 1
        return deg

    def is_undirected(self) -> bool:
        pairs = {(e.target, e.source) for e in self.edges}
        return all((j, i) in pairs for i, j in pairs)


@dataclass
class ValidationReport:
    """Outcome of validate_topology. ``offending`` names the first violation."""
    valid: bool
    errors: List[str] = field(default_factory=list)
    offending: Optional[str] = None
    node_phases: Optional[np.ndarray] = None
    connected: bool = True

    def raise_for_errors(self):
        if not self.valid:
            raise TopologyError("; ".join(self.errors), element=self.offending)


def _fail(report: ValidationReport, message: str, element: str) -> ValidationReport:
    report.valid = False
    report.errors.append(message)
    if report.offending is None:
        report.offending = element
    return report


def validate_topology(topo: NetworkTopology) -> ValidationReport:
    """
    Check endpoints, balance, antisymmetry and cycle consistency.

    Node phases are propagated breadth-first from node 1 (phase 0) over the
    undirected skeleton; every edge not on the spanning tree closes a cycle
    whose phase sum must vanish modulo 2 pi.
    """
    report = ValidationReport(valid=True)
    if topo.n < 1:
        return _fail(report, f"network needs at least one node, got n={topo.n}", "n")

    seen = set()
    for idx, e in enumerate(topo.edges):
        for node in (e.target, e.source):
            if not 1 <= node <= topo.n:
                return _fail(report, f"edge {idx} ({e.label()}) references node {node} outside 1..{topo.n}",
                             f"edge {idx} ({e.label()})")
        if e.target == e.source:
            return _fail(report, f"edge {idx} ({e.label()}) is a self-loop", f"edge {idx} ({e.label()})")
        if not math.isfinite(e.delta):
            return _fail(report, f"edge {idx} ({e.label()}) has a non-finite phase shift",
                         f"edge {idx} ({e.label()})")
        if (e.target, e.source) in seen:
            return _fail(report, f"edge {idx} ({e.label()}) is duplicated", f"edge {idx} ({e.label()})")
        seen.add((e.target, e.source))

    in_deg, out_deg = topo.in_degree(), topo.out_degree()
    for node in range(topo.n):
        if in_deg[node] != out_deg[node]:
            return _fail(report,
                         f"unbalanced graph: node {node + 1} has in-degree {in_deg[node]} "
                         f"and out-degree {out_deg[node]}", f"node {node + 1}")

    deltas: Dict[Tuple[int, int], float] = {(e.target, e.source): e.delta for e in topo.edges}
    for (i, j), d in deltas.items():
        if (j, i) in deltas and abs(wrap_angle(d + deltas[(j, i)])) > PHASE_TOLERANCE:
            return _fail(report,
                         f"edges {i} <- {j} and {j} <- {i} must carry opposite phase shifts",
                         f"edge {i} <- {j}")

    phases, connected = _propagate_phases(topo)
    report.node_phases = phases
    report.connected = connected

    for idx, e in enumerate(topo.edges):
        residual = float(wrap_angle(phases[e.target - 1] - phases[e.source - 1] - e.delta))
        if abs(residual) > PHASE_TOLERANCE:
            return _fail(report,
                         f"inconsistent cycle closed by edge {idx} ({e.label()}): phase shifts "
                         f"around the cycle sum to {math.degrees(-residual) % 360.0:.6g} deg, not 0 mod 360",
                         f"cycle through edge {idx} ({e.label()})")
    return report


def _propagate_phases(topo: NetworkTopology) -> Tuple[np.ndarray, bool]:
    neighbors: Dict[int, List[Tuple[int, float]]] = {i: [] for i in range(1, topo.n + 1)}
    for e in topo.edges:
        # phi_target = phi_source + delta
        neighbors[e.source].append((e.target, e.delta))
        neighbors[e.target].append((e.source, -e.delta))

    phases = np.full(topo.n, np.nan)
    connected = True
    for root in range(1, topo.n + 1):
        if not np.isnan(phases[root - 1]):
            continue
        if root != 1:
            connected = False
        phases[root - 1] = 0.0
        queue = deque([root])
        while queue:
            node = queue.popleft()
            for other, shift in neighbors[node]:
                if np.isnan(phases[other - 1]):
                    phases[other - 1] = phases[node - 1] + shift
                    queue.append(other)
    return wrap_angle(phases), connected


@dataclass(frozen=True)
class CouplingMatrices:
    G: np.ndarray
    L: np.ndarray
    T: np.ndarray
    T_inv: np.ndarray
    V: np.ndarray
    rho: np.ndarray
    node_phases: np.ndarray

    @property
    def n(self) -> int:
        return len(self.rho)

    def check_current(self, rho: Sequence[float]):
        if not np.array_equal(np.asarray(rho, dtype=float), self.rho):
            raise StaleMatricesError("coupling matrices were built for different radii")


def _block_matrix(n: int, rows: np.ndarray, cols: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    out = np.zeros((n, n, 2, 2))
    np.add.at(out, (rows, cols), blocks)
    return out.transpose(0, 2, 1, 3).reshape(2 * n, 2 * n)


def ones_block(n: int) -> np.ndarray:
    """The stacked 2x2 identity column (2n x 2)."""
    return np.tile(np.eye(2), (n, 1))


@dataclass(frozen=True)
class _Structure:
    n: int
    targets: np.ndarray
    sources: np.ndarray
    L: np.ndarray
    V: np.ndarray
    in_degree: np.ndarray


def _structure(topo: NetworkTopology) -> _Structure:
    n = topo.n
    targets = np.array([e.target - 1 for e in topo.edges], dtype=int)
    sources = np.array([e.source - 1 for e in topo.edges], dtype=int)
    scalar = np.zeros((n, n))
    for i, j in zip(targets, sources):
        scalar[i, i] += 1.0
        scalar[i, j] -= 1.0
    L = np.kron(scalar, np.eye(2))
    V = null_space(ones_block(n).T)
    return _Structure(n, targets, sources, L, V, topo.in_degree().astype(float))


def _assemble(structure: _Structure, rho: np.ndarray, phases: np.ndarray) -> CouplingMatrices:
    n = structure.n
    idx = np.arange(n)
    ti, sj = structure.targets, structure.sources

    diag = structure.in_degree[:, None, None] * np.eye(2)
    off = -(rho[ti] / rho[sj])[:, None, None] * rotation2_stack(phases[ti] - phases[sj])
    G = _block_matrix(n, np.concatenate((idx, ti)), np.concatenate((idx, sj)),
                      np.concatenate((diag, off)))

    scale = rho[0] / rho
    T = _block_matrix(n, idx, idx, scale[:, None, None] * rotation2_stack(-phases))
    T_inv = _block_matrix(n, idx, idx, (1.0 / scale)[:, None, None] * rotation2_stack(phases))
    return CouplingMatrices(G=G, L=structure.L, T=T, T_inv=T_inv, V=structure.V,
                            rho=rho.copy(), node_phases=phases.copy())


def _radii(params: Union[Sequence[HopfParams], Sequence[float], np.ndarray]) -> np.ndarray:
    items = list(params)
    if items and isinstance(items[0], HopfParams):
        return np.array([p.rho for p in items], dtype=float)
    return np.asarray(items, dtype=float)


def build_matrices(topo: NetworkTopology,
                   params: Union[Sequence[HopfParams], Sequence[float], np.ndarray]) -> CouplingMatrices:
    """
    Assemble G, L, T and V for a validated, connected topology.

    Args:
        topo: Coupling graph with phase shifts
        params: Per-node Hopf parameters, or the radii rho_i directly

    Returns:
        CouplingMatrices with T = diag((rho_1/rho_j) R(Delta_1j))
    """
    rho = _radii(params)
    if rho.shape != (topo.n,):
        raise DomainError(f"expected {topo.n} radii, got {rho.shape[0] if rho.ndim else 0}")
    if not np.all(np.isfinite(rho)) or np.any(rho <= 0):
        raise DomainError("radii must be finite and positive")
    report = validate_topology(topo)
    report.raise_for_errors()
    if not report.connected:
        reached = _reachable(topo)
        unreached = [i + 1 for i in range(topo.n) if not reached[i]]
        raise TopologyError(f"disconnected graph: nodes {unreached} are not reachable from node 1",
                            element=f"node {unreached[0]}")
    return _assemble(_structure(topo), rho, report.node_phases)


def _reachable(topo: NetworkTopology) -> List[bool]:
    adjacency: Dict[int, List[int]] = {i: [] for i in range(topo.n)}
    for e in topo.edges:
        adjacency[e.target - 1].append(e.source - 1)
        adjacency[e.source - 1].append(e.target - 1)
    seen = [False] * topo.n
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for other in adjacency[node]:
            if not seen[other]:
                seen[other] = True
                queue.append(other)
    return seen


class MatrixCache:
    """
    Coupling matrices for one fixed graph structure, keyed on node phases and radii.

    The graph is validated once; lookups rebuild G and T whenever any phase
    or radius differs from a cached entry. One writer per cache.
    """

    def __init__(self, topo: NetworkTopology, max_entries: int = 64):
        report = validate_topology(topo)
        report.raise_for_errors()
        if not report.connected:
            raise TopologyError("disconnected graph: relative phases are undefined", element="n")
        self.topology = topo
        self.nominal_phases = report.node_phases
        self.max_entries = max_entries
        self._structure = _structure(topo)
        self._entries: "OrderedDict[tuple, CouplingMatrices]" = OrderedDict()
        self.hits = 0
        self.misses = 0

    def get(self, rho: Sequence[float], node_phases: Optional[Sequence[float]] = None) -> CouplingMatrices:
        rho = np.asarray(rho, dtype=float)
        phases = self.nominal_phases if node_phases is None else np.asarray(node_phases, dtype=float)
        key = (rho.tobytes(), phases.tobytes())
        cached = self._entries.get(key)
        if cached is not None:
            self.hits += 1
            self._entries.move_to_end(key)
            return cached
        self.misses += 1
        matrices = _assemble(self._structure, rho, phases)
        self._entries[key] = matrices
        if len(self._entries) > self.max_entries:
            self._entries.popitem(last=False)
        return matrices

    def invalidate(self):
        self._entries.clear()


@dataclass(frozen=True)
class SyncThreshold:
    lambda_min: float
    k_min: float
    verifiable: bool

    def satisfied_by(self, k: float) -> bool:
        return self.verifiable and k > self.k_min

    def verdict(self, k: float) -> str:
        if not self.verifiable:
            return "condition unverifiable for this graph (lambda_min <= 0)"
        if self.satisfied_by(k):
            return f"k={k:g} satisfies k > k_min={self.k_min:.4g}"
        return (f"condition NOT satisfied: k={k:g} <= k_min={self.k_min:.4g} "
                f"(sufficient condition only)")


def sync_gain_threshold(mat: CouplingMatrices, lam: float) -> SyncThreshold:
    """Smallest eigenvalue of V^T (L + L^T) V / 2 and the gain k_min = lambda / lambda_min."""
    if mat.V.shape[1] == 0:
        return SyncThreshold(lambda_min=math.inf, k_min=0.0, verifiable=True)
    sym = mat.V.T @ ((mat.L + mat.L.T) / 2.0) @ mat.V
    lambda_min = float(np.linalg.eigvalsh(sym)[0])
    if lambda_min <= 1e-12:
        logger.warning(f"Synchronization condition unverifiable: lambda_min={lambda_min:.3g}")
        return SyncThreshold(lambda_min=lambda_min, k_min=math.inf, verifiable=False)
    return SyncThreshold(lambda_min=lambda_min, k_min=lam / lambda_min, verifiable=True)


def sync_error(net: Union[NetworkState, np.ndarray], mat: CouplingMatrices) -> Union[float, np.ndarray]:
    """
    Norm of V^T T {x}, zero exactly on the synchronized subspace.

    ``net`` may also be an array of stacked shifted states with shape
    (..., n, 2) or (..., 2n); an array of errors is returned then.
    """
    if isinstance(net, NetworkState):
        mat.check_current(net.rho)
        flat = net.shifted().reshape(-1)
        return float(np.linalg.norm(mat.V.T @ (mat.T @ flat)))
    x = np.asarray(net, dtype=float)
    if x.ndim >= 2 and x.shape[-2:] == (mat.n, 2):
        x = x.reshape(x.shape[:-2] + (-1,))
    projected = (x @ mat.T.T) @ mat.V
    errors = np.linalg.norm(projected, axis=-1)
    return float(errors) if errors.ndim == 0 else errors


def topology_from_node_phases(n: int, pairs: Sequence[Tuple[int, int]], phases: Sequence[float],
                              k: float = 0.0) -> NetworkTopology:
    """Build a cycle-consistent topology whose shifts are phi_i - phi_j."""
    phases = np.asarray(phases, dtype=float)
    edges = tuple(Edge(i, j, float(wrap_angle(phases[i - 1] - phases[j - 1]))) for i, j in pairs)
    return NetworkTopology(n=n, edges=edges, k=k)


def config_a_phases(delta21: float = math.pi / 2, delta31: float = -math.pi / 2,
                    delta65: Optional[float] = None, delta75: Optional[float] = None) -> np.ndarray:
    """Node phases of the eight-joint wing network relative to the right flap."""
    delta65 = delta21 if delta65 is None else delta65
    delta75 = delta31 if delta75 is None else delta75
    return np.array([0.0, delta21, delta31, delta31, 0.0, delta65, delta75, delta75])


def config_a(k: float = 60.0, delta21: float = math.pi / 2, delta31: float = -math.pi / 2,
             delta65: Optional[float] = None, delta75: Optional[float] = None,
             bidirectional: bool = False) -> NetworkTopology:
    """
    Eight-joint wing network: two unidirectional rings (one per wing)
    joined by a bidirectional link between the flapping joints.

    With ``bidirectional`` every ring coupling also runs in reverse, which
    keeps the graph balanced and makes L symmetric.
    """
    pairs: List[Tuple[int, int]] = list(CONFIG_A_EDGES)
    if bidirectional:
        pairs += [(j, i) for i, j in CONFIG_A_EDGES if (j, i) not in CONFIG_A_EDGES]
    return topology_from_node_phases(8, pairs, config_a_phases(delta21, delta31, delta65, delta75), k=k)
