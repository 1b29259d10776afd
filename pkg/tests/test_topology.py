import math

import numpy as np
import pytest

from core.errors import StaleMatricesError, TopologyError
from core.oscillator import HopfParams, NetworkState, rotation2, synchronized_pattern
from core.topology import (CONFIG_A_EDGES, Edge, MatrixCache, NetworkTopology, build_matrices, config_a,
                           config_a_phases, ones_block, sync_error, sync_gain_threshold, topology_from_node_phases,
                           validate_topology)

REFERENCE_RHO = np.radians([50.0, 30.0, 15.0, 30.0, 50.0, 30.0, 15.0, 30.0])


def ring_laplacian(n, edges):
    L = np.zeros((n, n))
    for i, j in edges:
        L[i - 1, i - 1] += 1.0
        L[i - 1, j - 1] -= 1.0
    return np.kron(L, np.eye(2))


class TestValidateTopology:
    def test_wing_network_is_valid(self):
        report = validate_topology(config_a())
        assert report.valid
        assert report.connected
        np.testing.assert_allclose(report.node_phases, config_a_phases(), atol=1e-12)

    def test_unbalanced_graph(self):
        topo = NetworkTopology(2, (Edge(1, 2, 0.0),))
        report = validate_topology(topo)
        assert not report.valid
        assert report.offending == "node 1"
        assert "unbalanced" in report.errors[0]

    def test_inconsistent_cycle(self):
        rad = math.radians
        topo = NetworkTopology(3, (Edge(2, 1, rad(120)), Edge(3, 2, rad(120)), Edge(1, 3, rad(130))))
        report = validate_topology(topo)
        assert not report.valid
        assert report.offending.startswith("cycle through edge")

    def test_consistent_three_cycle(self):
        rad = math.radians
        topo = NetworkTopology(3, (Edge(2, 1, rad(120)), Edge(3, 2, rad(120)), Edge(1, 3, rad(120))))
        assert validate_topology(topo).valid

    def test_reverse_edges_need_opposite_shifts(self):
        topo = NetworkTopology(2, (Edge(1, 2, 0.5), Edge(2, 1, 0.5)))
        report = validate_topology(topo)
        assert not report.valid
        assert "opposite" in report.errors[0]

    def test_edge_outside_node_range_names_the_edge(self):
        topo = NetworkTopology(8, config_a().edges + (Edge(9, 1, 0.0),))
        report = validate_topology(topo)
        assert not report.valid
        assert report.offending.startswith("edge 10")

    def test_self_loop(self):
        report = validate_topology(NetworkTopology(2, (Edge(1, 1, 0.0),)))
        assert not report.valid
        assert "self-loop" in report.errors[0]

    def test_raise_for_errors(self):
        with pytest.raises(TopologyError) as exc:
            validate_topology(NetworkTopology(2, (Edge(1, 2, 0.0),))).raise_for_errors()
        assert exc.value.element == "node 1"

    def test_disconnected_graph_is_rejected_by_build(self):
        topo = NetworkTopology(4, (Edge(1, 2, 0.0), Edge(2, 1, 0.0), Edge(3, 4, 0.0), Edge(4, 3, 0.0)))
        report = validate_topology(topo)
        assert report.valid and not report.connected
        with pytest.raises(TopologyError):
            build_matrices(topo, np.ones(4))

    def test_negative_gain(self):
        with pytest.raises(ValueError):
            NetworkTopology(2, (), k=-1.0)


class TestBuildMatrices:
    @pytest.fixture
    def mat(self):
        return build_matrices(config_a(), REFERENCE_RHO)

    def test_laplacian_matches_edge_list(self, mat):
        np.testing.assert_array_equal(mat.L, ring_laplacian(8, CONFIG_A_EDGES))

    def test_laplacian_annihilates_ones(self, mat):
        np.testing.assert_allclose(mat.L @ ones_block(8), 0.0, atol=1e-15)

    def test_similarity(self, mat):
        np.testing.assert_allclose(mat.G, mat.T_inv @ mat.L @ mat.T, atol=1e-12)
        np.testing.assert_allclose(mat.T_inv @ mat.T, np.eye(16), atol=1e-12)

    def test_v_is_orthonormal_complement(self, mat):
        V = mat.V
        assert V.shape == (16, 14)
        np.testing.assert_allclose(V.T @ V, np.eye(14), atol=1e-12)
        ones = ones_block(8)
        np.testing.assert_allclose(V @ V.T + ones @ ones.T / 8.0, np.eye(16), atol=1e-12)

    def test_undirected_graph_has_symmetric_laplacian(self, mat):
        assert not config_a().is_undirected()
        assert not np.array_equal(mat.L, mat.L.T)
        topo = config_a(bidirectional=True)
        assert topo.is_undirected()
        L = build_matrices(topo, REFERENCE_RHO).L
        np.testing.assert_array_equal(L, L.T)

    def test_zero_shifts_and_equal_radii_give_laplacian(self):
        topo = config_a(delta21=0.0, delta31=0.0)
        mat = build_matrices(topo, np.full(8, 0.5))
        np.testing.assert_allclose(mat.T, np.eye(16), atol=1e-15)
        np.testing.assert_allclose(mat.G, mat.L, atol=1e-15)

    def test_two_node_transform_blocks(self):
        topo = topology_from_node_phases(2, [(1, 2), (2, 1)], [0.0, math.radians(-30.0)])
        assert math.isclose(topo.edges[0].delta, math.radians(30.0))
        mat = build_matrices(topo, [2.0, 1.0])
        np.testing.assert_allclose(mat.T[:2, :2], np.eye(2), atol=1e-15)
        np.testing.assert_allclose(mat.T[2:, 2:], 2.0 * rotation2(math.radians(30.0)), atol=1e-15)

    def test_accepts_hopf_params(self):
        params = [HopfParams(lam=10.0, rho=r) for r in REFERENCE_RHO]
        np.testing.assert_allclose(build_matrices(config_a(), params).rho, REFERENCE_RHO)

    def test_rejects_bad_radii(self):
        with pytest.raises(ValueError):
            build_matrices(config_a(), np.zeros(8))
        with pytest.raises(ValueError):
            build_matrices(config_a(), np.ones(7))


class TestSyncThreshold:
    def test_wing_network_lambda_min(self):
        threshold = sync_gain_threshold(build_matrices(config_a(), REFERENCE_RHO), lam=10.0)
        assert threshold.verifiable
        assert threshold.lambda_min == pytest.approx(0.198, abs=1e-3)
        assert threshold.k_min == pytest.approx(50.5, abs=0.05)

    def test_lambda_min_does_not_depend_on_phases_or_radii(self):
        a = sync_gain_threshold(build_matrices(config_a(), REFERENCE_RHO), lam=10.0)
        b = sync_gain_threshold(build_matrices(config_a(delta21=0.3, delta31=1.1), np.ones(8)), lam=10.0)
        assert a.lambda_min == pytest.approx(b.lambda_min, abs=1e-12)

    def test_two_node_bidirectional(self):
        topo = NetworkTopology(2, (Edge(1, 2, 0.0), Edge(2, 1, 0.0)))
        threshold = sync_gain_threshold(build_matrices(topo, [1.0, 1.0]), lam=1.0)
        assert threshold.lambda_min == pytest.approx(2.0)
        assert threshold.k_min == pytest.approx(0.5)

    def test_verdicts(self):
        threshold = sync_gain_threshold(build_matrices(config_a(), REFERENCE_RHO), lam=10.0)
        assert threshold.satisfied_by(60.0)
        assert threshold.verdict(60.0).startswith("k=60 satisfies")
        assert not threshold.satisfied_by(40.0)
        assert "NOT satisfied" in threshold.verdict(40.0)

    def test_bidirectional_rings_raise_lambda_min(self):
        one_way = sync_gain_threshold(build_matrices(config_a(), REFERENCE_RHO), lam=10.0)
        two_way = sync_gain_threshold(build_matrices(config_a(bidirectional=True), REFERENCE_RHO), lam=10.0)
        assert two_way.lambda_min > one_way.lambda_min


class TestSyncError:
    def test_zero_on_synchronized_pattern(self):
        mat = build_matrices(config_a(), REFERENCE_RHO)
        x = synchronized_pattern(REFERENCE_RHO, config_a_phases(), angle=1.2)
        assert sync_error(x, mat) < 1e-12

    def test_two_node_example(self):
        topo = NetworkTopology(2, (Edge(1, 2, 0.0), Edge(2, 1, 0.0)))
        mat = build_matrices(topo, [1.0, 1.0])
        assert sync_error(np.array([[1.0, 0.0], [0.0, 0.0]]), mat) == pytest.approx(1.0 / math.sqrt(2.0))

    def test_batched_errors(self):
        topo = NetworkTopology(2, (Edge(1, 2, 0.0), Edge(2, 1, 0.0)))
        mat = build_matrices(topo, [1.0, 1.0])
        x = np.array([[[1.0, 0.0], [0.0, 0.0]], [[1.0, 1.0], [1.0, 1.0]]])
        np.testing.assert_allclose(sync_error(x, mat), [1.0 / math.sqrt(2.0), 0.0], atol=1e-15)

    def test_network_state_with_stale_matrices(self):
        topo = NetworkTopology(2, (Edge(1, 2, 0.0), Edge(2, 1, 0.0)))
        mat = build_matrices(topo, [1.0, 1.0])
        params = (HopfParams(lam=1.0, rho=1.0), HopfParams(lam=1.0, rho=2.0))
        net = NetworkState.from_shifted(np.zeros((2, 2)), params)
        with pytest.raises(StaleMatricesError):
            sync_error(net, mat)


class TestMatrixCache:
    def test_hits_and_misses(self):
        cache = MatrixCache(config_a())
        first = cache.get(REFERENCE_RHO)
        assert cache.get(REFERENCE_RHO) is first
        assert (cache.hits, cache.misses) == (1, 1)

    def test_changed_radius_rebuilds(self):
        cache = MatrixCache(config_a())
        first = cache.get(REFERENCE_RHO)
        rho = REFERENCE_RHO.copy()
        rho[2] += 0.01
        second = cache.get(rho)
        assert second is not first
        assert cache.misses == 2
        with pytest.raises(StaleMatricesError):
            first.check_current(rho)

    def test_explicit_phases_match_rebuilt_topology(self):
        cache = MatrixCache(config_a())
        phases = config_a_phases(delta21=math.radians(70.0))
        cached = cache.get(REFERENCE_RHO, phases)
        rebuilt = build_matrices(config_a(delta21=math.radians(70.0)), REFERENCE_RHO)
        np.testing.assert_allclose(cached.G, rebuilt.G, atol=1e-12)

    def test_invalid_topology_is_rejected(self):
        with pytest.raises(TopologyError):
            MatrixCache(NetworkTopology(2, (Edge(1, 2, 0.0),)))
