import numpy as np
import pytest

from delaysync.errors import TopologyError
from delaysync.examples import network
from delaysync.topology import (
    NetworkTopology,
    delay_transfer_matrix,
    derive,
    permute,
    random_tree,
    validate_and_reorder,
    with_delays,
)


def test_three_node_matrices(tree3):
    d = tree3
    L = np.array([[0, 0, 0], [-1, 1, 0], [-1, 0, 1]], dtype=float)
    assert np.array_equal(d.L, L)
    # hand evaluation with d_in = (0, 1, 1) and iota = (1, 0, 0)
    D_bar = np.array([[1 / 2, 0, 0], [1 / 3, 2 / 3, 0], [1 / 3, 0, 2 / 3]])
    assert np.allclose(d.D_bar, D_bar, atol=1e-15)
    assert np.array_equal(d.D[0], [1.0, 0.0, 0.0])
    assert np.allclose(d.D, [[1, 0, 0], [0.5, 0.5, 0], [0.5, 0, 0.5]])
    assert np.array_equal(d.L_bar, L + np.diag([1.0, 0, 0]))
    assert list(d.cumulative_delays) == [0, 3, 2]


@pytest.mark.parametrize(
    "case, expected",
    [(1, [0, 3, 2]), (2, [2, 4, 6, 7, 8]), (3, [2, 4, 8, 5, 10, 10, 9, 11, 12, 12])],
)
def test_cumulative_delays_are_path_sums(case, expected):
    d = derive(network(case))
    assert list(d.cumulative_delays) == expected
    # consistency relation kappa_ij = kappa_ir - kappa_jr on every edge
    for (i, j), k in d.topology.delays.items():
        assert k == d.cumulative_delays[i] - d.cumulative_delays[j]


def test_already_ordered_tree_is_unchanged():
    t = network(3)
    r = validate_and_reorder(t)
    assert r.permutation == tuple(range(10))
    assert r.weights == t.weights


def test_swapped_labels_are_reordered():
    # root is agent 2; edges 2->1, 2->3
    t = NetworkTopology.from_edges(3, [(1, 0, 1.0, 3, 2), (1, 2, 1.0, 2, 2)], root=1)
    r = validate_and_reorder(t)
    assert r.permutation == (1, 0, 2)
    d = derive(t)
    assert np.allclose(np.triu(d.L, 1), 0)
    assert d.L[1, 0] == -1 and d.L[2, 0] == -1
    assert list(d.cumulative_delays) == [0, 3, 2]


def test_two_cycle_rejected():
    t = NetworkTopology(2, {(0, 1): 1.0, (1, 0): 1.0}, (1, 0), {(0, 1): 0, (1, 0): 0}, {(0, 1): 0, (1, 0): 0})
    with pytest.raises(TopologyError) as exc:
        validate_and_reorder(t)
    assert exc.value.node == 1


def test_cycle_is_named():
    t = NetworkTopology.from_edges(4, [(0, 1, 1, 0, 0), (3, 2, 1, 0, 0), (2, 3, 1, 0, 0)])
    with pytest.raises(TopologyError, match=r"cycle 4->3->4"):
        derive(t)


@pytest.mark.parametrize(
    "edges, links, node",
    [
        ([(0, 1, 1, 0, 0)], (1, 1), 2),  # two exosystem links
        ([(0, 1, 1, 0, 0), (0, 2, 1, 0, 0), (1, 2, 1, 0, 0)], (1, 0, 0), 3),  # in-degree 2
        ([(0, 1, 1, 0, 0)], (0, 1), 2),  # linked agent has a parent
        ([(0, 1, -1.0, 0, 0)], (1, 0), 2),  # negative weight
        ([(0, 1, 1, 1.5, 0)], (1, 0), 2),  # fractional delay
        ([(0, 1, 1, 0, -1)], (1, 0), 2),  # negative exchange delay
    ],
)
def test_invalid_topologies(edges, links, node):
    t = NetworkTopology.from_edges(len(links), edges)
    t = NetworkTopology(t.n_agents, t.weights, links, t.delays, t.exchange_delays)
    with pytest.raises(TopologyError) as exc:
        derive(t)
    assert exc.value.node == node


def test_no_link_rejected():
    t = NetworkTopology.from_edges(2, [(0, 1, 1, 0, 0)])
    t = NetworkTopology(2, t.weights, (0, 0), t.delays, t.exchange_delays)
    with pytest.raises(TopologyError, match="exactly one"):
        derive(t)


def test_duplicate_edge_rejected():
    with pytest.raises(TopologyError):
        NetworkTopology.from_edges(2, [(0, 1, 1, 0, 0), (0, 1, 1, 0, 0)])


def test_zero_weight_edge_is_ignored():
    t = NetworkTopology.from_edges(3, [(0, 1, 1, 0, 0), (0, 2, 1, 0, 0), (1, 2, 0.0, 0, 0)])
    assert derive(t).L[2, 1] == 0


def test_random_tree_invariants(rng):
    for _ in range(200):
        n = int(rng.integers(1, 26))
        wr = None if rng.random() < 0.5 else (0.1, 5.0)
        d = derive(random_tree(n, rng, weight_range=wr, delay_range=(0, 6)))
        I = np.eye(n)
        assert np.allclose(d.D.sum(axis=1), 1.0, atol=1e-12, rtol=0)
        assert np.all(d.D >= 0)
        assert np.allclose(np.linalg.solve(I + d.D_in, d.L), I - d.D, atol=1e-12, rtol=0)
        assert np.all(d.D_bar >= 0)
        assert np.all(d.D_bar.sum(axis=1) <= 1 + 1e-12)
        assert np.allclose(np.triu(d.D_bar, 1), 0)
        diag = np.diag(d.D_bar)
        assert np.all((diag > 0) & (diag < 1))
        assert np.max(np.abs(np.linalg.eigvals(d.D_bar))) < 1
        assert np.array_equal(d.L_bar, d.L + np.diag(d.topology.root_links))


def test_transfer_matrix(tree3, rng):
    d = tree3
    assert np.array_equal(delay_transfer_matrix(d, 0.0), d.D_bar)
    for w in rng.uniform(-10, 10, 100):
        M = delay_transfer_matrix(d, w)
        assert np.allclose(np.abs(M), d.D_bar, atol=1e-15)
        assert np.allclose(np.triu(M, 1), 0)


def test_transfer_matrix_phases():
    # kappa_hat_21 - kappa_21 = 1
    d = derive(NetworkTopology.from_edges(2, [(0, 1, 1.0, 2, 3)]))
    assert delay_transfer_matrix(d, np.pi)[1, 0] == pytest.approx(-d.D_bar[1, 0])
    # difference -1 at omega = pi/2 gives the factor e^{j pi/2} = j
    d = derive(NetworkTopology.from_edges(2, [(0, 1, 1.0, 3, 2)]))
    assert delay_transfer_matrix(d, np.pi / 2)[1, 0] == pytest.approx(1j * d.D_bar[1, 0])


def test_reordering_invariance(rng):
    for _ in range(30):
        n = int(rng.integers(2, 12))
        t = random_tree(n, rng, weight_range=(0.5, 2.0), delay_range=(0, 4))
        sigma = rng.permutation(n)
        d0, d1 = derive(t), derive(permute(t, sigma))
        # both are in canonical tree order; map through the recorded permutations
        p0 = np.array(d0.topology.permutation)
        p1 = np.array(d1.topology.permutation)
        # new index a in d1 is old label inv_sigma[p1[a]] of t
        inv = np.argsort(sigma)
        labels1 = inv[p1]
        pos0 = np.argsort(p0)
        P = pos0[labels1]
        assert np.allclose(d1.D_bar, d0.D_bar[np.ix_(P, P)])
        assert np.array_equal(d1.cumulative_delays, d0.cumulative_delays[P])


def test_with_delays_redraws_all_channels(rng):
    t = network(3)
    t2 = with_delays(t, rng, 1, 20)
    assert t2.weights == t.weights
    values = list(t2.delays.values()) + list(t2.exchange_delays.values()) + [t2.root_delay]
    assert all(1 <= v <= 20 for v in values)
    assert derive(t2).n_agents == 10
