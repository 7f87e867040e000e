"""Directed spanning-tree networks and the matrices derived from them.

Agents are indexed from 0 internally. Edge keys are ``(i, j)`` meaning
"agent ``i`` receives from agent ``j``", so ``weights[(i, j)]`` is a_ij.
"""

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import TopologyError


@dataclass(frozen=True)
class NetworkTopology:
    """Weighted directed graph with per-edge delays and one exosystem link.

    Attributes
    ----------
    n_agents : int
    weights : dict[(int, int), float]
        ``a_ij > 0`` for every edge ``j -> i``.
    root_links : tuple of int
        ``iota_i`` in {0, 1}; exactly one agent may see the exosystem.
    delays : dict[(int, int), int]
        Output-channel delay ``kappa_ij`` for every edge.
    exchange_delays : dict[(int, int), int]
        Protocol-exchange delay ``kappa_hat_ij`` for every edge.
    root_delay : int
        ``kappa_1r``, the exosystem-to-root delay.
    permutation : tuple of int
        ``permutation[new] = old`` once reordered; identity otherwise.
    """

    n_agents: int
    weights: dict
    root_links: tuple
    delays: dict
    exchange_delays: dict
    root_delay: int = 0
    permutation: tuple = None

    def __post_init__(self):
        if self.permutation is None:
            object.__setattr__(self, "permutation", tuple(range(self.n_agents)))

    @classmethod
    def from_edges(cls, n_agents, edges, root=0, root_delay=0):
        """Build from ``(parent, child, weight, delay, exchange_delay)`` tuples."""
        weights, delays, exch = {}, {}, {}
        for parent, child, w, kappa, kappa_hat in edges:
            key = (child, parent)
            if key in weights:
                raise TopologyError(f"duplicate edge {parent + 1}->{child + 1}", node=child + 1)
            weights[key] = float(w)
            delays[key] = kappa
            exch[key] = kappa_hat
        links = tuple(1 if i == root else 0 for i in range(n_agents))
        return cls(n_agents, weights, links, delays, exch, root_delay)

    def parents(self):
        out = {i: [] for i in range(self.n_agents)}
        for (i, j), w in self.weights.items():
            if w > 0:
                out[i].append(j)
        return out

    def edges(self):
        """Edges sorted by (child, parent) as ``(parent, child, w, kappa, kappa_hat)``."""
        return [
            (j, i, self.weights[(i, j)], self.delays[(i, j)], self.exchange_delays[(i, j)])
            for (i, j) in sorted(self.weights)
        ]

    @property
    def root(self):
        return self.root_links.index(1)


@dataclass(frozen=True)
class DerivedNetwork:
    topology: NetworkTopology
    L: np.ndarray
    D: np.ndarray
    D_in: np.ndarray
    L_bar: np.ndarray
    D_bar: np.ndarray
    kappa: np.ndarray = field(repr=False)
    kappa_hat: np.ndarray = field(repr=False)
    cumulative_delays: np.ndarray = None
    _neighbors: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        N = self.topology.n_agents
        nb = tuple(tuple(j for j in range(N) if j != i and self.D_bar[i, j] != 0.0) for i in range(N))
        object.__setattr__(self, "_neighbors", nb)
        # per-node tree data for vectorized couplings; the root's "edge" is the exosystem link
        parent = np.array([nb[i][0] if nb[i] else -1 for i in range(N)], dtype=int)
        rows = np.arange(1, N)
        weight = np.diag(self.L_bar).copy()
        weight[rows] = -self.L[rows, parent[1:]]
        exch_parent = np.zeros(N)
        exch_parent[rows] = self.D_bar[rows, parent[1:]]
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("parent", parent)
        set_("edge_weight", weight)
        set_("in_degree", np.diag(self.D_in).copy())
        set_("exchange_self", 1.0 - np.diag(self.D_bar))
        set_("exchange_parent", exch_parent)

    @property
    def n_agents(self):
        return self.topology.n_agents

    def neighbors(self, i):
        """In-neighbors of agent ``i`` (tree-order indices)."""
        return self._neighbors[i]


def _check_delay(value, what, node):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
        raise TopologyError(f"{what} must be a nonnegative integer, got {value!r}", node=node)


def validate_and_reorder(t):
    """Check that ``t`` is a directed spanning tree rooted at the exosystem link.

    Returns a relabeled topology whose Laplacian is lower triangular with the
    root first. The relabeling is the smallest-label-first topological order,
    so an already valid ordering is returned unchanged.
    """
    N = t.n_agents
    if N < 1:
        raise TopologyError("network must contain at least one agent")
    links = tuple(int(v) for v in t.root_links)
    if len(links) != N or any(v not in (0, 1) for v in links):
        raise TopologyError("root_links must hold one 0/1 flag per agent")
    if sum(links) != 1:
        linked = [i + 1 for i, v in enumerate(links) if v]
        raise TopologyError(
            f"exactly one agent must be linked to the exosystem, got {linked or 'none'}",
            node=linked[1] if len(linked) > 1 else None,
        )
    _check_delay(t.root_delay, "root delay", links.index(1) + 1)
    parents = {i: [] for i in range(N)}
    for (i, j), w in t.weights.items():
        if not (0 <= i < N and 0 <= j < N):
            raise TopologyError(f"edge {j + 1}->{i + 1} references an unknown agent")
        if i == j:
            raise TopologyError(f"self-loop on agent {i + 1}", node=i + 1)
        if not np.isfinite(w) or w < 0:
            raise TopologyError(f"weight of edge {j + 1}->{i + 1} must be nonnegative, got {w}", node=i + 1)
        if w == 0:
            continue
        if (i, j) not in t.delays or (i, j) not in t.exchange_delays:
            raise TopologyError(f"edge {j + 1}->{i + 1} is missing a delay", node=i + 1)
        _check_delay(t.delays[(i, j)], f"delay on edge {j + 1}->{i + 1}", i + 1)
        _check_delay(t.exchange_delays[(i, j)], f"exchange delay on edge {j + 1}->{i + 1}", i + 1)
        parents[i].append(j)

    root = links.index(1)
    if parents[root]:
        raise TopologyError(f"root agent {root + 1} must not have incoming edges", node=root + 1)
    for i in range(N):
        if i != root and len(parents[i]) != 1:
            raise TopologyError(
                f"agent {i + 1} has in-degree {len(parents[i])}; a spanning tree needs exactly 1",
                node=i + 1,
            )

    children = {i: [] for i in range(N)}
    for i, ps in parents.items():
        for j in ps:
            children[j].append(i)
    order = []
    heap = [root]
    while heap:
        j = heapq.heappop(heap)
        order.append(j)
        for c in children[j]:
            heapq.heappush(heap, c)
    if len(order) != N:
        # every unreached node has exactly one parent, so walking parents
        # from any of them must close a cycle
        stray = min(set(range(N)) - set(order))
        path, node = [], stray
        while node not in path:
            path.append(node)
            node = parents[node][0]
        cycle = path[path.index(node):][::-1]
        names = "->".join(str(v + 1) for v in cycle + [cycle[0]])
        raise TopologyError(f"cycle {names} is not reachable from the root", node=min(cycle) + 1)

    new_of = {old: new for new, old in enumerate(order)}
    remap = lambda d: {(new_of[i], new_of[j]): v for (i, j), v in d.items() if t.weights[(i, j)] > 0}
    return NetworkTopology(
        n_agents=N,
        weights=remap(t.weights),
        root_links=tuple(1 if new == 0 else 0 for new in range(N)),
        delays=remap(t.delays),
        exchange_delays=remap(t.exchange_delays),
        root_delay=int(t.root_delay),
        permutation=tuple(t.permutation[old] for old in order),
    )


def laplacian(weights, n_agents):
    L = np.zeros((n_agents, n_agents))
    for (i, j), w in weights.items():
        L[i, j] -= w
        L[i, i] += w
    return L


def derive(t, tol=1e-12):
    """Compute L, D, D_in, L_bar, D_bar and cumulative delays for ``t``.

    ``t`` is validated (and reordered if necessary) first.
    """
    t = validate_and_reorder(t)
    N = t.n_agents
    L = laplacian(t.weights, N)
    d_in = np.diag(L).copy()
    D_in = np.diag(d_in)
    I = np.eye(N)
    D = I - L / (1.0 + d_in)[:, None]
    L_bar = L + np.diag(t.root_links).astype(float)
    D_bar = I - L_bar / (2.0 + d_in)[:, None]

    if np.any(D < -tol) or np.max(np.abs(D.sum(axis=1) - 1.0)) > tol:
        raise TopologyError("row-stochastic matrix D is invalid")
    if np.any(D_bar < -tol) or np.any(D_bar.sum(axis=1) > 1.0 + tol):
        bad = int(np.argmax(D_bar.sum(axis=1))) + 1
        raise TopologyError("contraction matrix D_bar must be nonnegative with row sums <= 1", node=bad)
    if np.any(np.abs(np.triu(L, 1)) > 0):
        raise TopologyError("Laplacian is not lower triangular after reordering")

    kappa = np.zeros((N, N), dtype=int)
    kappa_hat = np.zeros((N, N), dtype=int)
    for (i, j) in t.weights:
        kappa[i, j] = t.delays[(i, j)]
        kappa_hat[i, j] = t.exchange_delays[(i, j)]
    cumulative = np.zeros(N, dtype=int)
    cumulative[0] = t.root_delay
    # parents precede children after reordering
    for i in range(1, N):
        j = int(np.nonzero(L[i, :i])[0][0])
        cumulative[i] = cumulative[j] + kappa[i, j]
    return DerivedNetwork(t, L, D, D_in, L_bar, D_bar, kappa, kappa_hat, cumulative)


def delay_transfer_matrix(d, omega):
    """Frequency-dependent contraction matrix.

    Off-diagonal entries are ``d_bar_ij * exp(-1j * omega * (kappa_hat_ij - kappa_ij))``;
    the diagonal is ``D_bar``'s.
    """
    phase = np.exp(-1j * omega * (d.kappa_hat - d.kappa))
    M = d.D_bar * phase
    np.fill_diagonal(M, np.diag(d.D_bar))
    return M


def random_tree(n_agents, rng, weight_range=None, delay_range=(0, 0), root_delay=None):
    """Random directed spanning tree with agent 0 as root.

    Each node ``i >= 1`` picks a parent uniformly from ``0..i-1``. Weights are
    1 unless ``weight_range=(lo, hi)`` is given. Delays are drawn uniformly
    from the inclusive ``delay_range`` for both channels independently.
    """
    lo, hi = delay_range
    edges = []
    for i in range(1, n_agents):
        parent = int(rng.integers(0, i))
        w = 1.0 if weight_range is None else float(rng.uniform(*weight_range))
        edges.append((parent, i, w, int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))))
    if root_delay is None:
        root_delay = int(rng.integers(lo, hi + 1))
    return NetworkTopology.from_edges(n_agents, edges, root=0, root_delay=root_delay)


def with_delays(t, rng, low, high):
    """Copy of ``t`` with every delay (edges, exchange channels, root link) redrawn."""
    draw = lambda: int(rng.integers(low, high + 1))
    return NetworkTopology(
        n_agents=t.n_agents,
        weights=dict(t.weights),
        root_links=t.root_links,
        delays={k: draw() for k in sorted(t.delays)},
        exchange_delays={k: draw() for k in sorted(t.exchange_delays)},
        root_delay=draw(),
        permutation=t.permutation,
    )


def permute(t, sigma):
    """Relabel agents: old agent ``i`` becomes ``sigma[i]``."""
    m = lambda d: {(sigma[i], sigma[j]): v for (i, j), v in d.items()}
    links = [0] * t.n_agents
    for i, v in enumerate(t.root_links):
        links[sigma[i]] = v
    return NetworkTopology(
        t.n_agents, m(t.weights), tuple(links), m(t.delays), m(t.exchange_delays), t.root_delay
    )
