"""Builders for the two reference examples and their three networks.

Both examples share the networks below. Delays not stated for an edge
fall back to the other channel's value; all weights are 1.
"""

import numpy as np

from .engine import GainSpec, Scenario
from .plant import AgentModel, Exosystem
from .protocol import HETEROGENEOUS, PARTIAL_STATE
from .topology import NetworkTopology

# (parent, child, weight, delay, exchange_delay), 0-based; root delay
NETWORKS = {
    1: ([(0, 1, 1.0, 3, 2), (0, 2, 1.0, 2, 2)], 0),
    2: ([(0, 1, 1.0, 2, 2), (0, 2, 1.0, 4, 5), (2, 3, 1.0, 1, 2), (2, 4, 1.0, 2, 2)], 2),
    3: (
        [
            (0, 1, 1.0, 2, 2), (1, 2, 1.0, 4, 5), (1, 3, 1.0, 1, 1),
            (2, 4, 1.0, 2, 2), (2, 5, 1.0, 2, 5), (3, 6, 1.0, 4, 1),
            (3, 7, 1.0, 6, 6), (4, 8, 1.0, 2, 3), (4, 9, 1.0, 2, 1),
        ],
        2,
    ),
}
SIZES = {1: 3, 2: 5, 3: 10}

_S = np.sqrt(3.0) / 2.0
EXAMPLE1_A = np.array([[0.5, 1.0, 1.0], [0.0, _S, -0.5], [0.0, 0.5, _S]])
EXAMPLE1_B = np.array([[1.0], [1.0], [0.0]])
EXAMPLE1_C = np.array([[1.0, 0.0, 1.0]])
EXAMPLE1_XR0 = np.array([0.3, 0.1, 0.1])
EXAMPLE1_K = np.array([[0.0695, 1.7625, 1.2051]])
EXAMPLE1_H = np.array([[1.4327], [0.4143], [0.6993]])

EXAMPLE2_AR = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, -1.0, 1.0]])
EXAMPLE2_CR = np.array([[1.0, 0.0, 0.0]])
EXAMPLE2_XR0 = np.array([0.3, 0.1, 0.1])
EXAMPLE2_K = np.array([[1.006, -0.99, 0.6]])
EXAMPLE2_H = np.array([[0.9], [-0.35], [-0.225]])


def _class_models():
    a1 = AgentModel(
        [[0, 0, 1, 0], [0, 0, 0, 1], [0, 2, 1, 1], [1, 1, 1, 0]],
        [[0, 0], [0, 0], [1, 0], [0, 1]],
        [[0, 0, 1, 0]],
        np.eye(4),
    )
    a2 = AgentModel(np.eye(3, k=1), [[0], [0], [1]], [[1, 0, 0]], np.eye(3))
    a3 = AgentModel(
        [[0, 0, 0, 1, 0], [0, 1, -1, 0, 1], [0, 1, 0, 0, 0], [0, 0, 1, 0, 0], [1, 1, 0, 0, 1]],
        [[0, 0], [1, 0], [0, 0], [0, 0], [0, 1]],
        [[0, 0, 1, 0, 0]],
        np.eye(5),
    )
    a5 = AgentModel([[0, 1, 0], [0, 0, 1], [-2, 1, 0]], [[0], [0], [1]], [[1, 0, 0]], np.eye(3))
    return a1, a2, a3, a5


def example2_agents(n):
    """Heterogeneous agents 1..n; the class pattern repeats with period 5."""
    a1, a2, a3, a5 = _class_models()
    pattern = (a1, a2, a3, a3, a5)
    return tuple(pattern[i % 5] for i in range(n))


def network(case):
    edges, root_delay = NETWORKS[case]
    return NetworkTopology.from_edges(SIZES[case], edges, root=0, root_delay=root_delay)


def example1(case, seed=0):
    ag = AgentModel(EXAMPLE1_A, EXAMPLE1_B, EXAMPLE1_C)
    return Scenario(
        variant=PARTIAL_STATE,
        agents=(ag,) * SIZES[case],
        exosystem=Exosystem(EXAMPLE1_A, EXAMPLE1_C, EXAMPLE1_XR0),
        topology=network(case),
        gains=GainSpec(K=EXAMPLE1_K, H=EXAMPLE1_H),
        seed=seed,
        name=f"example1_case{case}",
    )


def example2(case, seed=0):
    return Scenario(
        variant=HETEROGENEOUS,
        agents=example2_agents(SIZES[case]),
        exosystem=Exosystem(EXAMPLE2_AR, EXAMPLE2_CR, EXAMPLE2_XR0),
        topology=network(case),
        gains=GainSpec(K=EXAMPLE2_K, H=EXAMPLE2_H),
        seed=seed,
        name=f"example2_case{case}",
    )
