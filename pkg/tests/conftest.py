import numpy as np
import pytest

from delaysync.examples import (
    EXAMPLE1_A,
    EXAMPLE1_B,
    EXAMPLE1_C,
    EXAMPLE1_H,
    EXAMPLE1_K,
    EXAMPLE2_AR,
    EXAMPLE2_CR,
    EXAMPLE2_H,
    EXAMPLE2_K,
    example2_agents,
    network,
)
from delaysync.plant import AgentModel, Exosystem, remodel_exosystem
from delaysync.topology import derive


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def ex1():
    """Example 1 matrices and the reference gains."""
    return {
        "A": EXAMPLE1_A, "B": EXAMPLE1_B, "C": EXAMPLE1_C, "K": EXAMPLE1_K, "H": EXAMPLE1_H,
        "agent": AgentModel(EXAMPLE1_A, EXAMPLE1_B, EXAMPLE1_C),
    }


@pytest.fixture
def ex2():
    exo = Exosystem(EXAMPLE2_AR, EXAMPLE2_CR, [0.3, 0.1, 0.1])
    agents = example2_agents(5)
    return {
        "exo": exo, "agents": agents, "K": EXAMPLE2_K, "H": EXAMPLE2_H,
        "target": remodel_exosystem(exo, [a.infinite_zero_order() for a in agents]),
    }


@pytest.fixture
def tree3():
    """Three-node star 1->2, 1->3 with the first example's delays."""
    return derive(network(1))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
