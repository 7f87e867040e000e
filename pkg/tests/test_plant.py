import numpy as np
import pytest

from delaysync.errors import DimensionError, HomogenizationError, ModelError
from delaysync.examples import EXAMPLE2_AR, EXAMPLE2_CR, example2_agents
from delaysync.plant import (
    AgentModel,
    Exosystem,
    PreCompensator,
    TargetModel,
    check_homogenization,
    homogenization_residual,
    homogenize,
    remodel_exosystem,
    step_agent,
    step_exosystem,
)


def test_step_agent(ex1):
    a = ex1["agent"]
    x, y, z = step_agent(a, np.zeros(3), [0.0])
    assert not np.any(x) and z is None
    x, y, _ = step_agent(a, [1, 0, 0], [0.0])
    assert np.array_equal(x, [0.5, 0, 0])
    assert y == pytest.approx([1.0])
    x, _, _ = step_agent(a, np.zeros(3), [1.0])
    assert np.array_equal(x, [1, 1, 0])
    with pytest.raises(DimensionError):
        step_agent(a, np.zeros(2), [0.0])


def test_step_agent_with_measurement():
    a = example2_agents(1)[0]
    x = np.arange(4.0)
    _, _, z = step_agent(a, x, [0.0, 0.0])
    assert np.array_equal(z, x)


def test_step_exosystem(ex1):
    exo = Exosystem(ex1["A"], ex1["C"], [0.3, 0.1, 0.1])
    _, y = step_exosystem(exo, exo.x0)
    assert y == pytest.approx([0.4])
    x, _ = step_exosystem(exo, np.zeros(3))
    assert not np.any(x)
    exo2 = Exosystem(EXAMPLE2_AR, EXAMPLE2_CR)
    x, _ = step_exosystem(exo2, [1, 0, 0])
    assert np.array_equal(x, [0, 0, 1])


def test_model_dimension_checks():
    with pytest.raises(DimensionError):
        AgentModel(np.eye(2), np.ones((3, 1)), np.ones((1, 2)))
    with pytest.raises(DimensionError):
        AgentModel(np.ones((2, 3)), np.ones((2, 1)), np.ones((1, 3)))
    with pytest.raises(DimensionError):
        AgentModel(np.eye(2), np.ones((2, 1)), np.ones((1, 2)), C_m=np.eye(3))
    with pytest.raises(DimensionError):
        Exosystem(np.eye(2), np.ones((1, 3)))


def test_models_are_immutable(ex1):
    with pytest.raises(ValueError):
        ex1["agent"].A[0, 0] = 2.0


def test_model_requirements(ex1, ex2):
    ex1["agent"].check_homogeneous()
    with pytest.raises(ModelError):
        AgentModel(2 * np.eye(2), np.ones((2, 1)), np.ones((1, 2))).check_homogeneous()
    for a in ex2["agents"]:
        a.check_heterogeneous()
        assert a.is_right_invertible()
    ex2["exo"].check_reference()
    with pytest.raises(ModelError):
        Exosystem(np.diag([0.5, 1.0]), [[1.0, 1.0]]).check_reference()
    with pytest.raises(ModelError):
        Exosystem(np.eye(2), [[1.0, 0.0]]).check_reference()


def test_infinite_zero_orders(ex2):
    assert [a.infinite_zero_order() for a in ex2["agents"]] == [1, 3, 2, 2, 3]


def test_exosystem_trajectory_is_polynomially_bounded(ex1):
    for A, C in ((ex1["A"], ex1["C"]), (EXAMPLE2_AR, EXAMPLE2_CR)):
        exo = Exosystem(A, C, [0.3, 0.1, 0.1])
        x = exo.x0.copy()
        norm0 = np.linalg.norm(x)
        for k in range(1, 10001):
            x, _ = step_exosystem(exo, x)
            if k % 1000 == 0:
                assert np.linalg.norm(x) <= 10 * norm0 * k ** exo.r


def test_remodel_example2_matches_reference_target(ex2):
    t = ex2["target"]
    assert t.n_q == 3
    assert np.array_equal(t.A, EXAMPLE2_AR)
    assert np.array_equal(t.B, [[0], [0], [1]])
    assert np.array_equal(t.C, EXAMPLE2_CR)
    assert np.allclose(t.state_map, np.eye(3))


def test_markov_parameters(ex2):
    t = ex2["target"]
    M = t.markov_parameters()
    assert np.allclose(M[0], 0, atol=1e-10) and np.allclose(M[1], 0, atol=1e-10)
    assert abs(np.linalg.det(M[2])) > 1e-10


def test_remodel_fixed_point(ex2):
    t = ex2["target"]
    again = remodel_exosystem(Exosystem(t.A, t.C), [], n_q=3)
    assert np.array_equal(again.A, t.A) and np.array_equal(again.B, t.B)


def test_remodel_scalar_exosystem():
    t = remodel_exosystem(Exosystem([[1.0]], [[1.0]]), [2])
    assert t.n_q == 2 and t.A.shape == (2, 2)
    eigs = np.sort(np.abs(np.linalg.eigvals(t.A)))
    assert np.allclose(eigs, [0.0, 1.0])
    t.verify(exosystem=Exosystem([[1.0]], [[1.0]]))
    # the state map reproduces the exosystem output from any initial state
    xr = np.array([0.7])
    xt = t.state_map @ xr
    for _ in range(5):
        assert t.C @ xt == pytest.approx([xr[0]])
        xt = t.A @ xt


def test_remodel_rejects_low_rank():
    with pytest.raises(ModelError):
        remodel_exosystem(Exosystem(EXAMPLE2_AR, EXAMPLE2_CR), [], n_q=2)


def test_target_verify_rejects_zero_structure():
    bad = TargetModel(np.eye(2, k=1), [[1.0], [0.0]], [[1.0, 0.0]], 2)
    with pytest.raises(ModelError):
        bad.verify()


def test_static_matching_for_chain_agents(ex2):
    t = ex2["target"]
    a2, a5 = ex2["agents"][1], ex2["agents"][4]
    pre2 = homogenize(a2, t)
    assert pre2.n_xi == 0
    assert np.allclose(pre2.F_h, [[1, -1, 1]])
    assert np.allclose(pre2.D_h, [[1]])
    pre5 = homogenize(a5, t)
    assert np.allclose(pre5.F_h, [[3, -2, 1]])
    # A + B F equals the target dynamics exactly
    assert np.allclose(a5.A + a5.B @ pre5.F_h, t.A)


def test_identity_precompensator_for_target_agent(ex2):
    t = ex2["target"]
    agent = AgentModel(t.A, t.B, t.C, np.eye(3))
    pre = homogenize(agent, t)
    assert np.allclose(pre.F_h, 0) and np.allclose(pre.D_h, 1)


def test_tracking_precompensators(ex2):
    t = ex2["target"]
    for a in (ex2["agents"][0], ex2["agents"][2]):
        pre = homogenize(a, t)
        assert pre.n_xi == t.r
        assert pre.is_rho_schur()
        assert check_homogenization(a, t, pre, rng=np.random.default_rng(5)) < 1e-8


def test_homogenized_state_and_rho_maps(ex2, rng):
    """x_h+ = A_t x_h + B_t (v + rho), y = C_t x_h and w+ = A_s w along a trajectory."""
    t = ex2["target"]
    for a in ex2["agents"]:
        pre = homogenize(a, t)
        x, xi = rng.uniform(-1, 1, a.n), rng.uniform(-1, 1, pre.n_xi)
        for _ in range(30):
            v = rng.uniform(-1, 1, 1)
            xh = pre.state_from_agent @ x + pre.state_from_comp @ xi
            w = pre.rho_from_agent @ x + pre.rho_from_comp @ xi
            assert np.allclose(t.C @ xh, a.C @ x, atol=1e-10)
            xi_next, u = pre.step(xi, a.C_m @ x, v)
            x = a.A @ x + a.B @ u
            xi = xi_next
            xh_next = pre.state_from_agent @ x + pre.state_from_comp @ xi
            w_next = pre.rho_from_agent @ x + pre.rho_from_comp @ xi
            assert np.allclose(xh_next, t.A @ xh + t.B @ (v + pre.rho_C @ w), atol=1e-9)
            assert np.allclose(w_next, pre.rho_A @ w, atol=1e-9)


def test_homogenization_residual_batch_matches_single(ex2, rng):
    t = ex2["target"]
    a = ex2["agents"][0]
    pre = homogenize(a, t)
    x0 = rng.uniform(-1, 1, (3, a.n))
    xi0 = rng.uniform(-1, 1, (3, pre.n_xi))
    v = rng.uniform(-1, 1, (40, 3, 1))
    batch = homogenization_residual(a, t, pre, x0, xi0, v)
    for j in range(3):
        single = homogenization_residual(a, t, pre, x0[j], xi0[j], v[:, j, :])
        assert np.allclose(batch[:, j], single, atol=1e-14)


def test_broken_precompensator_is_detected(ex2):
    t = ex2["target"]
    a = ex2["agents"][1]
    pre = homogenize(a, t)
    broken = PreCompensator(
        pre.A_h, pre.B_h, pre.E_h, pre.C_h, pre.D_h, pre.F_h * 0.5,
        pre.reference_from_agent, pre.reference_from_comp,
    )
    assert not check_homogenization(a, t, broken) < 1e-8


def test_homogenize_needs_measurement(ex2):
    a = AgentModel(np.eye(3, k=1), [[0], [0], [1]], [[1, 0, 0]])
    with pytest.raises(HomogenizationError):
        homogenize(a, ex2["target"])
    with pytest.raises(ValueError):
        homogenize(ex2["agents"][0], ex2["target"], pole=1.0)
