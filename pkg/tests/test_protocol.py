import numpy as np
import pytest

from delaysync.errors import DimensionError, WiringError
from delaysync.plant import homogenize
from delaysync.protocol import (
    FULL_STATE,
    HETEROGENEOUS,
    PARTIAL_STATE,
    ProtocolState,
    coupling_all,
    coupling_zeta_bar,
    coupling_zeta_hat,
    exchange_all,
    protocol1_step,
    protocol2_step,
    protocol3_step,
)
from delaysync.topology import derive, random_tree


def test_zeta_bar_consensus_manifold(tree3):
    y = np.array([0.7])
    for i in range(3):
        nb = {j: y for j in tree3.neighbors(i)}
        z = coupling_zeta_bar(tree3, i, y, nb, y if i == 0 else None, check=True)
        assert np.allclose(z, 0)


def test_zeta_bar_root(tree3):
    z = coupling_zeta_bar(tree3, 0, [3.0], {}, [1.0], check=True)
    assert z == pytest.approx([1.0])  # (3 - 1) / 2


def test_zeta_bar_agent2_hand_value(tree3):
    # y2 = 1, y1 delayed = 1, y_r delayed = 0: the d_bar form gives
    # (1 - 0) - d_bar_22 (1 - 0) - d_bar_21 (1 - 0) = 1 - 2/3 - 1/3 = 0
    z = coupling_zeta_bar(tree3, 1, [1.0], {0: np.array([1.0])}, check=True)
    assert z == pytest.approx([0.0], abs=1e-15)
    # a neighbor lagging behind produces a scaled difference
    z = coupling_zeta_bar(tree3, 1, [1.0], {0: np.array([0.0])}, check=True)
    assert z == pytest.approx([1 / 3])


def test_zeta_hat_values(tree3):
    c = np.array([2.0, -1.0, 0.5])
    zero = np.zeros(3)
    assert np.allclose(coupling_zeta_hat(tree3, 1, zero, {0: zero}), 0)
    # equal chi at the root: (1 - d_bar_11) chi = chi / 2
    assert np.allclose(coupling_zeta_hat(tree3, 0, c, {}, check=True), c / 2)
    # agent 2 with silent neighbor: (1 - d_bar_22) chi_2 = chi_2 / 3
    assert np.allclose(coupling_zeta_hat(tree3, 1, c, {0: zero}, check=True), c / 3)
    # equal chi everywhere: row sum of D_bar is 1 for non-root rows
    assert np.allclose(coupling_zeta_hat(tree3, 2, c, {0: c}, check=True), 0)


def test_wiring_errors(tree3):
    with pytest.raises(WiringError):
        coupling_zeta_bar(tree3, 1, [1.0], {})
    with pytest.raises(WiringError):
        coupling_zeta_bar(tree3, 1, [1.0], {0: [0.0], 2: [0.0]})
    with pytest.raises(WiringError):
        coupling_zeta_bar(tree3, 0, [1.0], {})
    with pytest.raises(WiringError):
        coupling_zeta_hat(tree3, 2, np.zeros(3), {1: np.zeros(3)})


def test_vectorized_couplings_match_per_agent(rng):
    for _ in range(20):
        n = int(rng.integers(1, 9))
        d = derive(random_tree(n, rng, weight_range=(0.2, 3.0)))
        y = rng.standard_normal((n, 2))
        par = rng.standard_normal((n, 2))
        par[0] = 0
        ref = rng.standard_normal(2)
        chi = rng.standard_normal((n, 3))
        pchi = rng.standard_normal((n, 3))
        pchi[0] = 0
        zb = coupling_all(d, y, par, ref)
        zh = exchange_all(d, chi, pchi)
        for i in range(n):
            nb = {j: par[i] for j in d.neighbors(i)}
            nc = {j: pchi[i] for j in d.neighbors(i)}
            assert np.allclose(zb[i], coupling_zeta_bar(d, i, y[i], nb, ref if i == 0 else None, check=True))
            assert np.allclose(zh[i], coupling_zeta_hat(d, i, chi[i], nc, check=True))


def test_protocol1_examples(ex1, rng):
    A, B, K = ex1["A"], ex1["B"], ex1["K"]
    s = ProtocolState.zeros(FULL_STATE, 3)
    nxt, u = protocol1_step(s, np.zeros(3), np.zeros(3), A, B, K)
    assert not np.any(nxt.chi) and not np.any(u)
    v = rng.standard_normal(3)
    nxt, _ = protocol1_step(s, v, np.zeros(3), A, B, K)
    assert np.allclose(nxt.chi, A @ v)
    e1 = np.array([1.0, 0, 0])
    nxt, u = protocol1_step(ProtocolState(e1), np.zeros(3), np.zeros(3), A, B, K)
    assert u == pytest.approx([-0.0695])
    assert np.allclose(nxt.chi, (A - B @ K) @ e1)
    with pytest.raises(DimensionError):
        protocol1_step(s, np.zeros(2), np.zeros(3), A, B, K)


def test_protocol2_examples(ex1, rng):
    A, B, C, K, H = ex1["A"], ex1["B"], ex1["C"], ex1["K"], ex1["H"]
    s = ProtocolState.zeros(PARTIAL_STATE, 3)
    nxt, u = protocol2_step(s, [0.0], np.zeros(3), A, B, C, K, H)
    assert not np.any(nxt.chi) and not np.any(nxt.xhat) and not np.any(u)
    nxt, _ = protocol2_step(s, [1.0], np.zeros(3), A, B, C, K, H)
    assert np.allclose(nxt.xhat, H.ravel())
    w = rng.standard_normal(3)
    nxt, _ = protocol2_step(ProtocolState(np.zeros(3), w), [0.0], np.zeros(3), A, B, C, K, H)
    assert np.allclose(nxt.chi, A @ w)
    with pytest.raises(DimensionError):
        protocol2_step(s, [0.0, 1.0], np.zeros(3), A, B, C, K, H)


def test_protocol2_general_recurrence(ex1, rng):
    A, B, C, K, H = ex1["A"], ex1["B"], ex1["C"], ex1["K"], ex1["H"]
    chi, xhat, zh = rng.standard_normal((3, 3))
    zb = rng.standard_normal(1)
    nxt, u = protocol2_step(ProtocolState(chi, xhat), zb, zh, A, B, C, K, H)
    assert np.allclose(u, -K @ chi)
    assert np.allclose(nxt.xhat, A @ xhat - B @ K @ zh + H @ (zb - C @ xhat))
    assert np.allclose(nxt.chi, A @ chi + B @ u + A @ xhat - A @ zh)


def test_batched_steps_match_single(ex1, rng):
    A, B, C, K, H = ex1["A"], ex1["B"], ex1["C"], ex1["K"], ex1["H"]
    chi, xhat, zh = rng.standard_normal((3, 4, 3))
    zb = rng.standard_normal((4, 1))
    batch, ub = protocol2_step(ProtocolState(chi, xhat), zb, zh, A, B, C, K, H)
    for i in range(4):
        one, u = protocol2_step(ProtocolState(chi[i], xhat[i]), zb[i], zh[i], A, B, C, K, H)
        assert np.allclose(one.chi, batch.chi[i]) and np.allclose(one.xhat, batch.xhat[i])
        assert np.allclose(u, ub[i])
    zb3 = rng.standard_normal((4, 3))
    batch, ub = protocol1_step(ProtocolState(chi), zb3, zh, A, B, K)
    for i in range(4):
        one, u = protocol1_step(ProtocolState(chi[i]), zb3[i], zh[i], A, B, K)
        assert np.allclose(one.chi, batch.chi[i]) and np.allclose(u, ub[i])


def test_protocol3_examples(ex2):
    t, K, H = ex2["target"], ex2["K"], ex2["H"]
    a2 = ex2["agents"][1]
    pre = homogenize(a2, t)
    s = ProtocolState.zeros(HETEROGENEOUS, 3, pre.n_xi)
    nxt, u = protocol3_step(s, [0.0], np.zeros(3), np.zeros(3), pre, t, K, H)
    assert not np.any(nxt.chi) and not np.any(u)
    # static pre-compensator: u = F z - K chi
    z = np.array([0.2, -0.4, 1.5])
    chi = np.array([0.3, 0.1, -0.2])
    _, u = protocol3_step(ProtocolState(chi, np.zeros(3), np.zeros(0)), [0.0], np.zeros(3), z, pre, t, K, H)
    assert u == pytest.approx([np.dot([1, -1, 1], z) - K @ chi])
    # chi = e1 with everything else zero: u = -D_h * 1.006
    e1 = np.array([1.0, 0, 0])
    _, u = protocol3_step(ProtocolState(e1, np.zeros(3), np.zeros(0)), [0.0], np.zeros(3), np.zeros(3), pre, t, K, H)
    assert u == pytest.approx(-pre.D_h.ravel() * 1.006)


def test_protocol3_tracking_recurrence(ex2, rng):
    t, K, H = ex2["target"], ex2["K"], ex2["H"]
    a1 = ex2["agents"][0]
    pre = homogenize(a1, t)
    chi, xhat, zh = rng.standard_normal((3, 3))
    xi = rng.standard_normal(pre.n_xi)
    z = rng.standard_normal(4)
    zb = rng.standard_normal(1)
    nxt, u = protocol3_step(ProtocolState(chi, xhat, xi), zb, zh, z, pre, t, K, H)
    v = -K @ chi
    assert np.allclose(u, pre.C_h @ xi + pre.F_h @ z + pre.D_h @ v)
    assert np.allclose(nxt.xi, pre.A_h @ xi + pre.B_h @ z + pre.E_h @ v)
    assert np.allclose(nxt.chi, t.A @ chi + t.B @ v + t.A @ xhat - t.A @ zh)
    assert np.allclose(nxt.xhat, t.A @ xhat - t.B @ K @ zh + H @ (zb - t.C @ xhat))
