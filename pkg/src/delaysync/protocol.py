"""Coupling signals and the three collaborative controller recurrences.

All step functions compute the control from the pre-update controller
state and return ``(next_state, u)``; they never mutate their inputs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, WiringError

FULL_STATE = "full_state"
PARTIAL_STATE = "partial_state"
HETEROGENEOUS = "heterogeneous"
VARIANTS = (FULL_STATE, PARTIAL_STATE, HETEROGENEOUS)


@dataclass(frozen=True)
class ProtocolState:
    """Controller internals of one agent.

    ``chi`` is the exchanged variable for every variant; ``xhat`` exists for
    the observer-based protocols and ``xi`` for the pre-compensator of the
    heterogeneous protocol.
    """

    chi: np.ndarray
    xhat: np.ndarray = None
    xi: np.ndarray = None

    @classmethod
    def zeros(cls, variant, width, xi_width=0):
        chi = np.zeros(width)
        if variant == FULL_STATE:
            return cls(chi)
        if variant == PARTIAL_STATE:
            return cls(chi, np.zeros(width))
        return cls(chi, np.zeros(width), np.zeros(xi_width))


def _check_neighbors(d, i, samples):
    expected = set(d.neighbors(i))
    got = set(samples)
    if got != expected:
        missing = sorted(j + 1 for j in expected - got)
        extra = sorted(j + 1 for j in got - expected)
        raise WiringError(f"agent {i + 1}: missing neighbor samples {missing}, unexpected {extra}")


def coupling_zeta_bar(d, i, own_y, delayed_neighbor_y, delayed_y_r=None, check=False):
    """Scaled relative output of agent ``i`` including the exosystem link.

    ``delayed_neighbor_y[j]`` is ``y_j(k - kappa_ij)`` for each in-neighbor,
    ``delayed_y_r`` is ``y_r(k - kappa_ir)`` and is only required for the
    agent linked to the exosystem. With ``check=True`` the equivalent
    contraction-matrix form is evaluated too and must agree to 1e-12.
    """
    _check_neighbors(d, i, delayed_neighbor_y)
    own_y = np.asarray(own_y, dtype=float)
    iota = d.topology.root_links[i]
    if iota and delayed_y_r is None:
        raise WiringError(f"agent {i + 1} is linked to the exosystem but got no reference sample")
    d_in = d.D_in[i, i]
    acc = np.zeros_like(own_y)
    for j, yj in delayed_neighbor_y.items():
        acc += -d.L[i, j] * (own_y - yj)
    if iota:
        acc += own_y - delayed_y_r
    zeta = acc / (2.0 + d_in)
    if check:
        ref = np.zeros_like(own_y) if delayed_y_r is None else np.asarray(delayed_y_r, dtype=float)
        alt = own_y - ref - d.D_bar[i, i] * (own_y - ref)
        for j, yj in delayed_neighbor_y.items():
            alt -= d.D_bar[i, j] * (yj - ref)
        if np.max(np.abs(alt - zeta), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(zeta), initial=0.0)):
            raise AssertionError(f"coupling forms disagree for agent {i + 1}")
    return zeta


def coupling_zeta_hat(d, i, own_chi, delayed_neighbor_chi, check=False):
    """Exchange signal ``chi_i - sum_j d_bar_ij chi_j(k - kappa_hat_ij)`` (diagonal undelayed)."""
    _check_neighbors(d, i, delayed_neighbor_chi)
    own_chi = np.asarray(own_chi, dtype=float)
    zeta = (1.0 - d.D_bar[i, i]) * own_chi
    for j, cj in delayed_neighbor_chi.items():
        zeta = zeta - d.D_bar[i, j] * cj
    if check:
        alt = d.L_bar[i, i] * own_chi
        for j, cj in delayed_neighbor_chi.items():
            alt = alt + d.L_bar[i, j] * cj
        alt = alt / (2.0 + d.D_in[i, i])
        if np.max(np.abs(alt - zeta), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(zeta), initial=0.0)):
            raise AssertionError(f"exchange forms disagree for agent {i + 1}")
    return zeta


def coupling_all(d, own, parent_signal, reference=None):
    """Scaled relative outputs of every agent at once (rows are agents).

    ``parent_signal[i]`` is the delayed sample agent ``i`` received from its
    unique in-neighbor; row 0 (the root) is ignored. ``reference`` is the
    delayed exosystem sample seen by the root.
    """
    own = np.asarray(own, dtype=float)
    diff = own - parent_signal
    diff[0] = 0.0 if reference is None else own[0] - reference
    return d.edge_weight[:, None] * diff / (2.0 + d.in_degree)[:, None]


def exchange_all(d, own_chi, parent_chi):
    """``chi_i - d_bar_ii chi_i - d_bar_i,parent chi_parent(k - kappa_hat)`` for every agent."""
    return d.exchange_self[:, None] * own_chi - d.exchange_parent[:, None] * parent_chi


def _width(v, n, name):
    if not isinstance(v, np.ndarray):
        v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.shape[-1] != n:
        raise DimensionError(f"{name} has width {v.shape[-1]}, expected {n}")
    return v


# The step functions accept one agent (1-D arrays) or a stack of agents
# (2-D arrays, one row per agent); matrices act from the right as M.T.


def protocol1_step(s, zeta_bar, zeta_hat, A, B, K):
    """Full-state coupling: ``chi+ = A chi + B u + A zeta_bar - A zeta_hat``, ``u = -K chi``."""
    n = A.shape[0]
    chi = _width(s.chi, n, "chi")
    zeta_bar = _width(zeta_bar, n, "zeta_bar")
    zeta_hat = _width(zeta_hat, n, "zeta_hat")
    u = -chi @ K.T
    chi_next = (chi + zeta_bar - zeta_hat) @ A.T + u @ B.T
    return ProtocolState(chi_next), u


def protocol2_step(s, zeta_bar, zeta_hat, A, B, C, K, H):
    """Partial-state coupling with an observer of the relative state."""
    n, p = A.shape[0], C.shape[0]
    chi = _width(s.chi, n, "chi")
    xhat = _width(s.xhat, n, "xhat")
    zeta_bar = _width(zeta_bar, p, "zeta_bar")
    zeta_hat = _width(zeta_hat, n, "zeta_hat")
    u = -chi @ K.T
    xhat_next = xhat @ A.T - (zeta_hat @ K.T) @ B.T + (zeta_bar - xhat @ C.T) @ H.T
    chi_next = (chi + xhat - zeta_hat) @ A.T + u @ B.T
    return ProtocolState(chi_next, xhat_next), u


def protocol3_step(s, zeta_bar, zeta_hat, z, pre, target, K, H):
    """Heterogeneous protocol for one agent: the partial-state protocol on
    the target model, whose virtual input ``v = -K chi`` drives the agent's
    pre-compensator."""
    obs, v = protocol2_step(s, zeta_bar, zeta_hat, target.A, target.B, target.C, K, H)
    xi_next, u = pre.step(_width(s.xi, pre.n_xi, "xi"), np.asarray(z, dtype=float), v)
    return ProtocolState(obs.chi, obs.xhat, xi_next), u
