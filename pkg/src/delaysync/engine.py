"""Scenario assembly, the synchronous simulation loop, synchronization
metrics and the sampled frequency-sweep certificate."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .delayline import PREFILL_POLICIES, DelayLine
from .errors import CertificateError, DimensionError, DivergenceError, ModelError
from .numerics import eigenvalues, is_schur, synthesize_observer_gain, synthesize_state_gain
from .plant import homogenize, remodel_exosystem
from .protocol import (
    FULL_STATE,
    HETEROGENEOUS,
    PARTIAL_STATE,
    VARIANTS,
    ProtocolState,
    coupling_all,
    coupling_zeta_bar,
    coupling_zeta_hat,
    exchange_all,
    protocol1_step,
    protocol2_step,
)
from .topology import delay_transfer_matrix, derive

log = logging.getLogger(__name__)

DEFAULT_HORIZON = 2000
DEFAULT_TOLERANCE = 1e-4
DEFAULT_GRID = 256


@dataclass(frozen=True)
class GainSpec:
    """Explicit gains, or ``None`` entries to be synthesized with weights Q, R."""

    K: np.ndarray = None
    H: np.ndarray = None
    Q: np.ndarray = None
    R: np.ndarray = None


@dataclass(frozen=True)
class Scenario:
    """One complete problem instance, labeled in the caller's agent order.

    ``agents[i]`` is the model of agent ``i`` in the same labeling as
    ``topology``. For the heterogeneous variant ``precompensators`` may be
    ``None`` (or hold ``None`` entries) to request automatic design, and
    ``target`` may be ``None`` to remodel the exosystem.
    """

    variant: str
    agents: tuple
    exosystem: object
    topology: object
    gains: GainSpec = field(default_factory=GainSpec)
    horizon: int = DEFAULT_HORIZON
    tolerance: float = DEFAULT_TOLERANCE
    prefill: str = "zeros"
    seed: int = 0
    initial_states: tuple = None
    target: object = None
    precompensators: tuple = None
    name: str = "scenario"

    @property
    def n_agents(self):
        return self.topology.n_agents


@dataclass(frozen=True)
class Prepared:
    """Validated scenario in tree order (root first, parents before children)."""

    scenario: Scenario
    network: object
    order: tuple
    agents: tuple
    K: np.ndarray
    H: np.ndarray
    target: object = None
    precompensators: tuple = None

    @property
    def variant(self):
        return self.scenario.variant

    def design_model(self):
        """``(A, B, C)`` the collaborative protocol is designed on."""
        if self.variant == HETEROGENEOUS:
            return self.target.A, self.target.B, self.target.C
        a = self.agents[0]
        return a.A, a.B, a.C


def _resolve_gains(spec, A, B, C, need_H):
    K = spec.K if spec.K is not None else synthesize_state_gain(A, B, spec.Q, spec.R)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (B.shape[1], A.shape[0]):
        raise DimensionError(f"K must be {B.shape[1]}x{A.shape[0]}, got {K.shape}")
    H = None
    if need_H:
        H = spec.H if spec.H is not None else synthesize_observer_gain(A, C, spec.Q, spec.R)
        H = np.asarray(H, dtype=float).reshape(A.shape[0], C.shape[0])
    return K, H


def prepare(s, check_gains=True, validate_precompensators=True):
    """Validate a scenario and resolve everything ``run`` needs.

    Gains are checked for the Schur property unless ``check_gains`` is
    False; the certificate uses that to examine deliberately broken gains.
    """
    if s.variant not in VARIANTS:
        raise ModelError(f"unknown variant {s.variant!r}")
    if s.prefill not in PREFILL_POLICIES:
        raise ModelError(f"unknown prefill policy {s.prefill!r}")
    if s.horizon < 0:
        raise ModelError("horizon must be nonnegative")
    N = s.n_agents
    if len(s.agents) != N:
        raise ModelError(f"{len(s.agents)} agent models for {N} network nodes")
    net = derive(s.topology)
    order = net.topology.permutation
    agents = tuple(s.agents[o] for o in order)
    exo = s.exosystem

    target = pres = None
    if s.variant == HETEROGENEOUS:
        for a in agents:
            if a.p != exo.p:
                raise DimensionError("agent outputs must match the exosystem output width")
        target = s.target
        if target is None:
            target = remodel_exosystem(exo, [a.infinite_zero_order() for a in agents])
        if target.state_map is None or target.state_map.shape != (target.r, exo.r):
            raise ModelError("target model needs a state map from the exosystem state")
        given = s.precompensators or (None,) * N
        pres = []
        for idx, o in enumerate(order):
            pre = given[o]
            if pre is None:
                pre = homogenize(s.agents[o], target, validate=validate_precompensators)
            pres.append(pre)
        pres = tuple(pres)
        A, B, C = target.A, target.B, target.C
    else:
        a0 = agents[0]
        for a in agents[1:]:
            if not (np.array_equal(a.A, a0.A) and np.array_equal(a.B, a0.B) and np.array_equal(a.C, a0.C)):
                raise ModelError("homogeneous variants need identical agent models")
        if exo.A.shape != a0.A.shape or not np.allclose(exo.A, a0.A) or not np.allclose(exo.C, a0.C):
            raise ModelError("homogeneous exosystem must share the agents' (A, C)")
        if s.variant == FULL_STATE and not np.array_equal(a0.C, np.eye(a0.n)):
            raise ModelError("full-state coupling requires C = I")
        A, B, C = a0.A, a0.B, a0.C
    K, H = _resolve_gains(s.gains, A, B, C, need_H=s.variant != FULL_STATE)
    if check_gains:
        if not is_schur(A - B @ K):
            raise ModelError("A - BK is not Schur stable")
        if H is not None and not is_schur(A - H @ C):
            raise ModelError("A - HC is not Schur stable")
    return Prepared(s, net, order, agents, K, H, target, pres)


@dataclass
class SimResult:
    """Trajectories for steps ``k = 0..horizon`` in the scenario's agent labels.

    ``x``, ``u`` and the controller arrays are per-agent lists since
    heterogeneous agents differ in dimension; ``y`` is ``(T+1, N, p)``.
    """

    variant: str
    x: list
    y: np.ndarray
    u: list
    x_r: np.ndarray
    y_r: np.ndarray
    chi: list
    xhat: list
    xi: list
    cumulative_delays: np.ndarray
    seed: int
    network: object = field(repr=False, default=None)

    @property
    def horizon(self):
        return self.y.shape[0] - 1

    @property
    def n_agents(self):
        return self.y.shape[1]


def initial_conditions(s, agents=None):
    """Agent initial states: explicit, or uniform on [-1, 1] from the scenario seed."""
    agents = s.agents if agents is None else agents
    if s.initial_states is not None:
        states = [np.asarray(x, dtype=float).reshape(-1) for x in s.initial_states]
        for i, (x, a) in enumerate(zip(states, s.agents)):
            if x.shape[0] != a.n:
                raise DimensionError(f"initial state of agent {i + 1} has width {x.shape[0]}, expected {a.n}")
        return states
    rng = np.random.default_rng(s.seed)
    return [rng.uniform(-1.0, 1.0, a.n) for a in s.agents]


def _cross_check(net, signal, ref_del, parent_sig, zbar, chi, parent_chi, zhat):
    """Compare the vectorized couplings with the per-agent reference forms."""
    for i in range(net.n_agents):
        nb = {j: parent_sig[i] for j in net.neighbors(i)}
        nc = {j: parent_chi[i] for j in net.neighbors(i)}
        zb = coupling_zeta_bar(net, i, signal[i], nb, ref_del if i == 0 else None, check=True)
        zh = coupling_zeta_hat(net, i, chi[i], nc, check=True)
        if np.max(np.abs(zb - zbar[i])) > 1e-12 or np.max(np.abs(zh - zhat[i])) > 1e-12:
            raise AssertionError(f"vectorized coupling disagrees for agent {i + 1}")


def run(s, prepared=None, check=False):
    """Simulate the closed loop over ``s.horizon`` ticks.

    Every tick all agents read their delayed channels, compute couplings
    and controls simultaneously, then all states advance. The controller
    recurrences of all agents are stepped as one stacked array. Raises
    ``DivergenceError`` with the offending step when a signal becomes
    non-finite. ``check=True`` re-evaluates every coupling with the
    per-agent reference implementation.
    """
    P = prepare(s) if prepared is None else prepared
    net, order = P.network, P.order
    N, T, variant = s.n_agents, s.horizon, s.variant
    A, B, C = P.design_model()
    K, H = P.K, P.H
    width = A.shape[0]
    exo = s.exosystem
    p = exo.p
    hetero = variant == HETEROGENEOUS
    full = variant == FULL_STATE
    sig_width = width if full else p
    parent = net.parent

    x0 = initial_conditions(s)
    x = [x0[o].copy() for o in order]
    pres = P.precompensators
    xi = [np.zeros(pre.n_xi) for pre in pres] if hetero else None
    ctrl = ProtocolState(np.zeros((N, width)), None if full else np.zeros((N, width)))
    x_r = exo.x0.copy()

    y_lines = [None] + [DelayLine(net.kappa[i, parent[i]], sig_width, s.prefill) for i in range(1, N)]
    chi_lines = [None] + [DelayLine(net.kappa_hat[i, parent[i]], width, s.prefill) for i in range(1, N)]
    ref_line = DelayLine(net.topology.root_delay, sig_width, s.prefill)
    parent_sig = np.zeros((N, sig_width))
    parent_chi = np.zeros((N, width))

    xs = [np.empty((T + 1, a.n)) for a in P.agents]
    us = [np.empty((T + 1, a.m)) for a in P.agents]
    ys = np.empty((T + 1, N, p))
    xrs = np.empty((T + 1, exo.r))
    yrs = np.empty((T + 1, p))
    chis = np.empty((T + 1, N, width))
    xhats = None if full else np.empty((T + 1, N, width))
    xis = [np.empty((T + 1, v.shape[0])) for v in xi] if hetero else None
    Cs = [a.C for a in P.agents]
    Cms = [a.C_m for a in P.agents]

    for k in range(T + 1):
        for i in range(N):
            xs[i][k] = x[i]
            ys[k, i] = Cs[i].dot(x[i])
        y_r = exo.C.dot(x_r)
        xrs[k] = x_r
        yrs[k] = y_r
        chis[k] = ctrl.chi
        if xhats is not None:
            xhats[k] = ctrl.xhat
        # full-state coupling communicates the whole state
        signal = np.array(x) if full else ys[k]
        ref_del = ref_line.push_and_read(x_r if full else y_r)
        for i in range(1, N):
            parent_sig[i] = y_lines[i].push_and_read(signal[parent[i]])
            parent_chi[i] = chi_lines[i].push_and_read(ctrl.chi[parent[i]])
        zbar = coupling_all(net, signal, parent_sig, ref_del)
        zhat = exchange_all(net, ctrl.chi, parent_chi)
        if check:
            _cross_check(net, signal, ref_del, parent_sig, zbar, ctrl.chi, parent_chi, zhat)

        if full:
            nxt, u_all = protocol1_step(ctrl, zbar, zhat, A, B, K)
        else:
            nxt, u_all = protocol2_step(ctrl, zbar, zhat, A, B, C, K, H)
        if hetero:
            # u_all holds the virtual inputs v_i of the target model
            for i in range(N):
                xis[i][k] = xi[i]
                xi[i], us[i][k] = pres[i].step(xi[i], Cms[i].dot(x[i]), u_all[i])
        else:
            us_k = u_all
            for i in range(N):
                us[i][k] = us_k[i]
        with np.errstate(over="ignore", invalid="ignore"):
            finite = np.isfinite(float(np.sum(nxt.chi * nxt.chi)) + sum(float(v.dot(v)) for v in x))
        if not finite:
            raise DivergenceError(k)
        if k < T:
            x = [a.A.dot(x[i]) + a.B.dot(us[i][k]) for i, a in enumerate(P.agents)]
            x_r = exo.A.dot(x_r)
            ctrl = nxt

    # map tree order back to the caller's labels
    back = np.argsort(order)
    kappa_r = np.asarray(net.cumulative_delays)[back]
    return SimResult(
        variant=variant,
        x=[xs[b] for b in back],
        y=ys[:, back, :],
        u=[us[b] for b in back],
        x_r=xrs,
        y_r=yrs,
        chi=[chis[:, b, :] for b in back],
        xhat=[None if xhats is None else xhats[:, b, :] for b in back],
        xi=[xis[b] if hetero else None for b in back],
        cumulative_delays=kappa_r,
        seed=s.seed,
        network=net,
    )


@dataclass
class SyncErrors:
    """Regulated errors per agent (NaN where ``k < kappa_ir``) and pairwise
    delayed errors per edge, keyed ``(i, j)`` in caller labels."""

    regulated: list
    pairwise: dict

    def regulated_norms(self):
        return np.column_stack([np.linalg.norm(e, axis=1) for e in self.regulated])

    def final_max(self):
        return float(np.max(self.regulated_norms()[-1]))


def _shift(series, lag):
    out = np.full_like(series, np.nan, dtype=float)
    if lag == 0:
        out[:] = series
    elif lag < len(series):
        out[lag:] = series[:-lag]
    return out


def delayed_sync_errors(r, d=None):
    """Regulated and pairwise delayed synchronization errors.

    State errors ``x_i(k) - x_r(k - kappa_ir)`` for homogeneous variants,
    output errors ``y_i(k) - y_r(k - kappa_ir)`` for the heterogeneous one.
    Pairwise errors use ``kappa_ij = kappa_ir - kappa_jr``.
    """
    d = r.network if d is None else d
    order = d.topology.permutation
    back = np.argsort(order)
    kappa_r = np.asarray(d.cumulative_delays)[back]
    if r.variant == HETEROGENEOUS:
        own = [r.y[:, i, :] for i in range(r.n_agents)]
        ref = r.y_r
    else:
        own = r.x
        ref = r.x_r
    regulated = [own[i] - _shift(ref, int(kappa_r[i])) for i in range(r.n_agents)]
    pairwise = {}
    for (ti, tj) in d.topology.weights:
        i, j = order[ti], order[tj]
        lag = int(kappa_r[i] - kappa_r[j])
        pairwise[(i, j)] = own[i] - _shift(own[j], lag)
    return SyncErrors(regulated, pairwise)


def certificate_matrix(P, omega):
    """Closed-loop error-system matrix at frequency ``omega`` (tree order).

    State ordering is ``(x_tilde, delta)`` for full-state coupling,
    ``(x_tilde, delta, delta_bar)`` for partial-state coupling and
    ``(x_tilde, delta, delta_bar, w)`` for the heterogeneous protocol, each
    block stacked agent by agent.
    """
    net = P.network
    N = net.n_agents
    Db = net.D_bar
    Dw = delay_transfer_matrix(net, omega)
    I = np.eye(N)
    A, B, C = P.design_model()
    K = P.K
    BK = B @ K
    kron = np.kron
    if P.variant == FULL_STATE:
        return np.block([
            [kron(I, A - BK), kron(I, BK)],
            [kron(Db - Dw, A), kron(Dw, A)],
        ])
    H = P.H
    HC = H @ C
    Z = np.zeros((N * A.shape[0], N * A.shape[0]))
    if P.variant == PARTIAL_STATE:
        return np.block([
            [kron(I, A - BK), kron(I, BK), Z],
            [Z, kron(Dw, A), kron(I, A)],
            [kron(Db - Dw, HC), Z, kron(I, A - HC)],
        ])
    pres = P.precompensators
    A_s = block_diag(*[pre.rho_A for pre in pres]) if pres else np.zeros((0, 0))
    C_s = block_diag(*[pre.rho_C for pre in pres])
    ns = A_s.shape[0]
    A_s = A_s.reshape(ns, ns)
    C_s = C_s.reshape(N * B.shape[1], ns)
    BCs = kron(I, B) @ C_s
    Zs = np.zeros((ns, Z.shape[0]))
    return np.block([
        [kron(I, A - BK), kron(I, BK), Z, BCs],
        [Z, kron(Dw, A), kron(I, A), BCs],
        [kron(Db - Dw, HC), Z, kron(I, A - HC), kron(I - Dw, B) @ C_s],
        [Zs, Zs, Zs, A_s],
    ])


@dataclass
class CertificateReport:
    """Sampled frequency certificate. Passing is numeric evidence over the
    grid only; it is not a proof of stability between grid points."""

    omegas: np.ndarray
    distances: np.ndarray
    radii: np.ndarray
    margin: float
    passed: bool
    worst_omega: float
    kind: str = "sampled numeric certificate (not a proof)"

    @property
    def min_distance(self):
        return float(np.min(self.distances)) if len(self.distances) else np.inf


def default_grid(size=DEFAULT_GRID):
    if size <= 0:
        raise ValueError("grid size must be positive")
    return 2 * np.pi * np.arange(size) / size


def certificate_sweep(s, omega_grid=None, margin=1e-3, method="lapack", prepared=None):
    """Distance of the error-system spectrum to the unit circle over ``omega_grid``.

    Passes iff every sampled distance exceeds ``margin`` and the spectrum is
    inside the unit disc (the error system is stable). Gains are not
    required to be Schur here so that broken designs produce a failing
    report rather than an exception.
    """
    P = prepared if prepared is not None else prepare(s, check_gains=False)
    omegas = default_grid() if omega_grid is None else np.asarray(omega_grid, dtype=float)
    if omegas.size == 0:
        raise ValueError("omega grid is empty")
    dist = np.empty(len(omegas))
    radii = np.empty(len(omegas))
    for k, w in enumerate(omegas):
        M = certificate_matrix(P, w)
        try:
            spec = eigenvalues(M, method=method)
        except Exception as exc:
            raise CertificateError(f"eigenvalue computation failed at omega={w}: {exc}") from exc
        dist[k] = spec.unit_circle_distance()
        radii[k] = spec.spectral_radius
    passed = bool(np.all(dist > margin) and np.all(radii < 1.0))
    worst = float(omegas[int(np.argmin(dist))])
    log.info("certificate %s: min distance %.3g at omega=%.4f", "pass" if passed else "FAIL", dist.min(), worst)
    return CertificateReport(omegas, dist, radii, margin, passed, worst)
