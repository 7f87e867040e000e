"""Agent and exosystem models, target-model remodeling and pre-compensators."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, HomogenizationError, ModelError, SynthesisError
from .numerics import (
    as_matrix,
    eigenvalues,
    is_schur,
    observability_matrix,
    synthesize_observer_gain,
    synthesize_state_gain,
)

RANK_TOL = 1e-8


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _vec(v, width, name):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != width:
        raise DimensionError(f"{name} has length {v.shape[0]}, expected {width}")
    return v


@dataclass(frozen=True)
class AgentModel:
    """Discrete-time LTI agent ``x+ = Ax + Bu, y = Cx`` with optional local measurement ``z = C_m x``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    C_m: np.ndarray = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {C.shape}")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "C", _frozen(C))
        if self.C_m is not None:
            C_m = as_matrix(self.C_m, "C_m")
            if C_m.shape[1] != n:
                raise DimensionError(f"C_m must have {n} columns, got {C_m.shape}")
            object.__setattr__(self, "C_m", _frozen(C_m))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def q(self):
        return 0 if self.C_m is None else self.C_m.shape[0]

    def infinite_zero_order(self):
        """Largest per-output relative degree (the infinite-zero order for p = 1).

        Returns ``None`` when some output is not reachable from the input at all.
        """
        orders = []
        for row in self.C:
            CA = row[None, :]
            for d in range(1, self.n + 1):
                if np.max(np.abs(CA @ self.B)) > RANK_TOL:
                    orders.append(d)
                    break
                CA = CA @ self.A
            else:
                return None
        return max(orders)

    def is_right_invertible(self, rng=None, samples=3):
        """Normal rank of the Rosenbrock pencil equals ``n + p``, tested at random points."""
        rng = np.random.default_rng(0) if rng is None else rng
        n, m, p = self.n, self.m, self.p
        best = 0
        for _ in range(samples):
            z = complex(*rng.standard_normal(2))
            P = np.block([[z * np.eye(n) - self.A, -self.B], [self.C, np.zeros((p, m))]])
            best = max(best, np.linalg.matrix_rank(P, tol=RANK_TOL))
        return best == n + p

    def check_homogeneous(self, tol=1e-9):
        """Eigenvalues of A in the closed unit disc, (A, B) stabilizable, (A, C) detectable."""
        if eigenvalues(self.A).spectral_radius > 1.0 + tol:
            raise ModelError("A has eigenvalues outside the closed unit disc")
        try:
            synthesize_state_gain(self.A, self.B)
            synthesize_observer_gain(self.A, self.C)
        except SynthesisError as exc:
            raise ModelError(f"agent is not stabilizable/detectable: {exc}") from exc

    def check_heterogeneous(self):
        """Stabilizable, detectable, right-invertible, and (C_m, A) detectable."""
        try:
            synthesize_state_gain(self.A, self.B)
            synthesize_observer_gain(self.A, self.C)
        except SynthesisError as exc:
            raise ModelError(f"agent is not stabilizable/detectable: {exc}") from exc
        if not self.is_right_invertible():
            raise ModelError("agent is not right-invertible")
        if self.C_m is None:
            raise ModelError("heterogeneous agents need a local measurement matrix C_m")
        try:
            synthesize_observer_gain(self.A, self.C_m)
        except SynthesisError as exc:
            raise ModelError(f"(C_m, A) is not detectable: {exc}") from exc


@dataclass(frozen=True)
class Exosystem:
    """Autonomous reference generator ``x_r+ = A_r x_r, y_r = C_r x_r``."""

    A: np.ndarray
    C: np.ndarray
    x0: np.ndarray = None

    def __post_init__(self):
        A = as_matrix(self.A, "A_r")
        C = as_matrix(self.C, "C_r")
        r = A.shape[0]
        if A.shape != (r, r) or C.shape[1] != r:
            raise DimensionError("exosystem matrices have inconsistent dimensions")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "C", _frozen(C))
        x0 = np.zeros(r) if self.x0 is None else _vec(self.x0, r, "x_r0")
        object.__setattr__(self, "x0", _frozen(x0))

    @property
    def r(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.C.shape[0]

    def check_reference(self, tol=1e-6):
        """(C_r, A_r) observable and every eigenvalue of A_r on the unit circle."""
        O = observability_matrix(self.A, self.C)
        if np.linalg.matrix_rank(O, tol=RANK_TOL) < self.r:
            raise ModelError("(C_r, A_r) is not observable")
        mods = np.abs(eigenvalues(self.A).eigenvalues)
        if np.any(np.abs(mods - 1.0) > tol):
            raise ModelError("exosystem eigenvalues must lie on the unit circle")

    def observability_indices(self):
        """Observability index of (C_r, A_r); equals r for a single output."""
        for k in range(1, self.r + 1):
            if np.linalg.matrix_rank(observability_matrix(self.A, self.C, k), tol=RANK_TOL) == self.r:
                return k
        raise ModelError("(C_r, A_r) is not observable")


def step_agent(model, x, u):
    """One tick of the agent; returns ``(x_next, y, z)`` with ``z = None`` when C_m is absent."""
    x = _vec(x, model.n, "x")
    u = _vec(u, model.m, "u")
    z = None if model.C_m is None else model.C_m @ x
    return model.A @ x + model.B @ u, model.C @ x, z


def step_exosystem(exo, x_r):
    x_r = _vec(x_r, exo.r, "x_r")
    return exo.A @ x_r, exo.C @ x_r


@dataclass(frozen=True)
class TargetModel:
    """Remodeled exosystem ``(C_t, A_t, B_t)`` of uniform rank ``n_q``.

    ``state_map`` takes an exosystem state to the target state producing
    the same output sequence.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    n_q: int
    state_map: np.ndarray = None

    def __post_init__(self):
        for name in ("A", "B", "C"):
            object.__setattr__(self, name, _frozen(as_matrix(getattr(self, name), name)))
        if self.state_map is not None:
            object.__setattr__(self, "state_map", _frozen(as_matrix(self.state_map, "state_map")))
        r = self.A.shape[0]
        if self.A.shape != (r, r) or self.B.shape[0] != r or self.C.shape[1] != r:
            raise DimensionError("target model matrices have inconsistent dimensions")

    @property
    def r(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def markov_parameters(self, count=None):
        count = self.n_q if count is None else count
        out, Ak = [], np.eye(self.r)
        for _ in range(count):
            out.append(self.C @ Ak @ self.B)
            Ak = Ak @ self.A
        return out

    def verify(self, tol=1e-10, exosystem=None):
        """Raise ModelError unless the uniform-rank/no-zero structure holds."""
        if self.r != self.n_q * self.p or self.m != self.p:
            raise ModelError("a square uniform-rank target without zeros needs r = n_q * p and m = p")
        markov = self.markov_parameters()
        for i, M in enumerate(markov[:-1]):
            if np.max(np.abs(M)) > tol:
                raise ModelError(f"Markov parameter {i} is nonzero; rank is not uniform")
        if abs(np.linalg.det(markov[-1])) <= tol:
            raise ModelError(f"Markov parameter {self.n_q - 1} is singular")
        # invertible with no invariant zeros <=> observability matrix is invertible
        O = observability_matrix(self.A, self.C, self.n_q)
        if np.linalg.matrix_rank(O, tol=RANK_TOL) < self.r:
            raise ModelError("target model has invariant zeros (unobservable)")
        if exosystem is not None:
            target_eigs = list(eigenvalues(self.A).eigenvalues)
            for lam in eigenvalues(exosystem.A).eigenvalues:
                dist = [abs(lam - mu) for mu in target_eigs]
                k = int(np.argmin(dist))
                if dist[k] > 1e-6:
                    raise ModelError(f"exosystem eigenvalue {lam} missing from target model")
                target_eigs.pop(k)
            if any(abs(mu) > 1e-6 for mu in target_eigs):
                raise ModelError("extra target-model eigenvalues must be zero")


def remodel_exosystem(exo, agent_infinite_zero_orders=(), n_q=None):
    """Target model generating the exosystem output, of uniform rank ``n_q``.

    The target is the observer-canonical chain ``C_t = e_1', B_t = e_nq``
    whose characteristic polynomial is ``z**(n_q - r)`` times that of the
    exosystem. Only single-output exosystems are supported.
    """
    exo.check_reference()
    if exo.p != 1:
        raise ModelError("remodeling is implemented for single-output exosystems only")
    orders = [o for o in agent_infinite_zero_orders if o is not None]
    required = max(orders + [exo.observability_indices()])
    if n_q is None:
        n_q = required
    elif n_q < required:
        raise ModelError(f"n_q={n_q} is below the required {required}")
    r = exo.r
    O = observability_matrix(exo.A, exo.C, r)
    # y(k+r) = alpha . (y(k), ..., y(k+r-1))
    alpha = (exo.C @ np.linalg.matrix_power(exo.A, r)) @ np.linalg.inv(O)
    A_t = np.eye(n_q, k=1)
    A_t[-1, :] = 0.0
    A_t[-1, n_q - r:] = alpha.ravel()
    B_t = np.zeros((n_q, 1))
    B_t[-1, 0] = 1.0
    C_t = np.zeros((1, n_q))
    C_t[0, 0] = 1.0
    state_map = observability_matrix(exo.A, exo.C, n_q)
    target = TargetModel(A_t, B_t, C_t, n_q, state_map)
    target.verify(exosystem=exo)
    return target


@dataclass(frozen=True)
class PreCompensator:
    """Local feedback that makes an agent behave like the target model.

    Dynamics: ``xi+ = A_h xi + B_h z + E_h v`` and ``u = C_h xi + F_h z + D_h v``.
    ``F_h`` is a direct feedthrough of the local measurement (zero for purely
    dynamic designs).

    The remaining fields are linear maps of the stacked ``(x, xi)`` state used
    by contract checks and error-system oracles:

    * ``reference_from_agent``/``reference_from_comp`` give the target-model
      state whose output the agent converges to for a given input sequence.
    * ``state_from_agent``/``state_from_comp`` give the homogenized state
      ``x_h`` with ``x_h+ = A_t x_h + B_t (v + rho)`` and ``y = C_t x_h``.
    * ``rho_from_agent``/``rho_from_comp`` give the mismatch state ``w`` with
      ``w+ = rho_A w`` and ``rho = rho_C w``.
    """

    A_h: np.ndarray
    B_h: np.ndarray
    E_h: np.ndarray
    C_h: np.ndarray
    D_h: np.ndarray
    F_h: np.ndarray
    reference_from_agent: np.ndarray
    reference_from_comp: np.ndarray
    state_from_agent: np.ndarray = None
    state_from_comp: np.ndarray = None
    rho_A: np.ndarray = None
    rho_C: np.ndarray = None
    rho_from_agent: np.ndarray = None
    rho_from_comp: np.ndarray = None
    label: str = field(default="", compare=False)

    def __post_init__(self):
        for name in ("A_h", "B_h", "E_h", "C_h", "D_h", "F_h", "reference_from_agent", "reference_from_comp"):
            object.__setattr__(self, name, _frozen(np.atleast_2d(np.array(getattr(self, name), dtype=float))))
        nh = self.n_xi
        if self.state_from_agent is None:
            object.__setattr__(self, "state_from_agent", self.reference_from_agent)
            object.__setattr__(self, "state_from_comp", self.reference_from_comp)
        if self.rho_A is None:
            object.__setattr__(self, "rho_A", np.zeros((0, 0)))
            object.__setattr__(self, "rho_C", np.zeros((self.E_h.shape[1], 0)))
            object.__setattr__(self, "rho_from_agent", np.zeros((0, self.F_h.shape[1])))
            object.__setattr__(self, "rho_from_comp", np.zeros((0, nh)))
        for name in ("state_from_agent", "state_from_comp", "rho_A", "rho_C", "rho_from_agent", "rho_from_comp"):
            object.__setattr__(self, name, _frozen(np.array(getattr(self, name), dtype=float)))
        if self.A_h.shape != (nh, nh) or self.C_h.shape[1] != nh:
            raise DimensionError("pre-compensator matrices have inconsistent dimensions")

    @property
    def n_xi(self):
        return self.A_h.shape[0] if self.A_h.size else 0

    @property
    def n_rho(self):
        return self.rho_A.shape[0]

    def step(self, xi, z, v):
        """Returns ``(xi_next, u)``; accepts one sample or a stack of rows."""
        u = xi @ self.C_h.T + z @ self.F_h.T + v @ self.D_h.T
        if self.n_xi == 0:
            return xi, u
        return xi @ self.A_h.T + z @ self.B_h.T + v @ self.E_h.T, u

    def is_rho_schur(self):
        return self.n_rho == 0 or is_schur(self.rho_A)


def _empty(rows, cols):
    return np.zeros((rows, cols))


def _static_match(agent, target, tol=1e-10):
    if agent.n != target.r or agent.C.shape != target.C.shape or np.max(np.abs(agent.C - target.C)) > tol:
        return None
    Bp = np.linalg.pinv(agent.B)
    F = Bp @ (target.A - agent.A)
    G = Bp @ target.B
    if np.max(np.abs(agent.B @ F - (target.A - agent.A))) > tol or np.max(np.abs(agent.B @ G - target.B)) > tol:
        return None
    Cm_inv = np.linalg.pinv(agent.C_m)
    n, p = agent.n, target.m
    return PreCompensator(
        A_h=_empty(0, 0),
        B_h=_empty(0, agent.q),
        E_h=_empty(0, p),
        C_h=_empty(agent.m, 0),
        D_h=G,
        F_h=F @ Cm_inv,
        reference_from_agent=np.eye(n),
        reference_from_comp=_empty(n, 0),
        label="static model matching",
    )


def _tracking(agent, target, pole, Q, R):
    # The compensator carries a copy of the target model driven by v; the
    # agent output is steered onto that copy's output with the mismatch
    # e = y - C_t xi obeying (z - pole)^d e = 0, and the leftover input
    # directions stabilize the internal dynamics.
    if agent.p != 1 or target.p != 1:
        raise HomogenizationError("tracking pre-compensator supports single-output agents only")
    d = agent.infinite_zero_order()
    if d is None or d > target.n_q:
        raise HomogenizationError(f"agent infinite-zero order {d} exceeds target rank {target.n_q}")
    A, B, C = agent.A, agent.B, agent.C
    At, Bt, Ct = target.A, target.B, target.C
    nq, rt, n, m = target.n_q, target.r, agent.n, agent.m

    Gamma = C @ np.linalg.matrix_power(A, d - 1) @ B
    Gp = np.linalg.pinv(Gamma)
    coeffs = np.poly(np.full(d, pole))[1:][::-1]  # c_0 .. c_{d-1}
    CAi = [C @ np.linalg.matrix_power(A, i) for i in range(d + 1)]
    CtAi = [Ct @ np.linalg.matrix_power(At, i) for i in range(nq + 1)]
    x_gain = -CAi[d] - sum(c * CAi[i] for i, c in enumerate(coeffs))
    xi_gain = CtAi[d] + sum(c * CtAi[i] for i, c in enumerate(coeffs))
    v_gain = CtAi[d - 1] @ Bt

    A_cl = A + B @ Gp @ x_gain
    null = np.eye(m) - Gp @ Gamma
    F0 = np.zeros((m, n))
    if np.max(np.abs(null)) > RANK_TOL:
        try:
            F0 = -synthesize_state_gain(A_cl, B @ null, Q, R)
        except SynthesisError as exc:
            raise HomogenizationError(f"internal dynamics cannot be stabilized: {exc}") from exc
    if agent.C_m is None or np.linalg.matrix_rank(agent.C_m, tol=RANK_TOL) < n:
        raise HomogenizationError("tracking pre-compensator needs C_m of full column rank")
    Cm_inv = np.linalg.pinv(agent.C_m)

    # mismatch state w = (e(k), ..., e(k+d-1))
    S = np.eye(d, k=1)
    S[-1, :] = -coeffs
    W_x = np.vstack(CAi[:d])
    W_xi = -np.vstack(CtAi[:d])
    Omega = np.vstack([np.linalg.matrix_power(S, j)[0] for j in range(nq)])
    O_t = np.vstack(CtAi[:nq])
    eta = np.linalg.solve(O_t, Omega)
    g = float((CtAi[nq - 1] @ Bt)[0, 0])
    rho_C = (np.linalg.matrix_power(S, nq)[0] - CtAi[nq] @ eta) / g

    return PreCompensator(
        A_h=At,
        B_h=_empty(rt, agent.q),
        E_h=Bt,
        C_h=Gp @ xi_gain,
        D_h=Gp @ v_gain,
        F_h=(Gp @ x_gain + null @ F0) @ Cm_inv,
        reference_from_agent=_empty(rt, n),
        reference_from_comp=np.eye(rt),
        state_from_agent=eta @ W_x,
        state_from_comp=np.eye(rt) + eta @ W_xi,
        rho_A=S,
        rho_C=rho_C.reshape(1, d),
        rho_from_agent=W_x,
        rho_from_comp=W_xi,
        label=f"output tracking, relative degree {d}",
    )


def homogenize(agent, target, pole=0.5, Q=None, R=None, validate=True, rng=None):
    """Design a pre-compensator making ``agent`` behave as ``target``.

    Exact static model matching is used when ``A + B F`` can equal the
    target dynamics; otherwise the agent tracks an internal copy of the
    target model with a mismatch that decays like ``pole**k``. The design is
    checked by simulation before it is returned.
    """
    if agent.C_m is None:
        raise HomogenizationError("agent has no local measurement C_m")
    if not 0 <= pole < 1:
        raise ValueError("pole must lie in [0, 1)")
    pre = _static_match(agent, target)
    if pre is None:
        pre = _tracking(agent, target, pole, Q, R)
    if validate:
        err = check_homogenization(agent, target, pre, rng=rng)
        if not err < 1e-8:
            raise HomogenizationError(f"pre-compensator fails the matching contract (residual {err:.3g})")
    return pre


def homogenization_residual(agent, target, pre, x0, xi0, inputs):
    """Run the compensated agent and the target model on ``inputs``.

    Returns the per-step output mismatch ``|y_agent(k) - y_target(k)|``.
    With stacked initial states (one row per trial) and ``inputs`` of shape
    ``(steps, trials, m)`` all trials run at once and the result is
    ``(steps, trials)``.
    """
    x = np.array(x0, dtype=float)
    xi = np.array(xi0, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    xt = x @ pre.reference_from_agent.T + xi @ pre.reference_from_comp.T
    out = np.empty(inputs.shape[:-1])
    AT, BT, CT, CmT = agent.A.T, agent.B.T, agent.C.T, agent.C_m.T
    AtT, BtT, CtT = target.A.T, target.B.T, target.C.T
    for k, v in enumerate(inputs):
        out[k] = np.linalg.norm(x @ CT - xt @ CtT, axis=-1)
        xi, u = pre.step(xi, x @ CmT, v)
        x = x @ AT + u @ BT
        xt = xt @ AtT + v @ BtT
    return out


def check_homogenization(agent, target, pre, rng=None, trials=20, steps=500, amplitude=1.0):
    """Worst final output mismatch over random initial states and bounded inputs."""
    rng = np.random.default_rng(0) if rng is None else rng
    x0 = rng.uniform(-1, 1, (trials, agent.n))
    xi0 = rng.uniform(-1, 1, (trials, pre.n_xi))
    inputs = rng.uniform(-amplitude, amplitude, (steps + 1, trials, target.m))
    with np.errstate(over="ignore", invalid="ignore"):
        res = homogenization_residual(agent, target, pre, x0, xi0, inputs)
    if not np.all(np.isfinite(res)):
        return np.inf
    return float(np.max(res[-1]))
