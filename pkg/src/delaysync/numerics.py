"""Dense linear algebra used throughout the package.

Eigenvalues come from a Householder Hessenberg reduction followed by a
complex single-shift QR iteration with Wilkinson shifts. Gains come from a
fixed-point iteration on the discrete algebraic Riccati equation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, SynthesisError

EIG_TOL = float(np.finfo(float).eps)
RICCATI_TOL = 1e-10
RICCATI_MAX_ITER = 10000


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    spectral_radius: float

    def __len__(self):
        return len(self.eigenvalues)

    def unit_circle_distance(self):
        """Smallest | |lambda| - 1 | over the spectrum (inf when empty)."""
        if len(self.eigenvalues) == 0:
            return np.inf
        return float(np.min(np.abs(np.abs(self.eigenvalues) - 1.0)))


def as_matrix(M, name="matrix", dtype=float):
    """Coerce ``M`` to a finite 2-D array."""
    arr = np.array(M, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} has non-finite entries")
    return arr


def _square(M, name="matrix"):
    dtype = complex if np.iscomplexobj(M) else float
    arr = as_matrix(M, name, dtype=dtype)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def hessenberg(M):
    """Reduce ``M`` to upper Hessenberg form by Householder similarities."""
    H = np.array(M, dtype=complex)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x
        v[0] += phase * alpha
        vn = np.linalg.norm(v)
        if vn == 0.0:
            continue
        v /= vn
        H[k + 1:, k:] -= 2.0 * np.outer(v, v.conj() @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v.conj())
        H[k + 2:, k] = 0.0
    return H


def _wilkinson_shift(a, b, c, d):
    # eigenvalue of [[a, b], [c, d]] closest to d
    tr = a + d
    det = a * d - b * c
    disc = np.sqrt(tr * tr / 4.0 - det)
    l1 = tr / 2.0 + disc
    l2 = tr / 2.0 - disc
    return l1 if abs(l1 - d) < abs(l2 - d) else l2


def _givens(a, b):
    r = np.hypot(abs(a), abs(b))
    if r == 0.0:
        return 1.0, 0.0
    return a / r, b / r


def eigenvalues(M, tol=EIG_TOL, max_iter=None, method="qr"):
    """Return the full spectrum of a square real or complex matrix.

    Parameters
    ----------
    M : array_like, shape (n, n)
    tol : float
        Relative threshold for declaring a subdiagonal entry negligible.
    max_iter : int, optional
        Total QR sweep budget; defaults to ``100 * n**2``.
    method : {"qr", "lapack"}
        ``"qr"`` runs the in-house Hessenberg/QR iteration. ``"lapack"``
        defers to ``numpy.linalg.eigvals``, which is much faster on the
        large block matrices assembled by frequency sweeps.

    Raises
    ------
    DimensionError
        If ``M`` is not square or has non-finite entries.
    ConvergenceError
        If the sweep budget is exhausted before every eigenvalue deflates.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = _square(M)
    n = A.shape[0]
    if n == 0:
        return Spectrum(np.zeros(0, dtype=complex), 0.0)
    if method == "lapack":
        try:
            eigs = np.linalg.eigvals(A)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(str(exc)) from exc
        return Spectrum(eigs, float(np.max(np.abs(eigs))))
    if method != "qr":
        raise ValueError(f"unknown eigenvalue method {method!r}")
    if max_iter is None:
        max_iter = 100 * n * n
    H = hessenberg(A)
    # work on a unit-scale copy so tiny or huge matrices neither underflow nor overflow
    scale = float(np.max(np.abs(H)))
    if scale == 0.0:
        return Spectrum(np.zeros(n, dtype=complex), 0.0)
    shift = int(np.frexp(scale)[1])
    H = np.ldexp(H.real, -shift) + 1j * np.ldexp(H.imag, -shift)
    floor = np.finfo(float).tiny * n / np.finfo(float).eps
    eigs = np.zeros(n, dtype=complex)
    hi = n - 1
    sweeps = 0
    stuck = 0
    while hi >= 0:
        if hi == 0:
            eigs[0] = H[0, 0]
            break
        # locate the start of the active unreduced block
        lo = hi
        while lo > 0:
            sub = abs(H[lo, lo - 1])
            if sub <= tol * (abs(H[lo, lo]) + abs(H[lo - 1, lo - 1])) or sub <= floor:
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eigs[hi] = H[hi, hi]
            hi -= 1
            stuck = 0
            continue
        if sweeps >= max_iter:
            raise ConvergenceError(f"QR iteration did not converge in {max_iter} sweeps")
        sweeps += 1
        stuck += 1
        if stuck % 11 == 10:
            # exceptional shift to break cycles
            mu = H[hi, hi] + 0.75 * abs(H[hi, hi - 1]) * np.exp(1j * sweeps)
        else:
            mu = _wilkinson_shift(H[hi - 1, hi - 1], H[hi - 1, hi], H[hi, hi - 1], H[hi, hi])
        W = H[lo:hi + 1, lo:hi + 1]
        m = W.shape[0]
        W[np.diag_indices(m)] -= mu
        rots = []
        for k in range(m - 1):
            c, s = _givens(W[k, k], W[k + 1, k])
            rows = W[k:k + 2, k:].copy()
            W[k, k:] = np.conj(c) * rows[0] + np.conj(s) * rows[1]
            W[k + 1, k:] = -s * rows[0] + c * rows[1]
            W[k + 1, k] = 0.0
            rots.append((c, s))
        for k, (c, s) in enumerate(rots):
            top = min(k + 2, m - 1) + 1
            cols = W[:top, k:k + 2].copy()
            W[:top, k] = c * cols[:, 0] + s * cols[:, 1]
            W[:top, k + 1] = -np.conj(s) * cols[:, 0] + np.conj(c) * cols[:, 1]
        W[np.diag_indices(m)] += mu
    eigs = np.ldexp(eigs.real, shift) + 1j * np.ldexp(eigs.imag, shift)
    radius = float(np.max(np.abs(eigs)))
    return Spectrum(eigs, radius)


def spectral_radius(M, tol=EIG_TOL):
    return eigenvalues(M, tol).spectral_radius


def is_schur(M, margin=0.0):
    """True iff every eigenvalue lies strictly inside the disc of radius 1 - margin."""
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    return spectral_radius(_square(M)) < 1.0 - margin


def kron(A, B):
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def _riccati_step(A, B, Q, R, P):
    BtPA = B.T @ P @ A
    G = np.linalg.solve(R + B.T @ P @ B, BtPA)
    return A.T @ P @ A - BtPA.T @ G + Q, G


def solve_dare(A, B, Q=None, R=None, tol=RICCATI_TOL, max_iter=RICCATI_MAX_ITER):
    """Fixed-point iteration ``P <- A'PA - A'PB (R + B'PB)^-1 B'PA + Q`` from ``P = Q``.

    Returns ``(P, K)`` with ``K = (R + B'PB)^-1 B'PA``.
    """
    A = _square(A, "A")
    n = A.shape[0]
    B = as_matrix(B, "B")
    if B.shape[0] != n:
        raise DimensionError(f"B has {B.shape[0]} rows, expected {n}")
    m = B.shape[1]
    Q = np.eye(n) if Q is None else as_matrix(Q, "Q")
    R = np.eye(m) if R is None else as_matrix(R, "R")
    if Q.shape != (n, n) or R.shape != (m, m):
        raise DimensionError("Q must be n x n and R must be m x m")
    if not np.allclose(Q, Q.T) or np.min(np.linalg.eigvalsh((Q + Q.T) / 2)) < -1e-12:
        raise SynthesisError("Q must be symmetric positive semidefinite")
    if not np.allclose(R, R.T) or np.min(np.linalg.eigvalsh((R + R.T) / 2)) <= 0:
        raise SynthesisError("R must be symmetric positive definite")
    P = Q.copy()
    for _ in range(max_iter):
        with np.errstate(all="ignore"):
            P_next, G = _riccati_step(A, B, Q, R, P)
            P_next = (P_next + P_next.T) / 2
            residual = np.max(np.abs(P_next - P))
        if not np.all(np.isfinite(P_next)):
            raise SynthesisError("Riccati iteration diverged; pair is not stabilizable")
        P = P_next
        if residual <= tol * max(1.0, np.max(np.abs(P))):
            _, K = _riccati_step(A, B, Q, R, P)
            if not np.all(np.isfinite(K)):
                raise SynthesisError("Riccati gain is not finite")
            return P, K
    raise SynthesisError(
        f"Riccati iteration stalled after {max_iter} steps (residual {residual:.3g}); "
        "pair is not stabilizable/detectable"
    )


def synthesize_state_gain(A, B, Q=None, R=None):
    """State-feedback gain ``K`` making ``A - B K`` Schur stable."""
    _, K = solve_dare(A, B, Q, R)
    if not is_schur(as_matrix(A) - as_matrix(B) @ K):
        raise SynthesisError("Riccati gain does not stabilize A - BK")
    return K


def synthesize_observer_gain(A, C, Q=None, R=None):
    """Observer gain ``H`` making ``A - H C`` Schur stable (dual of state feedback)."""
    A = as_matrix(A, "A")
    C = as_matrix(C, "C")
    try:
        K = synthesize_state_gain(A.T, C.T, Q, R)
    except SynthesisError as exc:
        raise SynthesisError(f"observer synthesis failed: {exc}") from exc
    return K.T


def observability_matrix(A, C, steps=None):
    A = as_matrix(A, "A")
    C = as_matrix(C, "C")
    steps = A.shape[0] if steps is None else steps
    blocks = [C]
    for _ in range(steps - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)
