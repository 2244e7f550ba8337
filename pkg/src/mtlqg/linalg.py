"""Dense linear-algebra and control-theoretic primitives.

All operations are pure functions of their ndarray arguments.  The Lyapunov
and Riccati solvers delegate the iteration to the active kernel backend
(compiled or pure numpy) and enforce the residual/stability contracts here.
"""

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import NonSymmetric, NotStabilizable, RankDeficient, RIndefinite, Unstable

RANK_RTOL = 1e-9           # rank tolerance, relative to the largest singular value
DLYAP_RESIDUAL_RTOL = 1e-10
DARE_RESIDUAL_RTOL = 1e-8
SYM_RTOL = 1e-8


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization: vec([[1,3],[2,4]]) = (1,2,3,4)."""
    return np.asarray(x, dtype=float).flatten(order="F")


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v, dtype=float).reshape((rows, cols), order="F")


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, satisfying vec(A X B') = (B (x) A) vec(X)."""
    return np.kron(a, b)


def spectral_radius(a: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    a = _as_square(a)
    return kernels.spectral_radius(a)


def is_schur_stable(a: np.ndarray, margin: float = 0.0) -> bool:
    """True iff rho(A) < 1 - margin."""
    return spectral_radius(a) < 1.0 - margin


def right_pinv(s: np.ndarray) -> np.ndarray:
    """Moore-Penrose right inverse of a full-row-rank matrix.

    Returns S' (S S')^{-1}, so that S @ right_pinv(S) = I.  Raises
    :class:`RankDeficient` when S does not have full row rank.
    """
    s = np.ascontiguousarray(s, dtype=float)
    sv = np.linalg.svd(s, compute_uv=False)
    if s.shape[0] > s.shape[1] or sv.size == 0 or sv[-1] <= RANK_RTOL * sv[0]:
        raise RankDeficient(f"matrix of shape {s.shape} lacks full row rank")
    return np.linalg.solve(s @ s.T, s).T


def dlyap(a: np.ndarray, qc: np.ndarray) -> np.ndarray:
    """Unique solution X = Qc + A X A' of the discrete Lyapunov equation.

    Solved by the doubling iteration A_{k+1} = A_k^2, X_{k+1} = X_k + A_k X_k A_k'.
    Requires rho(A) < 1 and Qc symmetric.
    """
    a = _as_square(a)
    qc = _as_symmetric(qc, "Qc")
    if not is_schur_stable(a):
        raise Unstable(f"dlyap requires rho(A) < 1, got {spectral_radius(a):.6g}")
    x = kernels.dlyap_doubling(a, qc)
    resid = np.linalg.norm(x - qc - a @ x @ a.T, "fro")
    if resid > DLYAP_RESIDUAL_RTOL * (1.0 + np.linalg.norm(x, "fro")):
        raise Unstable(f"dlyap residual {resid:.3g} above tolerance")
    return x


@dataclass
class DareSolution:
    """Stabilizing Riccati solution with its feedback gain.

    ``gain`` is -(R + B'PB)^{-1} B'PA, so the stable closed loop is A + B @ gain.
    """

    P: np.ndarray
    gain: np.ndarray
    residual: float


def dare(a: np.ndarray, b: np.ndarray, q: np.ndarray, r: np.ndarray) -> DareSolution:
    """Stabilizing solution of P = Q + A'PA - A'PB (R + B'PB)^{-1} B'PA.

    Uses the structure-preserving doubling algorithm with a damped fixed-point
    fallback.  Requires (A, B) stabilizable, Q >= 0 symmetric and R > 0.
    """
    a = _as_square(a)
    b = np.ascontiguousarray(b, dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    q = _as_symmetric(q, "Q")
    r = _as_symmetric(r, "R")
    if np.min(np.linalg.eigvalsh(r)) <= 0.0:
        raise RIndefinite("R must be positive definite")
    _check_stabilizable(a, b)

    p = kernels.dare_doubling(a, b, q, r)
    resid = _dare_residual(a, b, q, r, p)
    tol = DARE_RESIDUAL_RTOL * (1.0 + np.linalg.norm(p, "fro"))
    if not np.all(np.isfinite(p)) or resid > tol:
        p = _dare_fixed_point(a, b, q, r)
        resid = _dare_residual(a, b, q, r, p)
        if resid > tol:
            raise NotStabilizable(f"Riccati iteration stalled, residual {resid:.3g}")
    gain = -np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
    if not is_schur_stable(a + b @ gain):
        raise NotStabilizable("Riccati solution does not yield a stable closed loop")
    return DareSolution(P=p, gain=gain, residual=resid)


def check_ctrb_obsv(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> tuple[bool, bool]:
    """Rank tests of the controllability and observability matrices."""
    a = _as_square(a)
    b = np.atleast_2d(np.asarray(b, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    n = a.shape[0]
    ctrb = _krylov(a, b.reshape(n, -1), n, left=False)
    obsv = _krylov(a, c.reshape(-1, n), n, left=True)
    return _full_rank(ctrb, n), _full_rank(obsv, n)


def psd_sqrt(w: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (eigen-based; negatives clipped)."""
    w = _as_symmetric(w, "W")
    vals, vecs = np.linalg.eigh(w)
    return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def _krylov(a, m, n, left):
    blocks = []
    cur = m
    for _ in range(n):
        blocks.append(cur)
        cur = cur @ a if left else a @ cur
    return np.vstack(blocks) if left else np.hstack(blocks)


def _full_rank(m, n):
    sv = np.linalg.svd(m, compute_uv=False)
    return bool(np.sum(sv > RANK_RTOL * sv[0]) >= n) if sv[0] > 0 else False


def _check_stabilizable(a, b):
    n = a.shape[0]
    eigvals = np.linalg.eigvals(a)
    for lam in eigvals:
        if abs(lam) >= 1.0 - 1e-12:
            pencil = np.hstack([a - lam * np.eye(n), b.astype(complex)])
            sv = np.linalg.svd(pencil, compute_uv=False)
            if sv[-1] <= RANK_RTOL * sv[0]:
                raise NotStabilizable(f"mode lambda={lam:.6g} is uncontrollable")


def _dare_residual(a, b, q, r, p):
    bpb = r + b.T @ p @ b
    rhs = q + a.T @ p @ a - a.T @ p @ b @ np.linalg.solve(bpb, b.T @ p @ a)
    return float(np.linalg.norm(p - rhs, "fro"))


def _dare_fixed_point(a, b, q, r, theta=0.5, max_iter=200000, tol=1e-15):
    p = q.copy()
    for _ in range(max_iter):
        bpb = r + b.T @ p @ b
        rhs = q + a.T @ p @ a - a.T @ p @ b @ np.linalg.solve(bpb, b.T @ p @ a)
        p_new = (1.0 - theta) * p + theta * rhs
        p_new = 0.5 * (p_new + p_new.T)
        if np.linalg.norm(p_new - p, "fro") <= tol * (1.0 + np.linalg.norm(p_new, "fro")):
            return p_new
        p = p_new
    return p


def _as_square(a):
    a = np.ascontiguousarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def _as_symmetric(m, name):
    m = np.ascontiguousarray(np.atleast_2d(m), dtype=float)
    if m.shape[0] != m.shape[1]:
        raise NonSymmetric(f"{name} must be square, got {m.shape}")
    scale = np.linalg.norm(m, "fro")
    if np.linalg.norm(m - m.T, "fro") > SYM_RTOL * max(scale, 1.0):
        raise NonSymmetric(f"{name} is not symmetric")
    return 0.5 * (m + m.T)
