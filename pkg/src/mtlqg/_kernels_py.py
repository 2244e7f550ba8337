"""Pure-numpy implementations of the numerical hot kernels.

The compiled extension ``mtlqg._kernels`` provides the same four functions;
``mtlqg._backend`` picks whichever is available.  Inputs are assumed
pre-validated (C-contiguous float64, consistent shapes); validation lives in
the public wrappers of :mod:`mtlqg.linalg`.
"""

import numpy as np

BACKEND = "python"


def spectral_radius(a):
    """Largest eigenvalue modulus of a square matrix."""
    return float(np.max(np.abs(np.linalg.eigvals(a)))) if a.size else 0.0


def dlyap_doubling(a, q, tol=1e-14, max_iter=128):
    """Solve X = Q + A X A' by doubling: A_{k+1} = A_k^2, X_{k+1} = X_k + A_k X_k A_k'.

    Assumes rho(A) < 1 and Q symmetric; returns the symmetrized solution.
    """
    x = q.copy()
    ak = a.copy()
    for _ in range(max_iter):
        inc = ak @ x @ ak.T
        x = x + inc
        x = 0.5 * (x + x.T)
        if np.linalg.norm(inc, "fro") <= tol * (1.0 + np.linalg.norm(x, "fro")):
            break
        ak = ak @ ak
    return x


def dare_doubling(a, b, q, r, tol=1e-14, max_iter=128):
    """Structure-preserving doubling iteration for the discrete Riccati equation.

    Solves P = Q + A'PA - A'PB (R + B'PB)^{-1} B'PA.  H_k converges
    quadratically to P when (A, B) is stabilizable and R > 0.
    """
    n = a.shape[0]
    eye = np.eye(n)
    g = b @ np.linalg.solve(r, b.T)
    h = q.copy()
    ak = a.copy()
    for _ in range(max_iter):
        w = np.linalg.solve(eye + g @ h, np.hstack([ak, g @ ak.T]))
        ia_a = w[:, :n]          # (I + G H)^{-1} A
        ia_ga = w[:, n:]         # (I + G H)^{-1} G A'
        h_new = h + ak.T @ h @ ia_a
        g_new = g + ak @ ia_ga
        a_new = ak @ ia_a
        h_new = 0.5 * (h_new + h_new.T)
        g_new = 0.5 * (g_new + g_new.T)
        diff = np.linalg.norm(h_new - h, "fro")
        h, g, ak = h_new, g_new, a_new
        if diff <= tol * (1.0 + np.linalg.norm(h, "fro")):
            break
    return h


def task_cost_grad(a, b, qtilde, r, s_dag, sigma_nu, ktilde):
    """Fused per-task evaluation used by the training loop.

    Returns (j_quad, grad, rho) where j_quad = tr((Qt + S'K'RKS) Sigma_K) is
    the controller-dependent part of the cost, grad is the closed-form policy
    gradient E_K Sigma_K S_dag', and rho the closed-loop spectral radius.
    E_K carries +B'PA: with the A + BK closed-loop convention that is the
    orientation that vanishes at the Riccati optimum.
    """
    ks = ktilde @ s_dag                     # n_u x n_x
    acl = a + b @ ks
    rho = spectral_radius(acl)
    if rho >= 1.0:
        return np.inf, None, rho
    cost_mat = qtilde + ks.T @ (r @ ks)
    cost_mat = 0.5 * (cost_mat + cost_mat.T)
    sigma_k = dlyap_doubling(acl, sigma_nu)
    p_k = dlyap_doubling(acl.T, cost_mat)
    bp = b.T @ p_k
    e_k = 2.0 * ((r + bp @ b) @ ks + bp @ a)
    grad = e_k @ sigma_k @ s_dag.T
    j_quad = float(np.sum(cost_mat * sigma_k))
    return j_quad, grad, rho
