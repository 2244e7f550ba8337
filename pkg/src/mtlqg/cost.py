"""Exact lifted-cost evaluation, the closed-form policy gradient, and the
gradient-dominance constant.

All controller-dependent quantities flow through the effective closed loop
A_K = A + B Kt S*^+ on the state-estimate space:

    Sigma_K = dlyap(A_K, Sigma_nu)                (estimate covariance)
    P_K     = dlyap(A_K', Qt + S^+' Kt' R Kt S^+) (value matrix)
    E_K     = 2((R + B'P_K B) Kt S^+ + B'P_K A)
    grad    = E_K Sigma_K S^+'

E_K carries +B'PA so that it vanishes at the Riccati optimum under the
A_K = A + B Kt S^+ closed-loop sign convention (u = +K xhat).

with Qt = C'QC.  The scalar cost adds the controller-independent offset
tr(Qt Sigma_e) + tr(Q V) from the filtering error and measurement noise.
"""

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .errors import NotStabilizing, SingularInnovation
from .linalg import dare, dlyap, spectral_radius
from .tasks import LqgTask


@dataclass(frozen=True)
class InnovationStatistics:
    """Steady-state Kalman filter quantities; all independent of the controller."""

    Sigma_tilde: np.ndarray   # prediction error covariance, dare(A', C', W, V)
    L: np.ndarray             # filter gain
    Sigma_nu: np.ndarray      # L (C Sigma_tilde C' + V) L', drives the estimate recursion
    Sigma_e: np.ndarray       # filtering error covariance (I - LC) Sigma_tilde


@dataclass(frozen=True)
class CostReport:
    J: float
    P_K: np.ndarray
    Sigma_K: np.ndarray
    offset: float


@dataclass(frozen=True)
class GradientReport:
    grad: np.ndarray
    E_K: np.ndarray
    norm_F: float


def innovation_statistics(task: LqgTask) -> InnovationStatistics:
    """Solve the filter Riccati equation and derive gain and covariances."""
    sol = dare(task.A.T, task.C.T, task.W, task.V)
    sigma_tilde = sol.P
    s_innov = task.C @ sigma_tilde @ task.C.T + task.V
    s_innov = 0.5 * (s_innov + s_innov.T)
    if np.min(np.linalg.eigvalsh(s_innov)) <= 0.0:
        raise SingularInnovation("C Sigma C' + V is not positive definite")
    gain = np.linalg.solve(s_innov, task.C @ sigma_tilde).T
    sigma_nu = gain @ s_innov @ gain.T
    sigma_e = (np.eye(task.n_x) - gain @ task.C) @ sigma_tilde
    return InnovationStatistics(
        Sigma_tilde=sigma_tilde, L=gain,
        Sigma_nu=0.5 * (sigma_nu + sigma_nu.T),
        Sigma_e=0.5 * (sigma_e + sigma_e.T))


def cost_offset(task: LqgTask, stats: InnovationStatistics) -> float:
    """Controller-independent cost floor tr(C'QC Sigma_e) + tr(Q V)."""
    q_tilde = task.C.T @ task.Q @ task.C
    return float(np.sum(q_tilde * stats.Sigma_e) + np.sum(task.Q * task.V))


def cost_exact(task: LqgTask, lift, ktilde) -> CostReport:
    """Stationary per-step cost of a stabilizing lifted controller."""
    k = _gain(ktilde)
    stats = lift.stats
    a_cl = task.A + task.B @ (k @ lift.S_dagger)
    rho = spectral_radius(a_cl)
    if rho >= 1.0:
        raise NotStabilizing(f"task {task.id}: rho(A_K) = {rho:.6g} >= 1")
    cost_mat = _cost_matrix(task, lift, k)
    sigma_k = dlyap(a_cl, stats.Sigma_nu)
    p_k = dlyap(a_cl.T, cost_mat)
    offset = cost_offset(task, stats)
    j = float(np.sum(cost_mat * sigma_k)) + offset
    return CostReport(J=j, P_K=p_k, Sigma_K=sigma_k, offset=offset)


def gradient_exact(task: LqgTask, lift, ktilde) -> GradientReport:
    """Closed-form policy gradient E_K Sigma_K S*^+' at a stabilizing controller."""
    k = _gain(ktilde)
    j_quad, grad, rho = kernels.task_cost_grad(
        task.A, task.B, _q_tilde(task), task.R, lift.S_dagger,
        lift.stats.Sigma_nu, np.ascontiguousarray(k))
    if grad is None:
        raise NotStabilizing(f"task {task.id}: rho(A_K) = {rho:.6g} >= 1")
    return GradientReport(grad=grad, E_K=_e_matrix(task, lift, k),
                          norm_F=float(np.linalg.norm(grad, "fro")))


def cost_and_gradient(task: LqgTask, lift, ktilde):
    """Fused (J, grad, rho) evaluation for the training hot loop."""
    k = _gain(ktilde)
    j_quad, grad, rho = kernels.task_cost_grad(
        task.A, task.B, _q_tilde(task), task.R, lift.S_dagger,
        lift.stats.Sigma_nu, np.ascontiguousarray(k))
    if grad is None:
        raise NotStabilizing(f"task {task.id}: rho(A_K) = {rho:.6g} >= 1")
    return j_quad + cost_offset(task, lift.stats), grad, rho


def gradient_dominance_constant(task: LqgTask, lift) -> float:
    """gamma = 4 lmin(Sigma_nu)^2 lmin(R) / (||Sigma_{K*}|| ||S*||).

    Zero whenever Sigma_nu is rank deficient (n_y < n_x), in which case the
    gradient-dominance bound is vacuous.
    """
    stats = lift.stats
    q_tilde = _q_tilde(task)
    sol = dare(task.A, task.B, q_tilde, task.R)
    a_star = task.A + task.B @ sol.gain
    sigma_star = dlyap(a_star, stats.Sigma_nu)
    lmin_nu = max(float(np.min(np.linalg.eigvalsh(stats.Sigma_nu))), 0.0)
    lmin_r = float(np.min(np.linalg.eigvalsh(task.R)))
    denom = np.linalg.norm(sigma_star, 2) * np.linalg.norm(lift.S_star, 2)
    return 4.0 * lmin_nu ** 2 * lmin_r / denom


def optimality_gap(task: LqgTask, lift, ktilde) -> float:
    """J(Kt) - J(Kt*) for the task's own Riccati-based optimum."""
    from .lifting import lifted_optimal_controller

    j = cost_exact(task, lift, ktilde).J
    j_star = cost_exact(task, lift, lifted_optimal_controller(task, lift)).J
    return j - j_star


def _gain(ktilde) -> np.ndarray:
    return np.asarray(getattr(ktilde, "K", ktilde), dtype=float)


def _q_tilde(task: LqgTask) -> np.ndarray:
    q_tilde = task.C.T @ task.Q @ task.C
    return 0.5 * (q_tilde + q_tilde.T)


def _cost_matrix(task, lift, k):
    ks = k @ lift.S_dagger
    cost_mat = _q_tilde(task) + ks.T @ task.R @ ks
    return 0.5 * (cost_mat + cost_mat.T)


def _e_matrix(task, lift, k):
    ks = k @ lift.S_dagger
    a_cl = task.A + task.B @ ks
    p_k = dlyap(a_cl.T, _cost_matrix(task, lift, k))
    bp = task.B.T @ p_k
    return 2.0 * ((task.R + bp @ task.B) @ ks + bp @ task.A)
