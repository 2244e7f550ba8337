"""Gradient dynamical systems, exact gradient heterogeneity, and certified
bisimulation-based upper bounds.

For a stabilizing controller the vectorized covariance recursion

    s_{t+1} = F s_t + nu,   z_t = C_out s_t,
    F = A_K (x) A_K,  C_out = S*^+ (x) E_K,  nu = vec(Sigma_nu),

has outputs converging to vec of the exact policy gradient, so the Cesàro
mean of squared output mismatch between two tasks converges to the gradient
heterogeneity ||grad_i - grad_j||_F^2.  A PSD matrix M with

    M >= C'C   and   F'MF - M <= -lambda M      (joint system)

induces the quadratic bisimulation function s'Ms and the certified bound
b_ij = zeta nu'M nu / lambda', with eta = 1/sqrt(1-lambda) - 1,
zeta = 1 + 1/eta and lambda' = lambda - eta(1-lambda) = 1 - sqrt(1-lambda).
"""

from dataclasses import dataclass

import numpy as np

from .cost import gradient_exact
from .errors import MarginTooLarge, NotStabilizing, Unstable
from .linalg import dlyap, kron, spectral_radius, vec

# Cross-check C_out against the closed-form gradient on assembly (cheap; the
# Kronecker ordering is the numeric contract, not the typesetting).
VALIDATE_ASSEMBLY = True


@dataclass(frozen=True)
class GradientSystem:
    """Linear system whose output converges to the vectorized policy gradient."""

    task_id: str
    F: np.ndarray       # n_x^2 x n_x^2, A_K (x) A_K
    C_out: np.ndarray   # d x n_x^2, S*^+ (x) E_K
    nu: np.ndarray      # vec(Sigma_nu)

    @property
    def state_dim(self) -> int:
        return self.F.shape[0]


@dataclass(frozen=True)
class BisimCertificate:
    """Feasible (M, lambda) pair and the heterogeneity bound it certifies."""

    M: np.ndarray
    lam: float
    eta: float
    zeta: float
    lambda_prime: float
    b_ij: float
    backend: str        # "lyapunov-feasible" | "sdp-refined"


@dataclass
class CertificateConfig:
    """Options for certificate computation.

    ``margin_rel`` sets the contraction margin epsilon = margin_rel * (1 - rho(F)^2);
    ``refine`` enables the budgeted first-order SDP refinement of M.
    """

    margin_rel: float = 0.05
    refine: bool = False
    budget: int = 200


def gradient_system_assemble(task, lift, ktilde) -> GradientSystem:
    """Build (F, C_out, nu) for one task at a stabilizing controller."""
    k = np.asarray(getattr(ktilde, "K", ktilde), dtype=float)
    a_cl = task.A + task.B @ (k @ lift.S_dagger)
    if spectral_radius(a_cl) >= 1.0:
        raise NotStabilizing(f"task {task.id}: closed loop unstable")
    report = gradient_exact(task, lift, k)
    sys = GradientSystem(task_id=task.id, F=kron(a_cl, a_cl),
                         C_out=kron(lift.S_dagger, report.E_K),
                         nu=vec(lift.stats.Sigma_nu))
    if VALIDATE_ASSEMBLY:
        s_inf = np.linalg.solve(np.eye(sys.state_dim) - sys.F, sys.nu)
        mismatch = np.linalg.norm(sys.C_out @ s_inf - vec(report.grad))
        scale = 1.0 + np.linalg.norm(report.grad)
        if mismatch > 1e-8 * scale:
            raise AssertionError(
                f"gradient-system assembly inconsistent with closed form "
                f"({mismatch:.3g} vs scale {scale:.3g})")
    return sys


def epsilon_het_exact(task_i, task_j, lift_i, lift_j, ktilde) -> float:
    """Exact gradient heterogeneity ||grad_i - grad_j||_F^2 at a shared controller."""
    g_i = gradient_exact(task_i, lift_i, ktilde).grad
    g_j = gradient_exact(task_j, lift_j, ktilde).grad
    return float(np.linalg.norm(g_i - g_j, "fro") ** 2)


def epsilon_het_trajectory_oracle(sys_i: GradientSystem, sys_j: GradientSystem,
                                  T: int) -> float:
    """Cesàro mean (1/T) sum_t ||z_t^i - z_t^j||^2 of the deterministic recursions."""
    s_i = np.zeros(sys_i.state_dim)
    s_j = np.zeros(sys_j.state_dim)
    total = 0.0
    for _ in range(T):
        diff = sys_i.C_out @ s_i - sys_j.C_out @ s_j
        total += float(diff @ diff)
        s_i = sys_i.F @ s_i + sys_i.nu
        s_j = sys_j.F @ s_j + sys_j.nu
    return total / T


def select_lambda_eta(sys_i: GradientSystem, sys_j: GradientSystem,
                      epsilon_margin: float):
    """Contraction-rate selection lambda = 1 - rho(F_joint)^2 - epsilon.

    Returns (lambda, eta, zeta, lambda_prime) with eta = 1/sqrt(1-lambda) - 1,
    zeta = 1 + 1/eta, lambda' = lambda - eta(1-lambda) = 1 - sqrt(1-lambda).
    """
    rho_f = max(spectral_radius(sys_i.F), spectral_radius(sys_j.F))
    if rho_f >= 1.0:
        raise NotStabilizing("joint gradient system is not Schur stable")
    lam = 1.0 - rho_f ** 2 - epsilon_margin
    if epsilon_margin <= 0.0 or lam <= 0.0:
        raise MarginTooLarge(
            f"epsilon_margin must lie in (0, {1.0 - rho_f ** 2:.6g}), got {epsilon_margin:.6g}")
    eta = 1.0 / np.sqrt(1.0 - lam) - 1.0
    zeta = 1.0 + 1.0 / eta
    lambda_prime = lam - eta * (1.0 - lam)
    return lam, eta, zeta, lambda_prime


def solve_M_lyapunov(sys_i: GradientSystem, sys_j: GradientSystem, lam: float) -> np.ndarray:
    """Feasible point M = sum_k (1-lam)^{-k} F'^k C'C F^k via a scaled Lyapunov solve.

    Satisfies M = C'C + (1-lam)^{-1} F'MF, hence both certificate LMIs.
    """
    f_joint, c_joint, _ = joint_system(sys_i, sys_j)
    scaled = f_joint / np.sqrt(1.0 - lam)
    if spectral_radius(scaled) >= 1.0:
        raise Unstable("scaled joint system F/sqrt(1-lambda) is not Schur stable")
    return dlyap(scaled.T, c_joint.T @ c_joint)


def refine_M_sdp(sys_i: GradientSystem, sys_j: GradientSystem, lam: float,
                 m0: np.ndarray, budget: int) -> np.ndarray:
    """Budgeted first-order refinement of M toward the SDP optimum.

    Runs an operator-splitting descent on the linear objective nu'M nu:
    each sweep takes a first-order step through the prefactored Lyapunov-map
    normal equations and alternates projections onto the two LMI cones
    (M >= C'C and contraction), Dykstra-style dual corrections included.
    Iterates are periodically restored to exact feasibility (eigenvalue clip
    plus a Lyapunov inflation of any contraction defect) and the best feasible
    point is kept; the result is re-verified and never worse than m0.
    """
    if budget <= 0:
        return m0
    f_joint, c_joint, nu = joint_system(sys_i, sys_j)
    cc = c_joint.T @ c_joint
    scaled = f_joint / np.sqrt(1.0 - lam)
    nn = np.outer(nu, nu)
    rho = max(float(np.linalg.norm(nn, "fro")), 1e-300)

    def objective(m):
        return float(nu @ m @ nu)

    def restore(m):
        m = cc + _psd_part(m - cc)
        defect = f_joint.T @ m @ f_joint - (1.0 - lam) * m
        defect_plus = _psd_part(defect)
        if np.linalg.norm(defect_plus, "fro") > 1e-15 * max(1.0, np.linalg.norm(m, "fro")):
            m = m + dlyap(scaled.T, defect_plus / (1.0 - lam))
        return 0.5 * (m + m.T)

    best, f_best = m0, objective(m0)
    if f_best <= 0.0:
        return m0

    dim = f_joint.shape[0]
    l_mat = (1.0 - lam) * np.eye(dim * dim) - kron(f_joint.T, f_joint.T)
    normal_inv = np.linalg.inv(np.eye(dim * dim) + l_mat.T @ l_mat)
    m_c = m0.copy()
    y_c = _sym(unvec_square(l_mat @ m0.ravel(), dim))
    u_m = np.zeros((dim, dim))
    u_y = np.zeros((dim, dim))
    check_every = 50
    for it in range(1, budget + 1):
        rhs = (m_c - u_m).ravel() + l_mat.T @ (y_c - u_y).ravel() - nn.ravel() / rho
        m = _sym(unvec_square(normal_inv @ rhs, dim))
        lm = _sym(unvec_square(l_mat @ m.ravel(), dim))
        m_c = cc + _psd_part(m + u_m - cc)
        y_c = _psd_part(lm + u_y)
        u_m = u_m + m - m_c
        u_y = u_y + lm - y_c
        if it % check_every == 0 or it == budget:
            cand = restore(m_c)
            f_cand = objective(cand)
            if f_cand < f_best and _feasible(cand, cc, f_joint, lam, rtol=1e-9):
                improved = f_best - f_cand
                best, f_best = cand, f_cand
                if improved < 1e-8 * max(f_best, 1e-300):
                    break
    if not _feasible(best, cc, f_joint, lam, rtol=1e-8):
        return m0
    return best


def bisim_heterogeneity(task_i, task_j, lift_i, lift_j, ktilde,
                        config: CertificateConfig | None = None) -> BisimCertificate:
    """Certified upper bound b_ij >= ||grad_i - grad_j||_F^2 for a task pair."""
    config = config or CertificateConfig()
    sys_i = gradient_system_assemble(task_i, lift_i, ktilde)
    sys_j = gradient_system_assemble(task_j, lift_j, ktilde)
    return certificate_from_systems(sys_i, sys_j, config)


def certificate_from_systems(sys_i: GradientSystem, sys_j: GradientSystem,
                             config: CertificateConfig | None = None) -> BisimCertificate:
    """Certificate computation when the gradient systems are already assembled."""
    config = config or CertificateConfig()
    rho_f = max(spectral_radius(sys_i.F), spectral_radius(sys_j.F))
    if rho_f >= 1.0:
        raise NotStabilizing("joint gradient system is not Schur stable")
    epsilon = config.margin_rel * (1.0 - rho_f ** 2)
    lam, eta, zeta, lambda_prime = select_lambda_eta(sys_i, sys_j, epsilon)
    m = solve_M_lyapunov(sys_i, sys_j, lam)
    backend = "lyapunov-feasible"
    if config.refine:
        m = refine_M_sdp(sys_i, sys_j, lam, m, config.budget)
        backend = "sdp-refined"
    _, _, nu = joint_system(sys_i, sys_j)
    b_ij = zeta * float(nu @ m @ nu) / lambda_prime
    return BisimCertificate(M=m, lam=lam, eta=eta, zeta=zeta,
                            lambda_prime=lambda_prime, b_ij=b_ij, backend=backend)


def average_heterogeneity(tasks, lifts, ktilde,
                          config: CertificateConfig | None = None) -> np.ndarray:
    """Per-task averages b_i = (1/(N-1)) sum_{j != i} b_ij, pairs in lexicographic order."""
    config = config or CertificateConfig()
    n = len(tasks)
    systems = [gradient_system_assemble(tasks[i], lifts[i], ktilde) for i in range(n)]
    b = np.zeros(n)
    for i in range(n):
        for j in range(i + 1, n):
            cert = certificate_from_systems(systems[i], systems[j], config)
            b[i] += cert.b_ij
            b[j] += cert.b_ij
    if n > 1:
        b /= (n - 1)
    return b


def joint_system(sys_i: GradientSystem, sys_j: GradientSystem):
    """Block quantities F = diag(F_i, F_j), C = [C_i  -C_j], nu = [nu_i; nu_j]."""
    n_i, n_j = sys_i.state_dim, sys_j.state_dim
    f_joint = np.zeros((n_i + n_j, n_i + n_j))
    f_joint[:n_i, :n_i] = sys_i.F
    f_joint[n_i:, n_i:] = sys_j.F
    c_joint = np.hstack([sys_i.C_out, -sys_j.C_out])
    nu_joint = np.concatenate([sys_i.nu, sys_j.nu])
    return f_joint, c_joint, nu_joint


def certificate_residuals(cert: BisimCertificate, sys_i: GradientSystem,
                          sys_j: GradientSystem):
    """Most-negative eigenvalues of the two certificate LMIs (>= -tol when feasible)."""
    f_joint, c_joint, _ = joint_system(sys_i, sys_j)
    lmi_a = cert.M - c_joint.T @ c_joint
    lmi_b = (1.0 - cert.lam) * cert.M - f_joint.T @ cert.M @ f_joint
    return (float(np.min(np.linalg.eigvalsh(0.5 * (lmi_a + lmi_a.T)))),
            float(np.min(np.linalg.eigvalsh(0.5 * (lmi_b + lmi_b.T)))))


def _feasible(m, cc, f_joint, lam, rtol):
    scale = max(float(np.linalg.norm(m, 2)), 1e-300)
    tol = rtol * scale
    if float(np.min(np.linalg.eigvalsh(m - cc))) < -tol:
        return False
    lmi = (1.0 - lam) * m - f_joint.T @ m @ f_joint
    return float(np.min(np.linalg.eigvalsh(0.5 * (lmi + lmi.T)))) >= -tol


def _psd_part(m):
    m = 0.5 * (m + m.T)
    vals, vecs = np.linalg.eigh(m)
    vals = np.clip(vals, 0.0, None)
    return (vecs * vals) @ vecs.T


def _sym(m):
    return 0.5 * (m + m.T)


def unvec_square(v, dim):
    """Reshape a length dim^2 vector back to a (dim, dim) matrix (row order,
    matching ndarray.ravel).  The map M -> F'MF is (F' kron F') in either
    stacking order because the two Kronecker factors coincide."""
    return v.reshape(dim, dim)
