"""Stochastic simulation of tasks under lifted controllers and the one-point
zeroth-order gradient estimator.

Trajectories start at x_0 = 0 with zero-padded histories; truncated costs are
per-step averages over t >= burn_in so that rollout costs share the scale of
the exact stationary cost.  The estimator is

    grad_hat = (d / n_s) sum_m Jhat(K + U_m) U_m / r^2,

with U_m uniform on the Frobenius sphere of radius r and d the controller
dimension n_u * p * (n_u + n_y).
"""

from dataclasses import dataclass

import numpy as np

from .errors import Diverged, PerturbationDestabilizes, ValidationError
from .linalg import psd_sqrt, spectral_radius
from .tasks import LqgTask

DIVERGENCE_THRESHOLD = 1e9


@dataclass
class RolloutConfig:
    """Zeroth-order estimation settings (horizon, sample counts, radius, seed)."""

    tau: int = 200
    n_c: int = 1
    n_s: int = 200
    r: float = 1e-3
    seed: int = 0
    burn_in: int = 0

    def __post_init__(self):
        if min(self.tau, self.n_c, self.n_s) < 1 or self.r <= 0 or self.burn_in < 0:
            raise ValidationError("rollout config entries must be positive (burn_in >= 0)")
        if self.burn_in >= self.tau:
            raise ValidationError("burn_in must be smaller than the horizon tau")


@dataclass(frozen=True)
class ZoEstimate:
    grad_hat: np.ndarray
    d: int
    samples_used: int


@dataclass(frozen=True)
class Trajectory:
    xs: np.ndarray   # (tau, n_x) states x_0 .. x_{tau-1}
    ys: np.ndarray   # (tau, n_y)
    us: np.ndarray   # (tau, n_u)


def simulate_trajectory(task: LqgTask, lift, ktilde, tau: int,
                        rng: np.random.Generator, x0=None) -> Trajectory:
    """Simulate tau steps of u_t = K z_{t,p} with seeded noise.

    The initial state defaults to x_0 = 0 (the stationary-cost convention);
    ``x0`` overrides it for decay/diagnostic runs.
    """
    if tau < 1:
        raise ValidationError("tau must be >= 1")
    k = np.asarray(getattr(ktilde, "K", ktilde), dtype=float)
    p = lift.p
    n_x, n_u, n_y = task.n_x, task.n_u, task.n_y
    w_sqrt, v_sqrt = psd_sqrt(task.W), psd_sqrt(task.V)
    w_noise = rng.standard_normal((tau, n_x)) @ w_sqrt.T
    v_noise = rng.standard_normal((tau, n_y)) @ v_sqrt.T

    xs = np.zeros((tau, n_x))
    ys = np.zeros((tau, n_y))
    us = np.zeros((tau, n_u))
    x = np.zeros(n_x) if x0 is None else np.asarray(x0, dtype=float).copy()
    z_u = np.zeros(p * n_u)
    z_y = np.zeros(p * n_y)
    for t in range(tau):
        y = task.C @ x + v_noise[t]
        z_y = np.concatenate([y, z_y[:-n_y]])
        u = k @ np.concatenate([z_u, z_y])
        xs[t], ys[t], us[t] = x, y, u
        x = task.A @ x + task.B @ u + w_noise[t]
        if np.max(np.abs(x)) > DIVERGENCE_THRESHOLD:
            raise Diverged(f"task {task.id}: |x| exceeded {DIVERGENCE_THRESHOLD:g} at t={t}")
        z_u = np.concatenate([u, z_u[:-n_u]])
    return Trajectory(xs=xs, ys=ys, us=us)


def truncated_cost(trajectory: Trajectory, q: np.ndarray, r: np.ndarray,
                   burn_in: int) -> float:
    """Per-step averaged cost over t >= burn_in: mean(y'Qy + u'Ru)."""
    ys, us = trajectory.ys[burn_in:], trajectory.us[burn_in:]
    if ys.shape[0] < 1:
        raise ValidationError("trajectory shorter than burn_in + 1")
    return float(np.mean(np.einsum("ti,ij,tj->t", ys, q, ys)
                         + np.einsum("ti,ij,tj->t", us, r, us)))


def rollout_costs_batch(task: LqgTask, lift, gains: np.ndarray, n_c: int,
                        tau: int, burn_in: int, rng: np.random.Generator) -> np.ndarray:
    """Mean truncated cost of each controller in ``gains`` over n_c rollouts.

    ``gains`` has shape (m, n_u, lifted_dim); all m*n_c trajectories are
    simulated in one vectorized pass with noise drawn in a fixed order.
    """
    m = gains.shape[0]
    p, n_x, n_u, n_y = lift.p, task.n_x, task.n_u, task.n_y
    batch = m * n_c
    w_sqrt, v_sqrt = psd_sqrt(task.W), psd_sqrt(task.V)
    w_noise = rng.standard_normal((tau, batch, n_x)) @ w_sqrt.T
    v_noise = rng.standard_normal((tau, batch, n_y)) @ v_sqrt.T
    k_batch = np.repeat(gains, n_c, axis=0)          # (batch, n_u, pz)

    x = np.zeros((batch, n_x))
    z_u = np.zeros((batch, p * n_u))
    z_y = np.zeros((batch, p * n_y))
    cost = np.zeros(batch)
    steps = 0
    for t in range(tau):
        y = x @ task.C.T + v_noise[t]
        z_y = np.concatenate([y, z_y[:, :-n_y]], axis=1)
        z = np.concatenate([z_u, z_y], axis=1)
        u = np.einsum("bij,bj->bi", k_batch, z)
        if t >= burn_in:
            cost += np.einsum("bi,ij,bj->b", y, task.Q, y)
            cost += np.einsum("bi,ij,bj->b", u, task.R, u)
            steps += 1
        x = x @ task.A.T + u @ task.B.T + w_noise[t]
        if np.max(np.abs(x)) > DIVERGENCE_THRESHOLD:
            raise Diverged(f"task {task.id}: batched rollout diverged at t={t}")
        z_u = np.concatenate([u, z_u[:, :-n_u]], axis=1)
    per_traj = cost / steps
    return per_traj.reshape(m, n_c).mean(axis=1)


def smoothing_radius_schedule(d: int, l_hat: float, j_bar_hat: float,
                              n_s: int, n_tasks: int, delta: float) -> float:
    """r = sqrt(d Jbar / L) * (n_s N / log(2/delta))^{-1/4}."""
    if min(d, n_s, n_tasks) < 1 or l_hat <= 0 or j_bar_hat <= 0 or not 0 < delta < 2:
        raise ValidationError("radius schedule inputs must be positive, delta in (0, 2)")
    return float(np.sqrt(d * j_bar_hat / l_hat)
                 * (n_s * n_tasks / np.log(2.0 / delta)) ** -0.25)


def sample_sphere_directions(shape, r: float, n_s: int,
                             rng: np.random.Generator) -> np.ndarray:
    """n_s matrices uniform on the Frobenius sphere of radius r (normalized Gaussians)."""
    g = rng.standard_normal((n_s,) + tuple(shape))
    norms = np.sqrt(np.sum(g ** 2, axis=tuple(range(1, g.ndim)), keepdims=True))
    return r * g / norms


def zo_gradient_onepoint(task: LqgTask, lift, ktilde, config: RolloutConfig,
                         rng: np.random.Generator, cost_oracle=None) -> ZoEstimate:
    """One-point zeroth-order gradient estimate at a stabilizing controller.

    Each perturbed controller is checked to stabilize the task before any
    rollout; a violation raises :class:`PerturbationDestabilizes` with the
    sample index so the caller can shrink the radius.  ``cost_oracle``
    replaces the rollout cost with an exact evaluation (bias isolation).
    """
    k = np.asarray(getattr(ktilde, "K", ktilde), dtype=float)
    d = k.size
    directions = sample_sphere_directions(k.shape, config.r, config.n_s, rng)
    perturbed = k[None, :, :] + directions
    for m in range(config.n_s):
        a_cl = task.A + task.B @ (perturbed[m] @ lift.S_dagger)
        if spectral_radius(a_cl) >= 1.0:
            raise PerturbationDestabilizes(m)
    if cost_oracle is None:
        costs = rollout_costs_batch(task, lift, perturbed, config.n_c,
                                    config.tau, config.burn_in, rng)
    else:
        costs = np.array([cost_oracle(perturbed[m]) for m in range(config.n_s)])
    grad_hat = (d / config.n_s) * np.einsum("m,mij->ij", costs, directions) / config.r ** 2
    return ZoEstimate(grad_hat=grad_hat, d=d, samples_used=config.n_s)
