"""Shared deterministic generators for the test suite."""

import numpy as np
import pytest

from mtlqg.lifting import build_s_star, lifted_optimal_controller
from mtlqg.linalg import spectral_radius
from mtlqg.tasks import LqgTask


def rng_for(*key):
    """Philox generator keyed by a tuple of ints (independent substreams)."""
    return np.random.Generator(np.random.Philox(
        np.random.SeedSequence(202406, spawn_key=key)))


def random_stable(rng, n, rho=None):
    """Random matrix rescaled to a target spectral radius < 1."""
    if rho is None:
        rho = rng.uniform(0.2, 0.9)
    a = rng.standard_normal((n, n))
    return a * (rho / max(np.max(np.abs(np.linalg.eigvals(a))), 1e-12))


def random_spd(rng, n, scale=1.0):
    m = rng.standard_normal((n, n))
    return scale * (m @ m.T + 0.1 * np.eye(n))


def random_task(rng, n_x=3, n_u=1, n_y=None, square_c=False, task_id="rand"):
    """Random controllable/observable task with PD costs and noises."""
    if square_c:
        n_y = n_x
    elif n_y is None:
        n_y = min(2, n_x)
    for _ in range(50):
        a = rng.standard_normal((n_x, n_x))
        a *= rng.uniform(0.5, 1.1) / max(np.max(np.abs(np.linalg.eigvals(a))), 1e-12)
        b = rng.standard_normal((n_x, n_u))
        c = np.eye(n_x) + 0.3 * rng.standard_normal((n_x, n_x)) if square_c \
            else rng.standard_normal((n_y, n_x))
        task = LqgTask(A=a, B=b, C=c,
                       W=random_spd(rng, n_x, 0.1), V=random_spd(rng, n_y, 0.1),
                       Q=random_spd(rng, n_y, 0.5), R=random_spd(rng, n_u, 0.5),
                       id=task_id)
        try:
            task.validate()
        except Exception:
            continue
        return task
    raise RuntimeError("failed to generate a valid random task")


def random_stabilizing_gain(rng, task, lift, scale=0.2):
    """Random perturbation of the task optimum that still stabilizes it."""
    k_star = lifted_optimal_controller(task, lift).K
    for attempt in range(60):
        shrink = 0.5 ** (attempt // 10)
        k = k_star + scale * shrink * np.linalg.norm(k_star) * \
            rng.standard_normal(k_star.shape) / np.sqrt(k_star.size)
        a_cl = task.A + task.B @ (k @ lift.S_dagger)
        if spectral_radius(a_cl) < 0.995:
            return k
    raise RuntimeError("failed to find a stabilizing perturbation")


def scalar_task(a=0.5, b=1.0, c=1.0, w=0.1, v=0.1, q=1.0, r=1.0, task_id="scalar"):
    return LqgTask(A=np.array([[a]]), B=np.array([[b]]), C=np.array([[c]]),
                   W=np.array([[w]]), V=np.array([[v]]), Q=np.array([[q]]),
                   R=np.array([[r]]), id=task_id)


@pytest.fixture(scope="session")
def cartpole_nominal():
    from mtlqg.tasks import make_cartpole_task

    return make_cartpole_task(0.1, 1.0, 0.5, 0.1, 0.1, 0.12, 0.15)


@pytest.fixture(scope="session")
def cartpole_lift(cartpole_nominal):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_s_star(cartpole_nominal, 10)


@pytest.fixture(scope="session")
def pendulum_nominal():
    from mtlqg.tasks import make_pendulum_task

    return make_pendulum_task(0.5, 0.3, 0.1, 0.1, 0.02, 0.05)
