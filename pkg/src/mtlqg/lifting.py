"""Input-output history lifting.

The steady-state Kalman filter x̂_t = (I-LC)(A x̂_{t-1} + B u_{t-1}) + L y_t,
unrolled p steps with the initial-condition term dropped, expresses the state
estimate as a linear map of the stacked history

    z_{t,p} = [u_{t-1}; ...; u_{t-p}; y_t; ...; y_{t-p+1}],

namely x̂_t ≈ S* z_{t,p} with truncation error O(rho((I-LC)A)^p).  A lifted
controller is a static gain on z_{t,p}.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .cost import InnovationStatistics, innovation_statistics
from .errors import FilterUnstable, ValidationError
from .linalg import dare, right_pinv, spectral_radius
from .tasks import LqgTask

TRUNCATION_WARN = 1e-4


@dataclass(frozen=True)
class HistoryLift:
    """Map from the input-output history to the steady-state Kalman estimate."""

    task_id: str
    p: int
    S_star: np.ndarray        # n_x x p(n_u + n_y)
    S_dagger: np.ndarray      # right pseudoinverse, S_star @ S_dagger = I
    kalman_gain: np.ndarray   # L, n_x x n_y
    predictor: np.ndarray     # (I - LC) A
    truncation_bound: float   # rho((I-LC)A)^p
    stats: InnovationStatistics

    @property
    def lifted_dim(self) -> int:
        return self.S_star.shape[1]


@dataclass(frozen=True)
class LiftedController:
    """Static gain on the history vector: u_t = K @ z_{t,p}."""

    K: np.ndarray             # n_u x p(n_u + n_y)
    p: int

    @property
    def lifted_dim(self) -> int:
        return self.K.shape[1]


def build_s_star(task: LqgTask, p: int) -> HistoryLift:
    """Assemble the history lift of a task for history length p >= n_x.

    The u-blocks are [(Abar)^k (I-LC) B] and the y-blocks [(Abar)^k L] for
    k = 0..p-1, with Abar = (I-LC)A.  Raises :class:`FilterUnstable` when the
    filter recursion is not Schur stable and :class:`RankDeficient` when S*
    loses full row rank.
    """
    if p < task.n_x:
        raise ValidationError(f"history length p={p} below state dimension {task.n_x}")
    stats = innovation_statistics(task)
    il_c = np.eye(task.n_x) - stats.L @ task.C
    a_bar = il_c @ task.A
    rho_bar = spectral_radius(a_bar)
    if rho_bar >= 1.0:
        raise FilterUnstable(f"rho((I-LC)A) = {rho_bar:.6g} >= 1")
    b_bar = il_c @ task.B

    u_blocks, y_blocks = [], []
    power = np.eye(task.n_x)
    for _ in range(p):
        u_blocks.append(power @ b_bar)
        y_blocks.append(power @ stats.L)
        power = a_bar @ power
    s_star = np.hstack(u_blocks + y_blocks)
    s_dagger = right_pinv(s_star)

    bound = rho_bar ** p
    if bound > TRUNCATION_WARN:
        warnings.warn(
            f"task {task.id}: lifting truncation bound {bound:.3g} exceeds "
            f"{TRUNCATION_WARN:g}; consider a larger p", stacklevel=2)
    return HistoryLift(task_id=task.id, p=p, S_star=s_star, S_dagger=s_dagger,
                       kalman_gain=stats.L, predictor=a_bar,
                       truncation_bound=float(bound), stats=stats)


def lifted_optimal_controller(task: LqgTask, lift: HistoryLift) -> LiftedController:
    """Optimal lifted controller K* S* from the separation principle.

    K* is the LQG feedback gain of dare(A, B, C'QC, R); the induced closed
    loop A + B Kt S*^+ equals A + B K* and is Schur stable.
    """
    q_tilde = task.C.T @ task.Q @ task.C
    sol = dare(task.A, task.B, 0.5 * (q_tilde + q_tilde.T), task.R)
    return LiftedController(K=sol.gain @ lift.S_star, p=lift.p)


def closed_loop_matrix(task: LqgTask, lift: HistoryLift, ktilde) -> np.ndarray:
    """Effective closed loop A + B Kt S*^+ on the state-estimate space."""
    k = ktilde.K if isinstance(ktilde, LiftedController) else np.asarray(ktilde, dtype=float)
    return task.A + task.B @ (k @ lift.S_dagger)


def history_assemble(u_buffer, y_buffer, p: int) -> np.ndarray:
    """Stack buffered inputs/outputs into z = [u_{t-1};..;u_{t-p}; y_t;..;y_{t-p+1}].

    ``u_buffer[-1]`` is the most recent past input u_{t-1} and ``y_buffer[-1]``
    the current output y_t; both must hold at least p entries (zero-padded by
    the caller at episode start).
    """
    u_buffer = np.atleast_2d(np.asarray(u_buffer, dtype=float))
    y_buffer = np.atleast_2d(np.asarray(y_buffer, dtype=float))
    if u_buffer.shape[0] < p or y_buffer.shape[0] < p:
        raise ValidationError(f"buffers must hold at least p={p} entries")
    u_part = u_buffer[-p:][::-1].ravel()
    y_part = y_buffer[-p:][::-1].ravel()
    return np.concatenate([u_part, y_part])


def history_split(z: np.ndarray, p: int, n_u: int, n_y: int):
    """Inverse of :func:`history_assemble`: recover the (newest-last) buffers."""
    z = np.asarray(z, dtype=float)
    u_part = z[: p * n_u].reshape(p, n_u)[::-1]
    y_part = z[p * n_u:].reshape(p, n_y)[::-1]
    return u_part, y_part
