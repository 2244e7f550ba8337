"""Multitask policy-gradient training, stability guarding, logging, and the
theorem-style inequality audits.

The iterate update is K_{n+1} = K_n - (alpha/N) sum_i grad_i(K_n) with exact
closed-form gradients or the one-point zeroth-order estimator.  Every logged
iterate is verified to stabilize all training tasks; a destabilizing step
stops training with an early-stop flag instead of continuing from an invalid
controller.
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cost import cost_and_gradient, cost_exact, gradient_dominance_constant, gradient_exact
from .errors import NoCommonStabilizer, NotStabilizing, StepDestabilized, ValidationError
from .lifting import LiftedController, lifted_optimal_controller
from .linalg import dlyap, spectral_radius
from .rollout import RolloutConfig, zo_gradient_onepoint

CSV_HEADER = ["iteration", "task_id", "cost", "gap", "grad_norm", "rho_max", "b_i"]


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``alpha`` may be a float or "auto" (0.9 * min(1/(4 Lhat), 4/gamma_hat),
    with Lhat estimated from sampled gradient differences at the start).
    ``het_cadence`` > 0 logs per-task certified heterogeneity b_i every that
    many iterations (0 disables it).
    """

    alpha: float | str = 1e-7
    iterations: int = 1000
    mode: str = "exact"
    rollout: RolloutConfig | None = None
    het_cadence: int = 0
    seed: int = 0
    stability_margin: float = 0.0
    log_every: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.mode not in ("exact", "zeroth_order"):
            raise ValidationError(f"unknown mode: {self.mode!r}")
        if self.mode == "zeroth_order" and self.rollout is None:
            raise ValidationError("zeroth_order mode requires a rollout config")
        if isinstance(self.alpha, str):
            if self.alpha != "auto":
                raise ValidationError(f"alpha must be positive or 'auto', got {self.alpha!r}")
        elif self.alpha <= 0:
            raise ValidationError("alpha must be positive")
        if self.log_every < 1:
            raise ValidationError("log_every must be >= 1")


@dataclass
class TrainLog:
    """Per-iteration, per-task training records plus a config snapshot."""

    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    early_stopped: bool = False

    def append(self, iteration, task_id, cost, gap, grad_norm, rho_max, b_i=np.nan):
        self.rows.append((iteration, task_id, cost, gap, grad_norm, rho_max, b_i))

    def iterations(self) -> np.ndarray:
        return np.unique([r[0] for r in self.rows])

    def task_series(self, column: str) -> dict:
        """Map task_id -> (iterations, values) for one logged column."""
        idx = CSV_HEADER.index(column)
        series: dict = {}
        for row in self.rows:
            series.setdefault(row[1], []).append((row[0], row[idx]))
        return {tid: (np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
                for tid, pts in series.items()}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for it, tid, *vals in self.rows:
                writer.writerow([it, tid] + [f"{v:.16e}" for v in vals])


def initial_controller(tasks, lifts, nominal_task, nominal_lift,
                       r_detune: float = 1.0, stability_margin: float = 0.0):
    """Lifted optimal controller of the nominal task, verified on every task.

    ``r_detune`` scales the nominal input cost before the Riccati solve; values
    above 1 give a deliberately cautious (suboptimal for every task) starting
    point.  Raises :class:`NoCommonStabilizer` naming destabilized tasks.
    """
    if not tasks:
        raise ValidationError("tasks must be nonempty")
    if r_detune == 1.0:
        k0 = lifted_optimal_controller(nominal_task, nominal_lift)
    else:
        from dataclasses import replace

        detuned = replace(nominal_task, R=r_detune * nominal_task.R)
        k0 = lifted_optimal_controller(detuned, nominal_lift)
    rhos = np.array([
        spectral_radius(task.A + task.B @ (k0.K @ lift.S_dagger))
        for task, lift in zip(tasks, lifts)])
    failed = [task.id for task, rho in zip(tasks, rhos)
              if rho >= 1.0 - stability_margin]
    if failed:
        raise NoCommonStabilizer(failed)
    return k0, rhos


def pg_step(tasks, lifts, ktilde, config: TrainConfig, iteration: int = 0):
    """One averaged-gradient step with a stability re-check on the new iterate."""
    k = np.asarray(getattr(ktilde, "K", ktilde), dtype=float)
    grads = _task_gradients(tasks, lifts, k, config, iteration)
    k_new = k - _alpha_value(config) * _mean_fixed_order(grads)
    rhos = [spectral_radius(task.A + task.B @ (k_new @ lift.S_dagger))
            for task, lift in zip(tasks, lifts)]
    if max(rhos) >= 1.0 - config.stability_margin:
        raise StepDestabilized(
            f"step destabilizes max rho {max(rhos):.6g}; consider halving alpha")
    return LiftedController(K=k_new, p=lifts[0].p)


def train_multitask(tasks, lifts, config: TrainConfig, k0: LiftedController,
                    het_fn=None, eval_hook=None, eval_every=0):
    """Run the policy-gradient iteration from ``k0`` and collect a TrainLog.

    ``het_fn(K) -> b_i array`` supplies certified heterogeneity values at the
    logging cadence; ``eval_hook(iteration, K, costs, j_star)`` fires every
    ``eval_every`` iterations (e.g. held-out evaluation).  Returns (final
    controller, log); the log's ``early_stopped`` flag marks a run interrupted
    by a destabilizing step.
    """
    alpha = _resolve_alpha(tasks, lifts, k0, config)
    j_star = np.array([
        cost_exact(task, lift, lifted_optimal_controller(task, lift)).J
        for task, lift in zip(tasks, lifts)])
    log = TrainLog(metadata={"alpha": alpha, "mode": config.mode,
                             "iterations": config.iterations, "seed": config.seed})
    k = np.array(k0.K, dtype=float)
    prev_k = k
    early = False
    for n in range(config.iterations + 1):
        try:
            costs, grads, rhos = _evaluate_all(tasks, lifts, k, config, n)
        except NotStabilizing:
            early = True
            k = prev_k
            break
        rho_max = float(np.max(rhos))
        if rho_max >= 1.0 - config.stability_margin:
            early = True
            k = prev_k
            break
        grad_mean = _mean_fixed_order(grads)
        if n % config.log_every == 0 or n == config.iterations:
            b_vals = None
            if het_fn is not None and config.het_cadence > 0 and (
                    n % config.het_cadence == 0 or n == config.iterations):
                b_vals = het_fn(k)
            grad_norm = float(np.linalg.norm(grad_mean, "fro"))
            for i, task in enumerate(tasks):
                log.append(n, task.id, costs[i], costs[i] - j_star[i],
                           grad_norm, rho_max,
                           b_vals[i] if b_vals is not None else np.nan)
        if eval_hook is not None and eval_every > 0 and (
                n % eval_every == 0 or n == config.iterations):
            eval_hook(n, k, costs, j_star)
        if n == config.iterations:
            break
        prev_k = k
        k = k - alpha * grad_mean
    log.early_stopped = early
    return LiftedController(K=k, p=lifts[0].p), log


@dataclass(frozen=True)
class GeneralizationReport:
    train_costs: np.ndarray
    test_costs: np.ndarray      # NaN for destabilized test tasks
    train_gaps: np.ndarray
    test_gaps: np.ndarray
    train_mean: float
    test_mean: float
    gap: float
    test_stabilized_fraction: float
    test_ids: list
    train_ids: list


def evaluate_generalization(ktilde, train_tasks, test_tasks, train_lifts,
                            test_lifts) -> GeneralizationReport:
    """Empirical train/test cost comparison; unstable test tasks are excluded
    from the test mean and reported through the stabilized fraction."""
    train_costs, train_gaps = _costs_and_gaps(ktilde, train_tasks, train_lifts)
    test_costs = np.full(len(test_tasks), np.nan)
    test_gaps = np.full(len(test_tasks), np.nan)
    stabilized = 0
    for i, (task, lift) in enumerate(zip(test_tasks, test_lifts)):
        try:
            report = cost_exact(task, lift, ktilde)
        except NotStabilizing:
            continue
        stabilized += 1
        test_costs[i] = report.J
        test_gaps[i] = report.J - cost_exact(
            task, lift, lifted_optimal_controller(task, lift)).J
    train_mean = float(np.mean(train_costs))
    finite = test_costs[np.isfinite(test_costs)]
    test_mean = float(np.mean(finite)) if finite.size else np.nan
    return GeneralizationReport(
        train_costs=train_costs, test_costs=test_costs,
        train_gaps=train_gaps, test_gaps=test_gaps,
        train_mean=train_mean, test_mean=test_mean,
        gap=abs(train_mean - test_mean) if finite.size else np.nan,
        test_stabilized_fraction=stabilized / max(len(test_tasks), 1),
        test_ids=[t.id for t in test_tasks], train_ids=[t.id for t in train_tasks])


@dataclass(frozen=True)
class BoundAuditRow:
    task_id: str
    gap: float
    b_i: float
    bound: float         # algorithm-independent form
    bound_3x: float      # asymptotic (algorithm-dependent) form
    holds: bool
    holds_3x: bool


def bound_audit(tasks, lifts, ktilde, b_values) -> list:
    """Evaluate gap_i <= ||S*|| ||Sigma_{K*}|| b_i / (4 lmin(Sigma_nu)^2 lmin(R))
    and its 3x variant for each task; rank-deficient Sigma_nu yields an
    infinite (vacuous) bound."""
    rows = []
    for task, lift, b_i in zip(tasks, lifts, np.asarray(b_values, dtype=float)):
        k_star = lifted_optimal_controller(task, lift)
        gap = cost_exact(task, lift, ktilde).J - cost_exact(task, lift, k_star).J
        a_star = task.A + task.B @ (k_star.K @ lift.S_dagger)
        sigma_star = dlyap(a_star, lift.stats.Sigma_nu)
        lmin_nu = max(float(np.min(np.linalg.eigvalsh(lift.stats.Sigma_nu))), 0.0)
        lmin_r = float(np.min(np.linalg.eigvalsh(task.R)))
        denom = 4.0 * lmin_nu ** 2 * lmin_r
        numer = np.linalg.norm(lift.S_star, 2) * np.linalg.norm(sigma_star, 2) * b_i
        if denom > 0.0:
            bound = numer / denom
        else:
            # rank-deficient Sigma_nu: the coefficient is infinite, so the
            # bound is vacuous unless the heterogeneity itself vanishes
            bound = 0.0 if numer == 0.0 else np.inf
        rows.append(BoundAuditRow(task_id=task.id, gap=gap, b_i=float(b_i),
                                  bound=float(bound), bound_3x=float(3.0 * bound),
                                  holds=bool(gap <= bound),
                                  holds_3x=bool(gap <= 3.0 * bound)))
    return rows


def estimate_smoothness(tasks, lifts, ktilde, n_probes: int = 8,
                        scales=(1e-4, 1e-3, 1e-2), seed: int = 0) -> float:
    """Empirical smoothness Lhat from sampled gradient differences near K."""
    k = np.asarray(getattr(ktilde, "K", ktilde), dtype=float)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    base = [gradient_exact(task, lift, k).grad for task, lift in zip(tasks, lifts)]
    l_hat = 0.0
    for _ in range(n_probes):
        direction = rng.standard_normal(k.shape)
        direction /= np.linalg.norm(direction, "fro")
        for scale in scales:
            delta = scale * direction
            for (task, lift), g0 in zip(zip(tasks, lifts), base):
                try:
                    g1 = gradient_exact(task, lift, k + delta).grad
                except NotStabilizing:
                    continue
                l_hat = max(l_hat, np.linalg.norm(g1 - g0, "fro") / scale)
    if l_hat <= 0:
        raise ValidationError("failed to estimate smoothness near the controller")
    return float(l_hat)


def _resolve_alpha(tasks, lifts, k0, config):
    """Numeric alpha, or the safeguarded theory-guided choice for "auto".

    Auto mode starts from 0.9 * min(1/(4 Lhat), 4/gamma_hat) and halves the
    step until a trial iterate from k0 keeps every task stable and does not
    increase the mean cost.
    """
    if config.alpha != "auto":
        return float(config.alpha)
    # curvature rises toward the optima, so sample the smoothness there and at
    # midpoints as well as at the starting point
    probe_points = [np.array(k0.K, dtype=float)]
    for task, lift in list(zip(tasks, lifts))[:5]:
        k_star = lifted_optimal_controller(task, lift).K
        probe_points.append(k_star)
        probe_points.append(0.5 * (probe_points[0] + k_star))
    l_hat = max(estimate_smoothness(tasks, lifts, point, n_probes=4,
                                    seed=config.seed)
                for point in probe_points)
    gamma_hat = max(gradient_dominance_constant(task, lift)
                    for task, lift in zip(tasks, lifts))
    bound = 1.0 / (4.0 * l_hat)
    if gamma_hat > 0:
        bound = min(bound, 4.0 / gamma_hat)
    alpha = 0.9 * bound
    k = np.array(k0.K, dtype=float)
    grads = [gradient_exact(task, lift, k).grad for task, lift in zip(tasks, lifts)]
    grad_mean = _mean_fixed_order(grads)
    costs0 = np.array([cost_exact(task, lift, k).J for task, lift in zip(tasks, lifts)])
    for _ in range(60):
        k_try = k - alpha * grad_mean
        try:
            costs1 = np.array([cost_exact(task, lift, k_try).J
                               for task, lift in zip(tasks, lifts)])
        except NotStabilizing:
            alpha *= 0.5
            continue
        if np.mean(costs1) <= np.mean(costs0):
            return alpha
        alpha *= 0.5
    raise ValidationError("auto step-size search failed near the initial controller")


def _alpha_value(config):
    if config.alpha == "auto":
        raise ValidationError("pg_step requires a numeric alpha (resolve 'auto' first)")
    return float(config.alpha)


def _evaluate_all(tasks, lifts, k, config, iteration):
    if config.mode == "exact":
        if config.threads > 1:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                results = list(pool.map(
                    lambda tl: cost_and_gradient(tl[0], tl[1], k),
                    zip(tasks, lifts)))
        else:
            results = [cost_and_gradient(task, lift, k)
                       for task, lift in zip(tasks, lifts)]
        costs = np.array([res[0] for res in results])
        grads = [res[1] for res in results]
        rhos = np.array([res[2] for res in results])
        return costs, grads, rhos
    grads = _task_gradients(tasks, lifts, k, config, iteration)
    costs, rhos = [], []
    for task, lift in zip(tasks, lifts):
        report = cost_exact(task, lift, k)
        costs.append(report.J)
        rhos.append(spectral_radius(task.A + task.B @ (k @ lift.S_dagger)))
    return np.array(costs), grads, np.array(rhos)


def _task_gradients(tasks, lifts, k, config, iteration):
    if config.mode == "exact":
        return [gradient_exact(task, lift, k).grad
                for task, lift in zip(tasks, lifts)]
    grads = []
    for i, (task, lift) in enumerate(zip(tasks, lifts)):
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(config.rollout.seed, spawn_key=(iteration, i))))
        grads.append(zo_gradient_onepoint(task, lift, k, config.rollout, rng).grad_hat)
    return grads


def _mean_fixed_order(grads):
    total = np.zeros_like(grads[0])
    for g in grads:
        total = total + g
    return total / len(grads)


def _costs_and_gaps(ktilde, tasks, lifts):
    costs = np.array([cost_exact(task, lift, ktilde).J
                      for task, lift in zip(tasks, lifts)])
    stars = np.array([
        cost_exact(task, lift, lifted_optimal_controller(task, lift)).J
        for task, lift in zip(tasks, lifts)])
    return costs, costs - stars
