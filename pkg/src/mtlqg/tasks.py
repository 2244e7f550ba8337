"""LQG task definitions, benchmark systems, and seeded task sampling.

A task is the tuple (A, B, C, W, V, Q, R): linear dynamics, output map,
process/measurement noise covariances, and quadratic output/input costs.
The cart-pole and inverted-pendulum benchmarks are forward-Euler
discretizations of their linearized continuous-time models.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionViolated, ValidationError
from .linalg import check_ctrb_obsv

GRAVITY = 9.81
DEFAULT_DT = 0.05

# Uniform sampling intervals for the benchmark task distributions.
CARTPOLE_INTERVALS = {
    "m_p": (0.095, 0.105),
    "m_c": (0.95, 1.05),
    "l": (0.475, 0.525),
    "q": (0.095, 0.105),
    "r": (0.095, 0.105),
}
PENDULUM_INTERVALS = {
    "m": (0.475, 0.525),
    "l": (0.25, 0.35),
    "q": (0.095, 0.105),
    "r": (0.095, 0.105),
}
_PARAM_ORDER = {
    "cartpole": ("m_p", "m_c", "l", "q", "r"),
    "pendulum": ("m", "l", "q", "r"),
}
_NOISE_SCALES = {"cartpole": (0.12, 0.15), "pendulum": (0.02, 0.05)}


@dataclass(frozen=True)
class LqgTask:
    """One LQG task: dynamics x+ = Ax + Bu + w, output y = Cx + v, cost (Q, R)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    W: np.ndarray
    V: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    id: str = "task"
    params: dict = field(default_factory=dict)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def validate(self) -> None:
        """Check dimensions, covariance/cost definiteness, and controllability/observability."""
        n_x, n_u, n_y = self.n_x, self.n_u, self.n_y
        shapes = {
            "A": (self.A, (n_x, n_x)), "B": (self.B, (n_x, n_u)), "C": (self.C, (n_y, n_x)),
            "W": (self.W, (n_x, n_x)), "V": (self.V, (n_y, n_y)),
            "Q": (self.Q, (n_y, n_y)), "R": (self.R, (n_u, n_u)),
        }
        for name, (mat, shape) in shapes.items():
            if mat.shape != shape:
                raise ValidationError(f"task {self.id}: {name} has shape {mat.shape}, expected {shape}")
            if not np.all(np.isfinite(mat)):
                raise ValidationError(f"task {self.id}: {name} has non-finite entries")
        _require_psd(self.W, "W", self.id)
        _require_psd(self.Q, "Q", self.id)
        _require_pd(self.V, "V", self.id)
        _require_pd(self.R, "R", self.id)
        ctrb, obsv = check_ctrb_obsv(self.A, self.B, self.C)
        if not (ctrb and obsv):
            raise AssumptionViolated(
                f"task {self.id}: controllable={ctrb}, observable={obsv}")


@dataclass
class TaskDistributionSpec:
    """Benchmark task distribution: parameter intervals plus fixed noise scales."""

    benchmark: str
    intervals: dict
    w_scale: float
    v_scale: float
    seed: int
    count: int
    dt: float = DEFAULT_DT
    g: float = GRAVITY

    def __post_init__(self):
        if self.benchmark not in _PARAM_ORDER:
            raise ValidationError(f"unknown benchmark: {self.benchmark!r}")
        if self.count < 1:
            raise ValidationError("count must be >= 1")
        for name in _PARAM_ORDER[self.benchmark]:
            if name not in self.intervals:
                raise ValidationError(f"missing interval for {name!r}")
            lo, hi = self.intervals[name]
            if lo > hi:
                raise ValidationError(f"interval for {name!r} has lo > hi")

    @classmethod
    def benchmark_default(cls, benchmark: str, seed: int, count: int) -> "TaskDistributionSpec":
        intervals = {"cartpole": CARTPOLE_INTERVALS, "pendulum": PENDULUM_INTERVALS}[benchmark]
        w, v = _NOISE_SCALES[benchmark]
        return cls(benchmark=benchmark, intervals={k: tuple(v_) for k, v_ in intervals.items()},
                   w_scale=w, v_scale=v, seed=seed, count=count)

    def midpoint_params(self) -> dict:
        return {k: 0.5 * (lo + hi) for k, (lo, hi) in self.intervals.items()}


def euler_discretize(a_c: np.ndarray, b_c: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Forward Euler discretization: A = I + dt*A_c, B = dt*B_c."""
    a_c = np.asarray(a_c, dtype=float)
    b_c = np.asarray(b_c, dtype=float)
    return np.eye(a_c.shape[0]) + dt * a_c, dt * b_c


def make_cartpole_task(m_p, m_c, l, q, r, w_scale, v_scale,
                       dt=DEFAULT_DT, g=GRAVITY, task_id="cartpole") -> LqgTask:
    """Linearized cart-pole: state (cart pos, cart vel, pole angle, pole rate).

    Output measures cart position and the velocity combination [0 1 0 1] x.
    Costs Q = q I_{n_y}, R = r I_{n_u}; noises W = w_scale I, V = v_scale I.
    """
    a_c = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, (m_p / m_c) * g, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, ((m_p + m_c) / (l * m_c)) * g, 0.0],
    ])
    b_c = np.array([[0.0], [1.0 / m_c], [0.0], [1.0 / (l * m_c)]])
    c = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 1.0]])
    a, b = euler_discretize(a_c, b_c, dt)
    return _assemble(a, b, c, q, r, w_scale, v_scale, task_id,
                     {"m_p": m_p, "m_c": m_c, "l": l, "q": q, "r": r, "dt": dt, "g": g})


def make_pendulum_task(m, l, q, r, w_scale, v_scale,
                       dt=DEFAULT_DT, g=GRAVITY, task_id="pendulum") -> LqgTask:
    """Single-link inverted pendulum linearized at the upright equilibrium.

    State (angle, angular rate), torque input, angle measurement y = [1 0] x.
    """
    a_c = np.array([[0.0, 1.0], [g / l, 0.0]])
    b_c = np.array([[0.0], [1.0 / (m * l * l)]])
    c = np.array([[1.0, 0.0]])
    a, b = euler_discretize(a_c, b_c, dt)
    return _assemble(a, b, c, q, r, w_scale, v_scale, task_id,
                     {"m": m, "l": l, "q": q, "r": r, "dt": dt, "g": g})


def make_task(benchmark: str, params: dict, w_scale: float, v_scale: float,
              dt: float = DEFAULT_DT, g: float = GRAVITY, task_id: str = "task") -> LqgTask:
    if benchmark == "cartpole":
        return make_cartpole_task(params["m_p"], params["m_c"], params["l"],
                                  params["q"], params["r"], w_scale, v_scale, dt, g, task_id)
    if benchmark == "pendulum":
        return make_pendulum_task(params["m"], params["l"], params["q"], params["r"],
                                  w_scale, v_scale, dt, g, task_id)
    raise ValidationError(f"unknown benchmark: {benchmark!r}")


def nominal_task(spec: TaskDistributionSpec, task_id: str = "nominal") -> LqgTask:
    """Interval-midpoint task of a distribution (used as training anchor)."""
    return make_task(spec.benchmark, spec.midpoint_params(),
                     spec.w_scale, spec.v_scale, spec.dt, spec.g, task_id)


def sample_training_set(spec: TaskDistributionSpec, id_prefix: str = "task") -> list[LqgTask]:
    """Draw ``spec.count`` tasks with parameters uniform on the intervals.

    Each task uses an independent Philox substream keyed by (seed, index), so
    the result is reproducible across platforms and independent of sampling
    order.  Tasks failing the controllability/observability assumption are
    resampled up to 100 times before raising :class:`AssumptionViolated`.
    """
    order = _PARAM_ORDER[spec.benchmark]
    tasks = []
    for i in range(spec.count):
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(spec.seed, spawn_key=(i,))))
        task = None
        for _ in range(100):
            params = {name: rng.uniform(*spec.intervals[name]) for name in order}
            candidate = make_task(spec.benchmark, params, spec.w_scale, spec.v_scale,
                                  spec.dt, spec.g, f"{id_prefix}-{i:03d}")
            try:
                candidate.validate()
            except AssumptionViolated:
                continue
            task = candidate
            break
        if task is None:
            raise AssumptionViolated(f"task index {i}: resampling budget exhausted")
        tasks.append(task)
    return tasks


def tasks_to_json(tasks: list[LqgTask], meta: dict | None = None) -> dict:
    """Serializable document for a task set (matrices as row-major nested lists)."""
    doc = {"schema": "mtlqg-tasks-v1", "meta": meta or {}}
    doc["tasks"] = [{
        "id": t.id, "params": t.params,
        **{name: getattr(t, name).tolist() for name in ("A", "B", "C", "W", "V", "Q", "R")},
    } for t in tasks]
    return doc


def tasks_from_json(doc: dict) -> list[LqgTask]:
    """Parse and validate a task-set document (covariances re-verified on load)."""
    if doc.get("schema") != "mtlqg-tasks-v1":
        raise ValidationError(f"unexpected task schema: {doc.get('schema')!r}")
    tasks = []
    for entry in doc["tasks"]:
        task = LqgTask(
            A=np.array(entry["A"], dtype=float), B=np.array(entry["B"], dtype=float),
            C=np.array(entry["C"], dtype=float), W=np.array(entry["W"], dtype=float),
            V=np.array(entry["V"], dtype=float), Q=np.array(entry["Q"], dtype=float),
            R=np.array(entry["R"], dtype=float), id=str(entry["id"]),
            params=dict(entry.get("params", {})))
        task.validate()
        tasks.append(task)
    return tasks


def save_tasks(path, tasks: list[LqgTask], meta: dict | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(tasks_to_json(tasks, meta), fh, indent=1)


def load_tasks(path) -> tuple[list[LqgTask], dict]:
    with open(path) as fh:
        doc = json.load(fh)
    return tasks_from_json(doc), doc.get("meta", {})


def _assemble(a, b, c, q, r, w_scale, v_scale, task_id, params):
    n_x, n_u, n_y = a.shape[0], b.shape[1], c.shape[0]
    return LqgTask(
        A=a, B=b, C=c,
        W=w_scale * np.eye(n_x), V=v_scale * np.eye(n_y),
        Q=q * np.eye(n_y), R=r * np.eye(n_u),
        id=task_id, params=params)


def _require_psd(m, name, task_id, tol=1e-10):
    if np.linalg.norm(m - m.T) > 1e-8 * max(1.0, np.linalg.norm(m)):
        raise ValidationError(f"task {task_id}: {name} not symmetric")
    if np.min(np.linalg.eigvalsh(0.5 * (m + m.T))) < -tol * max(1.0, np.linalg.norm(m)):
        raise ValidationError(f"task {task_id}: {name} not PSD")


def _require_pd(m, name, task_id):
    _require_psd(m, name, task_id)
    if np.min(np.linalg.eigvalsh(0.5 * (m + m.T))) <= 0.0:
        raise ValidationError(f"task {task_id}: {name} not PD")
