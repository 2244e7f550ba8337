"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the three solver kernels and the fused per-task gradient evaluation on
benchmark-sized problems, plus a short multitask training loop end to end.

Usage:
    python benchmarks/bench_kernels.py [--repeats 2000]
"""

import argparse
import time
import warnings

import numpy as np

warnings.filterwarnings("ignore")


def time_call(fn, args, repeats):
    fn(*args)  # warmup
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()

    from mtlqg import _kernels_py
    try:
        from mtlqg import _kernels as compiled
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return
    backends = [("python", _kernels_py), ("cython", compiled)]

    from mtlqg.lifting import build_s_star, lifted_optimal_controller
    from mtlqg.tasks import make_cartpole_task

    task = make_cartpole_task(0.1, 1.0, 0.5, 0.1, 0.1, 0.12, 0.15)
    lift = build_s_star(task, 10)
    k = 0.95 * lifted_optimal_controller(task, lift).K
    qt = task.C.T @ task.Q @ task.C
    rng = np.random.default_rng(0)
    a8 = rng.standard_normal((8, 8))
    a8 *= 0.8 / max(abs(np.linalg.eigvals(a8)))
    q8 = np.eye(8)
    b8 = rng.standard_normal((8, 2))
    r2 = np.eye(2)

    cases = [
        ("dlyap 8x8", "dlyap_doubling", (a8, q8)),
        ("dare 8x8", "dare_doubling", (a8, b8, q8, r2)),
        ("spectral_radius 8x8", "spectral_radius", (a8,)),
        ("task_cost_grad cartpole p=10", "task_cost_grad",
         (task.A, task.B, qt, task.R, lift.S_dagger, lift.stats.Sigma_nu, k)),
    ]

    print(f"{'kernel':34s} {'python':>12s} {'cython':>12s} {'speedup':>9s}")
    for label, name, call_args in cases:
        times = {}
        for backend_name, mod in backends:
            times[backend_name] = time_call(getattr(mod, name), call_args,
                                            args.repeats)
        print(f"{label:34s} {times['python']*1e6:10.1f}us "
              f"{times['cython']*1e6:10.1f}us {times['python']/times['cython']:8.1f}x")

    # end-to-end: 500 exact multitask iterations on 5 cart-pole tasks
    import os
    import subprocess
    import sys

    script = (
        "import warnings; warnings.filterwarnings('ignore')\n"
        "import time\n"
        "from mtlqg.experiments import ExperimentConfig, build_task_suite\n"
        "from mtlqg.trainer import TrainConfig, initial_controller, train_multitask\n"
        "cfg = ExperimentConfig(benchmark='cartpole', n_train=5, p=10, seed=1)\n"
        "_, tr, _, nom, lifts, _, nlift = build_task_suite(cfg)\n"
        "k0, _ = initial_controller(tr, lifts, nom, nlift, r_detune=0.02)\n"
        "tc = TrainConfig(alpha=1e-7, iterations=500, log_every=100, seed=1)\n"
        "t0 = time.perf_counter()\n"
        "train_multitask(tr, lifts, tc, k0)\n"
        "print(time.perf_counter() - t0)\n"
    )
    loop_times = {}
    for backend_name, env_value in (("python", "1"), ("cython", "0")):
        env = dict(os.environ, MTLQG_PURE_PYTHON=env_value)
        out = subprocess.run([sys.executable, "-c", script], env=env,
                             capture_output=True, text=True, check=True)
        loop_times[backend_name] = float(out.stdout.strip().splitlines()[-1])
    print(f"{'train loop (5 tasks x 500 iters)':34s} "
          f"{loop_times['python']*1e3:9.1f} ms {loop_times['cython']*1e3:9.1f} ms "
          f"{loop_times['python']/loop_times['cython']:8.1f}x")


if __name__ == "__main__":
    main()
