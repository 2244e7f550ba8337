"""Command-line entry point.

Subcommands: generate-tasks | train | heterogeneity | variance-study |
evaluate | reproduce <fig1|fig2|fig3>.  A JSON config file (--config) supplies
defaults; explicit flags override it.  Exit codes: 0 success, 2 validation
error, 3 numerical failure (diagnostic names the failing task or pair).
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments, io
from .errors import MtlqgError, ValidationError
from .heterogeneity import CertificateConfig
from .io import load_controller
from .lifting import build_s_star
from .rollout import RolloutConfig
from .tasks import TaskDistributionSpec, load_tasks, nominal_task, sample_training_set
from .trainer import evaluate_generalization, initial_controller


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtlqg",
                                     description="Multitask LQG policy gradient toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate-tasks", help="sample benchmark task sets to JSON")
    _common(gen)
    gen.add_argument("--benchmark", choices=("cartpole", "pendulum"), default="cartpole")
    gen.add_argument("--count", type=int, default=100)
    gen.add_argument("--test-count", type=int, default=0)

    tr = sub.add_parser("train", help="train a common lifted controller")
    _common(tr)
    tr.add_argument("--tasks", type=Path, required=True)
    tr.add_argument("--test-tasks", type=Path, default=None)
    tr.add_argument("--mode", choices=("exact", "zo"), default="exact")
    tr.add_argument("--alpha", default="1e-7")
    tr.add_argument("--iterations", type=int, default=10_000)
    tr.add_argument("--p", type=int, default=10)
    tr.add_argument("--log-every", type=int, default=1)
    tr.add_argument("--eval-every", type=int, default=0)
    tr.add_argument("--het-cadence", type=int, default=0)
    tr.add_argument("--detune-r", type=float, default=1.0)
    tr.add_argument("--threads", type=int, default=1)
    tr.add_argument("--n-s", type=int, default=200)
    tr.add_argument("--n-c", type=int, default=1)
    tr.add_argument("--tau", type=int, default=200)
    tr.add_argument("--radius", type=float, default=1e-3)

    het = sub.add_parser("heterogeneity", help="pairwise bisimulation certificates")
    _common(het)
    het.add_argument("--tasks", type=Path, required=True)
    het.add_argument("--controller", type=Path, required=True)
    het.add_argument("--refine", action="store_true")
    het.add_argument("--budget", type=int, default=2000)
    het.add_argument("--no-matrices", action="store_true")
    het.add_argument("--p", type=int, default=10)

    var = sub.add_parser("variance-study", help="estimator RMSE vs number of tasks")
    _common(var)
    var.add_argument("--tasks", type=Path, required=True)
    var.add_argument("--controller", type=Path, default=None)
    var.add_argument("--grid", default="1,2,5,10,25,50")
    var.add_argument("--reps", type=int, default=20)
    var.add_argument("--n-s", type=int, default=200)
    var.add_argument("--n-c", type=int, default=1)
    var.add_argument("--tau", type=int, default=200)
    var.add_argument("--radius", type=float, default=1e-3)
    var.add_argument("--p", type=int, default=10)

    ev = sub.add_parser("evaluate", help="train/test generalization report")
    _common(ev)
    ev.add_argument("--tasks", type=Path, required=True)
    ev.add_argument("--test-tasks", type=Path, required=True)
    ev.add_argument("--controller", type=Path, required=True)
    ev.add_argument("--p", type=int, default=10)

    rep = sub.add_parser("reproduce", help="one-command desk-scale figure data")
    _common(rep)
    rep.add_argument("figure", choices=("fig1", "fig2", "fig3"))
    return parser


def _common(p):
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file of defaults for this subcommand")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--benchmark-nominal", action="store_true", help=argparse.SUPPRESS)


def _apply_config_file(parser, args):
    if args.config is None:
        return args
    with open(args.config) as fh:
        overrides = json.load(fh)
    sub_actions = next(a for a in parser._actions
                       if isinstance(a, argparse._SubParsersAction))
    subparser = sub_actions.choices[args.command]
    defaults = {a.dest: a.default for a in subparser._actions}
    explicit = {key for key, value in vars(args).items()
                if key in defaults and value != defaults[key]}
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if dest not in defaults:
            raise ValidationError(f"unknown config key: {key!r}")
        if dest not in explicit:
            current = getattr(args, dest)
            setattr(args, dest, type(current)(value) if current is not None else value)
    return args


def cmd_generate_tasks(args) -> int:
    out = io.ensure_dir(args.out)
    spec = TaskDistributionSpec.benchmark_default(args.benchmark, seed=args.seed,
                                                  count=args.count)
    tasks = sample_training_set(spec, id_prefix="train")
    meta = {"benchmark": args.benchmark, "seed": args.seed,
            "intervals": {k: list(v) for k, v in spec.intervals.items()},
            "w_scale": spec.w_scale, "v_scale": spec.v_scale, "dt": spec.dt}
    from .tasks import save_tasks

    save_tasks(out / "tasks.json", tasks, meta)
    if args.test_count > 0:
        test_spec = TaskDistributionSpec.benchmark_default(
            args.benchmark, seed=args.seed + 1, count=args.test_count)
        save_tasks(out / "test_tasks.json",
                   sample_training_set(test_spec, id_prefix="test"),
                   {**meta, "seed": args.seed + 1, "split": "test"})
    print(f"wrote {args.count} tasks to {out / 'tasks.json'}")
    return 0


def cmd_train(args) -> int:
    out = io.ensure_dir(args.out)
    tasks, meta = load_tasks(args.tasks)
    lifts = [build_s_star(t, args.p) for t in tasks]
    spec = _spec_from_meta(meta, len(tasks))
    nominal = nominal_task(spec)
    nominal_lift = build_s_star(nominal, args.p)
    k0, _ = initial_controller(tasks, lifts, nominal, nominal_lift,
                               r_detune=args.detune_r)
    mode = "zeroth_order" if args.mode == "zo" else "exact"
    rollout = None
    if mode == "zeroth_order":
        rollout = RolloutConfig(tau=args.tau, n_c=args.n_c, n_s=args.n_s,
                                r=args.radius, seed=args.seed, burn_in=args.p)
    from .trainer import TrainConfig, train_multitask

    alpha = args.alpha if args.alpha == "auto" else float(args.alpha)
    tc = TrainConfig(alpha=alpha, iterations=args.iterations, mode=mode,
                     rollout=rollout, seed=args.seed, log_every=args.log_every,
                     het_cadence=args.het_cadence, threads=args.threads)
    het_fn = None
    if args.het_cadence > 0:
        from .heterogeneity import average_heterogeneity

        def het_fn(k_mat):
            return average_heterogeneity(tasks, lifts, k_mat)

    eval_rows, eval_hook, test, test_lifts = [], None, [], []
    if args.test_tasks is not None:
        test, _ = load_tasks(args.test_tasks)
        test_lifts = [build_s_star(t, args.p) for t in test]
    if args.eval_every > 0 and test:
        from .cost import cost_exact
        from .errors import NotStabilizing
        from .lifting import lifted_optimal_controller

        test_star = [cost_exact(t, lf, lifted_optimal_controller(t, lf)).J
                     for t, lf in zip(test, test_lifts)]

        def eval_hook(iteration, k, costs, j_star):
            for i, task in enumerate(tasks):
                eval_rows.append((iteration, "train", task.id, costs[i],
                                  costs[i] - j_star[i]))
            for i, (task, lf) in enumerate(zip(test, test_lifts)):
                try:
                    c = cost_exact(task, lf, k).J
                    eval_rows.append((iteration, "test", task.id, c, c - test_star[i]))
                except NotStabilizing:
                    eval_rows.append((iteration, "test", task.id, np.inf, np.inf))

    final, log = train_multitask(tasks, lifts, tc, k0, het_fn=het_fn,
                                 eval_hook=eval_hook, eval_every=args.eval_every)
    log.to_csv(out / "train_log.csv")
    config_doc = {k: str(v) for k, v in vars(args).items() if k != "config"}
    io.write_sidecar(out / "train_log.csv", config_doc, args.seed)
    io.save_controller(out / "controller.json", final,
                       meta={"seed": args.seed, "early_stopped": log.early_stopped})
    if eval_rows:
        io.write_csv(out / "eval.csv", experiments.EVAL_CSV_HEADER, eval_rows)
        io.write_sidecar(out / "eval.csv", config_doc, args.seed)
    if log.early_stopped:
        print("training stopped early: a step destabilized some task", file=sys.stderr)
        return 3
    print(f"trained controller written to {out / 'controller.json'}")
    return 0


def cmd_heterogeneity(args) -> int:
    tasks, _ = load_tasks(args.tasks)
    lifts = [build_s_star(t, args.p) for t in tasks]
    ktilde = load_controller(args.controller)
    config = CertificateConfig(refine=args.refine, budget=args.budget)
    pair_rows, _ = experiments.run_heterogeneity(
        tasks, lifts, ktilde, args.out, config, seed=args.seed,
        keep_matrices=not args.no_matrices)
    unsound = [r for r in pair_rows if not r["sound"]]
    print(f"{len(pair_rows)} pair certificates written to {args.out}")
    if unsound:
        print(f"warning: {len(unsound)} pairs violate b_ij >= eps_het", file=sys.stderr)
    return 0


def cmd_variance_study(args) -> int:
    tasks, meta = load_tasks(args.tasks)
    lifts = [build_s_star(t, args.p) for t in tasks]
    grid = [int(x) for x in str(args.grid).split(",") if x]
    if not grid or max(grid) > len(tasks):
        raise ValidationError(f"grid {grid} exceeds available tasks ({len(tasks)})")
    if args.controller is not None:
        ktilde = load_controller(args.controller)
    else:
        spec = _spec_from_meta(meta, len(tasks))
        nominal = nominal_task(spec)
        nominal_lift = build_s_star(nominal, args.p)
        ktilde, _ = initial_controller(tasks, lifts, nominal, nominal_lift)
    rollout_cfg = RolloutConfig(tau=args.tau, n_c=args.n_c, n_s=args.n_s,
                                r=args.radius, seed=args.seed, burn_in=args.p)
    rows = experiments.variance_study(tasks, lifts, ktilde, grid, args.reps,
                                      rollout_cfg, args.seed, args.out)
    slope = experiments.loglog_slope([r[0] for r in rows], [r[1] for r in rows]) \
        if len(rows) > 1 else float("nan")
    print(f"variance study written to {args.out} (log-log slope {slope:.3f})")
    return 0


def cmd_evaluate(args) -> int:
    out = io.ensure_dir(args.out)
    tasks, _ = load_tasks(args.tasks)
    test, _ = load_tasks(args.test_tasks)
    lifts = [build_s_star(t, args.p) for t in tasks]
    test_lifts = [build_s_star(t, args.p) for t in test]
    ktilde = load_controller(args.controller)
    report = evaluate_generalization(ktilde, tasks, test, lifts, test_lifts)
    rows = [(tid, "train", c, g, True) for tid, c, g in
            zip(report.train_ids, report.train_costs, report.train_gaps)]
    rows += [(tid, "test", c, g, bool(np.isfinite(c))) for tid, c, g in
             zip(report.test_ids, report.test_costs, report.test_gaps)]
    io.write_csv(out / "generalization.csv",
                 ["task_id", "split", "cost", "gap", "stabilized"], rows)
    summary = {"train_mean": report.train_mean, "test_mean": report.test_mean,
               "gap": report.gap,
               "test_stabilized_fraction": report.test_stabilized_fraction}
    with open(out / "generalization_summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    print(json.dumps(summary))
    return 0


def cmd_reproduce(args) -> int:
    if args.figure == "fig1":
        experiments.fig_optimality_gaps(args.out, seed=args.seed)
    elif args.figure == "fig2":
        experiments.fig_generalization(args.out, seed=args.seed)
    else:
        experiments.fig_variance(args.out, seed=args.seed)
    print(f"{args.figure} data written to {args.out}")
    return 0


_COMMANDS = {
    "generate-tasks": cmd_generate_tasks,
    "train": cmd_train,
    "heterogeneity": cmd_heterogeneity,
    "variance-study": cmd_variance_study,
    "evaluate": cmd_evaluate,
    "reproduce": cmd_reproduce,
}


def _spec_from_meta(meta: dict, count: int) -> TaskDistributionSpec:
    benchmark = meta.get("benchmark")
    if benchmark is None:
        raise ValidationError("task file metadata lacks 'benchmark'; "
                              "cannot derive the nominal task")
    spec = TaskDistributionSpec.benchmark_default(benchmark, seed=int(meta.get("seed", 0)),
                                                  count=count)
    if "intervals" in meta:
        spec.intervals = {k: tuple(v) for k, v in meta["intervals"].items()}
    return spec


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(parser, args)
        return _COMMANDS[args.command](args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MtlqgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
