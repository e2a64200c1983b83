"""Command-line entry point: ``kacchaos run | summarize | list-models``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .laws import check_theorem_hypotheses


def _parser():
    ap = argparse.ArgumentParser(prog="kacchaos", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment sweep or the acceptance recipe")
    run.add_argument("--config", help="key = value experiment file")
    run.add_argument("--experiment", choices=harness.KINDS)
    run.add_argument("--model", help="interaction law spec, e.g. wealth:0.7 (see list-models)")
    run.add_argument("--p0", help="initial law spec, e.g. exponential:1")
    run.add_argument("--p", type=int, choices=(1, 2))
    run.add_argument("--n-grid", help="comma-separated particle counts")
    run.add_argument("--t-grid", help="comma-separated positive times")
    run.add_argument("--replicas", type=int)
    run.add_argument("--pool-size", type=int)
    run.add_argument("--k", type=int, help="block size for the decoupling experiment")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--out", help="CSV output path (a .json summary is written next to it)")
    run.add_argument("--dump-states", metavar="PATH")
    run.add_argument("--dump-paths", metavar="PATH")
    run.add_argument("--exact-pool", action="store_true",
                     help="build a reference pool at each event time instead of on the grid")
    run.add_argument("--recipe", choices=("acceptance",))
    run.add_argument("--only", help="comma-separated criterion numbers (with --recipe)")

    summ = sub.add_parser("summarize", help="summarise a report CSV")
    summ.add_argument("csv")
    summ.add_argument("--json", help="write the JSON summary here")

    sub.add_parser("list-models", help="show the accepted model and initial-law specs")
    return ap


def _config(args):
    cfg = harness.ExperimentConfig.from_file(args.config) if args.config else harness.ExperimentConfig()
    return harness.with_overrides(
        cfg,
        experiment=args.experiment, model=args.model, p0=args.p0, p=args.p,
        n_grid=tuple(harness._ints(args.n_grid)) if args.n_grid else None,
        t_grid=tuple(harness._floats(args.t_grid)) if args.t_grid else None,
        replicas=args.replicas, pool_size=args.pool_size, seed=args.seed, k=args.k,
        exact_pool=True if args.exact_pool else None, out=args.out)


def _run(args):
    if args.recipe == "acceptance":
        from .recipes import run_acceptance
        only = {int(v) for v in args.only.split(",")} if args.only else None
        results = run_acceptance(workers=args.workers, only=only, echo=print)
        if args.out:
            Path(args.out).write_text(json.dumps(
                [r.__dict__ for r in results], indent=2, sort_keys=True))
        return 0 if all(r.passed for r in results) else 1

    cfg = _config(args)
    try:
        res = harness.run_experiment(cfg, workers=args.workers,
                                     dump_states=bool(args.dump_states),
                                     dump_paths=bool(args.dump_paths))
    except harness.HypothesisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = harness.rows_to_csv(res.rows, cfg)
    if cfg.out:
        Path(cfg.out).write_text(text)
        Path(cfg.out).with_suffix(".json").write_text(harness.summary_json(res.summary))
    else:
        sys.stdout.write(text)
    if args.dump_states:
        harness.write_states(res.states, args.dump_states, cfg.n_grid)
    if args.dump_paths:
        harness.write_paths(res.paths, args.dump_paths, cfg.n_grid)
    print(res.table, file=sys.stderr)
    return 0


def _summarize(args):
    rows = harness.read_csv(args.csv)
    table, summary = harness.summarize(rows)
    print(table)
    if args.json:
        Path(args.json).write_text(harness.summary_json(summary))
    return 0


def _list_models():
    print("interaction laws (--model):")
    for form, text in harness.MODEL_FORMS.items():
        print(f"  {form:<34} {text}")
    print("initial laws (--p0):")
    for form, text in harness.INITIAL_FORMS.items():
        print(f"  {form:<34} {text}")
    print("examples:")
    for model, p0 in [("kac", "gaussian:0:1"), ("wealth:0.7", "exponential:1"),
                      ("wealth:0.7", "pareto:3:1")]:
        law = harness.parse_model(model)
        rep = check_theorem_hypotheses(law, harness.parse_initial(p0))
        status = "ok" if rep.ok else "fails " + ",".join(rep.failing())
        print(f"  {model} + {p0}: p={law.p}, c(p)={law.c(law.p):.4g}, hypotheses {status}")
    return 0


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    if args.command == "run":
        return _run(args)
    if args.command == "summarize":
        return _summarize(args)
    return _list_models()


if __name__ == "__main__":
    sys.exit(main())
