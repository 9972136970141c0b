"""Command-line entry point: ``kanppo {train,eval,count-params,bench,prune,plot-data}``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .networks import ARCHS
from .nn_core import NonFiniteError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.replace(" ", "").split(",") if s]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kanppo", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one run per seed")
    t.add_argument("--config", help="flat key = value config file")
    t.add_argument("--env")
    t.add_argument("--arch", choices=ARCHS)
    seeds = t.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int)
    seeds.add_argument("--seeds", type=_seeds)
    t.add_argument("--total-steps", type=int)
    t.add_argument("--out")
    t.add_argument("--k", type=int)
    t.add_argument("--g", type=int)

    e = sub.add_parser("eval", help="noise-free evaluation of a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--episodes", type=int, default=100)

    c = sub.add_parser("count-params", help="parameter-count table")
    c.add_argument("--k", type=int, default=2)
    c.add_argument("--g", type=int, default=3)

    b = sub.add_parser("bench", help="actor forward latency of two architectures")
    b.add_argument("arch_a", choices=ARCHS)
    b.add_argument("arch_b", choices=ARCHS)
    b.add_argument("--env", default="halfcheetah:17:6")
    b.add_argument("--steps", type=int, default=1000)

    r = sub.add_parser("prune", help="magnitude-prune KAN edges of a checkpoint")
    r.add_argument("checkpoint")
    r.add_argument("--threshold", type=float, help="omit to search for the largest safe threshold")
    r.add_argument("--episodes", type=int, default=5, help="probe episodes")
    r.add_argument("--eval-episodes", type=int, default=100)
    r.add_argument("--out")

    d = sub.add_parser("plot-data", help="aggregate metrics CSVs into cross-seed curves")
    d.add_argument("metrics_dir")
    d.add_argument("--out")
    return p


def _train(args) -> None:
    overrides = {
        "env": args.env,
        "arch": args.arch,
        "total_steps": args.total_steps,
        "out_dir": args.out,
        "k": args.k,
        "g": args.g,
        "seeds": [args.seed] if args.seed is not None else args.seeds,
    }
    cfg = harness.load_config(args.config, overrides)
    for res in harness.cmd_train(cfg):
        last = res.final_row
        tail = f" mean_return={last.mean_return:.2f}" if last else ""
        print(f"seed {res.seed}: {res.metrics_path} {res.checkpoint_path}{tail}")


def _eval(args) -> None:
    rep = harness.cmd_eval(args.checkpoint, args.episodes)
    print(f"return {rep.mean_return:.3f} +- {rep.std_return:.3f} over {rep.episodes} deterministic episodes")


def _bench(args) -> None:
    for line in harness.cmd_bench(args.arch_a, args.arch_b, args.env, args.steps):
        print(f"{line.arch:<10} actor_params={line.actor_params:<6} total={line.total_seconds:.4f}s "
              f"per_step={line.per_step_seconds * 1e6:.1f}us")


def _prune(args) -> None:
    rep = harness.cmd_prune(args.checkpoint, args.threshold, args.episodes, args.eval_episodes, args.out)
    print(f"threshold {rep.threshold:.6g}: pruned {rep.edges_pruned}/{rep.edges_total} edges")
    print(f"params actor/critic {rep.params_before[0]}/{rep.params_before[1]} -> "
          f"{rep.params_after[0]}/{rep.params_after[1]}")
    print(f"eval return {rep.return_before:.3f} -> {rep.return_after:.3f} "
          f"(degradation {100 * rep.degradation:.1f}%)")
    print(f"wrote {rep.output_path}")


def _plot(args) -> None:
    for path in harness.cmd_plot_data(args.metrics_dir, args.out):
        print(path)


COMMANDS = {
    "train": _train,
    "eval": _eval,
    "count-params": lambda a: print(harness.format_count_table(harness.cmd_count_params(a.k, a.g))),
    "bench": _bench,
    "prune": _prune,
    "plot-data": _plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except harness.ConfigError as exc:
        print(f"kanppo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteError as exc:
        print(f"kanppo: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
