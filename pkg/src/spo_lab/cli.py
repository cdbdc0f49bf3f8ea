"""``spo-lab`` command line: train, bench, verify, eval, export.

Exit codes: 0 success, 1 a property/suite failed, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .errors import SpoLabError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def output_root(cli_value: str | None, default: str) -> Path:
    if cli_value:
        return Path(cli_value)
    return Path(os.environ.get("SPO_LAB_OUT", ".")) / default


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def cmd_train(args) -> int:
    from .config import load_config
    from .trainer import train

    cfg = load_config(args.config, args.set).resolved()
    name = f"{cfg.env_id}_{cfg.objective.value}_seed{cfg.seed}"
    out = Path(args.out) if args.out else output_root(None, "runs") / name
    if (out / "metrics.csv").exists() and not args.force:
        print(f"error: {out} already holds a run; pass --force to overwrite", file=sys.stderr)
        return EXIT_USAGE

    def log(rec):
        if not args.quiet:
            print(
                f"step {rec.global_step:>8d}  return {rec.mean_episode_return:8.2f}  "
                f"ratio_dev {rec.mean_ratio_deviation:.4f}  max {rec.max_ratio_deviation_so_far:.4f}  "
                f"lr {rec.learning_rate:.2e}",
                flush=True,
            )

    train(cfg, out, log=log)
    print(f"run written to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import SUITES, run_suites

    names = _csv_list(args.filter) if args.filter else None
    if names:
        unknown = [n for n in names if n not in SUITES]
        if unknown:
            print(f"error: unknown suite(s) {unknown}; available: {', '.join(SUITES)}", file=sys.stderr)
            return EXIT_USAGE
    print(f"{'suite':<24} {'cases':>7} {'max error':>11}  result")
    all_ok = True
    for name in names or SUITES:
        t0 = time.perf_counter()
        (res,) = run_suites([name])
        all_ok &= res.passed
        status = "PASS" if res.passed else "FAIL"
        extra = f"  ({res.detail})" if res.detail else ""
        print(f"{res.name:<24} {res.cases:>7d} {res.max_error:>11.3e}  {status}  [{time.perf_counter() - t0:.1f}s]{extra}",
              flush=True)
    return EXIT_OK if all_ok else EXIT_FAIL


def cmd_bench(args) -> int:
    from .bench import make_synthetic_batch, run_ratio_bench
    from .objectives import ObjectiveKind

    kinds = [ObjectiveKind.parse(k) for k in _csv_list(args.kinds)]
    try:
        seeds = [int(s) for s in _csv_list(args.seeds)]
    except ValueError:
        print(f"error: bad seed list {args.seeds!r}", file=sys.stderr)
        return EXIT_USAGE
    out = output_root(args.out, "bench")
    targets = {(k, s): out / f"bench_{k.value}_seed{s}.csv" for k in kinds for s in seeds}
    existing = [p for p in targets.values() if p.exists()]
    if existing and not args.force:
        print(f"error: {len(existing)} output file(s) exist in {out}; pass --force to overwrite", file=sys.stderr)
        return EXIT_USAGE
    out.mkdir(parents=True, exist_ok=True)
    for (kind, seed), path in targets.items():
        batch = make_synthetic_batch(seed, args.size, args.eps, args.lr, args.steps)
        traj = run_ratio_bench(batch, kind)
        traj.write_csv(path)
        print(f"{kind.value:<9} seed {seed}: final mean |r-1| {traj.mean_ratio_dev[-1]:.4f}, "
              f"max |r-1| {traj.max_ratio_dev.max():.4f}, surrogate {traj.mean_surrogate[-1]:.4f} -> {path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .trainer import evaluate, load_agent

    if args.episodes < 1:
        print("error: --episodes must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        agent, cfg = load_agent(args.checkpoint)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: cannot load checkpoint {args.checkpoint}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    env_id = args.env or cfg.env_id
    returns = evaluate(agent, env_id, args.episodes, seed=args.seed)
    print(f"{env_id}: mean return {returns.mean():.2f} +- {returns.std():.2f} over {args.episodes} episode(s)")
    return EXIT_OK


def cmd_export(args) -> int:
    from .bench import aggregate_runs, normalized_score

    paths = []
    for run in args.runs:
        p = Path(run)
        paths.append(p / "metrics.csv" if p.is_dir() else p)
    agg = aggregate_runs(paths, args.last_fraction)
    summary = {
        "runs": [str(p) for p in paths],
        "last_fraction": args.last_fraction,
        "tail_mean_return": agg.per_run,
        "mean": agg.mean,
        "std": agg.std,
        "max_ratio_deviation": agg.max_ratio_deviation,
    }
    if args.min_ref is not None and args.max_ref is not None:
        summary["normalized"] = [normalized_score(v, args.min_ref, args.max_ref) for v in agg.per_run]
    # json has no NaN; missing values become null
    text = json.dumps(summary, indent=2, default=str).replace("NaN", "null")
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"summary written to {args.out}")
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spo-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train SPO or PPO-Clip on a toy environment")
    p.add_argument("--config", help="flat TOML config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
    p.add_argument("--out", help="run directory (default $SPO_LAB_OUT/runs/<env>_<objective>_seed<seed>)")
    p.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="run the property suites")
    p.add_argument("--filter", help="comma-separated suite names")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="synthetic ratio-optimization bench")
    p.add_argument("--kinds", default="spo,ppo_clip,simple")
    p.add_argument("--seeds", default="0")
    p.add_argument("--size", type=int, default=1024)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--eps", type=float, default=0.2)
    p.add_argument("--out", help="output directory (default $SPO_LAB_OUT/bench)")
    p.add_argument("--force", action="store_true", help="overwrite existing CSVs")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--env", help="evaluate on this env instead of the one in the checkpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="summarize runs (tail-window returns) as JSON")
    p.add_argument("runs", nargs="+", help="run directories or metrics.csv files")
    p.add_argument("--last-fraction", type=float, default=0.1)
    p.add_argument("--min-ref", type=float)
    p.add_argument("--max-ref", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpoLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
