"""Command-line experiment runner.

    fedvar run     --spec FILE --out DIR --seed N [--dump-data] [--verify]
    fedvar sweep   --spec FILE --out DIR --seeds N1,N2,...
    fedvar compare --baseline DIR --candidate DIR [--out FILE]

Exit codes: 0 success, 1 failed verification, 2 configuration error,
3 training divergence, 4 I/O error.  Set FEDVAR_LOG=DEBUG|INFO|... for
log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import json
import logging
import os
import sys

import numpy as np

from .config import ExperimentSpec, parse_spec
from .data import dump_federation
from .engine import run_experiment
from .errors import ConfigError, DivergenceError
from .metrics import comparison_report

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4

log = logging.getLogger("fedvar")


def _single_run(
    spec: ExperimentSpec,
    seed: int,
    out_dir: str,
    run_id: str,
    overrides: dict[str, float] | None = None,
):
    cfg = spec.run_config(seed, overrides)
    federation = spec.build_federation(seed)
    arch = spec.build_arch()
    os.makedirs(out_dir, exist_ok=True)
    resolved = spec
    if overrides:
        strat_over = {k: v for k, v in overrides.items() if k != "learning_rate"}
        resolved = dataclasses.replace(
            spec,
            learning_rate=overrides.get("learning_rate", spec.learning_rate),
            strategy=cfg.strategy if strat_over else spec.strategy,
            sweep={},
        )
    with open(os.path.join(out_dir, "config.snapshot"), "w", encoding="utf-8") as fh:
        fh.write(resolved.snapshot())
    log.info("run %s: strategy=%s seed=%d out=%s", run_id, cfg.strategy.tag, seed, out_dir)
    result = run_experiment(federation, cfg, arch, out_dir=out_dir, run_id=run_id)
    log.info(
        "run %s finished: mean=%.2f worst10=%.2f", run_id, result.report.mean, result.report.worst_10pct
    )
    return result, federation


def cmd_run(args: argparse.Namespace) -> int:
    spec = parse_spec(args.spec)
    run_id = os.path.basename(os.path.normpath(args.out))
    result, federation = _single_run(spec, args.seed, args.out, run_id)
    if args.dump_data:
        dump_federation(federation, os.path.join(args.out, "federation.txt"))
    if args.verify:
        from .verify import run_checks

        checks = run_checks(federation, spec.build_arch(), spec.strategy, args.seed)
        failed = 0
        for c in checks:
            status = "PASS" if c.passed else "FAIL"
            print(f"[{status}] {c.name}: {c.detail}")
            failed += not c.passed
        if failed:
            return EXIT_CHECK_FAILED
    print(
        f"ok: mean={result.report.mean:.2f} worst10={result.report.worst_10pct:.2f} "
        f"worst20={result.report.worst_20pct:.2f} ({args.out})"
    )
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    spec = parse_spec(args.spec)
    if not spec.sweep:
        raise ConfigError("sweep requires a [sweep] section in the spec file")
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds must be a comma-separated integer list, got {args.seeds!r}") from None
    if not seeds:
        raise ConfigError("--seeds is empty")

    keys = sorted(spec.sweep)
    grid = list(itertools.product(*(spec.sweep[k] for k in keys)))
    rows = []
    for gp_index, values in enumerate(grid):
        overrides = dict(zip(keys, values))
        worst10, means = [], []
        for seed in seeds:
            run_id = f"gp{gp_index:03d}_seed{seed}"
            out_dir = os.path.join(args.out, run_id)
            result, _ = _single_run(spec, seed, out_dir, run_id, overrides)
            worst10.append(result.report.worst_10pct)
            means.append(result.report.mean)
        rows.append(
            {
                **{k: v for k, v in zip(keys, values)},
                "worst10_mean": float(np.mean(worst10)),
                "mean_mean": float(np.mean(means)),
            }
        )
    rows.sort(key=lambda r: -r["worst10_mean"])
    summary = os.path.join(args.out, "summary.csv")
    with open(summary, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", *keys, "worst10_mean", "mean_mean", "seeds"])
        for rank, row in enumerate(rows, start=1):
            writer.writerow(
                [rank, *(repr(row[k]) for k in keys), repr(row["worst10_mean"]), repr(row["mean_mean"]), ";".join(map(str, seeds))]
            )
    best = rows[0]
    print(f"sweep done: {len(grid)} grid points x {len(seeds)} seeds; best {dict((k, best[k]) for k in keys)} worst10_mean={best['worst10_mean']:.2f} ({summary})")
    return EXIT_OK


def _load_accuracies(run_dir: str) -> dict:
    path = os.path.join(run_dir, "accuracies.json")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_compare(args: argparse.Namespace) -> int:
    base = _load_accuracies(args.baseline)
    cand = _load_accuracies(args.candidate)
    if base["client_ids"] != cand["client_ids"]:
        raise ConfigError("baseline and candidate runs cover different client sets")
    report = comparison_report(base["accuracies"], cand["accuracies"])
    payload = {
        "baseline_run": base["run_id"],
        "candidate_run": cand["run_id"],
        **report.to_dict(),
    }
    text = json.dumps(payload, indent=2)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedvar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment")
    p_run.add_argument("--spec", required=True, help="experiment spec file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--dump-data", action="store_true", help="export the generated federation")
    p_run.add_argument("--verify", action="store_true", help=argparse.SUPPRESS)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid-search over the [sweep] section")
    p_sweep.add_argument("--spec", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--seeds", required=True, help="comma-separated seed list")
    p_sweep.set_defaults(func=cmd_sweep)

    p_cmp = sub.add_parser("compare", help="compare two finished runs")
    p_cmp.add_argument("--baseline", required=True, help="baseline run directory")
    p_cmp.add_argument("--candidate", required=True, help="candidate run directory")
    p_cmp.add_argument("--out", default=None, help="also write the report JSON here")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("FEDVAR_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
