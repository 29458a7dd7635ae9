"""The outer federated-training loop.

Each round: sample clients, fan out local SGD (serial or thread-parallel;
results are identical because every client owns an independent RNG stream
keyed by (seed, round, client) and the reduction order is fixed), combine
the reports under the configured strategy, and apply the server update.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import models
from .aggregate import StrategyConfig, aggregate
from .data import Federation
from .errors import DivergenceError
from .localtrain import ClientReport, LocalConfig, local_sgd
from .metrics import FairnessReport, fairness_report
from .models import ModelParams
from .rng import Rng


@dataclass(frozen=True)
class RunConfig:
    local: LocalConfig
    strategy: StrategyConfig
    rounds: int = 200
    participation: float = 1.0
    eval_every: int = 50
    seed: int = 0
    parallel: bool = False

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if not 0.0 < self.participation <= 1.0:
            raise ValueError(f"participation must be in (0, 1], got {self.participation}")
        if self.eval_every < 1:
            raise ValueError(f"eval_every must be >= 1, got {self.eval_every}")


@dataclass
class EvalSnapshot:
    accuracies: np.ndarray  # percent, one per client
    report: FairnessReport


@dataclass
class RoundTrace:
    round_index: int
    sampled: list[int]
    losses: list[float]
    mean_loss: float
    update_norm: float
    weights: list[float] | None
    beta_max: float | None
    eval: EvalSnapshot | None = None

    def to_json(self, strategy: str) -> str:
        record = {
            "round": self.round_index,
            "strategy": strategy,
            "sampled": self.sampled,
            "losses": self.losses,
            "mean_loss": self.mean_loss,
            "update_norm": self.update_norm,
            "weights": self.weights,
            "beta_max": self.beta_max,
            "eval": self.eval.report.to_dict() if self.eval is not None else None,
        }
        return json.dumps(record)


@dataclass
class EngineState:
    params: ModelParams
    round_index: int = 0
    afl_mixing: np.ndarray | None = None


@dataclass
class ExperimentResult:
    params: ModelParams
    traces: list[RoundTrace]
    report: FairnessReport
    accuracies: np.ndarray


def _check_finite(state_round: int, strategy: str, losses: np.ndarray, theta: np.ndarray) -> None:
    if not np.isfinite(losses).all():
        raise DivergenceError(state_round, strategy, "non-finite client loss")
    if not np.isfinite(theta).all():
        raise DivergenceError(state_round, strategy, "non-finite model parameters")


def _sample_clients(gen: np.random.Generator, n: int, fraction: float) -> list[int]:
    m = max(1, math.ceil(fraction * n))
    if m >= n:
        return list(range(n))
    return sorted(int(i) for i in gen.choice(n, size=m, replace=False))


def run_round(
    state: EngineState, federation: Federation, cfg: RunConfig
) -> tuple[EngineState, RoundTrace]:
    """Execute one communication round and return the new state and trace."""
    t = state.round_index
    root = Rng(cfg.seed)
    ids = _sample_clients(root.child("sample", t).generator(), federation.n_clients, cfg.participation)

    def train_one(cid: int) -> ClientReport:
        return local_sgd(state.params, federation.clients[cid], cfg.local, root.child("local", t, cid))

    if cfg.parallel and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=min(8, len(ids))) as pool:
            reports = list(pool.map(train_one, ids))
    else:
        reports = [train_one(cid) for cid in ids]

    afl_mixing = None
    if cfg.strategy.tag == "afl":
        full = (
            state.afl_mixing
            if state.afl_mixing is not None
            else np.full(federation.n_clients, 1.0 / federation.n_clients)
        )
        sub = full[ids]
        afl_mixing = sub / sub.sum()

    try:
        outcome = aggregate(reports, cfg.strategy, afl_mixing)
    except ValueError as exc:
        raise ValueError(f"round {t}, strategy {cfg.strategy.tag!r}: {exc}") from exc

    new_theta = state.params.theta - outcome.delta
    losses = np.array([r.loss_at_start for r in reports])
    _check_finite(t, cfg.strategy.tag, losses, new_theta)

    new_afl = state.afl_mixing
    if cfg.strategy.tag == "afl":
        full = (
            state.afl_mixing.copy()
            if state.afl_mixing is not None
            else np.full(federation.n_clients, 1.0 / federation.n_clients)
        )
        mass = full[ids].sum()
        full[ids] = outcome.weights * mass
        new_afl = full

    trace = RoundTrace(
        round_index=t,
        sampled=ids,
        losses=[float(v) for v in losses],
        mean_loss=outcome.mean_loss,
        update_norm=float(np.linalg.norm(outcome.delta)),
        weights=None if outcome.weights is None else [float(w) for w in outcome.weights],
        beta_max=outcome.beta_max,
    )
    new_state = EngineState(
        params=ModelParams(state.params.arch, new_theta),
        round_index=t + 1,
        afl_mixing=new_afl,
    )
    return new_state, trace


def evaluate_clients(params: ModelParams, federation: Federation) -> np.ndarray:
    """Per-client test accuracy in percent, on each client's own test data."""
    return np.array(
        [
            100.0 * models.accuracy(params, c.test.x, c.test.y, c.class_weights)
            for c in federation.clients
        ]
    )


def run_experiment(
    federation: Federation,
    cfg: RunConfig,
    arch: models.Arch,
    out_dir: str | None = None,
    run_id: str | None = None,
) -> ExperimentResult:
    """Run the full training loop and (optionally) write the output files.

    Output directory layout: ``trace.jsonl`` (one record per round),
    ``metrics.csv`` (final fairness statistics), ``accuracies.json``
    (final per-client accuracies), ``model.ckpt`` (hex-float checkpoint).
    """
    params = models.init_params(Rng(cfg.seed).child("init"), arch)
    state = EngineState(params=params)
    traces: list[RoundTrace] = []
    snapshot: EvalSnapshot | None = None
    for t in range(cfg.rounds):
        state, trace = run_round(state, federation, cfg)
        if (t + 1) % cfg.eval_every == 0 or t == cfg.rounds - 1:
            acc = evaluate_clients(state.params, federation)
            snapshot = EvalSnapshot(accuracies=acc, report=fairness_report(acc))
            trace.eval = snapshot
        traces.append(trace)
    assert snapshot is not None
    result = ExperimentResult(
        params=state.params,
        traces=traces,
        report=snapshot.report,
        accuracies=snapshot.accuracies,
    )
    if out_dir is not None:
        write_outputs(result, cfg, out_dir, run_id or os.path.basename(os.path.normpath(out_dir)))
    return result


def metrics_csv_text(report: FairnessReport, run_id: str, strategy: str, seed: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run_id", "strategy", "seed", "mean", "std", "worst", "worst10", "worst20", "best10"])
    writer.writerow(
        [
            run_id,
            strategy,
            seed,
            repr(report.mean),
            repr(report.std),
            repr(report.worst),
            repr(report.worst_10pct),
            repr(report.worst_20pct),
            repr(report.best_10pct),
        ]
    )
    return buf.getvalue()


def write_outputs(result: ExperimentResult, cfg: RunConfig, out_dir: str, run_id: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    tag = cfg.strategy.tag
    with open(os.path.join(out_dir, "trace.jsonl"), "w", encoding="utf-8") as fh:
        for trace in result.traces:
            fh.write(trace.to_json(tag) + "\n")
    with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write(metrics_csv_text(result.report, run_id, tag, cfg.seed))
    with open(os.path.join(out_dir, "accuracies.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "run_id": run_id,
                "strategy": tag,
                "seed": cfg.seed,
                "client_ids": list(range(result.accuracies.size)),
                "accuracies": [float(a) for a in result.accuracies],
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    models.save_params(result.params, os.path.join(out_dir, "model.ckpt"))
