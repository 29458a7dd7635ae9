"""Experiment specification files.

Plain sectioned key=value text (INI), hand-editable and diff-friendly,
with a schema id so future revisions can evolve the format.  Unknown
sections or keys are rejected outright: a typo should fail loudly, not
silently fall back to a default.

    [meta]
    schema = fedvar-experiment-v1

    [data]
    kind = gaussian_mixture
    classes = 10
    dim = 20
    per_class = 400
    separation = 3.0
    partition = dirichlet          ; dirichlet | one_vs_rest
    concentration = 0.1            ; dirichlet only
    alpha = 0.2                    ; one_vs_rest only
    clients = 20
    split_ratio = 0.5

    [model]
    arch = softmax_regression      ; softmax_regression | mlp
    hidden = 32                    ; mlp only

    [run]
    rounds = 200
    participation = 1.0
    eval_every = 50
    local_steps = epoch            ; 'epoch' or an integer
    batch_size = 64
    learning_rate = 0.05
    parallel = false

    [strategy]
    tag = semivred
    beta = 0.1
    ; other tags: lambda, q, tilt, loss_cap, cvar_alpha, afl_step_size, clamp

    [sweep]                        ; optional: comma-separated value lists
    beta = 0.01, 0.05, 0.1
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

from .aggregate import STRATEGY_TAGS, StrategyConfig
from .data import (
    Federation,
    dirichlet_partition,
    make_gaussian_mixture,
    one_vs_rest_partition,
    stratified_split,
)
from .engine import RunConfig
from .errors import ConfigError
from .localtrain import LocalConfig
from .models import Arch, Mlp, SoftmaxRegression
from .rng import Rng

SCHEMA_ID = "fedvar-experiment-v1"

_SECTION_KEYS = {
    "meta": {"schema"},
    "data": {
        "kind",
        "classes",
        "dim",
        "per_class",
        "separation",
        "partition",
        "concentration",
        "alpha",
        "clients",
        "split_ratio",
    },
    "model": {"arch", "hidden"},
    "run": {
        "rounds",
        "participation",
        "eval_every",
        "local_steps",
        "batch_size",
        "learning_rate",
        "parallel",
    },
    "strategy": {
        "tag",
        "beta",
        "lambda",
        "q",
        "tilt",
        "loss_cap",
        "cvar_alpha",
        "afl_step_size",
        "clamp",
    },
    "sweep": {"beta", "lambda", "q", "tilt", "loss_cap", "cvar_alpha", "learning_rate"},
}


@dataclass(frozen=True)
class DataSpec:
    kind: str = "gaussian_mixture"
    classes: int = 10
    dim: int = 20
    per_class: int = 400
    separation: float = 3.0
    partition: str = "dirichlet"
    concentration: float = 0.1
    alpha: float = 0.2
    clients: int = 20
    split_ratio: float = 0.5


@dataclass(frozen=True)
class ModelSpec:
    arch: str = "softmax_regression"
    hidden: int = 32


@dataclass(frozen=True)
class ExperimentSpec:
    data: DataSpec
    model: ModelSpec
    rounds: int
    participation: float
    eval_every: int
    local_steps: int | None
    batch_size: int
    learning_rate: float
    parallel: bool
    strategy: StrategyConfig
    sweep: dict[str, list[float]]

    def build_federation(self, seed: int) -> Federation:
        """Materialize the data block; keyed to the seed only, never to the
        strategy, so all strategies under one seed share the same data."""
        d = self.data
        rng = Rng(seed).child("data")
        pool = make_gaussian_mixture(
            rng.child("pool"), d.classes, d.dim, d.per_class, d.separation
        )
        if d.partition == "dirichlet":
            return dirichlet_partition(
                rng.child("partition"), pool, d.clients, d.concentration, d.split_ratio
            )
        train_pool, test_pool = stratified_split(rng.child("partition"), pool, d.split_ratio)
        return one_vs_rest_partition(train_pool, d.clients, d.alpha, test_pool)

    def build_arch(self) -> Arch:
        if self.model.arch == "softmax_regression":
            return SoftmaxRegression(self.data.dim, self.data.classes)
        return Mlp(self.data.dim, self.model.hidden, self.data.classes)

    def run_config(self, seed: int, overrides: dict[str, float] | None = None) -> RunConfig:
        """RunConfig for one seed; ``overrides`` maps sweep keys (spec-file
        names, e.g. 'beta' or 'learning_rate') to concrete values."""
        overrides = dict(overrides or {})
        eta = overrides.pop("learning_rate", self.learning_rate)
        strategy = self.strategy
        if overrides:
            fields = _strategy_as_dict(strategy)
            for key, value in overrides.items():
                fields[_SWEEP_STRATEGY_KEYS[key]] = value
            strategy = StrategyConfig(**fields)
        return RunConfig(
            local=LocalConfig(eta=eta, steps=self.local_steps, batch_size=self.batch_size),
            strategy=strategy,
            rounds=self.rounds,
            participation=self.participation,
            eval_every=self.eval_every,
            seed=seed,
            parallel=self.parallel,
        )

    def snapshot(self) -> str:
        """Canonical text form of the resolved spec (defaults materialized)."""
        d, m, s = self.data, self.model, self.strategy
        lines = [
            "[meta]",
            f"schema = {SCHEMA_ID}",
            "",
            "[data]",
            f"kind = {d.kind}",
            f"classes = {d.classes}",
            f"dim = {d.dim}",
            f"per_class = {d.per_class}",
            f"separation = {d.separation!r}",
            f"partition = {d.partition}",
            f"concentration = {d.concentration!r}",
            f"alpha = {d.alpha!r}",
            f"clients = {d.clients}",
            f"split_ratio = {d.split_ratio!r}",
            "",
            "[model]",
            f"arch = {m.arch}",
            f"hidden = {m.hidden}",
            "",
            "[run]",
            f"rounds = {self.rounds}",
            f"participation = {self.participation!r}",
            f"eval_every = {self.eval_every}",
            f"local_steps = {'epoch' if self.local_steps is None else self.local_steps}",
            f"batch_size = {self.batch_size}",
            f"learning_rate = {self.learning_rate!r}",
            f"parallel = {str(self.parallel).lower()}",
            "",
            "[strategy]",
            f"tag = {s.tag}",
            f"beta = {s.beta!r}",
            f"lambda = {s.gifair_lambda!r}",
            f"q = {s.q!r}",
            f"tilt = {s.tilt!r}",
            f"loss_cap = {s.loss_cap!r}",
            f"cvar_alpha = {s.cvar_alpha!r}",
            f"afl_step_size = {s.afl_step_size!r}",
            f"clamp = {str(s.clamp_losses).lower()}",
        ]
        if self.sweep:
            lines += ["", "[sweep]"]
            lines += [f"{k} = {', '.join(repr(v) for v in vals)}" for k, vals in self.sweep.items()]
        return "\n".join(lines) + "\n"


_SWEEP_STRATEGY_KEYS = {
    "beta": "beta",
    "lambda": "gifair_lambda",
    "q": "q",
    "tilt": "tilt",
    "loss_cap": "loss_cap",
    "cvar_alpha": "cvar_alpha",
}


def _strategy_as_dict(s: StrategyConfig) -> dict:
    return {
        "tag": s.tag,
        "beta": s.beta,
        "gifair_lambda": s.gifair_lambda,
        "q": s.q,
        "tilt": s.tilt,
        "loss_cap": s.loss_cap,
        "cvar_alpha": s.cvar_alpha,
        "afl_step_size": s.afl_step_size,
        "clamp_losses": s.clamp_losses,
    }


class _Section:
    """Typed accessor over one INI section with location-tagged errors."""

    def __init__(self, name: str, raw: dict[str, str]):
        self.name = name
        self.raw = raw

    def _get(self, key: str) -> str | None:
        return self.raw.get(key)

    def str_in(self, key: str, allowed: tuple[str, ...], default: str) -> str:
        v = self._get(key)
        if v is None:
            return default
        if v not in allowed:
            raise ConfigError(f"[{self.name}] {key} = {v!r}: expected one of {allowed}")
        return v

    def int_at_least(self, key: str, minimum: int, default: int) -> int:
        v = self._get(key)
        if v is None:
            return default
        try:
            parsed = int(v)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} = {v!r}: not an integer") from None
        if parsed < minimum:
            raise ConfigError(f"[{self.name}] {key} = {parsed}: must be >= {minimum}")
        return parsed

    def number(
        self,
        key: str,
        default: float,
        low: float = -math.inf,
        high: float = math.inf,
        low_open: bool = False,
        high_open: bool = False,
    ) -> float:
        v = self._get(key)
        if v is None:
            return default
        try:
            parsed = float(v)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} = {v!r}: not a number") from None
        ok_low = parsed > low if low_open else parsed >= low
        ok_high = parsed < high if high_open else parsed <= high
        if not (ok_low and ok_high and math.isfinite(parsed)):
            raise ConfigError(f"[{self.name}] {key} = {parsed}: out of range")
        return parsed

    def boolean(self, key: str, default: bool) -> bool:
        v = self._get(key)
        if v is None:
            return default
        if v.lower() in ("true", "1", "yes"):
            return True
        if v.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"[{self.name}] {key} = {v!r}: not a boolean")


def parse_spec(path: str) -> ExperimentSpec:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError:
        raise
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_spec_text({s: dict(parser.items(s)) for s in parser.sections()})


def parse_spec_text(sections: dict[str, dict[str, str]]) -> ExperimentSpec:
    for name, keys in sections.items():
        if name not in _SECTION_KEYS:
            raise ConfigError(f"unknown section [{name}]")
        unknown = set(keys) - _SECTION_KEYS[name]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    meta = sections.get("meta", {})
    if meta.get("schema") != SCHEMA_ID:
        raise ConfigError(
            f"[meta] schema must be {SCHEMA_ID!r}, got {meta.get('schema')!r}"
        )

    data_sec = _Section("data", sections.get("data", {}))
    defaults = DataSpec()
    data = DataSpec(
        kind=data_sec.str_in("kind", ("gaussian_mixture",), defaults.kind),
        classes=data_sec.int_at_least("classes", 2, defaults.classes),
        dim=data_sec.int_at_least("dim", 1, defaults.dim),
        per_class=data_sec.int_at_least("per_class", 1, defaults.per_class),
        separation=data_sec.number("separation", defaults.separation, low=0.0),
        partition=data_sec.str_in("partition", ("dirichlet", "one_vs_rest"), defaults.partition),
        concentration=data_sec.number("concentration", defaults.concentration, low=0.0, low_open=True),
        alpha=data_sec.number("alpha", defaults.alpha, low=0.0, high=1.0),
        clients=data_sec.int_at_least("clients", 1, defaults.clients),
        split_ratio=data_sec.number("split_ratio", defaults.split_ratio, low=0.0, high=1.0, low_open=True, high_open=True),
    )
    if data.partition == "one_vs_rest" and data.classes != 2:
        raise ConfigError("[data] partition = one_vs_rest requires classes = 2")

    model_sec = _Section("model", sections.get("model", {}))
    mdefaults = ModelSpec()
    model = ModelSpec(
        arch=model_sec.str_in("arch", ("softmax_regression", "mlp"), mdefaults.arch),
        hidden=model_sec.int_at_least("hidden", 1, mdefaults.hidden),
    )

    run_sec = _Section("run", sections.get("run", {}))
    steps_raw = run_sec.raw.get("local_steps", "epoch")
    if steps_raw == "epoch":
        local_steps = None
    else:
        local_steps = run_sec.int_at_least("local_steps", 1, 1)

    strat_sec = _Section("strategy", sections.get("strategy", {}))
    tag = strat_sec.str_in("tag", STRATEGY_TAGS, "fedavg")
    try:
        strategy = StrategyConfig(
            tag=tag,
            beta=strat_sec.number("beta", 0.0),
            gifair_lambda=strat_sec.number("lambda", 0.0),
            q=strat_sec.number("q", 0.0),
            tilt=strat_sec.number("tilt", 1.0),
            loss_cap=strat_sec.number("loss_cap", 2.0),
            cvar_alpha=strat_sec.number("cvar_alpha", 0.5),
            afl_step_size=strat_sec.number("afl_step_size", 0.1),
            clamp_losses=strat_sec.boolean("clamp", True),
        )
    except ValueError as exc:
        raise ConfigError(f"[strategy] {exc}") from None

    sweep: dict[str, list[float]] = {}
    for key, raw in sections.get("sweep", {}).items():
        try:
            sweep[key] = [float(v.strip()) for v in raw.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"[sweep] {key} = {raw!r}: not a comma-separated number list") from None
        if not sweep[key]:
            raise ConfigError(f"[sweep] {key}: empty value list")

    return ExperimentSpec(
        data=data,
        model=model,
        rounds=run_sec.int_at_least("rounds", 1, 200),
        participation=run_sec.number("participation", 1.0, low=0.0, high=1.0, low_open=True),
        eval_every=run_sec.int_at_least("eval_every", 1, 50),
        local_steps=local_steps,
        batch_size=run_sec.int_at_least("batch_size", 1, 64),
        learning_rate=run_sec.number("learning_rate", 0.05, low=0.0),
        parallel=run_sec.boolean("parallel", False),
        strategy=strategy,
        sweep=sweep,
    )
