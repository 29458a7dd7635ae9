"""Server-side combination rules.

Every strategy turns the round's client reports (pseudo-gradient
``delta_i`` and start-of-round loss ``f_i``) into one server update.
``vred`` adds a term that penalizes the variance of client losses,
``semivred`` penalizes only the above-average part (semi-variance), and
the rest are standard fair-aggregation baselines realized as first-order
reweightings of the client updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .localtrain import ClientReport

STRATEGY_TAGS = (
    "fedavg",
    "vred",
    "semivred",
    "gifair",
    "qffl",
    "term",
    "afl",
    "propfair",
    "deltafl",
)


@dataclass(frozen=True)
class StrategyConfig:
    """Strategy selector plus its hyperparameters; only the fields of the
    active tag are ever read.

    beta        vred / semivred regularization weight
    gifair_lambda  pairwise-discrepancy weight
    q           qffl exponent
    tilt        term exponential tilt
    loss_cap    propfair utility baseline (requires losses below it)
    cvar_alpha  deltafl tail fraction in (0, 1)
    afl_step_size  projected-ascent step for the afl mixing weights
    clamp_losses   propfair: clamp loss_cap - f at 1e-6 instead of failing
    """

    tag: str
    beta: float = 0.0
    gifair_lambda: float = 0.0
    q: float = 0.0
    tilt: float = 1.0
    loss_cap: float = 2.0
    cvar_alpha: float = 0.5
    afl_step_size: float = 0.1
    clamp_losses: bool = True

    def __post_init__(self) -> None:
        if self.tag not in STRATEGY_TAGS:
            raise ValueError(f"unknown strategy tag {self.tag!r}; expected one of {STRATEGY_TAGS}")
        checks = {
            "vred": self.beta >= 0,
            "semivred": self.beta >= 0,
            "gifair": self.gifair_lambda >= 0,
            "qffl": self.q >= 0,
            "term": self.tilt > 0,
            "propfair": self.loss_cap > 0,
            "deltafl": 0.0 < self.cvar_alpha < 1.0,
            "afl": self.afl_step_size > 0,
        }
        if not checks.get(self.tag, True):
            raise ValueError(f"invalid hyperparameters for strategy {self.tag!r}: {self}")


@dataclass
class AggregateOutcome:
    """Server update plus round diagnostics."""

    delta: np.ndarray
    mean_loss: float
    weights: np.ndarray | None = None
    beta_max: float | None = None


def _stack(reports: list[ClientReport]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Validate and collect reports in ascending client order.

    Returns (losses, renormalized weights, delta matrix).  Weights are
    renormalized over the participating set so they sum to 1.
    """
    if not reports:
        raise ValueError("no client reports to aggregate")
    reports = sorted(reports, key=lambda r: r.client_id)
    d = reports[0].delta.shape[0]
    for r in reports:
        if r.delta.shape != (d,):
            raise ValueError(
                f"client {r.client_id} update has dimension {r.delta.shape[0]}, expected {d}"
            )
    losses = np.array([r.loss_at_start for r in reports])
    p = np.array([r.weight for r in reports])
    if (p <= 0).any():
        raise ValueError("client weights must be positive")
    p = p / p.sum()
    deltas = np.stack([r.delta for r in reports])
    return losses, p, deltas


def _equal_weights(p: np.ndarray) -> bool:
    return bool(np.allclose(p, 1.0 / p.size, rtol=0, atol=1e-12))


def fedavg_aggregate(reports: list[ClientReport]) -> AggregateOutcome:
    """Weighted average of client updates: delta = sum_i p_i delta_i."""
    losses, p, deltas = _stack(reports)
    return AggregateOutcome(delta=p @ deltas, mean_loss=float(p @ losses), weights=p)


def vred_aggregate(reports: list[ClientReport], beta: float) -> AggregateOutcome:
    """Variance-penalized combine rule.

    delta = sum_i p_i delta_i
          + 2 beta sum_i p_i (f_i - fbar) (delta_i - deltabar)

    With one full-batch local step this equals eta times the gradient of
    the variance-regularized global objective.  Diagnostic weights and the
    positivity bound beta_max are reported when all p_i are equal.
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    losses, p, deltas = _stack(reports)
    mean_loss = float(p @ losses)
    base = p @ deltas
    if beta == 0.0:
        out = AggregateOutcome(delta=base, mean_loss=mean_loss)
    else:
        centered = deltas - base
        coeff = 2.0 * beta * p * (losses - mean_loss)
        out = AggregateOutcome(delta=base + coeff @ centered, mean_loss=mean_loss)
    if _equal_weights(p):
        out.weights, out.beta_max = vred_weights(losses, beta)
    return out


def semivred_aggregate(reports: list[ClientReport], beta: float) -> AggregateOutcome:
    """Semi-variance-penalized combine rule: the correction term only sums
    over clients whose loss exceeds the average.

    delta = sum_i p_i delta_i
          + 2 beta sum_i p_i (f_i - fbar)_+ (delta_i - deltabar)
    """
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    losses, p, deltas = _stack(reports)
    mean_loss = float(p @ losses)
    base = p @ deltas
    if beta == 0.0:
        out = AggregateOutcome(delta=base, mean_loss=mean_loss)
    else:
        centered = deltas - base
        coeff = 2.0 * beta * p * np.maximum(losses - mean_loss, 0.0)
        out = AggregateOutcome(delta=base + coeff @ centered, mean_loss=mean_loss)
    if _equal_weights(p):
        out.weights, out.beta_max = semivred_weights(losses, beta)
    return out


def vred_weights(losses: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Per-client weights of the variance-penalized gradient under equal
    data shares:

        w_i = 1/n + 2 beta (f_i - fbar) / n

    Also returns beta_max = 1 / (2 (fbar - min_i f_i)), the supremum of
    beta keeping every weight positive (inf when all losses are equal).
    """
    losses = np.asarray(losses, dtype=np.float64)
    n = losses.size
    fbar = losses.mean()
    gap = fbar - losses.min()
    beta_max = math.inf if gap == 0.0 else 1.0 / (2.0 * gap)
    return (1.0 + 2.0 * beta * (losses - fbar)) / n, beta_max


def semivred_weights(losses: np.ndarray, beta: float) -> tuple[np.ndarray, float]:
    """Per-client weights of the semi-variance-penalized gradient under
    equal data shares.  With A = {i : f_i > fbar} and
    S = sum_{j in A} (f_j - fbar):

        w_i = 1/n + 2 beta (f_i - fbar)/n - 2 beta S / n^2   if i in A
        w_i = 1/n                         - 2 beta S / n^2   otherwise

    The weights sum to 1 identically.  beta_max = n / (2 S) (inf when A is
    empty) is the supremum of beta keeping every weight positive.
    """
    losses = np.asarray(losses, dtype=np.float64)
    n = losses.size
    fbar = losses.mean()
    above = losses > fbar
    excess = float(np.sum(losses[above] - fbar))
    beta_max = math.inf if excess == 0.0 else n / (2.0 * excess)
    w = np.full(n, 1.0 / n) - 2.0 * beta * excess / n**2
    w[above] += 2.0 * beta * (losses[above] - fbar) / n
    return w, beta_max


def baseline_weights(
    tag: str, losses: np.ndarray, p: np.ndarray, cfg: StrategyConfig
) -> np.ndarray:
    """Probability-normalized client weights realizing each baseline
    objective's first-order reweighting.

    qffl      w_i ~ p_i (q+1) f_i^q
    term      w_i ~ p_i exp(tilt * f_i)
    propfair  w_i ~ p_i / (loss_cap - f_i)
    gifair    w_i = p_i + lambda * rank_deficit_i, where rank_deficit_i is
              #{j : f_j < f_i} - #{j : f_j > f_i} (ties contribute nothing)
    deltafl   uniform over the ceil(cvar_alpha * n) largest losses
    """
    losses = np.asarray(losses, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if losses.shape != p.shape:
        raise ValueError("losses and weights must have the same length")
    if not np.isfinite(losses).all():
        raise ValueError("losses must be finite")
    n = losses.size
    if tag == "fedavg":
        return p.copy()
    if tag == "qffl":
        raw = p * (cfg.q + 1.0) * np.power(losses, cfg.q)
    elif tag == "term":
        # max-shift keeps the exponentials bounded; it cancels on normalization
        raw = p * np.exp(cfg.tilt * (losses - losses.max()))
    elif tag == "propfair":
        margin = cfg.loss_cap - losses
        if (margin <= 0).any():
            if not cfg.clamp_losses:
                raise ValueError(
                    f"propfair requires all losses below loss_cap={cfg.loss_cap}; "
                    f"max loss is {losses.max()}"
                )
            margin = np.maximum(margin, 1e-6)
        raw = p / margin
    elif tag == "gifair":
        below = (losses[:, None] > losses[None, :]).sum(axis=1)
        above = (losses[:, None] < losses[None, :]).sum(axis=1)
        return p + cfg.gifair_lambda * (below - above)
    elif tag == "deltafl":
        m = math.ceil(cfg.cvar_alpha * n)
        # stable top-m: largest losses win, ties broken toward lower client index
        order = np.lexsort((np.arange(n), -losses))
        w = np.zeros(n)
        w[order[:m]] = 1.0 / m
        return w
    else:
        raise ValueError(f"no first-order reweighting defined for strategy {tag!r}")
    return raw / raw.sum()


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.flatnonzero(u * np.arange(1, v.size + 1) > css)[-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def afl_step(
    mixing: np.ndarray, losses: np.ndarray, step_size: float
) -> np.ndarray:
    """One projected-gradient-ascent update of the adversarial mixing
    weights: project(mixing + step_size * losses) onto the simplex."""
    mixing = np.asarray(mixing, dtype=np.float64)
    if mixing.shape != np.shape(losses):
        raise ValueError("mixing weights and losses must have the same length")
    if (mixing < -1e-12).any() or abs(mixing.sum() - 1.0) > 1e-9:
        raise ValueError("mixing weights must form a probability vector")
    if step_size <= 0:
        raise ValueError(f"step_size must be positive, got {step_size}")
    return project_simplex(mixing + step_size * np.asarray(losses, dtype=np.float64))


def afl_aggregate(
    reports: list[ClientReport], mixing: np.ndarray, step_size: float
) -> AggregateOutcome:
    """Worst-case-mixture baseline: ascend the mixing weights on the current
    losses, then combine updates with the new weights."""
    losses, p, deltas = _stack(reports)
    new_mixing = afl_step(mixing, losses, step_size)
    return AggregateOutcome(
        delta=new_mixing @ deltas, mean_loss=float(p @ losses), weights=new_mixing
    )


def aggregate(
    reports: list[ClientReport],
    cfg: StrategyConfig,
    afl_mixing: np.ndarray | None = None,
) -> AggregateOutcome:
    """Dispatch to the configured strategy's combine rule.

    For afl the caller owns the mixing-weight state: pass the current
    weights (restricted to the participating clients) and read the updated
    ones back from ``outcome.weights``.
    """
    if cfg.tag == "fedavg":
        return fedavg_aggregate(reports)
    if cfg.tag == "vred":
        return vred_aggregate(reports, cfg.beta)
    if cfg.tag == "semivred":
        return semivred_aggregate(reports, cfg.beta)
    if cfg.tag == "afl":
        if afl_mixing is None:
            afl_mixing = np.full(len(reports), 1.0 / len(reports))
        return afl_aggregate(reports, afl_mixing, cfg.afl_step_size)
    losses, p, deltas = _stack(reports)
    w = baseline_weights(cfg.tag, losses, p, cfg)
    return AggregateOutcome(delta=w @ deltas, mean_loss=float(p @ losses), weights=w)
