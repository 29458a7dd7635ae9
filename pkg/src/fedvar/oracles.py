"""Independent brute-force verifiers.

Every strategy objective is evaluated here by direct summation, and
differentiated by central finite differences, without touching any code
path in ``aggregate``.  The test suite uses these as ground truth for the
combine rules; the CLI exposes them under ``run --verify``.
"""

from __future__ import annotations

import math

import numpy as np

from . import models
from .aggregate import StrategyConfig
from .data import Federation, LabeledPool
from .models import ModelParams


def objective_value(
    tag: str, losses: np.ndarray, p: np.ndarray, cfg: StrategyConfig
) -> float:
    """Direct evaluation of a strategy's global objective from client losses.

    fedavg    sum_i p_i f_i
    vred      sum_i p_i f_i + beta sum_i p_i (f_i - fbar)^2
    semivred  sum_i p_i f_i + beta sum_i p_i (f_i - fbar)_+^2
    gifair    sum_i p_i f_i + lambda sum_{i<j} |f_i - f_j|
    qffl      sum_i p_i f_i^(q+1)
    term      sum_i p_i exp(tilt f_i)
    propfair  -sum_i p_i log(loss_cap - f_i)
    afl       max_i f_i
    deltafl   mean of the ceil(cvar_alpha n) largest losses

    fbar is the p-weighted mean loss.
    """
    losses = np.asarray(losses, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if losses.shape != p.shape:
        raise ValueError("losses and p must have the same length")
    if abs(p.sum() - 1.0) > 1e-9 or (p < 0).any():
        raise ValueError("p must be a probability vector")
    fbar = float(p @ losses)
    if tag == "fedavg":
        return fbar
    if tag == "vred":
        return fbar + cfg.beta * float(p @ (losses - fbar) ** 2)
    if tag == "semivred":
        return fbar + cfg.beta * float(p @ np.maximum(losses - fbar, 0.0) ** 2)
    if tag == "gifair":
        pairwise = sum(
            abs(losses[i] - losses[j])
            for i in range(losses.size)
            for j in range(i + 1, losses.size)
        )
        return fbar + cfg.gifair_lambda * pairwise
    if tag == "qffl":
        return float(p @ np.power(losses, cfg.q + 1.0))
    if tag == "term":
        return float(p @ np.exp(cfg.tilt * losses))
    if tag == "propfair":
        margin = cfg.loss_cap - losses
        if (margin <= 0).any():
            raise ValueError(f"propfair objective undefined: max loss {losses.max()} >= loss_cap")
        return -float(p @ np.log(margin))
    if tag == "afl":
        return float(losses.max())
    if tag == "deltafl":
        m = math.ceil(cfg.cvar_alpha * losses.size)
        return float(np.sort(losses)[-m:].mean())
    raise ValueError(f"unknown strategy tag {tag!r}")


def client_losses(params: ModelParams, federation: Federation) -> np.ndarray:
    """Full local train loss of every client at the given parameters."""
    return np.array(
        [
            models.loss(params, c.train.x, c.train.y, c.class_weights)
            for c in federation.clients
        ]
    )


def eval_objective(
    tag: str, params: ModelParams, federation: Federation, cfg: StrategyConfig
) -> float:
    """Strategy objective at ``params``, built from directly evaluated client
    losses."""
    return objective_value(tag, client_losses(params, federation), federation.weights(), cfg)


def objective_gradient_fd(
    tag: str,
    params: ModelParams,
    federation: Federation,
    cfg: StrategyConfig,
    eps: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient of the strategy objective over the flat
    parameter vector."""
    return models.central_difference(
        lambda theta: eval_objective(tag, ModelParams(params.arch, theta), federation, cfg),
        params.theta,
        eps,
    )


def class_mean_losses(params: ModelParams, pool: LabeledPool) -> np.ndarray:
    """Mean loss on each class's samples in the pool (nan for empty classes)."""
    out = np.full(pool.n_classes, np.nan)
    for j, rows in enumerate(pool.class_rows):
        if rows.size:
            out[j] = models.loss(params, pool.data.x[rows], pool.data.y[rows])
    return out


def semivred_classwise_objective(
    params: ModelParams, federation: Federation, pool: LabeledPool, beta: float
) -> float:
    """Semi-variance objective evaluated through the label-shift
    decomposition.

    For shared-pool clients (equal weights, f_i = sum_j m_ij lbar_j where
    m_i is client i's class marginal and lbar_j the pool's class-j mean
    loss):

        F = sum_j mbar_j lbar_j
          + (beta/n) sum_i ( sum_j (m_ij - mbar_j) lbar_j )_+^2

    with mbar the average client marginal.  Must agree with the direct
    objective to roundoff; disagreement means the decomposition assumptions
    are violated.
    """
    if not federation.shared_pool:
        raise ValueError("classwise decomposition requires a shared-pool federation")
    lbar = class_mean_losses(params, pool)
    marginals = np.stack([c.class_marginal for c in federation.clients])
    if np.isnan(lbar[marginals.sum(axis=0) > 0]).any():
        raise ValueError("pool is missing samples for a weighted class")
    n = federation.n_clients
    mbar = marginals.mean(axis=0)
    base = float(mbar @ np.where(np.isnan(lbar), 0.0, lbar))
    devs = (marginals - mbar) @ np.where(np.isnan(lbar), 0.0, lbar)
    return base + (beta / n) * float(np.sum(np.maximum(devs, 0.0) ** 2))


def one_vs_rest_closed_form(
    lbar0: float, lbar1: float, n_clients: int, alpha: float, beta: float
) -> float:
    """Closed-form semi-variance objective for the one-vs-rest marginal
    family (client 0 skewed toward class 0, the rest toward class 1):

        F = fbar + beta (n-1)^2 (1-alpha)^2 / n^3 * (lbar0 - lbar1)^2
        fbar = (alpha/2 + (1-alpha)/n) lbar0
             + (alpha/2 + (1-alpha)(n-1)/n) lbar1

    Valid when lbar0 >= lbar1, i.e. the lone skewed client is the one whose
    loss sits above the average (with the roles reversed the above-average
    set has n-1 members and the regularizer coefficient changes).
    """
    if lbar0 < lbar1:
        raise ValueError("closed form assumes lbar0 >= lbar1")
    n = n_clients
    fbar = (alpha / 2.0 + (1.0 - alpha) / n) * lbar0 + (
        alpha / 2.0 + (1.0 - alpha) * (n - 1) / n
    ) * lbar1
    reg = beta * (n - 1) ** 2 * (1.0 - alpha) ** 2 / n**3 * (lbar0 - lbar1) ** 2
    return fbar + reg
