"""Self-checks that cross-validate the aggregation rules against the
brute-force oracles on a concrete federation.

``oracles`` never imports ``aggregate``; this module is the one place the
two sides meet, and the CLI exposes it via ``run --verify``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import models, oracles
from .aggregate import (
    StrategyConfig,
    semivred_aggregate,
    semivred_weights,
    vred_aggregate,
    vred_weights,
)
from .data import Federation
from .localtrain import LocalConfig, local_sgd
from .models import Arch, ModelParams
from .rng import Rng


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _full_batch_reports(params: ModelParams, federation: Federation, eta: float, seed: int):
    cfg = LocalConfig(eta=eta, steps=1, batch_size=max(len(c.train) for c in federation.clients))
    rng = Rng(seed).child("verify")
    return [
        local_sgd(params, c, cfg, rng.child(c.client_id)) for c in federation.clients
    ]


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.abs(b).max()), 1e-12)
    return float(np.abs(a - b).max()) / scale


def run_checks(
    federation: Federation, arch: Arch, strategy: StrategyConfig, seed: int
) -> list[CheckResult]:
    """Run the invariant suite at freshly initialized parameters."""
    results: list[CheckResult] = []
    params = models.init_params(Rng(seed).child("init"), arch)
    eta = 1e-2
    reports = _full_batch_reports(params, federation, eta, seed)
    losses = np.array([r.loss_at_start for r in reports])
    p = federation.weights()
    equal_p = bool(np.allclose(p, 1.0 / p.size, rtol=0, atol=1e-12))

    # admissible beta for both rules at the current losses
    _, bmax_v = vred_weights(losses, 0.0)
    _, bmax_s = semivred_weights(losses, 0.0)
    bmax = min(bmax_v, bmax_s)
    beta = strategy.beta if 0 < strategy.beta < bmax else (0.5 * bmax if math.isfinite(bmax) else 0.5)

    for tag, agg in (("vred", vred_aggregate), ("semivred", semivred_aggregate)):
        cfg = StrategyConfig(tag=tag, beta=beta)
        fd = oracles.objective_gradient_fd(tag, params, federation, cfg)
        err = _rel_err(agg(reports, beta).delta / eta, fd)
        results.append(
            CheckResult(
                f"gradient_consistency_{tag}",
                err <= 1e-4,
                f"beta={beta:.6g} max rel err {err:.3g} (tol 1e-4)",
            )
        )

    for tag, weights_fn in (("vred", vred_weights), ("semivred", semivred_weights)):
        w, _ = weights_fn(losses, beta)
        drift = abs(float(w.sum()) - 1.0)
        results.append(
            CheckResult(f"weight_sum_{tag}", drift <= 1e-10, f"|sum-1| = {drift:.3g}")
        )

    if equal_p:
        grads = np.stack(
            [
                models.loss_and_grad(params, c.train.x, c.train.y, c.class_weights)[1]
                for c in federation.clients
            ]
        )
        for tag, weights_fn, agg in (
            ("vred", vred_weights, vred_aggregate),
            ("semivred", semivred_weights, semivred_aggregate),
        ):
            w, _ = weights_fn(losses, beta)
            err = float(np.abs(agg(reports, beta).delta - eta * (w @ grads)).max())
            results.append(
                CheckResult(
                    f"weighted_sum_identity_{tag}",
                    err <= 1e-10,
                    f"max abs deviation {err:.3g} (tol 1e-10)",
                )
            )

    semi = float(p @ np.maximum(losses - p @ losses, 0.0) ** 2)
    var = float(p @ (losses - p @ losses) ** 2)
    results.append(
        CheckResult(
            "semivariance_le_variance",
            semi <= var + 1e-15,
            f"semi {semi:.3g} vs var {var:.3g}",
        )
    )

    for tag, weights_fn in (("vred", vred_weights), ("semivred", semivred_weights)):
        _, bm = weights_fn(losses, 0.0)
        if math.isfinite(bm):
            lo_w, _ = weights_fn(losses, bm * (1 - 1e-6))
            hi_w, _ = weights_fn(losses, bm * (1 + 1e-6))
            ok = lo_w.min() > 0 and hi_w.min() < 0
            results.append(
                CheckResult(
                    f"positivity_boundary_{tag}",
                    ok,
                    f"min w at beta_max*(1-eps) {lo_w.min():.3g}, *(1+eps) {hi_w.min():.3g}",
                )
            )

    if federation.shared_pool:
        from .data import Dataset, LabeledPool

        pool = LabeledPool(
            Dataset(federation.clients[0].train.x, federation.clients[0].train.y),
            federation.n_classes,
        )
        direct = oracles.eval_objective(
            "semivred", params, federation, StrategyConfig("semivred", beta=beta)
        )
        classwise = oracles.semivred_classwise_objective(params, federation, pool, beta)
        err = abs(direct - classwise)
        results.append(
            CheckResult(
                "classwise_decomposition",
                err <= 1e-10,
                f"|direct - classwise| = {err:.3g} (tol 1e-10)",
            )
        )

    return results
