"""Client-side local training.

One call = one client's work for one round: starting from the global
parameters, run K mini-batch SGD steps on the local train set and report
the resulting update ``delta = theta_start - theta_end`` together with the
local loss evaluated at the round's starting parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import ClientDataset
from .models import ModelParams, loss, loss_and_grad
from .rng import Rng, as_generator


@dataclass(frozen=True)
class LocalConfig:
    """Local SGD schedule.

    ``steps=None`` means one pass over the local train set
    (ceil(n_i / batch_size) steps); an explicit step count overrides it.
    ``eta=0`` is allowed and performs null steps (useful for probes).
    """

    eta: float
    steps: int | None = None
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.eta < 0:
            raise ValueError(f"learning rate must be >= 0, got {self.eta}")
        if self.steps is not None and self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class ClientReport:
    """What a client sends back to the server for one round."""

    client_id: int
    delta: np.ndarray
    loss_at_start: float
    weight: float


def local_sgd(
    global_params: ModelParams,
    client: ClientDataset,
    cfg: LocalConfig,
    rng: Rng | np.random.Generator,
) -> ClientReport:
    """Run the client's local steps; never mutates ``global_params``.

    Batches are drawn without replacement within an epoch and reshuffled
    between epochs; a trailing partial batch is kept.  With one step and a
    batch covering the whole train set, ``delta`` equals eta times the
    exact full-batch gradient at the starting parameters.
    """
    x, y = client.train.x, client.train.y
    n = x.shape[0]
    if n == 0:
        raise ValueError(f"client {client.client_id} has an empty train set")
    cw = client.class_weights
    start_loss = loss(global_params, x, y, cw)

    k = cfg.steps if cfg.steps is not None else math.ceil(n / cfg.batch_size)
    gen = as_generator(rng)
    params = global_params.copy()
    order = gen.permutation(n)
    pos = 0
    for _ in range(k):
        if pos >= n:
            order = gen.permutation(n)
            pos = 0
        take = min(cfg.batch_size, n - pos)
        if take == n:
            bx, by = x, y
        else:
            idx = order[pos : pos + take]
            bx, by = x[idx], y[idx]
        pos += take
        _, grad = loss_and_grad(params, bx, by, cw)
        params.theta -= cfg.eta * grad

    return ClientReport(
        client_id=client.client_id,
        delta=global_params.theta - params.theta,
        loss_at_start=start_loss,
        weight=client.weight,
    )
