import numpy as np
import pytest

from fedvar import data as D
from fedvar import models as M
from fedvar.localtrain import ClientReport, LocalConfig, local_sgd
from fedvar.rng import Rng


@pytest.fixture
def small_federation():
    """Four clients over a 3-class mixture, unequal sizes (Dirichlet split)."""
    rng = Rng(123)
    pool = D.make_gaussian_mixture(rng.child("pool"), 3, 4, 40, 2.5)
    return D.dirichlet_partition(rng.child("part"), pool, 4, 1.0)


def make_equal_federation(seed=7, n_clients=4, n_classes=3, dim=4, per_client=30):
    """Equal-share federation (same train size everywhere), for the
    equal-weight diagnostic identities."""
    rng = Rng(seed)
    gen = rng.child("data").generator()
    clients = []
    for cid in range(n_clients):
        x = gen.standard_normal((2 * per_client, dim)) + gen.standard_normal(dim)
        y = gen.integers(0, n_classes, 2 * per_client)
        clients.append(
            D.ClientDataset(
                client_id=cid,
                train=D.Dataset(x[:per_client], y[:per_client]),
                test=D.Dataset(x[per_client:], y[per_client:]),
                weight=1.0 / n_clients,
                class_marginal=np.bincount(y[:per_client], minlength=n_classes) / per_client,
            )
        )
    return D.Federation(clients, n_classes, dim)


def full_batch_reports(params, federation, eta=0.01, seed=99):
    """One exact full-batch gradient step per client: delta_i = eta * grad f_i."""
    cfg = LocalConfig(eta=eta, steps=1, batch_size=10**9)
    rng = Rng(seed).child("reports")
    return [local_sgd(params, c, cfg, rng.child(c.client_id)) for c in federation.clients]


def reports_from_vectors(losses, deltas, weights=None) -> list[ClientReport]:
    """Hand-built reports for pure aggregation tests."""
    n = len(losses)
    if weights is None:
        weights = [1.0 / n] * n
    return [
        ClientReport(client_id=i, delta=np.asarray(d, dtype=np.float64), loss_at_start=l, weight=w)
        for i, (l, d, w) in enumerate(zip(losses, deltas, weights))
    ]


@pytest.fixture
def softmax_params():
    arch = M.SoftmaxRegression(4, 3)
    return M.init_params(Rng(5).child("init"), arch)
