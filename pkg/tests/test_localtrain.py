import numpy as np
import pytest

from fedvar import data as D
from fedvar import models as M
from fedvar.localtrain import LocalConfig, local_sgd
from fedvar.rng import Rng


@pytest.fixture
def client():
    gen = Rng(20).child("c").generator()
    x = gen.standard_normal((25, 4))
    y = gen.integers(0, 3, 25)
    return D.ClientDataset(
        client_id=0,
        train=D.Dataset(x, y),
        test=D.Dataset(x[:5], y[:5]),
        weight=1.0,
        class_marginal=np.bincount(y, minlength=3) / 25,
    )


@pytest.fixture
def params():
    return M.init_params(Rng(21).child("i"), M.SoftmaxRegression(4, 3))


class TestLocalSgd:
    def test_single_full_batch_step_is_exact_gradient(self, client, params):
        eta = 0.05
        report = local_sgd(params, client, LocalConfig(eta=eta, steps=1, batch_size=100), Rng(1).child("l"))
        _, grad = M.loss_and_grad(params, client.train.x, client.train.y)
        np.testing.assert_array_equal(report.delta, eta * grad)

    def test_full_batch_step_matches_fd_oracle(self, client, params):
        eta = 0.05
        report = local_sgd(params, client, LocalConfig(eta=eta, steps=1, batch_size=100), Rng(1).child("l"))
        fd = M.finite_diff_grad(params, client.train.x, client.train.y)
        rel = np.abs(report.delta / eta - fd).max() / np.abs(fd).max()
        assert rel <= 1e-5

    def test_zero_learning_rate_is_null_step(self, client, params):
        report = local_sgd(params, client, LocalConfig(eta=0.0, steps=3, batch_size=8), Rng(2).child("l"))
        np.testing.assert_array_equal(report.delta, np.zeros_like(params.theta))
        assert report.loss_at_start == M.loss(params, client.train.x, client.train.y)

    def test_global_params_not_mutated(self, client, params):
        before = params.theta.copy()
        local_sgd(params, client, LocalConfig(eta=0.5, batch_size=8), Rng(3).child("l"))
        np.testing.assert_array_equal(params.theta, before)

    def test_one_epoch_default_step_count(self, client, params):
        # 25 samples, batch 8 -> 4 batches covering each sample exactly once;
        # with eta summing over disjoint batches the result is deterministic
        a = local_sgd(params, client, LocalConfig(eta=0.1, batch_size=8), Rng(4).child("l"))
        b = local_sgd(params, client, LocalConfig(eta=0.1, batch_size=8), Rng(4).child("l"))
        np.testing.assert_array_equal(a.delta, b.delta)
        assert not np.array_equal(a.delta, np.zeros_like(a.delta))

    def test_stream_isolation_across_clients(self, client, params):
        # running another client in between must not change this client's report
        rng = Rng(5)
        first = local_sgd(params, client, LocalConfig(eta=0.1, batch_size=8), rng.child("l", 0))
        local_sgd(params, client, LocalConfig(eta=0.1, batch_size=8), rng.child("l", 1))
        again = local_sgd(params, client, LocalConfig(eta=0.1, batch_size=8), rng.child("l", 0))
        np.testing.assert_array_equal(first.delta, again.delta)

    def test_report_carries_client_weight(self, client, params):
        report = local_sgd(params, client, LocalConfig(eta=0.1), Rng(6).child("l"))
        assert report.weight == client.weight
        assert report.client_id == client.client_id

    def test_empty_train_set_rejected(self, params):
        empty = D.ClientDataset(
            client_id=0,
            train=D.Dataset(np.zeros((0, 4)), np.zeros(0, dtype=np.int64)),
            test=D.Dataset(np.zeros((1, 4)), np.zeros(1, dtype=np.int64)),
            weight=1.0,
            class_marginal=np.array([1.0, 0.0, 0.0]),
        )
        with pytest.raises(ValueError):
            local_sgd(params, empty, LocalConfig(eta=0.1), Rng(7).child("l"))


class TestLocalConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            LocalConfig(eta=-0.1)
        with pytest.raises(ValueError):
            LocalConfig(eta=0.1, steps=0)
        with pytest.raises(ValueError):
            LocalConfig(eta=0.1, batch_size=0)
