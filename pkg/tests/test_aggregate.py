import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import full_batch_reports, make_equal_federation, reports_from_vectors
from fedvar import aggregate as A
from fedvar import models as M
from fedvar import oracles as O
from fedvar.rng import Rng

FROZEN_LOSSES = np.array([0.2, 0.5, 0.8])

loss_vectors = st.lists(
    st.floats(0.01, 10.0, allow_nan=False), min_size=2, max_size=20
).map(np.array)


class TestFedavgAggregate:
    def test_identical_updates_pass_through(self):
        v = np.array([1.0, -2.0, 3.0])
        out = A.fedavg_aggregate(reports_from_vectors([0.1, 0.2], [v, v]))
        np.testing.assert_allclose(out.delta, v, atol=1e-15)

    def test_opposite_updates_cancel(self):
        v = np.array([1.0, -2.0])
        out = A.fedavg_aggregate(reports_from_vectors([0.3, 0.3], [v, -v]))
        np.testing.assert_array_equal(out.delta, np.zeros(2))

    def test_matches_direct_weighted_sum(self):
        gen = Rng(1).child("g").generator()
        deltas = [gen.standard_normal(5) for _ in range(3)]
        weights = [0.2, 0.3, 0.5]
        out = A.fedavg_aggregate(reports_from_vectors([0.1, 0.9, 0.4], deltas, weights))
        expected = sum(w * d for w, d in zip(weights, deltas))
        np.testing.assert_allclose(out.delta, expected, atol=1e-15)

    def test_partial_participation_renormalizes(self):
        # weights 0.25/0.25 from a larger federation -> renormalized to 0.5/0.5
        v = np.array([2.0])
        out = A.fedavg_aggregate(reports_from_vectors([1.0, 3.0], [v, v], [0.25, 0.25]))
        assert out.mean_loss == pytest.approx(2.0)
        np.testing.assert_allclose(out.weights, [0.5, 0.5])

    def test_dimension_mismatch_rejected(self):
        reports = reports_from_vectors([0.1, 0.2], [np.zeros(3), np.zeros(4)])
        with pytest.raises(ValueError):
            A.fedavg_aggregate(reports)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            A.fedavg_aggregate([])


class TestVredAggregate:
    def test_beta_zero_is_fedavg_bitwise(self):
        gen = Rng(2).child("g").generator()
        deltas = [gen.standard_normal(6) for _ in range(4)]
        losses = [0.4, 0.9, 0.1, 0.6]
        fa = A.fedavg_aggregate(reports_from_vectors(losses, deltas))
        vr = A.vred_aggregate(reports_from_vectors(losses, deltas), beta=0.0)
        np.testing.assert_array_equal(fa.delta, vr.delta)

    def test_equal_losses_reduce_to_fedavg(self):
        gen = Rng(3).child("g").generator()
        deltas = [gen.standard_normal(6) for _ in range(3)]
        fa = A.fedavg_aggregate(reports_from_vectors([0.5] * 3, deltas))
        vr = A.vred_aggregate(reports_from_vectors([0.5] * 3, deltas), beta=2.0)
        np.testing.assert_allclose(vr.delta, fa.delta, atol=1e-15)

    def test_negative_beta_rejected(self):
        with pytest.raises(ValueError):
            A.vred_aggregate(reports_from_vectors([0.1], [np.zeros(2)]), beta=-1.0)

    def test_combine_rule_formula(self):
        gen = Rng(4).child("g").generator()
        losses = [0.2, 0.7, 1.1]
        deltas = [gen.standard_normal(4) for _ in range(3)]
        beta = 0.3
        out = A.vred_aggregate(reports_from_vectors(losses, deltas), beta)
        p = np.full(3, 1 / 3)
        fbar = np.dot(p, losses)
        dbar = sum(pi * d for pi, d in zip(p, deltas))
        expected = dbar + 2 * beta * sum(
            pi * (l - fbar) * (d - dbar) for pi, l, d in zip(p, losses, deltas)
        )
        np.testing.assert_allclose(out.delta, expected, atol=1e-14)


class TestLemmaWeights:
    def test_vred_frozen_example(self):
        w, beta_max = A.vred_weights(FROZEN_LOSSES, beta=0.5)
        np.testing.assert_allclose(w, [7 / 30, 10 / 30, 13 / 30], atol=1e-12)
        assert beta_max == pytest.approx(1 / 0.6)

    def test_semivred_frozen_example(self):
        w, beta_max = A.semivred_weights(FROZEN_LOSSES, beta=0.5)
        np.testing.assert_allclose(w, [0.3, 0.3, 0.4], atol=1e-12)
        assert beta_max == pytest.approx(5.0)

    def test_equal_losses_give_uniform_weights(self):
        for fn in (A.vred_weights, A.semivred_weights):
            w, beta_max = fn(np.full(5, 0.7), beta=3.0)
            np.testing.assert_allclose(w, 0.2, atol=1e-15)
            assert beta_max == math.inf

    @pytest.mark.parametrize("fn", [A.vred_weights, A.semivred_weights])
    def test_positivity_flips_at_beta_max(self, fn):
        gen = Rng(5).child("g").generator()
        for _ in range(25):
            losses = gen.uniform(0.05, 2.0, int(gen.integers(2, 12)))
            if np.ptp(losses) < 1e-6:
                continue
            _, beta_max = fn(losses, 0.0)
            lo, _ = fn(losses, beta_max * (1 - 1e-6))
            hi, _ = fn(losses, beta_max * (1 + 1e-6))
            assert lo.min() > 0
            assert hi.min() < 0

    @given(loss_vectors, st.floats(0.0, 5.0))
    @settings(max_examples=200, deadline=None)
    def test_weights_sum_to_one(self, losses, beta):
        for fn in (A.vred_weights, A.semivred_weights):
            w, _ = fn(losses, beta)
            assert abs(w.sum() - 1.0) <= 1e-10

    @given(loss_vectors, st.floats(0.001, 5.0))
    @settings(max_examples=200, deadline=None)
    def test_best_client_kept_higher_by_semivred(self, losses, frac):
        # at any shared admissible beta, the minimum-loss client's weight
        # under the one-sided rule is >= its weight under the two-sided rule
        _, bmax_v = A.vred_weights(losses, 0.0)
        _, bmax_s = A.semivred_weights(losses, 0.0)
        bmax = min(bmax_v, bmax_s)
        beta = frac * (bmax if math.isfinite(bmax) else 1.0)
        wv, _ = A.vred_weights(losses, beta)
        ws, _ = A.semivred_weights(losses, beta)
        i = int(np.argmin(losses))
        assert ws[i] >= wv[i] - 1e-12

    def test_frozen_remark_comparison(self):
        wv, _ = A.vred_weights(FROZEN_LOSSES, 0.5)
        ws, _ = A.semivred_weights(FROZEN_LOSSES, 0.5)
        assert ws[0] == pytest.approx(0.3)
        assert wv[0] == pytest.approx(7 / 30)
        assert ws[0] > wv[0]


class TestAggregateEqualsLemmaWeights:
    @pytest.mark.parametrize(
        "tag,agg,weights_fn",
        [
            ("vred", A.vred_aggregate, A.vred_weights),
            ("semivred", A.semivred_aggregate, A.semivred_weights),
        ],
    )
    def test_combine_rule_equals_weighted_gradient_sum(self, tag, agg, weights_fn):
        federation = make_equal_federation()
        arch = M.SoftmaxRegression(4, 3)
        params = M.init_params(Rng(31).child("i"), arch)
        eta = 0.01
        reports = full_batch_reports(params, federation, eta=eta)
        losses = np.array([r.loss_at_start for r in reports])
        beta = 0.4
        out = agg(reports, beta)
        w, _ = weights_fn(losses, beta)
        grads = np.stack(
            [M.loss_and_grad(params, c.train.x, c.train.y)[1] for c in federation.clients]
        )
        np.testing.assert_allclose(out.delta, eta * (w @ grads), atol=1e-10)
        np.testing.assert_allclose(out.weights, w, atol=1e-15)

    def test_unequal_shares_suppress_diagnostics(self, small_federation):
        params = M.init_params(Rng(32).child("i"), M.SoftmaxRegression(4, 3))
        reports = full_batch_reports(params, small_federation)
        out = A.vred_aggregate(reports, 0.1)
        assert out.weights is None and out.beta_max is None


class TestGradientConsistency:
    @pytest.mark.parametrize("tag,agg", [("vred", A.vred_aggregate), ("semivred", A.semivred_aggregate)])
    def test_aggregate_matches_objective_fd(self, tag, agg, small_federation):
        params = M.init_params(Rng(33).child("i"), M.SoftmaxRegression(4, 3))
        eta = 0.01
        reports = full_batch_reports(params, small_federation, eta=eta)
        beta = 0.4
        fd = O.objective_gradient_fd(tag, params, small_federation, A.StrategyConfig(tag, beta=beta))
        out = agg(reports, beta)
        rel = np.abs(out.delta / eta - fd).max() / np.abs(fd).max()
        assert rel <= 1e-4


class TestBaselineWeights:
    def setup_method(self):
        self.p = np.full(3, 1 / 3)

    def test_equal_losses_reduce_to_shares(self):
        losses = np.full(3, 0.6)
        for tag in ("qffl", "term", "propfair", "gifair"):
            cfg = A.StrategyConfig(tag, q=0.5, tilt=1.0, loss_cap=2.0, gifair_lambda=0.05)
            np.testing.assert_allclose(
                A.baseline_weights(tag, losses, self.p, cfg), self.p, atol=1e-12
            )

    def test_term_tilt_to_zero_recovers_shares(self):
        cfg = A.StrategyConfig("term", tilt=1e-10)
        w = A.baseline_weights("term", FROZEN_LOSSES, self.p, cfg)
        np.testing.assert_allclose(w, self.p, atol=1e-9)

    def test_qffl_zero_exponent_recovers_shares(self):
        cfg = A.StrategyConfig("qffl", q=0.0)
        w = A.baseline_weights("qffl", FROZEN_LOSSES, self.p, cfg)
        np.testing.assert_allclose(w, self.p, atol=1e-15)

    def test_deltafl_frozen_example(self):
        cfg = A.StrategyConfig("deltafl", cvar_alpha=0.4)
        w = A.baseline_weights("deltafl", np.array([1.0, 2, 3, 4, 5]), np.full(5, 0.2), cfg)
        np.testing.assert_array_equal(w, [0, 0, 0, 0.5, 0.5])

    def test_gifair_frozen_example(self):
        cfg = A.StrategyConfig("gifair", gifair_lambda=0.05)
        w = A.baseline_weights("gifair", FROZEN_LOSSES, self.p, cfg)
        np.testing.assert_allclose(w, [1 / 3 - 0.1, 1 / 3, 1 / 3 + 0.1], atol=1e-12)

    def test_gifair_ties_contribute_nothing(self):
        cfg = A.StrategyConfig("gifair", gifair_lambda=0.05)
        w = A.baseline_weights("gifair", np.array([0.5, 0.5, 0.9]), self.p, cfg)
        np.testing.assert_allclose(w[:2], 1 / 3 - 0.05, atol=1e-12)
        assert w[2] == pytest.approx(1 / 3 + 0.1)

    def test_propfair_rejects_capped_losses_when_strict(self):
        cfg = A.StrategyConfig("propfair", loss_cap=1.0, clamp_losses=False)
        with pytest.raises(ValueError):
            A.baseline_weights("propfair", np.array([0.5, 1.5]), np.array([0.5, 0.5]), cfg)

    def test_propfair_clamps_by_default(self):
        cfg = A.StrategyConfig("propfair", loss_cap=1.0)
        w = A.baseline_weights("propfair", np.array([0.5, 1.5]), np.array([0.5, 0.5]), cfg)
        assert abs(w.sum() - 1.0) <= 1e-12
        assert w[1] > 0.99  # clamped margin concentrates the weight

    @pytest.mark.parametrize(
        "tag,cfg",
        [
            ("qffl", A.StrategyConfig("qffl", q=0.7)),
            ("term", A.StrategyConfig("term", tilt=1.3)),
            ("propfair", A.StrategyConfig("propfair", loss_cap=3.0)),
            ("gifair", A.StrategyConfig("gifair", gifair_lambda=0.03)),
        ],
    )
    def test_weights_realize_objective_gradient(self, tag, cfg, small_federation):
        # FD gradient of the objective equals scale * sum_i w_i grad f_i,
        # where the scale is the normalization absorbed by the weights
        params = M.init_params(Rng(34).child("i"), M.SoftmaxRegression(4, 3))
        losses = O.client_losses(params, small_federation)
        p = small_federation.weights()
        w = A.baseline_weights(tag, losses, p, cfg)
        grads = np.stack(
            [
                M.loss_and_grad(params, c.train.x, c.train.y)[1]
                for c in small_federation.clients
            ]
        )
        if tag == "qffl":
            scale = float(p @ ((cfg.q + 1.0) * losses**cfg.q))
        elif tag == "term":
            scale = cfg.tilt * float(p @ np.exp(cfg.tilt * losses))
        elif tag == "propfair":
            scale = float(p @ (1.0 / (cfg.loss_cap - losses)))
        else:
            scale = 1.0
        fd = O.objective_gradient_fd(tag, params, small_federation, cfg)
        np.testing.assert_allclose(scale * (w @ grads), fd, rtol=2e-4, atol=1e-8)


class TestSimplexProjection:
    def test_already_on_simplex_is_fixed_point(self):
        v = np.array([0.2, 0.5, 0.3])
        np.testing.assert_allclose(A.project_simplex(v), v, atol=1e-12)

    def test_shift_invariance(self):
        v = np.array([0.1, -0.4, 2.0, 0.7])
        np.testing.assert_allclose(A.project_simplex(v), A.project_simplex(v + 3.7), atol=1e-12)

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=20))
    @settings(max_examples=200, deadline=None)
    def test_projection_contract(self, values):
        out = A.project_simplex(np.array(values))
        assert (out >= 0).all()
        assert abs(out.sum() - 1.0) <= 1e-9


class TestAflStep:
    def test_equal_losses_keep_mixing_unchanged(self):
        lam = np.full(4, 0.25)
        out = A.afl_step(lam, np.full(4, 0.8), 0.5)
        np.testing.assert_allclose(out, lam, atol=1e-12)

    def test_large_step_concentrates_on_argmax(self):
        lam = np.full(4, 0.25)
        out = A.afl_step(lam, np.array([0.1, 0.2, 5.0, 0.3]), 100.0)
        assert out[2] >= 0.99

    def test_result_is_probability_vector(self):
        out = A.afl_step(np.array([0.7, 0.2, 0.1]), np.array([1.0, 3.0, 2.0]), 0.4)
        assert (out >= 0).all()
        assert abs(out.sum() - 1.0) <= 1e-9

    def test_invalid_mixing_rejected(self):
        with pytest.raises(ValueError):
            A.afl_step(np.array([0.7, 0.7]), np.array([1.0, 1.0]), 0.1)


class TestDispatcher:
    @pytest.mark.parametrize("tag", A.STRATEGY_TAGS)
    def test_every_strategy_produces_finite_update(self, tag, small_federation):
        params = M.init_params(Rng(35).child("i"), M.SoftmaxRegression(4, 3))
        reports = full_batch_reports(params, small_federation)
        cfg = A.StrategyConfig(
            tag, beta=0.1, gifair_lambda=0.01, q=0.5, tilt=0.5, loss_cap=5.0, cvar_alpha=0.5
        )
        out = A.aggregate(reports, cfg)
        assert np.isfinite(out.delta).all()
        assert np.isfinite(out.mean_loss)

    def test_unknown_tag_rejected(self):
        with pytest.raises(ValueError):
            A.StrategyConfig("magic")
