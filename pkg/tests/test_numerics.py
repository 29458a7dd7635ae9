import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedvar.numerics import dirichlet_sample, softmax
from fedvar.rng import Rng


class TestRng:
    def test_same_seed_same_stream(self):
        a = Rng(7).child("x").generator().standard_normal(8)
        b = Rng(7).child("x").generator().standard_normal(8)
        np.testing.assert_array_equal(a, b)

    def test_distinct_labels_distinct_streams(self):
        a = Rng(7).child("x").generator().standard_normal(8)
        b = Rng(7).child("y").generator().standard_normal(8)
        assert not np.array_equal(a, b)

    def test_substreams_order_independent(self):
        root = Rng(3)
        # drawing from one child must not perturb a sibling
        first = root.child("a").generator().standard_normal(4)
        root.child("b").generator().standard_normal(1000)
        second = root.child("a").generator().standard_normal(4)
        np.testing.assert_array_equal(first, second)

    def test_nested_labels(self):
        a = Rng(1).child("local", 3, 12).generator().standard_normal(2)
        b = Rng(1).child("local").child(3).child(12).generator().standard_normal(2)
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("seed", [-1, 2**64])
    def test_seed_range(self, seed):
        with pytest.raises(ValueError):
            Rng(seed)


class TestSoftmax:
    def test_uniform_on_zeros(self):
        np.testing.assert_allclose(softmax(np.zeros(3)), np.full(3, 1 / 3), rtol=0, atol=0)

    def test_no_overflow_on_large_inputs(self):
        out = softmax(np.array([1000.0, 0.0]))
        assert np.isfinite(out).all()
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-12)

    def test_matches_direct_evaluation(self):
        z = np.array([1.0, 2.0, 3.0])
        direct = np.exp(z) / np.exp(z).sum()
        np.testing.assert_allclose(softmax(z), direct, rtol=1e-12)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            softmax(np.array([0.0, np.nan]))

    def test_rowwise_on_matrices(self):
        z = np.array([[0.0, 0.0], [5.0, 4.0]])
        out = softmax(z)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)

    @given(
        st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=16),
        st.floats(-1e5, 1e5),
    )
    @settings(max_examples=100, deadline=None)
    def test_valid_distribution_and_shift_invariance(self, values, shift):
        z = np.array(values)
        p = softmax(z)
        assert (p > 0).all() or np.isclose(p.sum(), 1.0)  # underflow may zero entries
        assert abs(p.sum() - 1.0) <= 1e-12
        np.testing.assert_allclose(softmax(z + shift), p, atol=1e-12)


class TestDirichletSample:
    def test_huge_concentration_is_uniform(self):
        v = dirichlet_sample(Rng(1).child("d"), 1e9, 4)
        np.testing.assert_allclose(v, 0.25, atol=1e-3)

    def test_small_concentration_concentrates_mass(self):
        # empirical: mean max-entry over many draws is dominated by one class
        gen = Rng(0).child("dir").generator()
        maxes = [dirichlet_sample(gen, 0.05, 10).max() for _ in range(1000)]
        assert np.mean(maxes) > 0.5

    def test_probability_vector_contract(self):
        gen = Rng(2).child("dir").generator()
        for conc in (0.05, 1.0, 50.0):
            v = dirichlet_sample(gen, conc, 7)
            assert v.shape == (7,)
            assert (v > 0).all()
            assert abs(v.sum() - 1.0) <= 1e-12

    @pytest.mark.parametrize("conc", [-1.0, 0.0])
    def test_nonpositive_concentration_rejected(self, conc):
        with pytest.raises(ValueError):
            dirichlet_sample(Rng(1), conc, 3)

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            dirichlet_sample(Rng(1), 1.0, 0)
