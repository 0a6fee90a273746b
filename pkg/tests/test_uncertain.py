import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from netmeas.errors import InsufficientDataError, ParameterError, ShapeError
from netmeas.uncertain import (
    MultiNormal,
    Normal,
    RandomStream,
    Uniform,
    UncertainScalar,
    UncertainVector,
    distribution_from_dict,
    distribution_to_dict,
    sample,
    summarize,
    validate_covariance,
)


class TestRandomStream:
    def test_same_pair_same_sequence(self):
        a = RandomStream(7, 3).generator().standard_normal(50)
        b = RandomStream(7, 3).generator().standard_normal(50)
        assert np.array_equal(a, b)

    def test_distinct_indices_differ(self):
        a = RandomStream(7, 3).generator().standard_normal(1000)
        b = RandomStream(7, 4).generator().standard_normal(1000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.15

    def test_child_is_stable_and_distinct(self):
        s = RandomStream(11)
        assert s.child(5) == RandomStream(11).child(5)
        assert len({s.child(i).stream_index for i in range(100)}) == 100

    @pytest.mark.parametrize("seed", [-1, 2**64])
    def test_seed_range(self, seed):
        with pytest.raises(ParameterError):
            RandomStream(seed)


class TestSample:
    def test_uniform_mean(self):
        x = sample(Uniform(0, 1), RandomStream(1), 100_000)
        assert x.shape == (100_000, 1)
        assert abs(x.mean() - 0.5) < 0.01

    def test_normal_std(self):
        x = sample(Normal(0, 1), RandomStream(2), 100_000)
        # std of the sample std is about 1/sqrt(2n); 0.02 is about nine of them
        assert abs(x.std(ddof=1) - 1) < 0.02

    def test_rank_one_multinormal(self):
        x = sample(MultiNormal([0, 0], [[1, 1], [1, 1]]), RandomStream(3), 1000)
        assert np.max(np.abs(x[:, 0] - x[:, 1])) < 1e-9

    def test_multinormal_moments(self):
        cov = np.array([[2.0, 0.6, 0.0], [0.6, 1.0, -0.3], [0.0, -0.3, 0.5]])
        mean = np.array([1.0, -2.0, 0.5])
        n = 100_000
        x = sample(MultiNormal(mean, cov), RandomStream(4), n)
        se_mean = np.sqrt(np.diag(cov) / n)
        assert np.all(np.abs(x.mean(axis=0) - mean) < 3 * se_mean)
        emp = np.cov(x, rowvar=False)
        # var of a sample covariance entry: (s_ii s_jj + s_ij^2) / n
        se_cov = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n)
        assert np.all(np.abs(emp - cov) < 3 * se_cov)

    def test_deterministic(self):
        d = Normal(3, 2)
        assert np.array_equal(sample(d, RandomStream(5, 9), 10), sample(d, RandomStream(5, 9), 10))

    def test_bad_n(self):
        with pytest.raises(ParameterError):
            sample(Normal(0, 1), RandomStream(0), 0)

    @pytest.mark.parametrize("make", [lambda: Normal(0, 0), lambda: Normal(0, -1), lambda: Uniform(1, 1),
                                      lambda: MultiNormal([0, 0], [[1, 2], [2, 1]])])
    def test_invalid_parameters(self, make):
        with pytest.raises(ParameterError):
            make()


class TestSummarize:
    def test_constant(self):
        s = summarize([5, 5, 5, 5], 0.95)
        assert (s.mean, s.std, s.interval) == (5, 0, (5, 5))

    def test_forced_values(self):
        s = summarize([1, 2, 3], 0.5)
        assert s.mean == 2 and s.std == 1

    def test_normal_interval(self):
        x = sample(Normal(0, 1), RandomStream(6), 100_000)
        lo, hi = summarize(x, 0.95).interval
        q = stats.norm.ppf(0.975)
        assert abs(lo + q) < 0.03 and abs(hi - q) < 0.03

    def test_too_few(self):
        with pytest.raises(InsufficientDataError):
            summarize([1.0], 0.9)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60),
           st.floats(0.05, 0.9), st.floats(0.01, 0.09))
    def test_interval_widens_with_coverage(self, xs, c, dc):
        a = summarize(xs, c).interval
        b = summarize(xs, c + dc).interval
        assert b[0] <= a[0] and b[1] >= a[1]


class TestCovariance:
    def test_identity(self):
        assert validate_covariance(np.eye(3))

    def test_indefinite(self):
        v = validate_covariance([[1, 2], [2, 1]])
        assert not v
        # eigenvalues of [[a, b], [b, a]] are a +- b
        assert math.isclose(v.min_eigenvalue, -1.0, abs_tol=1e-12)

    def test_rank_one(self):
        v = validate_covariance([[1, 1], [1, 1]])
        assert v and math.isclose(v.max_eigenvalue, 2.0)

    def test_asymmetric(self):
        assert not validate_covariance([[1, 0.5], [0.4, 1]])

    def test_non_square(self):
        with pytest.raises(ShapeError):
            validate_covariance(np.ones((2, 3)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 6), st.floats(1e-6, 1e6), st.integers(0, 2**32 - 1))
    def test_scale_invariant(self, d, scale, seed):
        a = np.random.default_rng(seed).standard_normal((d, d + 2))
        m = a @ a.T
        assert bool(validate_covariance(m)) == bool(validate_covariance(scale * m))


class TestValueTypes:
    def test_scalar_invariants(self):
        with pytest.raises(ParameterError):
            UncertainScalar(1.0, -0.1)
        with pytest.raises(ParameterError):
            UncertainScalar(float("nan"), 0.1)

    def test_vector_checks(self):
        with pytest.raises(ShapeError):
            UncertainVector([1.0, 2.0], np.eye(3))
        with pytest.raises(ParameterError):
            UncertainVector([1.0, 2.0], [[1, 2], [2, 1]])

    def test_independent_and_correlation(self):
        v = UncertainVector.independent([1, 2], [3, 4])
        assert np.allclose(v.covariance, np.diag([9, 16]))
        assert np.allclose(v.correlation(), np.eye(2))
        assert v.component(1) == UncertainScalar(2.0, 4.0)

    @pytest.mark.parametrize("dist", [Normal(1, 2), Uniform(-1, 3), MultiNormal([0, 1], [[1, 0.2], [0.2, 2]])])
    def test_dict_round_trip(self, dist):
        back = distribution_from_dict(distribution_to_dict(dist))
        assert np.allclose(back.moments()[0], dist.moments()[0])
        assert np.allclose(back.moments()[1], dist.moments()[1])

    def test_uniform_moments(self):
        m, v = Uniform(0, 6).moments()
        assert np.allclose(m, [3]) and np.allclose(v, [[3.0]])
