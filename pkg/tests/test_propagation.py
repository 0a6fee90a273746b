import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netmeas.errors import EvaluationError, ParameterError, ShapeError
from netmeas.propagation import (
    MeasurementFunction,
    fd_step,
    joint_moments,
    propagate_lpu,
    propagate_mc,
    validate_lpu_vs_mc,
    write_report,
)
from netmeas.uncertain import MultiNormal, Normal, RandomStream, Uniform, UncertainVector

add = MeasurementFunction(lambda x: x[0] + x[1], 2)
add_vec = MeasurementFunction(lambda X: X[:, 0] + X[:, 1], 2, vectorized=True)
square = MeasurementFunction(lambda X: X[:, 0] ** 2, 1, vectorized=True)


class TestLPU:
    def test_three_four_five(self):
        r = propagate_lpu(add, UncertainVector.independent([1, 2], [3, 4]))
        assert abs(r.std_uncertainty - 5) <= 1e-12
        assert r.method == "LPU" and r.trials == 0 and r.seed is None
        lo, hi, level = r.coverage_interval
        assert level == 0.95 and math.isclose(hi - r.estimate, 1.96 * 5)

    def test_product(self):
        f = MeasurementFunction(lambda x: x[0] * x[1], 2)
        r = propagate_lpu(f, UncertainVector.independent([2, 3], [0.1, 0.2]))
        # (3*0.1)^2 + (2*0.2)^2 = 0.25
        assert math.isclose(r.std_uncertainty, 0.5, rel_tol=1e-8)

    def test_perfect_cancellation(self):
        f = MeasurementFunction(lambda x: x[0] - x[1], 2)
        r = propagate_lpu(f, UncertainVector([5, 5], [[4, 4], [4, 4]]))
        assert r.std_uncertainty < 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_affine_exact_on_dyadic_inputs(self, d, seed):
        # dyadic a and x make every f(x +- h) exact, so any error would come
        # from the method itself
        rng = np.random.default_rng(seed)
        a = rng.integers(-80, 80, d) / 8
        x = rng.integers(-800, 800, d) / 8
        A = rng.standard_normal((d, d))
        V = A @ A.T + 0.1 * np.eye(d)
        f = MeasurementFunction(lambda v: float(a @ v) + 3.0, d)
        r = propagate_lpu(f, UncertainVector(x, V))
        assert math.isclose(r.std_uncertainty**2, a @ V @ a, rel_tol=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_affine_within_rounding_bound(self, d, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-10, 10, d)
        x = rng.uniform(-100, 100, d)
        V = np.diag(rng.uniform(0.1, 2, d))
        f = MeasurementFunction(lambda v: float(a @ v) + 3.0, d)
        r = propagate_lpu(f, UncertainVector(x, V))
        # each sensitivity is off by at most about eps * |f| / h
        eps = np.finfo(float).eps
        scale = np.abs(a) @ np.abs(x) + 3.0 + np.abs(a).sum()
        dc = 4 * eps * scale / np.array([fd_step(v) for v in x])
        bound = 2 * np.abs(a) @ V @ dc + dc @ V @ dc
        assert abs(r.std_uncertainty**2 - a @ V @ a) <= bound

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((3, 3))
        V = A @ A.T + 0.1 * np.eye(3)
        x = rng.uniform(0.5, 2, 3)
        p = rng.permutation(3)
        inv = np.argsort(p)
        f = MeasurementFunction(lambda v: v[0] * np.exp(0.3 * v[1]) / v[2], 3)
        g = MeasurementFunction(lambda v: f(v[inv]), 3)
        u1 = propagate_lpu(f, UncertainVector(x, V)).std_uncertainty
        u2 = propagate_lpu(g, UncertainVector(x[p], V[np.ix_(p, p)])).std_uncertainty
        assert abs(u1 - u2) <= 1e-12 * u1

    def test_non_finite(self):
        f = MeasurementFunction(lambda x: math.log(x[0]) if x[0] > 0 else float("nan"), 1)
        with pytest.raises(EvaluationError):
            propagate_lpu(f, UncertainVector.independent([0.0], [1.0]))

    def test_arity(self):
        with pytest.raises(ShapeError):
            propagate_lpu(add, UncertainVector.independent([1, 2, 3], [1, 1, 1]))

    def test_step_is_power_of_two(self):
        for x in (0.0, 1.0, -37.5, 1e6):
            h = fd_step(x)
            assert math.log2(h).is_integer() and 0.5e-6 * (1 + abs(x)) < h <= 1e-6 * (1 + abs(x))


class TestMonteCarlo:
    def test_identity(self):
        f = MeasurementFunction(lambda X: X[:, 0], 1, vectorized=True)
        r = propagate_mc(f, [Normal(0, 1)], 100_000, RandomStream(1))
        assert abs(r.estimate) < 0.01 and abs(r.std_uncertainty - 1) < 0.02
        assert r.method == "MonteCarlo" and r.trials == 100_000 and r.seed == 1

    def test_sum_agrees_with_lpu(self):
        r = propagate_mc(add_vec, [Normal(1, 3), Normal(2, 4)], 100_000, RandomStream(2))
        assert abs(r.std_uncertainty - 5) < 0.05

    def test_chi_square_moments(self):
        r = propagate_mc(square, [Normal(0, 1)], 100_000, RandomStream(3))
        assert abs(r.estimate - 1) < 0.02 and abs(r.std_uncertainty - math.sqrt(2)) < 0.02 * math.sqrt(2)

    def test_deterministic_and_row_mode(self):
        a = propagate_mc(add_vec, [Normal(0, 1), Uniform(0, 1)], 5000, RandomStream(4))
        b = propagate_mc(add, [Normal(0, 1), Uniform(0, 1)], 5000, RandomStream(4))
        assert a == b

    def test_workers_identical(self):
        kw = dict(batch_size=1000)
        seq = propagate_mc(add_vec, [Normal(0, 1), Normal(0, 2)], 7500, RandomStream(5), **kw)
        par = propagate_mc(add_vec, [Normal(0, 1), Normal(0, 2)], 7500, RandomStream(5), workers=4, **kw)
        assert seq == par

    def test_multinormal_input(self):
        r = propagate_mc(add_vec, MultiNormal([0, 0], [[1, 1], [1, 1]]), 20_000, RandomStream(6))
        assert abs(r.std_uncertainty - 2) < 0.05

    def test_min_trials(self):
        with pytest.raises(ParameterError):
            propagate_mc(add_vec, [Normal(0, 1), Normal(0, 1)], 999, RandomStream(0))

    def test_reports_offending_index(self):
        f = MeasurementFunction(lambda X: np.where(X[:, 0] > 2.5, np.inf, X[:, 0]), 1, vectorized=True)
        with pytest.raises(EvaluationError) as info:
            propagate_mc(f, [Normal(0, 1)], 10_000, RandomStream(7))
        _, values = propagate_mc(MeasurementFunction(lambda X: X[:, 0], 1, vectorized=True), [Normal(0, 1)],
                                 10_000, RandomStream(7), return_values=True)
        assert info.value.index == int(np.flatnonzero(values > 2.5)[0])

    def test_convergence_rate(self):
        sizes = [1000, 10_000, 100_000]
        spread = []
        for n in sizes:
            us = [propagate_mc(square, [Normal(1, 0.5)], n, RandomStream(100 + s)).std_uncertainty for s in range(30)]
            spread.append(np.std(us, ddof=1))
        slope = np.polyfit(np.log(sizes), np.log(spread), 1)[0]
        assert abs(slope + 0.5) <= 0.15


class TestValidation:
    def test_linear_accepts(self):
        v = validate_lpu_vs_mc(add_vec, [Normal(1, 3), Normal(2, 4)], 100_000, RandomStream(8), 0.02)
        assert v.accepted

    def test_stationary_point_rejects(self):
        v = validate_lpu_vs_mc(square, [Normal(0, 1)], 100_000, RandomStream(9), 0.02)
        assert not v.accepted and v.u_lpu < 1e-6 and abs(v.u_mc - math.sqrt(2)) < 0.05

    def test_infinite_tolerance(self):
        assert validate_lpu_vs_mc(square, [Normal(0, 1)], 1000, RandomStream(10), math.inf)

    def test_joint_moments(self):
        v = joint_moments([Normal(1, 2), Uniform(0, 12)])
        assert np.allclose(v.estimates, [1, 6]) and np.allclose(v.covariance, np.diag([4, 12]))

    def test_report(self, tmp_path):
        v = validate_lpu_vs_mc(add_vec, [Normal(1, 3), Normal(2, 4)], 2000, RandomStream(11), 0.05)
        write_report([v.lpu, v.mc], tmp_path / "r.json", extra={"seed": 11})
        doc = json.loads((tmp_path / "r.json").read_text())
        assert {"estimate", "std_uncertainty", "coverage_interval", "method", "trials", "seed"} <= set(doc["results"][1])
        assert doc["results"][1]["seed"] == 11
