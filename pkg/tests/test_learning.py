import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import best_split_bruteforce, ridge_oracle
from netmeas.errors import CapabilityError, DataError, ParameterError, RankDeficiencyError, ShapeError
from netmeas.learning import (
    Dataset,
    Forest,
    LearningProblem,
    LinearModel,
    NearestCentroid,
    Ridge,
    TrainedModel,
    Tree,
    bias_variance_estimate,
    empirical_risk,
    fit,
    fit_nearest_centroid,
    fit_ridge,
    kfold_cv,
    kfold_indices,
)
from netmeas.sim import LinearProcess, PolynomialProcess
from netmeas.trees import fit_forest, fit_tree
from netmeas.uncertain import RandomStream


def linear(coef, intercept=0.0):
    return TrainedModel(LinearModel(coef, intercept), LearningProblem(Ridge(0.0)))


class TestRisk:
    def test_perfect_fit(self):
        X = np.arange(6.0).reshape(3, 2)
        m = linear([1.0, 2.0], 0.5)
        assert empirical_risk(m, Dataset(X, m.predict(X))) == 0

    def test_constant_zero(self):
        assert empirical_risk(linear([0.0]), Dataset([[0.0], [1.0]], [1.0, -1.0])) == 1

    def test_zero_one(self):
        m = fit_nearest_centroid(Dataset([[0.0], [10.0]], [0, 1]))
        data = Dataset([[1.0], [2.0], [9.0], [8.0]], [0, 0, 1, 0])
        assert empirical_risk(m, data, "zero_one") == 0.25

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            empirical_risk(linear([1.0, 2.0]), Dataset(np.ones((3, 3)), np.ones(3)))

    def test_dataset_validation(self):
        with pytest.raises(ShapeError):
            Dataset(np.ones((3, 2)), np.ones(4))
        with pytest.raises(DataError):
            Dataset([[np.nan]], [1.0])


class TestRidge:
    def test_square_system_interpolates(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((4, 4))
        y = rng.standard_normal(4)
        m = fit_ridge(Dataset(X, y), 0.0, fit_intercept=False)
        assert empirical_risk(m, Dataset(X, y)) < 1e-20

    def test_huge_lambda(self):
        rng = np.random.default_rng(1)
        X, y = rng.standard_normal((30, 3)), rng.standard_normal(30) + 4
        m = fit_ridge(Dataset(X, y), 1e9)
        assert np.linalg.norm(m.estimator.coef) < 1e-6
        assert np.allclose(m.predict(X), y.mean(), atol=1e-6)

    def test_oracle(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((50, 3))
        y = X @ [1.0, -2.0, 0.5] + 0.3 + 0.1 * rng.standard_normal(50)
        m = fit_ridge(Dataset(X, y), 0.1)
        coef, b = ridge_oracle(X, y, 0.1)
        assert np.allclose(m.estimator.coef, coef, atol=1e-8) and abs(m.estimator.intercept - b) < 1e-8

    def test_singular(self):
        X = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
        with pytest.raises(RankDeficiencyError):
            fit_ridge(Dataset(X, np.arange(5.0)), 0.0)

    def test_path_continuity(self):
        rng = np.random.default_rng(3)
        X, y = rng.standard_normal((40, 4)), rng.standard_normal(40)
        p1 = fit_ridge(Dataset(X, y), 0.5).predict(X)
        p2 = fit_ridge(Dataset(X, y), 0.5 + 1e-9).predict(X)
        assert np.max(np.abs(p1 - p2)) < 1e-7


class TestTree:
    def test_constant_target(self):
        X = np.random.default_rng(0).standard_normal((20, 2))
        t = fit_tree(X, np.full(20, 3.5))
        assert t.n_leaves == 1 and np.all(t.predict(X) == 3.5)

    def test_step(self):
        x = np.array([-3.0, -1.0, -0.5, 0.25, 2.0, 4.0])
        y = (x > 0).astype(float)
        t = fit_tree(x[:, None], y, max_depth=1)
        assert t.threshold[0] == pytest.approx(-0.125)
        assert np.mean((t.predict(x[:, None]) - y) ** 2) == 0

    def test_memorizes_distinct_rows(self):
        rng = np.random.default_rng(1)
        X, y = rng.standard_normal((60, 3)), rng.standard_normal(60)
        assert np.mean((fit_tree(X, y).predict(X) - y) ** 2) == 0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 3))
    def test_root_split_matches_bruteforce(self, seed, min_leaf):
        rng = np.random.default_rng(seed)
        # small integer grid: many exact ties exercise the tie rule
        X = rng.integers(0, 4, (12, 3)).astype(float)
        y = rng.integers(0, 3, 12).astype(float)
        ref = best_split_bruteforce(X, y, min_leaf)
        t = fit_tree(X, y, max_depth=1, min_leaf=min_leaf)
        if ref is None or np.all(y == y[0]):
            assert t.n_leaves == 1
        else:
            assert (t.feature[0], t.threshold[0]) == (ref[1], ref[2])

    def test_min_leaf_respected(self):
        rng = np.random.default_rng(2)
        X, y = rng.standard_normal((50, 2)), rng.standard_normal(50)
        t = fit_tree(X, y, min_leaf=5)
        leaves = np.flatnonzero(t.feature < 0)
        counts = np.bincount(_leaf_index(t, X), minlength=t.n_nodes)
        assert np.all(counts[leaves] >= 5)

    def test_depth_monotone_training_risk(self):
        risks = np.zeros(6)
        for seed in range(30):
            rng = np.random.default_rng(seed)
            X = rng.uniform(-1, 1, (80, 2))
            y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2 + 0.2 * rng.standard_normal(80)
            for i, depth in enumerate(range(1, 7)):
                risks[i] += np.mean((fit_tree(X, y, max_depth=depth).predict(X) - y) ** 2) / 30
        assert np.all(np.diff(risks) <= 0)

    def test_empty(self):
        with pytest.raises(DataError):
            fit_tree(np.zeros((0, 2)), np.zeros(0))

    def test_serialization(self):
        rng = np.random.default_rng(3)
        X, y = rng.standard_normal((30, 2)), rng.standard_normal(30)
        m = fit(LearningProblem(Tree(max_depth=3)), Dataset(X, y))
        back = TrainedModel.from_dict(m.to_dict())
        assert np.array_equal(back.predict(X), m.predict(X))


def _leaf_index(tree, X):
    node = np.zeros(X.shape[0], dtype=int)
    for _ in range(tree.n_nodes):
        f = tree.feature[node]
        inner = f >= 0
        if not inner.any():
            break
        go = X[np.flatnonzero(inner), f[inner]] <= tree.threshold[node[inner]]
        node[inner] = np.where(go, tree.left[node[inner]], tree.right[node[inner]])
    return node


class TestForest:
    def test_degenerate_equals_tree(self):
        rng = np.random.default_rng(0)
        X, y = rng.standard_normal((40, 3)), rng.standard_normal(40)
        f = fit_forest(X, y, n_trees=1, feature_fraction=1.0, stream=RandomStream(1), bootstrap=False)
        t = fit_tree(X, y)
        assert np.array_equal(f.predict(X), t.predict(X))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_constant_target(self, seed):
        X = np.random.default_rng(seed).standard_normal((20, 3))
        f = fit_forest(X, np.full(20, -2.0), n_trees=10, stream=RandomStream(seed))
        assert np.all(f.predict(X) == -2.0)

    def test_beats_single_tree(self):
        tree_mse, forest_mse = [], []
        for seed in range(30):
            rng = np.random.default_rng(seed)
            x = rng.uniform(0, 1, 80)
            y = np.sin(2 * np.pi * x) + 0.3 * rng.standard_normal(80)
            xt = np.linspace(0, 1, 200)
            truth = np.sin(2 * np.pi * xt)
            tree_mse.append(np.mean((fit_tree(x[:, None], y).predict(xt[:, None]) - truth) ** 2))
            forest = fit_forest(x[:, None], y, n_trees=30, feature_fraction=1.0, stream=RandomStream(seed))
            forest_mse.append(np.mean((forest.predict(xt[:, None]) - truth) ** 2))
        assert np.mean(forest_mse) <= np.mean(tree_mse)

    def test_reproducible_and_parallel(self):
        rng = np.random.default_rng(4)
        X, y = rng.standard_normal((50, 6)), rng.standard_normal(50)
        a = fit_forest(X, y, n_trees=12, stream=RandomStream(9))
        b = fit_forest(X, y, n_trees=12, stream=RandomStream(9), workers=4)
        assert a.to_dict() == b.to_dict()

    def test_bad_fraction(self):
        with pytest.raises(ParameterError):
            LearningProblem(Forest(feature_fraction=0.0))


class TestCentroid:
    def test_proximity(self):
        m = fit_nearest_centroid(Dataset([[0, 0], [10, 10]], [0, 1]))
        assert m.predict([[1, 1]])[0] == 0

    def test_training_accuracy(self):
        X = np.array([[0, 0], [5, 5], [0, 9]], dtype=float)
        m = fit_nearest_centroid(Dataset(X, [2, 0, 1]))
        assert np.array_equal(m.predict(X), [2, 0, 1])

    def test_tie_goes_to_lowest_class(self):
        m = fit_nearest_centroid(Dataset([[0.0], [2.0]], [1, 0]))
        assert m.predict([[1.0]])[0] == 0

    def test_empty(self):
        with pytest.raises(DataError):
            fit(LearningProblem(NearestCentroid(), "zero_one"), Dataset(np.zeros((0, 1)), np.zeros(0)))


class TestCrossValidation:
    def test_realizable(self):
        X = np.random.default_rng(0).standard_normal((30, 2))
        rep = kfold_cv(LearningProblem(Ridge(0.0)), Dataset(X, X[:, 0]), 5, RandomStream(1))
        assert rep.mean < 1e-10

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        data = Dataset(rng.standard_normal((40, 3)), rng.standard_normal(40))
        p = LearningProblem(Forest(n_trees=5))
        assert kfold_cv(p, data, 4, RandomStream(2)) == kfold_cv(p, data, 4, RandomStream(2))

    def test_leave_one_out(self):
        folds = kfold_indices(5, 5, RandomStream(3))
        assert sorted(len(f) for f in folds) == [1] * 5
        assert sorted(np.concatenate(folds).tolist()) == list(range(5))

    @given(st.integers(2, 40), st.integers(0, 1000))
    def test_fold_sizes(self, n, seed):
        k = min(n, 2 + seed % 9)
        sizes = [len(f) for f in kfold_indices(n, k, RandomStream(seed))]
        assert sum(sizes) == n and max(sizes) - min(sizes) <= 1

    @pytest.mark.parametrize("k", [1, 6])
    def test_k_range(self, k):
        with pytest.raises(ParameterError):
            kfold_indices(5, k, RandomStream(0))


class TestBiasVariance:
    def test_noiseless_realizable(self):
        gen = LinearProcess(weights=(1.0, -0.5), intercept=0.2, noise_std=0.0)
        rep = bias_variance_estimate(LearningProblem(Ridge(0.0)), gen, 20, 30, RandomStream(0))
        assert rep.bias_sq < 1e-6 and abs(rep.total_mse - rep.variance) < 1e-9

    def test_mean_predictor_bias(self):
        # y = x on [-1, 1]: the best constant is 0, so bias_sq is mean(x^2) over the grid
        gen = PolynomialProcess(coefficients=(0.0, 1.0), noise_std=0.1)
        grid = gen.test_grid()[:, 0]
        expected = np.mean(grid**2)
        p = LearningProblem(Ridge(1e9))
        r30 = bias_variance_estimate(p, gen, 50, 30, RandomStream(1))
        r90 = bias_variance_estimate(p, gen, 50, 90, RandomStream(1))
        assert abs(r30.bias_sq - expected) < 0.02 and abs(r90.bias_sq - expected) < 0.02

    @pytest.mark.parametrize("problem", [LearningProblem(Ridge(0.01)), LearningProblem(Tree(max_depth=3)),
                                         LearningProblem(Forest(n_trees=10, feature_fraction=1.0))])
    def test_identity(self, problem):
        rep = bias_variance_estimate(problem, PolynomialProcess(), 40, 50, RandomStream(2))
        assert rep.identity_holds

    def test_needs_ground_truth(self):
        class Opaque:
            noise_std = 0.1

            def sample(self, n, rng):
                return rng.standard_normal((n, 1)), rng.standard_normal(n)

        with pytest.raises(CapabilityError):
            bias_variance_estimate(LearningProblem(Ridge(0.1)), Opaque(), 10, 30, RandomStream(0))

    def test_min_repeats(self):
        with pytest.raises(ParameterError):
            bias_variance_estimate(LearningProblem(Ridge(0.1)), PolynomialProcess(), 10, 29, RandomStream(0))


def test_problem_dict_round_trip():
    for p in (LearningProblem(Ridge(0.5)), LearningProblem(Forest(n_trees=7, max_depth=4)),
              LearningProblem(NearestCentroid(), "zero_one")):
        assert LearningProblem.from_dict(p.to_dict()) == p
    assert LearningProblem.from_dict({"family": "ridge", "lambda": 2.0}).family == Ridge(2.0)
