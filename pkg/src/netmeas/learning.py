"""Empirical risk minimization: model families, risks, cross-validation and
bias-variance estimation.

A :class:`LearningProblem` pairs a model family (:class:`Ridge`,
:class:`Tree`, :class:`Forest` or :class:`NearestCentroid`) with a loss.
:func:`fit` trains it on a :class:`Dataset` and returns a model exposing
``predict``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from .errors import CapabilityError, DataError, ParameterError, RankDeficiencyError, ShapeError
from .trees import RandomForest, RegressionTree, fit_forest, fit_tree
from .uncertain import RandomStream

SQUARED = "squared"
ZERO_ONE = "zero_one"


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.targets)
        if y.ndim != 1:
            y = y.ravel()
        if X.ndim != 2 or X.shape[1] < 1:
            raise ShapeError("features must be an (N, d) matrix with d >= 1")
        if X.shape[0] != y.shape[0]:
            raise ShapeError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite entries")
        if y.dtype.kind == "f" and not np.all(np.isfinite(y)):
            raise DataError("targets contain non-finite entries")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.targets[idx])


# --------------------------------------------------------------------------
# model families


@dataclass(frozen=True)
class Ridge:
    lam: float = 0.0
    fit_intercept: bool = True

    def __post_init__(self):
        if not self.lam >= 0:
            raise ParameterError("ridge lambda must be non-negative")


@dataclass(frozen=True)
class Tree:
    max_depth: int | None = None
    min_leaf: int = 1

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ParameterError("max_depth must be at least 1")
        if self.min_leaf < 1:
            raise ParameterError("min_leaf must be at least 1")


@dataclass(frozen=True)
class Forest:
    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    feature_fraction: float = 1 / 3
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ParameterError("n_trees must be at least 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ParameterError("max_depth must be at least 1")
        if not 0 < self.feature_fraction <= 1:
            raise ParameterError("feature_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class NearestCentroid:
    pass


Family = Union[Ridge, Tree, Forest, NearestCentroid]
_FAMILIES = {"ridge": Ridge, "tree": Tree, "forest": Forest, "nearest_centroid": NearestCentroid}


@dataclass(frozen=True)
class LearningProblem:
    family: Family
    loss: str = SQUARED

    def __post_init__(self):
        if self.loss not in (SQUARED, ZERO_ONE):
            raise ParameterError(f"unknown loss '{self.loss}'")

    def to_dict(self):
        d = {"family": family_name(self.family), **asdict(self.family)}
        d["loss"] = self.loss
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LearningProblem":
        d = dict(d)
        name = str(d.pop("family", "")).lower()
        loss = d.pop("loss", ZERO_ONE if name == "nearest_centroid" else SQUARED)
        if name not in _FAMILIES:
            raise ParameterError(f"unknown learner family '{name}'")
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        try:
            fam = _FAMILIES[name](**d)
        except TypeError as exc:
            raise ParameterError(f"bad parameters for learner '{name}': {exc}") from None
        return cls(fam, loss)


def family_name(family) -> str:
    for name, cls in _FAMILIES.items():
        if isinstance(family, cls):
            return name
    raise ParameterError(f"unknown family {family!r}")


# --------------------------------------------------------------------------
# trained models


class LinearModel:
    family = "ridge"

    def __init__(self, coef, intercept=0.0):
        self.coef = np.asarray(coef, dtype=float)
        self.intercept = float(intercept)

    @property
    def n_features(self):
        return self.coef.size

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        return X @ self.coef + self.intercept

    def to_dict(self):
        return {"family": self.family, "coef": self.coef.tolist(), "intercept": self.intercept}

    @classmethod
    def from_dict(cls, d):
        return cls(d["coef"], d["intercept"])


class CentroidModel:
    family = "nearest_centroid"

    def __init__(self, classes, centroids):
        self.classes = np.asarray(classes)
        self.centroids = np.asarray(centroids, dtype=float)

    @property
    def n_features(self):
        return self.centroids.shape[1]

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        d2 = ((X[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
        return self.classes[np.argmin(d2, axis=1)]

    def to_dict(self):
        return {"family": self.family, "classes": self.classes.tolist(), "centroids": self.centroids.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["classes"], d["centroids"])


class TrainedModel:
    """Fitted model plus the metadata needed to reproduce it."""

    def __init__(self, estimator, problem: LearningProblem, metadata: dict | None = None):
        self.estimator = estimator
        self.problem = problem
        self.metadata = dict(metadata or {})

    @property
    def family(self):
        return self.estimator.family

    @property
    def n_features(self):
        return self.estimator.n_features

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None] if self.n_features == 1 else X[None, :]
        if X.shape[1] != self.n_features:
            raise ShapeError(f"model expects {self.n_features} features, got {X.shape[1]}")
        return self.estimator.predict(X)

    def to_dict(self):
        return {"problem": self.problem.to_dict(), "metadata": self.metadata, "estimator": self.estimator.to_dict()}

    @classmethod
    def from_dict(cls, d):
        est = d["estimator"]
        kind = {"ridge": LinearModel, "tree": RegressionTree, "forest": RandomForest,
                "nearest_centroid": CentroidModel}[est["family"]]
        return cls(kind.from_dict(est), LearningProblem.from_dict(d["problem"]), d.get("metadata"))


# --------------------------------------------------------------------------
# fitting


def fit_ridge(data: Dataset, lam: float, fit_intercept: bool = True) -> TrainedModel:
    """Minimize ``mean((y - X theta - b)**2) + lam * ||theta||**2``.

    The intercept ``b`` is not penalized; it is eliminated by centering.

    Raises
    ------
    RankDeficiencyError
        ``lam == 0`` with a singular normal matrix.
    """
    if not lam >= 0:
        raise ParameterError("lambda must be non-negative")
    X = data.features
    y = np.asarray(data.targets, dtype=float)
    n, d = X.shape
    if fit_intercept:
        xm, ym = X.mean(axis=0), y.mean()
    else:
        xm, ym = np.zeros(d), 0.0
    Xc, yc = X - xm, y - ym
    A = Xc.T @ Xc / n + lam * np.eye(d)
    rhs = Xc.T @ yc / n
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0 or s[-1] <= 1e-12 * s[0]:
        raise RankDeficiencyError("normal equations are singular; use lambda > 0")
    theta = np.linalg.solve(A, rhs)
    b = float(ym - xm @ theta)
    return TrainedModel(LinearModel(theta, b), LearningProblem(Ridge(lam, fit_intercept)))


def fit_nearest_centroid(data: Dataset) -> TrainedModel:
    if len(data) == 0:
        raise DataError("no labelled examples")
    classes = np.unique(data.targets)
    if classes.size == 0:
        raise DataError("empty class set")
    centroids = np.stack([data.features[data.targets == c].mean(axis=0) for c in classes])
    return TrainedModel(CentroidModel(classes, centroids), LearningProblem(NearestCentroid(), ZERO_ONE))


def fit(problem: LearningProblem, data: Dataset, stream: RandomStream | None = None) -> TrainedModel:
    """Train ``problem.family`` on ``data``; ``stream`` feeds randomized families."""
    fam = problem.family
    if len(data) == 0:
        raise DataError("cannot fit on empty data")
    if isinstance(fam, Ridge):
        model = fit_ridge(data, fam.lam, fam.fit_intercept)
    elif isinstance(fam, Tree):
        est = fit_tree(data.features, data.targets, fam.max_depth, fam.min_leaf)
        model = TrainedModel(est, problem)
    elif isinstance(fam, Forest):
        est = fit_forest(data.features, data.targets, fam.n_trees, fam.max_depth, fam.min_leaf,
                         fam.feature_fraction, stream, bootstrap=fam.bootstrap)
        meta = {"seed": stream.master_seed, "stream_index": stream.stream_index} if stream else {}
        model = TrainedModel(est, problem, meta)
    elif isinstance(fam, NearestCentroid):
        model = fit_nearest_centroid(data)
    else:
        raise ParameterError(f"unknown family {fam!r}")
    model.problem = problem
    return model


def loss_values(pred, y, loss=SQUARED) -> np.ndarray:
    if loss == SQUARED:
        return (np.asarray(pred, dtype=float) - np.asarray(y, dtype=float)) ** 2
    if loss == ZERO_ONE:
        return (np.asarray(pred) != np.asarray(y)).astype(float)
    raise ParameterError(f"unknown loss '{loss}'")


def empirical_risk(model, data: Dataset, loss=SQUARED) -> float:
    """Average loss of ``model`` over ``data``."""
    if model.n_features != data.n_features:
        raise ShapeError(f"model expects {model.n_features} features, data has {data.n_features}")
    return float(np.mean(loss_values(model.predict(data.features), data.targets, loss)))


def r_squared(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    ss_res = np.sum((y_true - np.asarray(y_pred, dtype=float)) ** 2)
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    return float(1.0 - ss_res / ss_tot) if ss_tot > 0 else float("nan")


# --------------------------------------------------------------------------
# cross-validation


def kfold_indices(n: int, k: int, stream: RandomStream) -> list[np.ndarray]:
    """Shuffled partition of ``range(n)`` into ``k`` folds of near-equal size."""
    if not 2 <= k <= n:
        raise ParameterError(f"need 2 <= k <= N, got k={k}, N={n}")
    perm = stream.generator().permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass(frozen=True)
class CVReport:
    fold_risks: tuple
    mean: float
    std: float
    folds: tuple = field(repr=False)

    def to_dict(self):
        return {"fold_risks": list(self.fold_risks), "mean": self.mean, "std": self.std,
                "fold_sizes": [len(f) for f in self.folds]}


def cross_validate(problem: LearningProblem, data: Dataset, folds, stream: RandomStream) -> CVReport:
    """Held-out risk on a given partition; fold ``i`` trains with ``stream.child(i)``."""
    n = len(data)
    risks = []
    for i, test in enumerate(folds):
        train = np.setdiff1d(np.arange(n), test, assume_unique=True)
        model = fit(problem, data.subset(train), stream.child(i))
        risks.append(empirical_risk(model, data.subset(test), problem.loss))
    r = np.asarray(risks)
    return CVReport(tuple(r.tolist()), float(r.mean()), float(r.std(ddof=1)) if r.size > 1 else 0.0,
                    tuple(tuple(f.tolist()) for f in folds))


def kfold_cv(problem: LearningProblem, data: Dataset, k: int, stream: RandomStream) -> CVReport:
    """k-fold cross-validation; the partition comes from ``stream.child(0)``,
    fold fits from ``stream.child(1)``."""
    folds = kfold_indices(len(data), int(k), stream.child(0))
    return cross_validate(problem, data, folds, stream.child(1))


# --------------------------------------------------------------------------
# bias-variance


@dataclass(frozen=True)
class BiasVarianceReport:
    bias_sq: float
    variance: float
    noise_var: float
    total_mse: float
    repeats: int
    standard_error: float

    @property
    def discrepancy(self):
        return self.total_mse - (self.bias_sq + self.variance + self.noise_var)

    @property
    def tolerance(self):
        """Three standard errors of the Monte Carlo estimate of ``total_mse``."""
        return 3.0 * self.standard_error

    @property
    def identity_holds(self):
        return abs(self.discrepancy) <= self.tolerance


def bias_variance_estimate(problem: LearningProblem, generator, n_train: int, repeats: int,
                           stream: RandomStream, test_x=None) -> BiasVarianceReport:
    """Monte Carlo estimate of the squared-error decomposition.

    ``generator`` must provide ``sample(n, rng) -> (X, y)``, noiseless
    ``truth(X)``, ``noise_std`` and ``test_grid()``.  Each repeat draws a
    training set (``stream.child(r)``), fits, predicts on the grid, and
    draws fresh noisy targets there.  Variance is the population variance
    over repeats, so ``bias_sq + variance`` equals the mean squared deviation
    from the truth exactly; the reported standard error covers the noise
    terms that remain.
    """
    for attr in ("truth", "sample", "noise_std"):
        if not hasattr(generator, attr):
            raise CapabilityError(f"generator lacks '{attr}'; a ground-truth channel is required")
    if int(repeats) < 30:
        raise ParameterError("need at least 30 repeats")
    Xg = np.asarray(generator.test_grid() if test_x is None else test_x, dtype=float)
    if Xg.ndim == 1:
        Xg = Xg[:, None]
    truth = np.asarray(generator.truth(Xg), dtype=float)
    sigma = float(generator.noise_std)
    preds = np.empty((int(repeats), truth.size))
    sq_err = np.empty_like(preds)
    for r in range(int(repeats)):
        rs = stream.child(r)
        X, y = generator.sample(int(n_train), rs.child(0).generator())
        model = fit(problem, Dataset(X, y), rs.child(1))
        preds[r] = model.predict(Xg)
        y_new = truth + sigma * rs.child(2).generator().standard_normal(truth.size)
        sq_err[r] = (y_new - preds[r]) ** 2
    mean_pred = preds.mean(axis=0)
    bias_sq = float(np.mean((mean_pred - truth) ** 2))
    variance = float(np.mean(preds.var(axis=0)))
    total = float(sq_err.mean())
    d = sq_err - (truth - preds) ** 2 - sigma**2
    se = float(d.std(ddof=1) / np.sqrt(d.size))
    return BiasVarianceReport(bias_sq, variance, sigma**2, total, int(repeats), se)
