"""Grey-box prediction pipelines.

A pipeline maps the sensor time series of a run to a predicted measurand:

    deconvolve -> segment -> extract -> impute -> select -> reduce -> learn

:func:`fit_pipeline` fits every stage on training runs and stores what is
needed to replay them; :func:`predict_pipeline` only replays.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NetmeasError, ParameterError, PipelineStageError, SchemaError
from .features import (
    FeatureSpec,
    PhaseRules,
    SegmentedRun,
    TimeSeriesSet,
    align_and_segment,
    extract_features,
    feature_names,
    pca_reduce,
    select_features_pearson,
)
from .learning import Dataset, LearningProblem, TrainedModel, fit, kfold_indices, loss_values
from .lti import SecondOrderSystem, deconvolve, impulse_response
from .uncertain import RandomStream, UncertainScalar, summarize


@dataclass(frozen=True)
class Deconvolution:
    """Replace ``sensor`` by its Tikhonov-regularized input estimate."""

    sensor: str
    system: SecondOrderSystem
    lam: float

    def apply(self, run: TimeSeriesSet) -> TimeSeriesSet:
        sig = run[self.sensor]
        h = impulse_response(self.system, sig.dt, len(sig))
        return run.replace(**{self.sensor: deconvolve(h, sig, self.lam)})

    def to_dict(self):
        s = self.system
        return {"sensor": self.sensor, "delta": s.delta, "omega0": s.omega0, "rho": s.rho, "lambda": self.lam}

    @classmethod
    def from_dict(cls, d):
        omega0 = float(d["omega0"])
        rho = float(d.get("rho", omega0**2))
        return cls(d["sensor"], SecondOrderSystem(float(d["delta"]), omega0, rho), float(d["lambda"]))


@dataclass(frozen=True)
class PipelineSpec:
    """Declarative description of a pipeline.

    ``features`` maps sensor id to a list of :class:`FeatureSpec`.  ``k`` is
    the number of Pearson-selected features (``None`` keeps all) and
    ``pca_components`` the optional PCA dimension.
    """

    features: dict
    learner: LearningProblem
    k: int | None = None
    pca_components: int | None = None
    preprocess: tuple = ()
    segmentation: PhaseRules | None = None
    name: str = ""

    def __post_init__(self):
        feats = {s: tuple(v) for s, v in dict(self.features).items()}
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "preprocess", tuple(self.preprocess))
        total = self.n_extracted
        if total == 0:
            raise ParameterError("pipeline extracts no features")
        if self.k is not None and not 1 <= self.k <= total:
            raise ParameterError(f"k={self.k} exceeds the {total} extracted features")
        width = self.k or total
        if self.pca_components is not None and not 1 <= self.pca_components <= width:
            raise ParameterError(f"pca_components={self.pca_components} exceeds {width} selected features")

    @property
    def n_extracted(self) -> int:
        return sum(s.n_features for lst in self.features.values() for s in lst)

    @property
    def sensors(self) -> list:
        out = list(self.features)
        for p in self.preprocess:
            if p.sensor not in out:
                out.append(p.sensor)
        if self.segmentation is not None:
            for r in self.segmentation.phases:
                if r.sensor is not None and r.sensor not in out:
                    out.append(r.sensor)
        return out

    def to_dict(self):
        d = {"name": self.name} if self.name else {}
        if self.preprocess:
            d["preprocess"] = [p.to_dict() for p in self.preprocess]
        if self.segmentation is not None:
            d["segmentation"] = self.segmentation.to_dict()
        d["features"] = {s: [f.to_dict() for f in lst] for s, lst in self.features.items()}
        if self.k is not None:
            d["selection"] = {"k": self.k}
        if self.pca_components is not None:
            d["reduction"] = {"pca": self.pca_components}
        d["learner"] = self.learner.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineSpec":
        try:
            feats = {s: [FeatureSpec.from_dict(f) for f in lst] for s, lst in d["features"].items()}
            learner = LearningProblem.from_dict(d["learner"])
        except KeyError as exc:
            raise ParameterError(f"pipeline spec is missing {exc}") from None
        except TypeError as exc:
            raise ParameterError(f"malformed pipeline spec: {exc}") from None
        sel = d.get("selection") or {}
        red = d.get("reduction") or {}
        seg = d.get("segmentation")
        return cls(
            features=feats,
            learner=learner,
            k=sel.get("k"),
            pca_components=red.get("pca"),
            preprocess=tuple(Deconvolution.from_dict(p) for p in d.get("preprocess", ())),
            segmentation=PhaseRules.from_dict(seg) if seg else None,
            name=d.get("name", ""),
        )

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(eq=False)
class PipelineModel:
    spec: PipelineSpec
    feature_names: tuple
    impute_values: np.ndarray
    selected: np.ndarray  # column indices, by decreasing |r|
    scores: np.ndarray  # |r| of every extracted column
    learner: TrainedModel
    pca_loadings: np.ndarray | None = None
    pca_means: np.ndarray | None = None
    fitted_values: np.ndarray | None = None
    cv: dict | None = field(default=None)

    @property
    def selected_names(self):
        return [self.feature_names[i] for i in self.selected]

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "feature_names": list(self.feature_names),
            "impute_values": self.impute_values.tolist(),
            "selected": self.selected.tolist(),
            "scores": self.scores.tolist(),
            "pca_loadings": None if self.pca_loadings is None else self.pca_loadings.tolist(),
            "pca_means": None if self.pca_means is None else self.pca_means.tolist(),
            "learner": self.learner.to_dict(),
            "fitted_values": None if self.fitted_values is None else self.fitted_values.tolist(),
            "cv": self.cv,
        }

    @classmethod
    def from_dict(cls, d):
        arr = lambda v: None if v is None else np.asarray(v, dtype=float)  # noqa: E731
        return cls(
            spec=PipelineSpec.from_dict(d["spec"]),
            feature_names=tuple(d["feature_names"]),
            impute_values=np.asarray(d["impute_values"], dtype=float),
            selected=np.asarray(d["selected"], dtype=np.int64),
            scores=np.asarray(d["scores"], dtype=float),
            learner=TrainedModel.from_dict(d["learner"]),
            pca_loadings=arr(d.get("pca_loadings")),
            pca_means=arr(d.get("pca_means")),
            fitted_values=arr(d.get("fitted_values")),
            cv=d.get("cv"),
        )


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except PipelineStageError:
        raise
    except NetmeasError as exc:
        raise PipelineStageError(name, exc) from exc


def _check_sensors(spec: PipelineSpec, runs):
    for run in runs:
        series = run.series if isinstance(run, SegmentedRun) else run
        for s in spec.sensors:
            if s not in series.signals:
                raise SchemaError(f"run {series.run_id}: missing sensor '{s}' required by the pipeline")


def _feature_matrix(spec: PipelineSpec, runs):
    """Run preprocessing, segmentation and extraction; returns the raw table."""
    runs = list(runs)
    _check_sensors(spec, runs)

    def pre(rs):
        out = []
        for r in rs:
            if isinstance(r, SegmentedRun):
                r = r.series
            for step in spec.preprocess:
                r = step.apply(r)
            out.append(r)
        return out

    runs = _stage("preprocess", pre, runs)
    if spec.segmentation is not None:
        runs = _stage("segment", align_and_segment, runs, spec.segmentation)
    return _stage("extract", extract_features, runs, spec.features)


def _design(model: PipelineModel, raw):
    X = np.where(np.isnan(raw), model.impute_values, raw)
    X = X[:, model.selected]
    if model.pca_loadings is not None:
        X = (X - model.pca_means) @ model.pca_loadings
    return X


def fit_pipeline(spec: PipelineSpec, runs, targets, stream: RandomStream) -> PipelineModel:
    """Fit all stages in order on the training runs.

    Missing features are imputed with the training column mean (0 when the
    whole column is missing).  The learner is trained with ``stream``.
    """
    y = np.asarray(targets)
    table = _feature_matrix(spec, runs)
    raw = table.matrix
    if raw.shape[0] != y.shape[0]:
        raise ParameterError(f"{raw.shape[0]} runs but {y.shape[0]} targets")
    present = ~np.isnan(raw)
    count = present.sum(axis=0)
    impute = np.where(count > 0, np.where(present, raw, 0.0).sum(axis=0) / np.maximum(count, 1), 0.0)
    X = np.where(np.isnan(raw), impute, raw)

    k = spec.k or X.shape[1]
    if spec.learner.loss == "squared":
        sel = _stage("select", select_features_pearson, X, y.astype(float), k)
        selected, scores = sel.indices, sel.scores
    else:
        selected, scores = np.arange(k), np.zeros(X.shape[1])
    Xs = X[:, selected]
    loadings = means = None
    if spec.pca_components is not None:
        pca = _stage("reduce", pca_reduce, Xs, spec.pca_components)
        loadings, means = pca.loadings, pca.means
        Xs = pca.scores
    learner = _stage("learn", fit, spec.learner, Dataset(Xs, y), stream)
    model = PipelineModel(spec, table.names, impute, np.asarray(selected), scores, learner, loadings, means)
    model.fitted_values = learner.predict(_design(model, raw))
    return model


def predict_pipeline(model: PipelineModel, runs) -> np.ndarray:
    """Replay the fitted stages on new runs."""
    table = _feature_matrix(model.spec, runs)
    if tuple(table.names) != tuple(model.feature_names):
        raise SchemaError("extracted feature columns differ from the fitted pipeline")
    return model.learner.predict(_design(model, table.matrix))


def predict_with_uncertainty(model: PipelineModel, runs, noise_std: dict, trials: int,
                             stream: RandomStream) -> list:
    """Monte Carlo propagation of additive white sensor noise through the
    frozen pipeline.

    Trial ``i`` perturbs every listed sensor of every run with
    ``Normal(0, noise_std[sensor])`` draws from ``stream.child(i)``.
    Returns one :class:`UncertainScalar` per run.
    """
    trials = int(trials)
    if trials < 1000:
        raise ParameterError("need at least 1000 trials")
    runs = [r.series if isinstance(r, SegmentedRun) else r for r in runs]
    _check_sensors(model.spec, runs)
    for s in noise_std:
        for r in runs:
            r[s]
    out = np.empty((trials, len(runs)))
    for i in range(trials):
        rng = stream.child(i).generator()
        noisy = []
        for r in runs:
            repl = {}
            for s in sorted(noise_std):
                sig = r[s]
                sd = float(noise_std[s])
                e = rng.standard_normal(len(sig))
                repl[s] = sig.with_samples(sig.samples + sd * e)
            noisy.append(r.replace(**repl))
        out[i] = predict_pipeline(model, noisy)
    res = []
    for j in range(len(runs)):
        s = summarize(out[:, j])
        res.append(UncertainScalar(s.mean, s.std))
    return res


# --------------------------------------------------------------------------
# automatic selection


@dataclass
class CandidateScore:
    index: int
    name: str
    n_features: int
    mean_risk: float = math.inf
    std_risk: float = math.nan
    fold_risks: tuple = ()
    error: str | None = None

    def to_dict(self):
        return {
            "index": self.index,
            "name": self.name,
            "n_features": self.n_features,
            "mean_risk": self.mean_risk if math.isfinite(self.mean_risk) else None,
            "std_risk": self.std_risk if math.isfinite(self.std_risk) else None,
            "fold_risks": list(self.fold_risks),
            "error": self.error,
        }


@dataclass
class SelectionReport:
    ranking: list  # CandidateScore, best first
    best_index: int | None
    best_spec: PipelineSpec | None
    folds: tuple

    def to_dict(self):
        return {
            "best_index": self.best_index,
            "best_name": None if self.best_spec is None else self.best_spec.name,
            "ranking": [c.to_dict() for c in self.ranking],
            "fold_sizes": [len(f) for f in self.folds],
        }


def cv_pipeline(spec: PipelineSpec, runs, targets, folds, stream: RandomStream):
    y = np.asarray(targets)
    n = len(runs)
    risks = []
    for i, test in enumerate(folds):
        train = np.setdiff1d(np.arange(n), test)
        model = fit_pipeline(spec, [runs[j] for j in train], y[train], stream.child(i))
        pred = predict_pipeline(model, [runs[j] for j in test])
        risks.append(float(np.mean(loss_values(pred, y[test], spec.learner.loss))))
    return np.asarray(risks)


def auto_select(candidates, runs, targets, k: int, stream: RandomStream) -> SelectionReport:
    """Rank candidate pipelines by k-fold CV risk on a shared partition.

    Ties in mean risk go to the candidate with fewer extracted features, then
    to the earlier candidate.  A failing candidate is ranked last with its
    error recorded.
    """
    candidates = list(candidates)
    if len(candidates) < 1:
        raise ParameterError("no candidate pipelines")
    runs = list(runs)
    folds = kfold_indices(len(runs), int(k), stream.child(0))
    scores = []
    for c, spec in enumerate(candidates):
        sc = CandidateScore(c, spec.name or f"candidate_{c}", spec.n_extracted)
        try:
            r = cv_pipeline(spec, runs, targets, folds, stream.child(1 + c))
            sc.fold_risks = tuple(r.tolist())
            sc.mean_risk = float(r.mean())
            sc.std_risk = float(r.std(ddof=1))
            if not math.isfinite(sc.mean_risk):
                raise ParameterError("non-finite CV risk")
        except NetmeasError as exc:
            sc.error = str(exc)
            sc.mean_risk = math.inf
        scores.append(sc)
    ranking = sorted(scores, key=lambda s: (s.error is not None, s.mean_risk, s.n_features, s.index))
    best = ranking[0] if ranking[0].error is None else None
    return SelectionReport(ranking, None if best is None else best.index,
                           None if best is None else candidates[best.index], tuple(folds))
