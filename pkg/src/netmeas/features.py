"""Multi-sensor time series: segmentation, feature extraction, selection,
PCA and redundancy analysis.

Feature columns are named ``<sensor>.<method>.<param>``; when a feature is
restricted to a process phase the method part reads ``<method>@<phase>``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import (
    DataError,
    InsufficientOverlapError,
    ParameterError,
    SchemaError,
    SegmentationError,
    ShapeError,
)
from .lti import Signal

DT_RTOL = 1e-9
HYSTERESIS = 0.05


@dataclass(frozen=True, eq=False)
class TimeSeriesSet:
    """Signals of one run keyed by sensor id."""

    run_id: str
    signals: dict

    def __post_init__(self):
        sigs = dict(self.signals)
        if sigs:
            dts = [s.dt for s in sigs.values()]
            if max(dts) - min(dts) > DT_RTOL * max(dts):
                raise DataError(f"run {self.run_id}: sensors do not share a sampling interval")
        object.__setattr__(self, "signals", sigs)

    @property
    def sensors(self):
        return list(self.signals)

    @property
    def dt(self):
        return next(iter(self.signals.values())).dt

    def __getitem__(self, sensor) -> Signal:
        try:
            return self.signals[sensor]
        except KeyError:
            raise SchemaError(f"run {self.run_id}: missing sensor '{sensor}'") from None

    def replace(self, **signals) -> "TimeSeriesSet":
        return TimeSeriesSet(self.run_id, {**self.signals, **signals})


# --------------------------------------------------------------------------
# segmentation


@dataclass(frozen=True)
class PhaseRule:
    """Start of a phase: first ``edge`` crossing of ``threshold`` by the
    marker ``sensor`` (with 5 % hysteresis), or a fixed ``window`` in run time.

    A phase ends where the next one starts; the last phase ends at the
    opposite crossing of its marker, or at the end of the run.
    """

    name: str
    sensor: str | None = None
    threshold: float | None = None
    edge: str = "rise"
    window: tuple | None = None

    def __post_init__(self):
        if self.window is None and (self.sensor is None or self.threshold is None):
            raise ParameterError(f"phase '{self.name}' needs a marker sensor and threshold, or a window")
        if self.edge not in ("rise", "fall"):
            raise ParameterError("edge must be 'rise' or 'fall'")


@dataclass(frozen=True)
class PhaseRules:
    phases: tuple

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.phases:
            raise ParameterError("at least one phase rule is required")

    @classmethod
    def from_dict(cls, d):
        items = d["phases"] if isinstance(d, dict) else d
        return cls(tuple(PhaseRule(**{**p, "window": tuple(p["window"]) if p.get("window") else None}) for p in items))

    def to_dict(self):
        out = []
        for p in self.phases:
            e = {"name": p.name}
            if p.window is not None:
                e["window"] = list(p.window)
            else:
                e.update(sensor=p.sensor, threshold=p.threshold, edge=p.edge)
            out.append(e)
        return {"phases": out}


def crossing_times(sig: Signal, threshold: float, edge: str, after: float = -np.inf) -> list:
    """Times of threshold crossings with hysteresis.

    The state switches high when a sample exceeds ``threshold + h`` and low
    below ``threshold - h`` (``h = 5 %`` of ``|threshold|``, at least a tiny
    absolute margin).  The reported time is the first sample of the new state.
    """
    h = HYSTERESIS * abs(threshold) if threshold != 0 else 1e-12
    x = sig.samples
    t = sig.t
    hi = x[0] > threshold
    out = []
    for k in range(1, x.size):
        if not hi and x[k] > threshold + h:
            hi = True
            if edge == "rise" and t[k] >= after:
                out.append(float(t[k]))
        elif hi and x[k] < threshold - h:
            hi = False
            if edge == "fall" and t[k] >= after:
                out.append(float(t[k]))
    return out


@dataclass(frozen=True, eq=False)
class SegmentedRun:
    """Run shifted so that its first phase starts at ``t = 0``."""

    series: TimeSeriesSet
    shift: float
    boundaries: dict  # phase -> (T0, T1) in aligned time

    @property
    def run_id(self):
        return self.series.run_id

    def segment(self, sensor: str, phase: str | None = None) -> Signal:
        sig = self.series[sensor]
        if phase is None:
            return sig
        if phase not in self.boundaries:
            raise SchemaError(f"run {self.run_id}: unknown phase '{phase}'")
        t0, t1 = self.boundaries[phase]
        t = sig.t
        eps = 1e-9 * sig.dt
        k = np.flatnonzero((t >= t0 - eps) & (t < t1 - eps))
        if k.size == 0:
            return Signal(np.zeros(0), sig.dt, t0)
        return Signal(sig.samples[k[0]:k[-1] + 1], sig.dt, float(t[k[0]]))


def _phase_times(run: TimeSeriesSet, rules: PhaseRules):
    starts = []
    after = -np.inf
    for rule in rules.phases:
        if rule.window is not None:
            starts.append(float(rule.window[0]))
            continue
        hits = crossing_times(run[rule.sensor], rule.threshold, rule.edge, after)
        if not hits:
            raise SegmentationError(
                f"run {run.run_id}: marker '{rule.sensor}' never crosses {rule.threshold} ({rule.edge}) for phase '{rule.name}'"
            )
        starts.append(hits[0])
        after = hits[0]
    last = rules.phases[-1]
    run_end = max(s.t_end for s in run.signals.values()) + run.dt
    if last.window is not None:
        end = float(last.window[1])
    else:
        other = "fall" if last.edge == "rise" else "rise"
        hits = crossing_times(run[last.sensor], last.threshold, other, starts[-1])
        end = hits[0] if hits else run_end
    bounds = {}
    for i, rule in enumerate(rules.phases):
        if rule.window is not None:
            bounds[rule.name] = (float(rule.window[0]), float(rule.window[1]))
        else:
            nxt = starts[i + 1] if i + 1 < len(starts) else end
            bounds[rule.name] = (starts[i], nxt)
    return bounds


def align_and_segment(runs, rules: PhaseRules) -> list:
    """Detect phase boundaries per run and shift each run so that its first
    phase starts at ``t = 0``."""
    out = []
    for run in runs:
        if isinstance(run, SegmentedRun):
            run = run.series
        bounds = _phase_times(run, rules)
        shift = bounds[rules.phases[0].name][0]
        signals = {k: Signal(s.samples, s.dt, s.t0 - shift) for k, s in run.signals.items()}
        aligned = {name: (a - shift, b - shift) for name, (a, b) in bounds.items()}
        out.append(SegmentedRun(TimeSeriesSet(run.run_id, signals), shift, aligned))
    return out


# --------------------------------------------------------------------------
# feature extraction


METHODS = ("moments", "band_energy", "top_fourier", "segment_means", "drop")


@dataclass(frozen=True)
class FeatureSpec:
    """One feature-extraction method with its parameters.

    ``moments``
        mean, variance, max, min.
    ``band_energy``  (``bands``: list of ``[f_lo, f_hi)`` in Hz)
        sum of squared DFT magnitudes per band, divided by signal length.
    ``top_fourier``  (``k``)
        bin index and magnitude of the ``k`` largest-magnitude one-sided DFT
        coefficients, ties to the lower bin.
    ``segment_means``  (``n``)
        means over ``n`` equal consecutive sub-segments.
    ``drop``  (``phase_a``, ``phase_b``, ``window``)
        mean of the last ``window`` samples of phase A minus mean of the first
        ``window`` samples of phase B.
    """

    method: str
    params: dict = field(default_factory=dict)
    phase: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown feature method '{self.method}'")
        p = dict(self.params)
        if self.method == "band_energy":
            bands = [tuple(float(v) for v in b) for b in p.get("bands", ())]
            if not bands or any(not 0 <= lo < hi for lo, hi in bands):
                raise ParameterError("band_energy needs bands with 0 <= f_lo < f_hi")
            p["bands"] = bands
        elif self.method == "top_fourier":
            p["k"] = int(p.get("k", 1))
            if p["k"] < 1:
                raise ParameterError("top_fourier k must be at least 1")
        elif self.method == "segment_means":
            p["n"] = int(p.get("n", 4))
            if p["n"] < 1:
                raise ParameterError("segment_means n must be at least 1")
        elif self.method == "drop":
            if "phase_a" not in p or "phase_b" not in p:
                raise ParameterError("drop needs phase_a and phase_b")
            p["window"] = int(p.get("window", 1))
            if p["window"] < 1:
                raise ParameterError("drop window must be at least 1")
        object.__setattr__(self, "params", p)

    @property
    def n_features(self) -> int:
        m, p = self.method, self.params
        if m == "moments":
            return 4
        if m == "band_energy":
            return len(p["bands"])
        if m == "top_fourier":
            return 2 * p["k"]
        if m == "segment_means":
            return p["n"]
        return 1

    def column_names(self, sensor: str) -> list:
        m, p = self.method, self.params
        tag = m if self.phase is None else f"{m}@{self.phase}"
        if m == "moments":
            params = ["mean", "variance", "max", "min"]
        elif m == "band_energy":
            params = [f"{_fmt(lo)}-{_fmt(hi)}Hz" for lo, hi in p["bands"]]
        elif m == "top_fourier":
            params = [f"{kind}{i + 1}" for i in range(p["k"]) for kind in ("index", "magnitude")]
        elif m == "segment_means":
            params = [f"seg{i + 1}of{p['n']}" for i in range(p["n"])]
        else:
            params = [f"{p['phase_a']}-{p['phase_b']}"]
        return [f"{sensor}.{tag}.{q}" for q in params]

    def to_dict(self):
        d = {"method": self.method}
        if self.params:
            d["params"] = {k: ([list(b) for b in v] if k == "bands" else v) for k, v in self.params.items()}
        if self.phase is not None:
            d["phase"] = self.phase
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        method = d.pop("method")
        phase = d.pop("phase", None)
        params = d.pop("params", {})
        params.update(d)
        return cls(method, params, phase)


def _fmt(v):
    return f"{v:g}"


class FeatureUnavailable(Exception):
    pass


def _signal_for(run, sensor, phase):
    if isinstance(run, SegmentedRun):
        return run.segment(sensor, phase)
    if phase is not None:
        raise SchemaError(f"run {run.run_id}: phase '{phase}' requested on an unsegmented run")
    return run[sensor]


def _compute(spec: FeatureSpec, run, sensor) -> np.ndarray:
    m, p = spec.method, spec.params
    if m == "drop":
        if not isinstance(run, SegmentedRun):
            raise FeatureUnavailable("drop feature needs a segmented run")
        a = run.segment(sensor, p["phase_a"]).samples
        b = run.segment(sensor, p["phase_b"]).samples
        w = p["window"]
        if a.size < w or b.size < w:
            raise FeatureUnavailable(f"phase shorter than window {w}")
        return np.array([a[-w:].mean() - b[:w].mean()])
    sig = _signal_for(run, sensor, spec.phase)
    x = sig.samples
    if m == "moments":
        if x.size < 1:
            raise FeatureUnavailable("empty signal")
        return np.array([x.mean(), x.var(), x.max(), x.min()])
    if m == "segment_means":
        if x.size < p["n"]:
            raise FeatureUnavailable(f"{x.size} samples cannot form {p['n']} segments")
        return np.array([s.mean() for s in np.array_split(x, p["n"])])
    if x.size < 2:
        raise FeatureUnavailable("signal too short for a DFT")
    spec_ = np.fft.rfft(x)
    mag = np.abs(spec_)
    if m == "top_fourier":
        k = p["k"]
        if mag.size < k:
            raise FeatureUnavailable(f"only {mag.size} DFT bins for k={k}")
        order = np.lexsort((np.arange(mag.size), -mag))[:k]
        return np.column_stack([order.astype(float), mag[order]]).ravel()
    freqs = np.fft.rfftfreq(x.size, sig.dt)
    power = mag**2 / x.size
    return np.array([power[(freqs >= lo) & (freqs < hi)].sum() for lo, hi in p["bands"]])


@dataclass(frozen=True, eq=False)
class FeatureTable:
    matrix: np.ndarray
    names: tuple
    run_ids: tuple
    issues: tuple = ()  # (run_id, column name, reason)

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run_id", *self.names])
            for rid, row in zip(self.run_ids, self.matrix):
                w.writerow([rid, *(repr(float(v)) for v in row)])


def feature_names(specs: dict) -> list:
    return [n for sensor, lst in specs.items() for s in lst for n in s.column_names(sensor)]


def extract_features(runs, specs: dict) -> FeatureTable:
    """One row per run, columns in ``specs`` order (sensor, then spec).

    A feature that cannot be computed for a run (signal too short, missing
    phase data) is set to NaN and listed in ``issues``; other features of the
    run are unaffected.
    """
    names = feature_names(specs)
    rows, issues = [], []
    for run in runs:
        series = run.series if isinstance(run, SegmentedRun) else run
        row = []
        for sensor, lst in specs.items():
            series[sensor]  # schema check
            for spec in lst:
                try:
                    vals = _compute(spec, run, sensor)
                except FeatureUnavailable as exc:
                    vals = np.full(spec.n_features, np.nan)
                    for col in spec.column_names(sensor):
                        issues.append((series.run_id, col, str(exc)))
                row.extend(vals.tolist())
        rows.append(row)
    mat = np.asarray(rows, dtype=float).reshape(len(rows), len(names))
    return FeatureTable(mat, tuple(names), tuple((r.series if isinstance(r, SegmentedRun) else r).run_id for r in runs), tuple(issues))


# --------------------------------------------------------------------------
# selection and reduction


def pearson_scores(X, y) -> np.ndarray:
    """Absolute Pearson correlation of each column with ``y``; 0 for
    constant columns (or constant ``y``)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    sx = np.sqrt((Xc**2).sum(axis=0))
    sy = np.sqrt(yc @ yc)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (Xc.T @ yc) / (sx * sy)
    r = np.where((sx > 0) & (sy > 0), r, 0.0)
    return np.clip(np.abs(r), 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Selection:
    indices: np.ndarray
    scores: np.ndarray  # |r| of every column
    warning: str | None = None


def select_features_pearson(features, target, k: int) -> Selection:
    """Top-``k`` columns by absolute Pearson correlation, ties to the lower
    column index."""
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ShapeError("features must be a matrix")
    if not 1 <= k <= X.shape[1]:
        raise ParameterError(f"k must lie in 1..{X.shape[1]}, got {k}")
    y = np.asarray(target, dtype=float)
    scores = pearson_scores(X, y)
    warn = None
    if np.all(y == y[0]):
        warn = "target is constant; all scores are 0"
        warnings.warn(warn, RuntimeWarning, stacklevel=2)
    order = np.lexsort((np.arange(scores.size), -scores))
    return Selection(order[:k], scores, warn)


@dataclass(frozen=True, eq=False)
class PCAResult:
    scores: np.ndarray
    loadings: np.ndarray  # (d, n_components), orthonormal columns
    means: np.ndarray
    explained_variance_ratio: np.ndarray

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.means) @ self.loadings

    def inverse_transform(self, scores):
        return np.asarray(scores) @ self.loadings.T + self.means


def pca_reduce(features, n_components: int) -> PCAResult:
    """Principal components of the column-centred data.

    Each loading vector is signed so its largest-magnitude entry is positive.
    """
    X = np.asarray(features, dtype=float)
    n, d = X.shape
    if not 1 <= n_components <= min(n - 1, d):
        raise ParameterError(f"n_components must lie in 1..{min(n - 1, d)}, got {n_components}")
    means = X.mean(axis=0)
    Xc = X - means
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    load = vt[:n_components].T.copy()
    for j in range(n_components):
        i = int(np.argmax(np.abs(load[:, j])))
        if load[i, j] < 0:
            load[:, j] = -load[:, j]
    var = s**2
    total = var.sum()
    ratio = var[:n_components] / total if total > 0 else np.zeros(n_components)
    return PCAResult(Xc @ load, load, means, ratio)


# --------------------------------------------------------------------------
# redundancy


def _stack_sensor_samples(runs):
    runs = [r.series if isinstance(r, SegmentedRun) else r for r in runs]
    sensors = runs[0].sensors
    for r in runs[1:]:
        missing = set(sensors) ^ set(r.sensors)
        if missing:
            raise SchemaError(f"run {r.run_id}: sensor sets differ ({sorted(missing)})")
    cols = {s: [] for s in sensors}
    for r in runs:
        n = min(len(r[s]) for s in sensors)
        for s in sensors:
            cols[s].append(r[s].samples[:n])
    return sensors, np.column_stack([np.concatenate(cols[s]) for s in sensors])


def correlation_matrix(runs):
    """Sensor ids and the Pearson correlation matrix over concatenated runs."""
    if isinstance(runs, (TimeSeriesSet, SegmentedRun)):
        runs = [runs]
    sensors, Z = _stack_sensor_samples(list(runs))
    if Z.shape[0] < 2:
        raise InsufficientOverlapError(f"need at least 2 overlapping samples, got {Z.shape[0]}")
    Zc = Z - Z.mean(axis=0)
    sd = np.sqrt((Zc**2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        R = (Zc.T @ Zc) / np.outer(sd, sd)
    R[~np.isfinite(R)] = 0.0
    np.fill_diagonal(R, 1.0)
    return sensors, np.clip(R, -1.0, 1.0)


def redundancy_report(runs, threshold: float) -> list:
    """Groups of sensors connected by ``|r| >= threshold``; singletons omitted.

    Groups are sorted lists of sensor ids, ordered by their first member's
    position in the run.
    """
    if not 0 < threshold < 1:
        raise ParameterError("threshold must lie in (0, 1)")
    sensors, R = correlation_matrix(runs)
    adj = np.abs(R) >= threshold
    np.fill_diagonal(adj, False)
    _, labels = connected_components(csr_matrix(adj), directed=False)
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(sensors[i])
    return [g for g in groups.values() if len(g) > 1]
