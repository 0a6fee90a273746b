"""Synthetic networked measuring system.

A :class:`ProcessSpec` describes a multi-phase process: per phase, each
latent channel follows a sum of simple waveforms whose parameters may be
expressions over per-run *controlled variables*.  Sensors observe latent
channels through a static affine or second-order dynamic characteristic,
followed by sampling-time jitter and additive white noise.  Targets are
computed from the noiseless latent signals, so a benchmark exposes the
ground truth that real data never does.

Random streams of a run (``stream``): ``child(0)`` controlled variables,
``child(1)`` target noise, ``child(2 + i)`` sensor ``i`` (its ``child(0)``
jitter, ``child(1)`` noise).  Run ``r`` of a benchmark uses
``stream.child(r)``.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .errors import ConfigError, DataError, ParameterError, RangeError
from .expr import Expression
from .features import TimeSeriesSet
from .lti import SecondOrderSystem, Signal, convolve, impulse_response
from .uncertain import RandomStream, distribution_from_dict, distribution_to_dict, sample

LATENT_OVERSAMPLING = 10


class SevereJitterWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# elementary operations


def energy_target(power: Signal, T0: float, T1: float) -> float:
    """Trapezoidal integral of ``power`` over ``[T0, T1]``.

    Endpoints falling between samples are linearly interpolated.
    """
    if not T0 < T1:
        raise ParameterError("need T0 < T1")
    t = power.t
    p = power.samples
    tol = 1e-9 * power.dt
    if T0 < t[0] - tol or T1 > t[-1] + tol:
        raise RangeError(f"[{T0}, {T1}] is outside the signal span [{t[0]}, {t[-1]}]")
    T0, T1 = max(T0, t[0]), min(T1, t[-1])
    inner = (t > T0 + tol) & (t < T1 - tol)
    tt = np.concatenate([[T0], t[inner], [T1]])
    pp = np.concatenate([[np.interp(T0, t, p)], p[inner], [np.interp(T1, t, p)]])
    return float(np.sum(0.5 * (pp[1:] + pp[:-1]) * np.diff(tt)))


def inject_jitter(signal: Signal, jitter_std: float, stream: RandomStream, decimation: int = 1) -> Signal:
    """Re-sample ``signal`` at jittered sampling instants.

    ``signal`` is the continuous-time referent (linear interpolation between
    its samples).  The nominal instants are every ``decimation``-th sample
    time; each is perturbed by an independent ``Normal(0, jitter_std)``
    offset and the interpolated values are reported on the nominal grid.
    """
    if not jitter_std >= 0:
        raise ParameterError("jitter_std must be non-negative")
    decimation = int(decimation)
    nominal = Signal(signal.samples[::decimation], signal.dt * decimation, signal.t0)
    if jitter_std == 0:
        return nominal
    if jitter_std > nominal.dt:
        warnings.warn(f"jitter std {jitter_std:g} s exceeds the sampling interval {nominal.dt:g} s",
                      SevereJitterWarning, stacklevel=2)
    t_nom = signal.t[::decimation]
    t_act = t_nom + jitter_std * stream.generator().standard_normal(t_nom.size)
    return nominal.with_samples(np.interp(t_act, signal.t, signal.samples))


# --------------------------------------------------------------------------
# specifications


Param = Union[float, str]


def _param(value, variables) -> float:
    if isinstance(value, str):
        out = Expression(value, names=list(variables))(**variables)
        return float(out)
    return float(value)


WAVEFORMS = {
    "constant": ("value",),
    "ramp": ("start", "end"),
    "sinusoid": ("amplitude", "frequency"),
    "exp_decay": ("initial", "final", "tau"),
}
_OPTIONAL = {"sinusoid": {"offset": 0.0, "phase": 0.0}}


@dataclass(frozen=True)
class Waveform:
    """Stimulus shape on phase-local time ``t`` in ``[0, D]``.

    ``constant``  value
    ``ramp``      start + (end - start) t / D
    ``sinusoid``  offset + amplitude sin(2 pi frequency t + phase)
    ``exp_decay`` final + (initial - final) exp(-t / tau)
    """

    kind: str
    params: dict

    def __post_init__(self):
        if self.kind not in WAVEFORMS:
            raise ConfigError(f"unknown waveform '{self.kind}'")
        missing = [p for p in WAVEFORMS[self.kind] if p not in self.params]
        if missing:
            raise ConfigError(f"waveform '{self.kind}' is missing {missing}")

    def evaluate(self, t, duration, variables):
        p = {**_OPTIONAL.get(self.kind, {}), **self.params}
        v = {k: _param(x, variables) for k, x in p.items()}
        if self.kind == "constant":
            return np.full_like(t, v["value"])
        if self.kind == "ramp":
            return v["start"] + (v["end"] - v["start"]) * t / duration
        if self.kind == "sinusoid":
            return v["offset"] + v["amplitude"] * np.sin(2 * np.pi * v["frequency"] * t + v["phase"])
        if v["tau"] <= 0:
            raise ParameterError("exp_decay tau must be positive")
        return v["final"] + (v["initial"] - v["final"]) * np.exp(-t / v["tau"])

    def to_dict(self):
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(d.pop("kind"), d)


@dataclass(frozen=True)
class Phase:
    name: str
    duration: Param
    channels: dict  # channel -> tuple of Waveform

    def to_dict(self):
        return {"name": self.name, "duration": self.duration,
                "channels": {c: [w.to_dict() for w in ws] for c, ws in self.channels.items()}}

    @classmethod
    def from_dict(cls, d):
        chans = {}
        for c, ws in (d.get("channels") or {}).items():
            ws = ws if isinstance(ws, list) else [ws]
            chans[c] = tuple(Waveform.from_dict(w) for w in ws)
        return cls(d["name"], d["duration"], chans)


@dataclass(frozen=True)
class EnergyIntegral:
    channel: str
    phase: str

    def to_dict(self):
        return {"rule": "energy_integral", "channel": self.channel, "phase": self.phase}


@dataclass(frozen=True)
class LinearCombination:
    weights: dict
    intercept: float = 0.0
    noise_std: float = 0.0

    def to_dict(self):
        return {"rule": "linear_combination", "weights": dict(self.weights),
                "intercept": self.intercept, "noise_std": self.noise_std}


def _target_from_dict(d):
    rule = d.get("rule")
    if rule == "energy_integral":
        return EnergyIntegral(d["channel"], d["phase"])
    if rule == "linear_combination":
        return LinearCombination(dict(d["weights"]), float(d.get("intercept", 0.0)), float(d.get("noise_std", 0.0)))
    raise ConfigError(f"unknown target rule '{rule}'")


@dataclass(frozen=True)
class ProcessSpec:
    channels: tuple
    phases: tuple
    variables: dict = field(default_factory=dict)  # name -> Distribution
    target: Union[EnergyIntegral, LinearCombination, None] = None

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "phases", tuple(self.phases))
        if not self.phases:
            raise ConfigError("process needs at least one phase")
        names = [p.name for p in self.phases]
        if len(set(names)) != len(names):
            raise ConfigError("phase names must be unique")
        for p in self.phases:
            for c in p.channels:
                if c not in self.channels:
                    raise ConfigError(f"phase '{p.name}' drives undeclared channel '{c}'")
            if not isinstance(p.duration, str) and not p.duration > 0:
                raise ConfigError(f"phase '{p.name}' needs a positive duration")
        t = self.target
        if isinstance(t, EnergyIntegral):
            if t.channel not in self.channels or t.phase not in names:
                raise ConfigError("energy target references an unknown channel or phase")
        elif isinstance(t, LinearCombination):
            unknown = set(t.weights) - set(self.variables)
            if unknown:
                raise ConfigError(f"target references unknown variables {sorted(unknown)}")

    def to_dict(self):
        return {
            "channels": list(self.channels),
            "variables": {k: distribution_to_dict(v) for k, v in self.variables.items()},
            "phases": [p.to_dict() for p in self.phases],
            "target": None if self.target is None else self.target.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            channels=tuple(d["channels"]),
            phases=tuple(Phase.from_dict(p) for p in d["phases"]),
            variables={k: distribution_from_dict(v) for k, v in (d.get("variables") or {}).items()},
            target=_target_from_dict(d["target"]) if d.get("target") else None,
        )


@dataclass(frozen=True)
class Static:
    gain: float = 1.0
    offset: float = 0.0


@dataclass(frozen=True)
class Dynamic:
    system: SecondOrderSystem


@dataclass(frozen=True)
class SensorSpec:
    id: str
    channel: str | None = None
    kind: Union[Static, Dynamic] = Static()
    noise_std: float = 0.0
    jitter_std: float = 0.0
    sample_rate: float = 50.0
    redundancy_of: str | None = None

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ConfigError(f"sensor '{self.id}': sample_rate must be positive")
        if self.noise_std < 0 or self.jitter_std < 0:
            raise ConfigError(f"sensor '{self.id}': noise and jitter must be non-negative")
        if (self.channel is None) == (self.redundancy_of is None):
            raise ConfigError(f"sensor '{self.id}': give exactly one of channel or redundancy_of")

    def to_dict(self):
        d = {"id": self.id}
        if self.redundancy_of is not None:
            d["redundancy_of"] = self.redundancy_of
        else:
            d["channel"] = self.channel
            if isinstance(self.kind, Dynamic):
                s = self.kind.system
                d["dynamic"] = {"delta": s.delta, "omega0": s.omega0, "rho": s.rho}
            else:
                d["static"] = {"gain": self.kind.gain, "offset": self.kind.offset}
        d.update(noise_std=self.noise_std, jitter_std=self.jitter_std, sample_rate=self.sample_rate)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "dynamic" in d:
            dyn = d.pop("dynamic")
            omega0 = float(dyn["omega0"])
            kind = Dynamic(SecondOrderSystem(float(dyn["delta"]), omega0, float(dyn.get("rho", omega0**2))))
        else:
            st = d.pop("static", None) or {}
            kind = Static(float(st.get("gain", 1.0)), float(st.get("offset", 0.0)))
        try:
            return cls(kind=kind, **d)
        except TypeError as exc:
            raise ConfigError(f"bad sensor entry {d.get('id')!r}: {exc}") from None


def validate_sensors(process: ProcessSpec, sensors) -> list:
    sensors = list(sensors)
    ids = [s.id for s in sensors]
    if len(set(ids)) != len(ids):
        raise ConfigError("sensor ids must be unique")
    by_id = {s.id: s for s in sensors}
    for s in sensors:
        if s.redundancy_of is not None:
            src = by_id.get(s.redundancy_of)
            if src is None or src.redundancy_of is not None:
                raise ConfigError(f"sensor '{s.id}' must duplicate an existing non-redundant sensor")
            if src.sample_rate != s.sample_rate:
                raise ConfigError(f"sensor '{s.id}' must share the sample rate of '{src.id}'")
        elif s.channel not in process.channels:
            raise ConfigError(f"sensor '{s.id}' observes undeclared channel '{s.channel}'")
    rates = {s.sample_rate for s in sensors}
    if len(rates) != 1:
        raise ConfigError("all sensors of a run must share one sample rate")
    return sensors


# --------------------------------------------------------------------------
# simulation


@dataclass(eq=False)
class SimRun:
    series: TimeSeriesSet
    ground_truth: dict
    controlled_values: dict
    seed: dict
    latent: dict  # channel -> Signal at the latent rate
    phase_times: dict  # phase -> (start, end) in seconds


def draw_controlled(process: ProcessSpec, stream: RandomStream) -> dict:
    return {name: float(sample(dist, stream.child(i), 1)[0, 0])
            for i, (name, dist) in enumerate(process.variables.items())}


def synthesize_latent(process: ProcessSpec, variables: dict, latent_rate: float):
    """Latent channel signals and phase times for given controlled values."""
    durations = [_param(p.duration, variables) for p in process.phases]
    for p, d in zip(process.phases, durations):
        if not d > 0:
            raise ParameterError(f"phase '{p.name}' has non-positive duration {d}")
    edges = np.concatenate([[0.0], np.cumsum(durations)])
    dt = 1.0 / latent_rate
    # cover the run end on the sensor grid; the last phase extends to fill it
    n_sensor = int(math.ceil(edges[-1] * latent_rate / LATENT_OVERSAMPLING - 1e-9)) + 1
    n = (n_sensor - 1) * LATENT_OVERSAMPLING + 1
    t = dt * np.arange(n)
    which = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(durations) - 1)
    latent = {}
    for c in process.channels:
        x = np.zeros(n)
        for i, ph in enumerate(process.phases):
            sel = which == i
            if not sel.any():
                continue
            local = t[sel] - edges[i]
            for w in ph.channels.get(c, ()):
                x[sel] += w.evaluate(local, durations[i], variables)
        latent[c] = Signal(x, dt, 0.0)
    times = {p.name: (float(edges[i]), float(edges[i + 1])) for i, p in enumerate(process.phases)}
    return latent, times


def simulate_run(process: ProcessSpec, sensors, stream: RandomStream, run_id: str = "run_000") -> SimRun:
    """Generate one run: controlled variables, latent stimuli, sensor series
    and the ground-truth target."""
    sensors = validate_sensors(process, sensors)
    rate = sensors[0].sample_rate
    latent_rate = LATENT_OVERSAMPLING * rate
    variables = draw_controlled(process, stream.child(0))
    latent, times = synthesize_latent(process, variables, latent_rate)

    truth = {}
    tgt = process.target
    if isinstance(tgt, EnergyIntegral):
        t0, t1 = times[tgt.phase]
        # latent power on the sensor grid, so an ideal power sensor recovers the target exactly
        p = latent[tgt.channel]
        truth["target"] = energy_target(Signal(p.samples[::LATENT_OVERSAMPLING], p.dt * LATENT_OVERSAMPLING), t0, t1)
    elif isinstance(tgt, LinearCombination):
        val = tgt.intercept + sum(w * variables[k] for k, w in tgt.weights.items())
        if tgt.noise_std > 0:
            val += tgt.noise_std * float(stream.child(1).generator().standard_normal())
        truth["target"] = float(val)

    clean = {}
    out = {}
    for i, s in enumerate(sensors):
        if s.redundancy_of is not None:
            continue
        x = latent[s.channel]
        if isinstance(s.kind, Dynamic):
            h = impulse_response(s.kind.system, x.dt, len(x))
            resp = convolve(h, x)
        else:
            resp = x.with_samples(s.kind.gain * x.samples + s.kind.offset)
        clean[s.id] = inject_jitter(resp, s.jitter_std, stream.child(2 + i).child(0), LATENT_OVERSAMPLING)
    for i, s in enumerate(sensors):
        base = clean[s.redundancy_of] if s.redundancy_of is not None else clean[s.id]
        if s.noise_std > 0:
            e = stream.child(2 + i).child(1).generator().standard_normal(len(base))
            out[s.id] = base.with_samples(base.samples + s.noise_std * e)
        else:
            out[s.id] = base
    return SimRun(
        series=TimeSeriesSet(run_id, out),
        ground_truth=truth,
        controlled_values=variables,
        seed={"master_seed": stream.master_seed, "stream_index": stream.stream_index},
        latent=latent,
        phase_times=times,
    )


@dataclass(eq=False)
class Benchmark:
    runs: list
    process: ProcessSpec
    sensors: list
    master_seed: int | None

    @property
    def targets(self) -> np.ndarray:
        return np.array([r.ground_truth["target"] for r in self.runs])

    @property
    def series(self) -> list:
        return [r.series for r in self.runs]

    def targets_table(self) -> list:
        rows = []
        for r in self.runs:
            rows.append({"run_id": r.series.run_id, "target": r.ground_truth.get("target"), **r.controlled_values})
        return rows


def make_benchmark(process: ProcessSpec, sensors, n_runs: int = 81, stream: RandomStream | None = None,
                   *, workers: int = 1) -> Benchmark:
    """``n_runs`` independent runs; run ``r`` uses ``stream.child(r)``.

    With ``workers > 1`` runs are generated on a thread pool; the result is
    identical to the sequential one.
    """
    if int(n_runs) < 1:
        raise ParameterError("n_runs must be at least 1")
    if stream is None:
        raise ParameterError("a RandomStream is required")
    sensors = validate_sensors(process, sensors)

    def one(r):
        return simulate_run(process, sensors, stream.child(r), run_id=f"run_{r:03d}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, range(int(n_runs))))
    else:
        runs = [one(r) for r in range(int(n_runs))]
    return Benchmark(runs, process, sensors, stream.master_seed)


# --------------------------------------------------------------------------
# benchmark directories


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def write_benchmark(bench: Benchmark, directory, extra_manifest: dict | None = None) -> Path:
    """Write ``run_XXX.csv`` files, ``targets.csv`` and ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for r in bench.runs:
        s = r.series
        ids = s.sensors
        t = s[ids[0]].t
        with (d / f"{s.run_id}.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *ids])
            cols = [s[i].samples for i in ids]
            for k in range(t.size):
                w.writerow([repr(float(t[k])), *(repr(float(c[k])) for c in cols)])
    table = bench.targets_table()
    var_names = list(bench.process.variables)
    with (d / "targets.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "target", *var_names])
        for row in table:
            w.writerow([row["run_id"], repr(float(row["target"])) if row["target"] is not None else "",
                        *(repr(float(row[v])) for v in var_names)])
    config = {"process": bench.process.to_dict(), "sensors": [s.to_dict() for s in bench.sensors]}
    manifest = {
        "kind": "benchmark",
        "master_seed": bench.master_seed,
        "n_runs": len(bench.runs),
        "config_digest": _digest(config),
        "config": config,
    }
    manifest.update(extra_manifest or {})
    with (d / "manifest.json").open("w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return d


def read_run_csv(path, run_id=None) -> TimeSeriesSet:
    """Read a ``t,<sensor>,...`` CSV into a :class:`TimeSeriesSet`."""
    from .lti import infer_dt

    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if len(header) < 2 or header[0] != "t":
            raise DataError(f"{path}:1: expected header 't,<sensor>,...'")
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise DataError(f"{path}:{line}: non-numeric value in {row!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}:{line}: non-finite value")
            rows.append(vals)
    if len(rows) < 2:
        raise DataError(f"{path}: need at least two samples")
    a = np.asarray(rows)
    dt = infer_dt(a[:, 0], source=str(path))
    sigs = {name: Signal(a[:, j + 1], dt, a[0, 0]) for j, name in enumerate(header[1:])}
    return TimeSeriesSet(run_id or path.stem, sigs)


def read_targets_csv(path) -> dict:
    """Map run id to target value (``None`` when the column is empty)."""
    path = Path(path)
    out = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        if header[:2] != ["run_id", "target"]:
            raise DataError(f"{path}:1: expected header 'run_id,target,...'")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out[row[0]] = float(row[1]) if row[1] != "" else None
            except (ValueError, IndexError):
                raise DataError(f"{path}:{line}: malformed target row {row!r}") from None
    return out


def read_benchmark(directory):
    """Run series and targets from a benchmark directory.

    Every ``*.csv`` other than ``targets.csv`` is a run; runs are ordered by
    file name.  Returns ``(runs, targets)`` with ``targets`` aligned to runs
    (``None`` for runs without a target row).
    """
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"{d}: not a directory")
    files = sorted(p for p in d.glob("*.csv") if p.name != "targets.csv")
    if not files:
        raise DataError(f"{d}: no run CSV files")
    runs = [read_run_csv(p) for p in files]
    tpath = d / "targets.csv"
    table = read_targets_csv(tpath) if tpath.exists() else {}
    targets = [table.get(r.run_id) for r in runs]
    return runs, targets


# --------------------------------------------------------------------------
# built-in configurations

FORGING_CONFIG = {
    "n_runs": 81,
    "process": {
        "channels": ["power", "temperature", "force", "chuck_speed", "radial_speed", "null"],
        "variables": {
            "idle_time": {"dist": "uniform", "lower": 0.5, "upper": 1.5},
            "entry_temperature": {"dist": "uniform", "lower": 950.0, "upper": 1150.0},
            "axial_feed": {"dist": "uniform", "lower": 2.0, "upper": 6.0},
            "radial_feed": {"dist": "uniform", "lower": 1.0, "upper": 3.0},
        },
        "phases": [
            {"name": "idle", "duration": "idle_time", "channels": {
                "power": {"kind": "constant", "value": 0.5},
                "temperature": {"kind": "constant", "value": 20.0}}},
            {"name": "heating", "duration": 4.0, "channels": {
                "power": {"kind": "constant", "value": "30 + 0.02*entry_temperature"},
                "temperature": {"kind": "exp_decay", "initial": 20.0, "final": "entry_temperature", "tau": 0.6}}},
            {"name": "forming", "duration": 5.0, "channels": {
                "power": [
                    {"kind": "constant", "value": "60 + 0.08*(1200 - entry_temperature) + 6*axial_feed + 10*radial_feed"},
                    {"kind": "sinusoid", "amplitude": 4.0, "frequency": 3.0}],
                "temperature": {"kind": "ramp", "start": "entry_temperature",
                                "end": "entry_temperature - 40 - 8*axial_feed"},
                "force": [
                    {"kind": "constant", "value": "300 + 0.6*(1200 - entry_temperature) + 40*radial_feed"},
                    {"kind": "sinusoid", "amplitude": 30.0, "frequency": 3.0}],
                "chuck_speed": {"kind": "constant", "value": "axial_feed"},
                "radial_speed": [
                    {"kind": "constant", "value": "radial_feed"},
                    {"kind": "sinusoid", "amplitude": 0.1, "frequency": 3.0}]}},
            {"name": "cooldown", "duration": 1.0, "channels": {
                "power": {"kind": "constant", "value": 0.5},
                "temperature": {"kind": "exp_decay", "initial": "entry_temperature - 40 - 8*axial_feed",
                                "final": 20.0, "tau": 20.0}}},
        ],
        "target": {"rule": "energy_integral", "channel": "power", "phase": "forming"},
    },
    "sensors": [
        {"id": "power", "channel": "power", "noise_std": 1.0, "jitter_std": 0.001},
        {"id": "temp_1", "channel": "temperature", "dynamic": {"delta": 1.0, "omega0": 6.283185307179586},
         "noise_std": 2.0},
        {"id": "temp_2", "channel": "temperature", "static": {"gain": 1.0, "offset": 3.0}, "noise_std": 2.0},
        {"id": "force_left", "channel": "force", "noise_std": 10.0, "jitter_std": 0.001},
        {"id": "force_right", "channel": "force", "static": {"gain": 0.98, "offset": 0.0}, "noise_std": 10.0,
         "jitter_std": 0.001},
        {"id": "chuck_speed", "channel": "chuck_speed", "noise_std": 0.05},
        {"id": "radial_speed", "channel": "radial_speed", "noise_std": 0.05},
        {"id": "power_dup", "redundancy_of": "power", "noise_std": 0.4},
        {"id": "temp_1_dup", "redundancy_of": "temp_1", "noise_std": 4.0},
        {"id": "force_left_dup", "redundancy_of": "force_left", "noise_std": 2.5},
        {"id": "noise_1", "channel": "null", "noise_std": 1.0},
        {"id": "noise_2", "channel": "null", "noise_std": 1.0},
    ],
}

DYNAMIC_DISTORTION_CONFIG = {
    "n_runs": 60,
    "process": {
        "channels": ["acceleration"],
        "variables": {
            "amplitude": {"dist": "uniform", "lower": 1.0, "upper": 3.0},
            "width": {"dist": "uniform", "lower": 0.04, "upper": 0.25},
            "lead": {"dist": "uniform", "lower": 0.2, "upper": 0.4},
        },
        "phases": [
            {"name": "lead", "duration": "lead", "channels": {}},
            {"name": "rise", "duration": "width", "channels": {
                "acceleration": {"kind": "ramp", "start": 0.0, "end": "amplitude"}}},
            {"name": "fall", "duration": "width", "channels": {
                "acceleration": {"kind": "ramp", "start": "amplitude", "end": 0.0}}},
            {"name": "tail", "duration": "2 - lead - 2*width", "channels": {}},
        ],
        "target": {"rule": "linear_combination", "weights": {"amplitude": 1.0}},
    },
    "sensors": [
        {"id": "accel", "channel": "acceleration", "dynamic": {"delta": 0.1, "omega0": 25.132741228718345},
         "noise_std": 0.01, "sample_rate": 100.0},
    ],
}


def load_config(d: dict):
    """``(process, sensors, n_runs)`` from a configuration mapping."""
    try:
        process = ProcessSpec.from_dict(d["process"])
        sensors = [SensorSpec.from_dict(s) for s in d["sensors"]]
    except KeyError as exc:
        raise ConfigError(f"simulation config is missing {exc}") from None
    except (TypeError, ParameterError) as exc:
        raise ConfigError(f"invalid simulation config: {exc}") from None
    validate_sensors(process, sensors)
    n_runs = int(d.get("n_runs", 81))
    return process, sensors, n_runs


def forging_config() -> dict:
    return copy.deepcopy(FORGING_CONFIG)


def dynamic_distortion_config() -> dict:
    return copy.deepcopy(DYNAMIC_DISTORTION_CONFIG)


# --------------------------------------------------------------------------
# generators for bias-variance studies


@dataclass(frozen=True)
class PolynomialProcess:
    """``y = sum(c_k x**k) + Normal(0, noise_std)`` with ``x ~ U(lo, hi)``."""

    coefficients: tuple = (0.0, 1.0, -2.0, 1.5)
    noise_std: float = 0.3
    x_range: tuple = (-1.0, 1.0)
    grid_size: int = 50

    def truth(self, X):
        x = np.asarray(X, dtype=float)
        x = x[:, 0] if x.ndim == 2 else x
        return np.polynomial.polynomial.polyval(x, self.coefficients)

    def sample(self, n, rng):
        x = rng.uniform(*self.x_range, size=n)
        y = self.truth(x) + self.noise_std * rng.standard_normal(n)
        return x[:, None], y

    def test_grid(self):
        return np.linspace(*self.x_range, self.grid_size)[:, None]


@dataclass(frozen=True)
class LinearProcess:
    """``y = intercept + X @ weights + Normal(0, noise_std)``, ``X ~ U(-1, 1)``."""

    weights: tuple = (1.0, -0.5)
    intercept: float = 0.0
    noise_std: float = 0.0
    grid_size: int = 50

    def truth(self, X):
        return self.intercept + np.asarray(X, dtype=float) @ np.asarray(self.weights)

    def sample(self, n, rng):
        X = rng.uniform(-1, 1, size=(n, len(self.weights)))
        return X, self.truth(X) + self.noise_std * rng.standard_normal(n)

    def test_grid(self):
        g = np.linspace(-1, 1, self.grid_size)
        return np.column_stack([g * (1 if i % 2 == 0 else -1) for i in range(len(self.weights))])
