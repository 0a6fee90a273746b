"""Uncertainty propagation through measurement functions.

Two routes are offered and can be cross-checked:

* :func:`propagate_lpu` -- first-order law of propagation of uncertainty,
  sensitivities by central finite differences;
* :func:`propagate_mc` -- fixed-trial Monte Carlo.  Trials are processed in
  batches, each drawing from its own derived :class:`RandomStream`, so the
  result is independent of how batches are scheduled over workers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError, ParameterError, ShapeError
from .uncertain import (
    MultiNormal,
    RandomStream,
    UncertainVector,
    sample,
    summarize,
)

COVERAGE = 0.95
COVERAGE_FACTOR = 1.96
MC_BATCH = 10_000
MIN_TRIALS = 1000


@dataclass(frozen=True)
class MeasurementFunction:
    """Deterministic map from an input vector to a scalar.

    With ``vectorized=True`` the evaluator receives an ``(n, arity)`` array
    and must return ``n`` values; otherwise it is called row by row.
    """

    evaluator: Callable
    arity: int
    vectorized: bool = False
    names: tuple = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.arity:
            raise ShapeError(f"function takes {self.arity} inputs, got {x.shape[-1]}")
        if self.vectorized:
            return float(np.asarray(self.evaluator(x[None, :]), dtype=float).reshape(-1)[0])
        return float(self.evaluator(x))

    def evaluate_many(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self.vectorized:
            return np.asarray(self.evaluator(xs), dtype=float).reshape(-1)
        return np.fromiter((self.evaluator(row) for row in xs), dtype=float, count=xs.shape[0])


@dataclass(frozen=True)
class PropagationResult:
    estimate: float
    std_uncertainty: float
    coverage_interval: tuple  # (lo, hi, level)
    method: str  # "LPU" or "MonteCarlo"
    trials: int = 0
    seed: int | None = None

    def to_dict(self):
        d = asdict(self)
        d["coverage_interval"] = list(self.coverage_interval)
        return d


def fd_step(x: float) -> float:
    """Central-difference step near ``1e-6 * (1 + |x|)``, rounded down to a
    power of two so that ``x +- h`` is exact for most ``x``."""
    target = 1e-6 * (1.0 + abs(x))
    return 2.0 ** math.floor(math.log2(target))


def sensitivities(f: MeasurementFunction, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    c = np.empty(x.size)
    for i in range(x.size):
        h = fd_step(x[i])
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = f(xp), f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError(f"non-finite function value near input {i} = {x[i]!r}")
        c[i] = (fp - fm) / (xp[i] - xm[i])
    return c


def propagate_lpu(f: MeasurementFunction, x: UncertainVector) -> PropagationResult:
    """Linearized propagation: ``u**2 = c^T V c`` at the input estimates."""
    if len(x) != f.arity:
        raise ShapeError(f"function takes {f.arity} inputs, got {len(x)}")
    y = f(x.estimates)
    if not np.isfinite(y):
        raise EvaluationError("non-finite function value at the estimates")
    c = sensitivities(f, x.estimates)
    var = float(c @ x.covariance @ c)
    u = math.sqrt(max(var, 0.0))
    return PropagationResult(y, u, (y - COVERAGE_FACTOR * u, y + COVERAGE_FACTOR * u, COVERAGE), "LPU")


def _as_dist_list(dists):
    if isinstance(dists, MultiNormal) or not isinstance(dists, Sequence):
        return [dists]
    return list(dists)


def joint_moments(dists) -> UncertainVector:
    """Mean vector and block-diagonal covariance of independent inputs."""
    means, blocks = [], []
    for d in _as_dist_list(dists):
        m, v = d.moments()
        means.append(m)
        blocks.append(v)
    n = sum(m.size for m in means)
    cov = np.zeros((n, n))
    i = 0
    for v in blocks:
        k = v.shape[0]
        cov[i:i + k, i:i + k] = v
        i += k
    return UncertainVector(np.concatenate(means), cov)


def draw_inputs(dists, stream: RandomStream, n: int) -> np.ndarray:
    """Stack samples of independent input distributions column-wise."""
    return np.hstack([sample(d, stream.child(i), n) for i, d in enumerate(_as_dist_list(dists))])


def _batch_sizes(trials: int, batch: int):
    full, rest = divmod(trials, batch)
    return [batch] * full + ([rest] if rest else [])


def propagate_mc(
    f: MeasurementFunction,
    dists,
    trials: int,
    stream: RandomStream,
    *,
    workers: int | None = None,
    batch_size: int = MC_BATCH,
    return_values: bool = False,
):
    """Monte Carlo propagation with ``trials`` draws.

    Batch ``b`` of ``batch_size`` trials samples from ``stream.child(b)``;
    ``workers > 1`` evaluates batches concurrently with identical results.

    Raises
    ------
    EvaluationError
        On the first non-finite evaluation; ``.index`` is the global trial.
    """
    trials = int(trials)
    if trials < MIN_TRIALS:
        raise ParameterError(f"Monte Carlo needs at least {MIN_TRIALS} trials, got {trials}")
    dist_list = _as_dist_list(dists)
    dim = sum(d.dim for d in dist_list)
    if dim != f.arity:
        raise ShapeError(f"function takes {f.arity} inputs, distributions provide {dim}")
    sizes = _batch_sizes(trials, batch_size)

    def run(b):
        xs = draw_inputs(dist_list, stream.child(b), sizes[b])
        return xs, f.evaluate_many(xs)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(b) for b in range(len(sizes))]
    values = np.concatenate([v for _, v in parts])
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0])
        b, off = divmod(i, batch_size)
        raise EvaluationError(f"non-finite value at trial {i} for input {parts[b][0][off].tolist()}", index=i)
    s = summarize(values, COVERAGE)
    res = PropagationResult(s.mean, s.std, (s.interval[0], s.interval[1], COVERAGE), "MonteCarlo", trials, stream.master_seed)
    return (res, values) if return_values else res


@dataclass(frozen=True)
class ValidationVerdict:
    accepted: bool
    u_lpu: float
    u_mc: float
    tolerance: float
    lpu: PropagationResult
    mc: PropagationResult

    def __bool__(self):
        return self.accepted

    def to_dict(self):
        return {
            "accepted": self.accepted,
            "u_lpu": self.u_lpu,
            "u_mc": self.u_mc,
            "tolerance": self.tolerance,
            "lpu": self.lpu.to_dict(),
            "mc": self.mc.to_dict(),
        }


def validate_lpu_vs_mc(f: MeasurementFunction, dists, trials: int, stream: RandomStream, tol: float, **kw) -> ValidationVerdict:
    """Accept the linearization when ``|u_LPU - u_MC| <= tol * u_MC``."""
    if not tol >= 0:
        raise ParameterError("tolerance must be non-negative")
    lpu = propagate_lpu(f, joint_moments(dists))
    mc = propagate_mc(f, dists, trials, stream, **kw)
    ok = math.isinf(tol) or abs(lpu.std_uncertainty - mc.std_uncertainty) <= tol * mc.std_uncertainty
    return ValidationVerdict(bool(ok), lpu.std_uncertainty, mc.std_uncertainty, tol, lpu, mc)


def write_report(results, path, extra: dict | None = None):
    """Write propagation results as an indented JSON document."""
    doc = dict(extra or {})
    doc["results"] = [r.to_dict() for r in results]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
