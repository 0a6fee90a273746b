"""Uncertain quantities, probability distributions and seeded random streams.

The value types here are immutable.  Randomness enters the package only
through :class:`RandomStream`, which maps a ``(master_seed, stream_index)``
pair to a reproducible :class:`numpy.random.Generator`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import InsufficientDataError, ParameterError, ShapeError

#: Relative tolerance on the symmetry of covariance matrices.
SYMMETRY_RTOL = 1e-12
#: Eigenvalues down to ``-PSD_RTOL * lambda_max`` are accepted as zero.
PSD_RTOL = 1e-10

_U64 = 2**64
_I63_MASK = 2**63 - 1


# --------------------------------------------------------------------------
# random streams


def derive_stream_index(parent_index: int, unit: int) -> int:
    """Stable child stream index for work unit ``unit`` of ``parent_index``."""
    digest = hashlib.blake2b(f"{int(parent_index)}/{int(unit)}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") & _I63_MASK


@dataclass(frozen=True)
class RandomStream:
    """Reproducible source of random numbers.

    Parameters
    ----------
    master_seed : int
        Unsigned 64-bit seed shared by a whole computation.
    stream_index : int
        Non-negative index selecting an independent sub-stream.

    Notes
    -----
    :meth:`generator` returns a *fresh* generator on every call, so two calls
    on the same stream produce the same numbers.  Consumers needing several
    independent sequences derive them with :meth:`child`.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < _U64:
            raise ParameterError(f"master_seed must be an unsigned 64-bit integer, got {self.master_seed}")
        if int(self.stream_index) < 0:
            raise ParameterError("stream_index must be non-negative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_index),))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, unit: int) -> "RandomStream":
        return RandomStream(self.master_seed, derive_stream_index(self.stream_index, unit))


# --------------------------------------------------------------------------
# uncertain values


@dataclass(frozen=True)
class UncertainScalar:
    """Estimate with its standard uncertainty."""

    estimate: float
    std_uncertainty: float

    def __post_init__(self):
        if not (np.isfinite(self.estimate) and np.isfinite(self.std_uncertainty)):
            raise ParameterError("estimate and standard uncertainty must be finite")
        if self.std_uncertainty < 0:
            raise ParameterError("standard uncertainty must be non-negative")


@dataclass(frozen=True)
class CovarianceVerdict:
    accepted: bool
    asymmetry: float
    min_eigenvalue: float
    max_eigenvalue: float
    worst_violation: str

    def __bool__(self):
        return self.accepted


def validate_covariance(m) -> CovarianceVerdict:
    """Check that ``m`` is symmetric and numerically positive semi-definite.

    Symmetry is judged relative to the largest absolute entry; negative
    eigenvalues are tolerated down to ``-1e-10`` times the largest one.

    Raises
    ------
    ShapeError
        If ``m`` is not a square matrix.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"covariance must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        return CovarianceVerdict(False, np.inf, np.nan, np.nan, "non-finite entries")
    scale = np.max(np.abs(m)) if m.size else 0.0
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    rel_asym = asym / scale if scale > 0 else 0.0
    eig = np.linalg.eigvalsh(0.5 * (m + m.T)) if m.size else np.zeros(0)
    lo = float(eig[0]) if eig.size else 0.0
    hi = float(eig[-1]) if eig.size else 0.0
    tol = PSD_RTOL * max(hi, 0.0)
    problems = []
    if rel_asym > SYMMETRY_RTOL:
        problems.append(f"asymmetry {rel_asym:.3g} (relative) exceeds {SYMMETRY_RTOL:g}")
    if lo < -tol:
        problems.append(f"eigenvalue {lo:.6g} below tolerance {-tol:.3g}")
    return CovarianceVerdict(not problems, rel_asym, lo, hi, "; ".join(problems) or "none")


@dataclass(frozen=True, eq=False)
class UncertainVector:
    """Vector of estimates with their covariance matrix."""

    estimates: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.estimates, dtype=float)).copy()
        v = np.atleast_2d(np.asarray(self.covariance, dtype=float)).copy()
        if x.ndim != 1:
            raise ShapeError("estimates must be a vector")
        if v.shape != (x.size, x.size):
            raise ShapeError(f"covariance shape {v.shape} does not match {x.size} estimates")
        if not np.all(np.isfinite(x)):
            raise ParameterError("estimates must be finite")
        verdict = validate_covariance(v)
        if not verdict:
            raise ParameterError(f"invalid covariance: {verdict.worst_violation}")
        x.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "estimates", x)
        object.__setattr__(self, "covariance", v)

    @classmethod
    def independent(cls, estimates, std_uncertainties) -> "UncertainVector":
        u = np.asarray(std_uncertainties, dtype=float)
        return cls(estimates, np.diag(u**2))

    def __len__(self):
        return self.estimates.size

    @property
    def std_uncertainties(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def correlation(self) -> np.ndarray:
        u = self.std_uncertainties
        with np.errstate(invalid="ignore", divide="ignore"):
            r = self.covariance / np.outer(u, u)
        r[~np.isfinite(r)] = 0.0
        return r

    def component(self, i: int) -> UncertainScalar:
        return UncertainScalar(float(self.estimates[i]), float(self.std_uncertainties[i]))


# --------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.std)) or self.std <= 0:
            raise ParameterError(f"Normal requires finite mean and std > 0, got ({self.mean}, {self.std})")

    dim = 1

    def moments(self):
        return np.array([self.mean]), np.array([[self.std**2]])


@dataclass(frozen=True)
class Uniform:
    lower: float
    upper: float

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)) or not self.lower < self.upper:
            raise ParameterError(f"Uniform requires lower < upper, got ({self.lower}, {self.upper})")

    dim = 1

    def moments(self):
        width = self.upper - self.lower
        return np.array([0.5 * (self.lower + self.upper)]), np.array([[width**2 / 12.0]])


@dataclass(frozen=True, eq=False)
class MultiNormal:
    mean: np.ndarray
    covariance: np.ndarray
    _factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        # UncertainVector performs the shape and PSD validation
        uv = UncertainVector(self.mean, self.covariance)
        object.__setattr__(self, "mean", uv.estimates)
        object.__setattr__(self, "covariance", uv.covariance)
        w, q = np.linalg.eigh(0.5 * (uv.covariance + uv.covariance.T))
        w = np.where(w > PSD_RTOL * max(w[-1], 0.0), w, 0.0)
        object.__setattr__(self, "_factor", q * np.sqrt(w))

    @property
    def dim(self):
        return self.mean.size

    def moments(self):
        return self.mean.copy(), self.covariance.copy()


Distribution = Union[Normal, Uniform, MultiNormal]


def sample(dist: Distribution, stream: RandomStream, n: int) -> np.ndarray:
    """Draw ``n`` independent samples; returns an ``(n, dim)`` array."""
    if int(n) < 1:
        raise ParameterError("n must be at least 1")
    n = int(n)
    rng = stream.generator()
    if isinstance(dist, Normal):
        return rng.normal(dist.mean, dist.std, size=(n, 1))
    if isinstance(dist, Uniform):
        return rng.uniform(dist.lower, dist.upper, size=(n, 1))
    if isinstance(dist, MultiNormal):
        z = rng.standard_normal((n, dist.dim))
        return dist.mean + z @ dist._factor.T
    raise ParameterError(f"unsupported distribution {dist!r}")


# --------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class Summary:
    mean: float
    std: float
    interval: tuple
    coverage: float


def summarize(samples, coverage: float = 0.95) -> Summary:
    """Mean, unbiased standard deviation and probabilistically symmetric
    percentile coverage interval of a sample."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {x.size}")
    if not 0.0 < coverage < 1.0:
        raise ParameterError("coverage must lie strictly between 0 and 1")
    if np.all(x == x[0]):
        c = float(x[0])
        return Summary(c, 0.0, (c, c), coverage)
    lo, hi = np.quantile(x, [(1.0 - coverage) / 2.0, (1.0 + coverage) / 2.0])
    return Summary(float(np.mean(x)), float(np.std(x, ddof=1)), (float(lo), float(hi)), coverage)


def distribution_from_dict(d: dict) -> Distribution:
    """Build a distribution from a config mapping such as
    ``{"dist": "normal", "mean": 0, "std": 1}``,
    ``{"dist": "uniform", "lower": 0, "upper": 1}`` or
    ``{"dist": "multinormal", "mean": [...], "covariance": [[...]]}``."""
    kind = str(d.get("dist", "normal")).lower()
    try:
        if kind == "normal":
            return Normal(float(d["mean"]), float(d["std"]))
        if kind == "uniform":
            return Uniform(float(d["lower"]), float(d["upper"]))
        if kind in ("multinormal", "multi_normal"):
            return MultiNormal(np.asarray(d["mean"], float), np.asarray(d["covariance"], float))
    except KeyError as exc:
        raise ParameterError(f"distribution '{kind}' is missing field {exc}") from None
    raise ParameterError(f"unknown distribution kind '{kind}'")


def distribution_to_dict(dist: Distribution) -> dict:
    if isinstance(dist, Normal):
        return {"dist": "normal", "mean": dist.mean, "std": dist.std}
    if isinstance(dist, Uniform):
        return {"dist": "uniform", "lower": dist.lower, "upper": dist.upper}
    return {"dist": "multinormal", "mean": dist.mean.tolist(), "covariance": dist.covariance.tolist()}
