"""Parametric sensor forward models and weighted least-squares calibration.

A forward model maps a stimulus ``y`` and parameters ``beta`` to the sensor
indication ``z = phi(y, beta)``.  Three families are provided:

``Affine``
    ``beta = (gain, offset)``, ``phi = gain * y + offset``.
``Polynomial(degree)``
    ``beta = (c0, c1, ..., c_degree)`` in ascending powers.
``Composed(stages)``
    stages applied in sequence, parameters concatenated stage by stage.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DataError,
    InvertibilityError,
    ParameterError,
    RangeError,
    RankDeficiencyError,
)
from .uncertain import UncertainVector

MAX_ITERATIONS = 200
COST_RTOL = 1e-12
GRADIENT_ATOL = 1e-10
# relative singular-value cutoff of the whitened Jacobian
RANK_RTOL = 1e-12
INVERSION_GRID = 2001


class Affine:
    n_params = 2

    def __call__(self, y, beta):
        return beta[0] * y + beta[1]

    def jacobian(self, y, beta):
        y = np.asarray(y, dtype=float)
        return np.stack([y, np.ones_like(y)], axis=-1)

    def to_dict(self):
        return {"family": "affine"}

    def __repr__(self):
        return "Affine()"


class Polynomial:
    def __init__(self, degree: int):
        if not 0 <= int(degree) <= 5:
            raise ParameterError(f"polynomial degree must be in 0..5, got {degree}")
        self.degree = int(degree)

    @property
    def n_params(self):
        return self.degree + 1

    def __call__(self, y, beta):
        # Horner, highest power first
        out = np.zeros_like(np.asarray(y, dtype=float)) + beta[-1]
        for c in beta[-2::-1]:
            out = out * y + c
        return out

    def jacobian(self, y, beta):
        y = np.asarray(y, dtype=float)
        return np.stack([y**k for k in range(self.n_params)], axis=-1)

    def to_dict(self):
        return {"family": "polynomial", "degree": self.degree}

    def __repr__(self):
        return f"Polynomial({self.degree})"


class Composed:
    """Stages applied in order: ``phi = s_n(... s_1(y, b_1) ..., b_n)``."""

    def __init__(self, stages):
        stages = list(stages)
        if not stages:
            raise ParameterError("composed model needs at least one stage")
        self.stages = stages

    @property
    def n_params(self):
        return sum(s.n_params for s in self.stages)

    def _split(self, beta):
        parts, i = [], 0
        for s in self.stages:
            parts.append(beta[i:i + s.n_params])
            i += s.n_params
        return parts

    def __call__(self, y, beta):
        out = y
        for stage, b in zip(self.stages, self._split(beta)):
            out = stage(out, b)
        return out

    def jacobian(self, y, beta):
        y = np.asarray(y, dtype=float)
        beta = np.asarray(beta, dtype=float)
        cols = []
        for j in range(beta.size):
            h = 1e-6 * (1.0 + abs(beta[j]))
            bp, bm = beta.copy(), beta.copy()
            bp[j] += h
            bm[j] -= h
            cols.append((self(y, bp) - self(y, bm)) / (bp[j] - bm[j]))
        return np.stack(cols, axis=-1)

    def to_dict(self):
        return {"family": "composed", "stages": [s.to_dict() for s in self.stages]}

    def __repr__(self):
        return f"Composed({self.stages!r})"


def model_from_dict(d: dict):
    family = str(d.get("family", "")).lower()
    if family == "affine":
        return Affine()
    if family == "polynomial":
        return Polynomial(int(d["degree"]))
    if family == "composed":
        return Composed(model_from_dict(s) for s in d["stages"])
    raise ParameterError(f"unknown forward-model family '{family}'")


def _check_beta(model, beta):
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size != model.n_params:
        raise ParameterError(f"{model!r} takes {model.n_params} parameters, got {beta.size}")
    return beta


def eval_forward(model, y, beta):
    """Sensor indication ``phi(y, beta)``."""
    beta = _check_beta(model, beta)
    if isinstance(model, Affine) and beta[0] == 0:
        raise ParameterError("affine gain must be non-zero")
    out = model(y, beta)
    return float(out) if np.ndim(out) == 0 else out


def invert_model(model, z: float, beta, bracket=(-1e3, 1e3)) -> float:
    """Stimulus ``y`` in ``bracket`` with ``phi(y, beta) == z``.

    Affine models are inverted in closed form.  Other families use Brent's
    method after checking on a grid that ``phi - z`` changes sign exactly
    once inside the bracket.

    Raises
    ------
    RangeError
        ``z`` is not in the image of the bracket.
    InvertibilityError
        ``phi`` is not monotone on the bracket (more than one crossing).
    """
    beta = _check_beta(model, beta)
    z = float(z)
    if isinstance(model, Affine):
        if beta[0] == 0:
            raise InvertibilityError("affine gain is zero")
        return (z - beta[1]) / beta[0]
    a, b = float(bracket[0]), float(bracket[1])
    if not a < b:
        raise ParameterError("bracket must satisfy lower < upper")
    grid = np.linspace(a, b, INVERSION_GRID)
    g = np.asarray(model(grid, beta), dtype=float) - z
    if not np.all(np.isfinite(g)):
        raise InvertibilityError("forward model is not finite on the bracket")
    if g.min() > 0 or g.max() < 0:
        raise RangeError(f"z={z} lies outside the image [{g.min() + z:.6g}, {g.max() + z:.6g}] of the bracket")
    s = np.sign(g)
    nz = s[s != 0]
    crossings = int(np.count_nonzero(nz[1:] != nz[:-1]))
    zeros = np.flatnonzero(g == 0)
    if crossings > 1 or zeros.size > 1:
        raise InvertibilityError(f"forward model is not monotone on [{a}, {b}] ({crossings} sign changes)")
    if zeros.size == 1:
        return float(grid[zeros[0]])
    k = int(np.flatnonzero(s[:-1] * s[1:] < 0)[0])
    y = brentq(lambda t: float(model(t, beta)) - z, grid[k], grid[k + 1], xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(y)


# --------------------------------------------------------------------------
# calibration


@dataclass(frozen=True, eq=False)
class CalibrationDataset:
    """Calibration points: stimuli ``eta``, indications ``xi`` and ``u(xi)``."""

    eta: np.ndarray
    xi: np.ndarray
    u_xi: np.ndarray

    def __post_init__(self):
        arrays = [np.atleast_1d(np.asarray(a, dtype=float)).ravel() for a in (self.eta, self.xi, self.u_xi)]
        if len({a.size for a in arrays}) != 1:
            raise DataError("eta, xi and u_xi must have equal length")
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise DataError("calibration data must be finite")
        if np.any(arrays[2] <= 0):
            raise DataError("all standard uncertainties u(xi) must be positive")
        for name, a in zip(("eta", "xi", "u_xi"), arrays):
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    def __len__(self):
        return self.eta.size

    @classmethod
    def from_points(cls, points):
        pts = np.asarray(points, dtype=float)
        return cls(pts[:, 0], pts[:, 1], pts[:, 2])


def read_calibration_csv(path) -> CalibrationDataset:
    """Read a CSV with header ``eta,xi,u_xi``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["eta", "xi", "u_xi"]:
            raise DataError(f"{path}: expected header 'eta,xi,u_xi', got {','.join(header)!r}")
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DataError(f"{path}:{line}: non-numeric value in {row!r}") from None
            if len(row) != 3:
                raise DataError(f"{path}:{line}: expected 3 fields, got {len(row)}")
    if not rows:
        raise DataError(f"{path}: no calibration points")
    return CalibrationDataset.from_points(rows)


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    b: UncertainVector
    residuals: np.ndarray
    chi_square: float
    converged: bool
    iterations: int


def weighted_cost(model, data: CalibrationDataset, beta) -> float:
    """Least-squares cost ``sum(((xi - phi(eta, beta)) / u_xi)**2)``."""
    r = (data.xi - model(data.eta, np.asarray(beta, dtype=float))) / data.u_xi
    return float(r @ r)


def calibrate_least_squares(model, data: CalibrationDataset, beta0) -> CalibrationResult:
    """Fit ``beta`` by minimizing the weighted least-squares cost.

    Damped Gauss-Newton: each step solves the whitened linearized problem and
    is halved until the cost does not increase.  Iteration stops when the
    relative cost decrease falls below 1e-12 or the gradient infinity norm
    below 1e-10.  The parameter covariance is ``(J^T W J)^-1`` at the
    minimizer, ``W = diag(1 / u_xi**2)``.

    Raises
    ------
    RankDeficiencyError
        If ``J^T W J`` is numerically singular.
    """
    beta = _check_beta(model, beta0)
    if not np.all(np.isfinite(beta)):
        raise ParameterError("beta0 must be finite")
    if len(data) < model.n_params:
        raise DataError(f"{len(data)} points cannot identify {model.n_params} parameters")
    w = 1.0 / data.u_xi

    def whitened(b):
        r = (data.xi - model(data.eta, b)) * w
        jw = model.jacobian(data.eta, b) * w[:, None]
        return r, jw

    def check_rank(jw):
        s = np.linalg.svd(jw, compute_uv=False)
        if s[0] == 0 or s[-1] <= RANK_RTOL * s[0]:
            raise RankDeficiencyError(f"J^T W J is singular (singular values {s[0]:.3g} .. {s[-1]:.3g})")

    r, jw = whitened(beta)
    cost = float(r @ r)
    converged = False
    iterations = 0
    while iterations < MAX_ITERATIONS:
        grad = -2.0 * jw.T @ r
        if cost == 0.0 or np.max(np.abs(grad)) < GRADIENT_ATOL:
            converged = True
            break
        check_rank(jw)
        step = np.linalg.lstsq(jw, r, rcond=None)[0]
        iterations += 1
        t = 1.0
        accepted = False
        for _ in range(60):
            cand = beta + t * step
            r_new, jw_new = whitened(cand)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no descent possible in floating point: at the minimum
            converged = True
            break
        decrease = (cost - cost_new) / cost
        beta, r, jw, cost = cand, r_new, jw_new, cost_new
        if decrease < COST_RTOL:
            converged = True
            break

    check_rank(jw)
    jtj = jw.T @ jw
    cov = np.linalg.inv(jtj)
    cov = 0.5 * (cov + cov.T)
    residuals = data.xi - model(data.eta, beta)
    chi = float(np.sum((residuals / data.u_xi) ** 2))
    return CalibrationResult(
        b=UncertainVector(beta, cov),
        residuals=np.asarray(residuals, dtype=float),
        chi_square=chi,
        converged=converged,
        iterations=iterations,
    )
