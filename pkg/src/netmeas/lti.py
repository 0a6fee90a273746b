"""Linear time-invariant sensor dynamics.

The reference model is the damped second-order system

    z'' + 2 delta omega0 z' + omega0**2 z = rho y

represented equivalently by its sampled impulse response (used with discrete
convolution) and by a companion-form state-space model (simulated with RK4
and zero-order-hold input).  All simulations start from rest.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import (
    AliasingError,
    DataError,
    IllPosedError,
    InstabilityError,
    ParameterError,
    ResamplingRequiredError,
    ShapeError,
)

DT_RTOL = 1e-12
INSTABILITY_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled signal; ``samples[k]`` is the value at ``t0 + k*dt``.

    ``samples`` is normally a vector.  Multi-input state-space simulation
    also accepts an ``(n, p)`` array.
    """

    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(x)):
            raise ParameterError("signal samples must be finite")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "t0", float(self.t0))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self) - 1)

    def with_samples(self, samples) -> "Signal":
        return Signal(samples, self.dt, self.t0)


@dataclass(frozen=True)
class SecondOrderSystem:
    """Damping ``delta``, resonance angular frequency ``omega0`` (rad/s) and
    input gain ``rho``; the static gain is ``rho / omega0**2``."""

    delta: float
    omega0: float
    rho: float

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ParameterError("omega0 must be positive")
        if not self.delta >= 0:
            raise ParameterError("delta must be non-negative")
        if not np.isfinite(self.rho) or self.rho == 0:
            raise ParameterError("rho must be finite and non-zero")

    @classmethod
    def unit_gain(cls, delta, omega0):
        return cls(delta, omega0, omega0**2)

    @property
    def static_gain(self):
        return self.rho / self.omega0**2


@dataclass(frozen=True, eq=False)
class ImpulseResponse:
    h: np.ndarray
    dt: float

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if h.ndim != 1 or h.size < 1:
            raise ShapeError("impulse response must be a non-empty vector")
        if not np.all(np.isfinite(h)):
            raise ParameterError("impulse response must be finite")
        if not self.dt > 0:
            raise ParameterError("dt must be positive")
        object.__setattr__(self, "h", h)


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """``v' = C v + D y``, ``z = E v + F y``."""

    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        C, D, E, F = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (self.C, self.D, self.E, self.F))
        n = C.shape[0]
        if C.shape != (n, n):
            raise ShapeError(f"C must be square, got {C.shape}")
        p = D.shape[1]
        q = E.shape[0]
        if D.shape[0] != n or E.shape[1] != n or F.shape != (q, p):
            raise ShapeError(f"inconsistent dimensions C{C.shape} D{D.shape} E{E.shape} F{F.shape}")
        for name, m in zip("CDEF", (C, D, E, F)):
            object.__setattr__(self, name, m)

    @property
    def n_states(self):
        return self.C.shape[0]

    @property
    def n_inputs(self):
        return self.D.shape[1]

    @property
    def n_outputs(self):
        return self.E.shape[0]


def impulse_kernel(sys: SecondOrderSystem, t) -> np.ndarray:
    """Continuous-time impulse response ``h(t)`` evaluated at ``t >= 0``."""
    t = np.asarray(t, dtype=float)
    d, w0, rho = sys.delta, sys.omega0, sys.rho
    if d < 1.0:
        wd = w0 * math.sqrt(1.0 - d * d)
        return (rho / wd) * np.exp(-d * w0 * t) * np.sin(wd * t)
    if d == 1.0:
        return rho * t * np.exp(-w0 * t)
    root = w0 * math.sqrt(d * d - 1.0)
    s1 = -d * w0 + root
    s2 = -d * w0 - root
    return rho / (s1 - s2) * (np.exp(s1 * t) - np.exp(s2 * t))


def impulse_response(sys: SecondOrderSystem, dt: float, n: int) -> ImpulseResponse:
    """Sample the closed-form impulse response at ``t = k*dt``, ``k < n``.

    Raises
    ------
    AliasingError
        If ``dt * omega0 >= 0.5``.
    """
    if not dt > 0 or int(n) < 1:
        raise ParameterError("need dt > 0 and n >= 1")
    if dt * sys.omega0 >= 0.5:
        raise AliasingError(f"dt*omega0 = {dt * sys.omega0:.3g} >= 0.5; sample faster")
    return ImpulseResponse(impulse_kernel(sys, dt * np.arange(int(n))), dt)


def _check_dt(a: float, b: float):
    if abs(a - b) > DT_RTOL * max(abs(a), abs(b)):
        raise ResamplingRequiredError(f"sampling intervals differ ({a!r} vs {b!r}); resample first")


def convolve(h: ImpulseResponse, signal: Signal) -> Signal:
    """Causal discrete convolution ``z[k] = dt * sum_j h[k-j] y[j]``.

    The output has the length and time base of the input.
    """
    _check_dt(h.dt, signal.dt)
    y = signal.samples
    if y.ndim != 1:
        raise ShapeError("convolve expects a single-channel signal")
    n = y.size
    z = np.convolve(h.h[:n] * h.dt, y)[:n]
    return signal.with_samples(z)


def to_state_space(sys: SecondOrderSystem) -> StateSpaceModel:
    """Companion realization with states ``(z, z')``."""
    w0, d = sys.omega0, sys.delta
    return StateSpaceModel(
        C=[[0.0, 1.0], [-w0 * w0, -2.0 * d * w0]],
        D=[[0.0], [sys.rho]],
        E=[[1.0, 0.0]],
        F=[[0.0]],
    )


def spectral_abscissa(C) -> float:
    return float(np.max(np.linalg.eigvals(np.asarray(C, dtype=float)).real))


def rk4_step_matrices(m: StateSpaceModel, h: float):
    """Matrices ``P, Q`` with ``v[k+1] = P v[k] + Q y[k]``.

    One classical RK4 step of the linear ODE with the input held constant
    over the step collapses to this affine map.
    """
    A = h * m.C
    eye = np.eye(m.n_states)
    A2 = A @ A
    A3 = A2 @ A
    P = eye + A + A2 / 2.0 + A3 / 6.0 + A3 @ A / 24.0
    Q = h * (eye + A / 2.0 + A2 / 6.0 + A3 / 24.0) @ m.D
    return P, Q


def simulate_state_space(m: StateSpaceModel, signal: Signal) -> Signal:
    """Simulate from zero state with fixed-step RK4 and zero-order hold.

    Raises
    ------
    InstabilityError
        If the state norm exceeds 1e12; the message reports the spectral
        abscissa of ``C``.
    """
    u = signal.samples
    u2 = u.reshape(-1, 1) if u.ndim == 1 else u
    if u2.shape[1] != m.n_inputs:
        raise ShapeError(f"model has {m.n_inputs} inputs, signal has {u2.shape[1]} channels")
    n = u2.shape[0]
    P, Q = rk4_step_matrices(m, signal.dt)
    states = np.zeros((n, m.n_states))
    v = np.zeros(m.n_states)
    drive = u2 @ Q.T
    for k in range(n - 1):
        v = P @ v + drive[k]
        if not np.all(np.abs(v) < INSTABILITY_LIMIT):
            a = spectral_abscissa(m.C)
            raise InstabilityError(
                f"state exceeded {INSTABILITY_LIMIT:g} at sample {k + 1} (spectral abscissa of C: {a:.6g})",
                spectral_abscissa=a,
            )
        states[k + 1] = v
    z = states @ m.E.T + u2 @ m.F.T
    if u.ndim == 1 and m.n_outputs == 1:
        z = z[:, 0]
    return signal.with_samples(z)


# --------------------------------------------------------------------------
# deconvolution


def convolution_matrix(h: ImpulseResponse, n: int) -> np.ndarray:
    """Lower-triangular Toeplitz matrix ``H`` with ``H @ y == convolve(h, y)``."""
    col = np.zeros(n)
    m = min(n, h.h.size)
    col[:m] = h.h[:m] * h.dt
    return scipy.linalg.toeplitz(col, np.zeros(n))


def second_difference_matrix(n: int) -> np.ndarray:
    if n < 3:
        return np.zeros((0, n))
    L = np.zeros((n - 2, n))
    idx = np.arange(n - 2)
    L[idx, idx] = 1.0
    L[idx, idx + 1] = -2.0
    L[idx, idx + 2] = 1.0
    return L


@lru_cache(maxsize=32)
def _tikhonov_operator(h_bytes: bytes, dt: float, n: int, lam: float) -> np.ndarray:
    h = ImpulseResponse(np.frombuffer(h_bytes, dtype=float), dt)
    H = convolution_matrix(h, n)
    if lam == 0.0:
        s = np.linalg.svd(H, compute_uv=False)
        if s[0] == 0 or s[-1] <= n * np.finfo(float).eps * s[0]:
            raise IllPosedError(
                "convolution operator is numerically singular; use lambda_reg > 0 for a regularized solution"
            )
    L = second_difference_matrix(n)
    A = H.T @ H + lam * (L.T @ L)
    try:
        cho = scipy.linalg.cho_factor(A)
        op = scipy.linalg.cho_solve(cho, H.T)
    except np.linalg.LinAlgError:
        op = scipy.linalg.solve(A, H.T, assume_a="sym")
    op.flags.writeable = False
    return op


def deconvolve(h: ImpulseResponse, output: Signal, lambda_reg: float) -> Signal:
    """Tikhonov-regularized input estimate.

    Minimizes ``||H y - z||**2 + lambda_reg * ||L y||**2`` with ``H`` the
    causal convolution operator and ``L`` the second-difference operator, via
    the normal equations.  Operators are cached per ``(h, n, lambda)`` so
    repeated calls on equal-length signals are cheap.

    Raises
    ------
    IllPosedError
        ``lambda_reg == 0`` and ``H`` is numerically singular.
    """
    _check_dt(h.dt, output.dt)
    if not lambda_reg >= 0:
        raise ParameterError("lambda_reg must be non-negative")
    z = output.samples
    if z.ndim != 1:
        raise ShapeError("deconvolve expects a single-channel signal")
    op = _tikhonov_operator(np.ascontiguousarray(h.h, dtype=float).tobytes(), float(h.dt), z.size, float(lambda_reg))
    return output.with_samples(op @ z)


# --------------------------------------------------------------------------
# CSV


def write_signal_csv(signal: Signal, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(signal.t, signal.samples):
            w.writerow([repr(float(t)), repr(float(v))])


def read_signal_csv(path) -> Signal:
    """Read ``t,value`` CSV; the time base must be uniform within 1e-9."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != ["t", "value"]:
            raise DataError(f"{path}: expected header 't,value'")
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                if len(row) != 2:
                    raise ValueError
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                raise DataError(f"{path}:{line}: malformed row {row!r}") from None
    if len(rows) < 2:
        raise DataError(f"{path}: need at least two samples")
    t, v = np.array(rows).T
    dt = infer_dt(t, source=str(path))
    return Signal(v, dt, t[0])


def infer_dt(t, source="signal") -> float:
    steps = np.diff(np.asarray(t, dtype=float))
    dt = float((t[-1] - t[0]) / (len(t) - 1))
    if dt <= 0 or np.max(np.abs(steps - dt)) > 1e-9 * dt:
        raise DataError(f"{source}: time base is not uniform")
    return dt
