"""Explicit Runge-Kutta integrators and the graph heat equation.

The integrators only use ``+``, ``*`` and scalar arithmetic on the state, so
they accept numpy arrays as well as torch tensors (gradients then flow
through the solver steps). Step-size control always runs on detached numpy
copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import IntegrationError, InvalidArgumentError, NumericalFailureError
from .graph import LaplacianSpectrum

# Dormand-Prince 5(4) tableau.
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
# 5th-order minus embedded 4th-order weights (7 stages, last is FSAL).
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
# Shampine's quartic dense output: y(t + th) = y + h * sum_i k_i * sum_j P[i][j] th^(j+1)
_P = (
    (1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799),
    (0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072),
    (0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632),
    (0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844),
    (0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423),
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
# PI controller exponents for a 4th-order error estimate.
_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA


@dataclass(frozen=True)
class SolverConfig:
    method: str = "dopri5"
    rtol: float = 1e-3
    atol: float = 1e-4
    max_steps: int = 100_000
    initial_step: float | None = None
    # Fixed-step RK4 only: substeps per requested output interval.
    steps_per_interval: int = 8

    def __post_init__(self):
        if self.method not in ("dopri5", "rk4"):
            raise InvalidArgumentError(f"unknown solver method {self.method!r}")
        if not (self.rtol > 0 and self.atol > 0):
            raise InvalidArgumentError("rtol and atol must be positive")
        if self.max_steps < 1 or self.steps_per_interval < 1:
            raise InvalidArgumentError("max_steps and steps_per_interval must be >= 1")


@dataclass(frozen=True)
class OdeSolution:
    times: np.ndarray
    states: object
    num_rhs_evals: int
    num_rejected_steps: int


def _np(y) -> np.ndarray:
    if hasattr(y, "detach"):
        return y.detach().cpu().numpy()
    return np.asarray(y)


def _stack(items):
    first = items[0]
    if hasattr(first, "detach"):
        import torch

        return torch.stack(list(items))
    return np.stack([np.asarray(i) for i in items])


def _check_finite(value, t):
    if not np.all(np.isfinite(_np(value))):
        raise NumericalFailureError(f"right-hand side returned non-finite values at t={t}")
    return value


def rms_error_norm(err, y_old, y_new, rtol, atol) -> float:
    """Scaled RMS of the local error, component by component."""
    e, a, b = _np(err), _np(y_old), _np(y_new)
    scale = atol + rtol * np.maximum(np.abs(a), np.abs(b))
    if e.size == 0:
        return 0.0
    return float(np.sqrt(np.mean((e / scale) ** 2)))


def vector_error_norm(err, y_old, y_new, rtol, atol) -> float:
    """Scaled RMS over trailing 3-vectors; invariant under rotating those vectors."""
    e, a, b = _np(err), _np(y_old), _np(y_new)
    en = np.linalg.norm(e.reshape(-1, 3), axis=1)
    scale = atol + rtol * np.maximum(np.linalg.norm(a.reshape(-1, 3), axis=1),
                                     np.linalg.norm(b.reshape(-1, 3), axis=1))
    if en.size == 0:
        return 0.0
    return float(np.sqrt(np.mean((en / scale) ** 2)))


def _initial_step(y0, f0, span, config, norm):
    if config.initial_step is not None:
        return min(float(config.initial_step), span)
    y, f = _np(y0), _np(f0)
    # Scaled sizes of the state and its derivative, measured with the step norm.
    d0 = norm(y, y, y, config.rtol, config.atol)
    d1 = norm(f, y, y, config.rtol, config.atol)
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    return min(h, 0.01 * span)


def integrate(
    rhs: Callable,
    y0,
    times,
    config: SolverConfig = SolverConfig(),
    norm: Callable = rms_error_norm,
) -> OdeSolution:
    """Solve ``dy/dt = rhs(t, y)`` and report the state at each of ``times``.

    ``times[0]`` is the initial time and ``states[0]`` is ``y0`` itself.
    Repeated times are allowed and yield copies of the current state.
    """
    times = np.asarray(times, dtype=np.float64)
    if times.ndim != 1 or times.size < 1:
        raise InvalidArgumentError("times must be a non-empty 1-D sequence")
    if np.any(np.diff(times) < 0):
        raise InvalidArgumentError("times must be non-decreasing")
    if config.method == "rk4":
        return _integrate_rk4(rhs, y0, times, config)
    return _integrate_dopri5(rhs, y0, times, config, norm)


def _integrate_rk4(rhs, y0, times, config):
    out = [y0]
    y = y0
    evals = 0
    for t_a, t_b in zip(times[:-1], times[1:]):
        if t_b == t_a:
            out.append(y)
            continue
        n = config.steps_per_interval
        h = (t_b - t_a) / n
        for i in range(n):
            t = t_a + i * h
            y = rk4_step(rhs, t, y, h)
            evals += 4
        out.append(y)
    return OdeSolution(times, _stack(out), evals, 0)


def rk4_step(rhs, t, y, h, dt=None):
    """One classical RK4 step.

    ``h`` multiplies the state and may broadcast against ``y``; ``dt`` is the
    matching increment of ``t`` when the two differ in shape (per-sample step
    sizes in batched training).
    """
    dt = h if dt is None else dt
    k1 = _check_finite(rhs(t, y), t)
    k2 = _check_finite(rhs(t + dt / 2, y + k1 * (h / 2)), t)
    k3 = _check_finite(rhs(t + dt / 2, y + k2 * (h / 2)), t)
    k4 = _check_finite(rhs(t + dt, y + k3 * h), t)
    return y + (k1 + 2 * k2 + 2 * k3 + k4) * (h / 6)


def _dense(y, h, ks, theta):
    weights = [sum(p * theta ** (j + 1) for j, p in enumerate(row)) for row in _P]
    acc = y
    for w, k in zip(weights, ks):
        if w != 0.0:
            acc = acc + k * (h * w)
    return acc


def _integrate_dopri5(rhs, y0, times, config, norm):
    t = float(times[0])
    t_end = float(times[-1])
    y = y0
    out = [y0]
    next_out = 1
    while next_out < len(times) and times[next_out] == t:
        out.append(y)
        next_out += 1
    if next_out == len(times):
        return OdeSolution(times, _stack(out), 0, 0)

    f = _check_finite(rhs(t, y), t)
    evals = 1
    rejected = 0
    steps = 0
    h = _initial_step(y, f, t_end - t, config, norm)
    prev_err = 1e-4
    while next_out < len(times):
        if steps >= config.max_steps:
            raise IntegrationError(
                f"exceeded max_steps={config.max_steps} before reaching t={t_end}", t)
        steps += 1
        h = min(h, t_end - t)
        if h <= 1e-14 * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t={t}", t)
        ks = [f]
        for c, row in zip(_C[1:], _A[1:]):
            yi = y
            for a, k in zip(row, ks):
                if a != 0.0:
                    yi = yi + k * (h * a)
            ks.append(_check_finite(rhs(t + c * h, yi), t + c * h))
        y_new = y
        for b, k in zip(_B, ks):
            if b != 0.0:
                y_new = y_new + k * (h * b)
        f_new = _check_finite(rhs(t + h, y_new), t + h)
        ks.append(f_new)
        evals += 6
        err = 0
        for e, k in zip(_E, ks):
            if e != 0.0:
                err = err + _np(k) * (h * e)
        err_norm = norm(err, y, y_new, config.rtol, config.atol)
        if not math.isfinite(err_norm):
            raise NumericalFailureError(f"non-finite error estimate at t={t}")

        if err_norm <= 1.0:
            t_new = t + h
            if next_out < len(times) and abs(times[next_out] - t_new) < 1e-12 * max(1.0, abs(t_new)):
                t_new = float(times[next_out])
            while next_out < len(times) and times[next_out] <= t_new:
                theta = (times[next_out] - t) / h
                out.append(y_new if times[next_out] == t_new else _dense(y, h, ks, theta))
                next_out += 1
            if err_norm == 0.0:
                factor = MAX_FACTOR
            else:
                factor = SAFETY * err_norm ** (-_ALPHA) * prev_err ** _BETA
                factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
            prev_err = max(err_norm, 1e-4)
            t, y, f = t_new, y_new, f_new
            h = h * factor
        else:
            rejected += 1
            factor = max(MIN_FACTOR, SAFETY * err_norm ** (-_ALPHA))
            h = h * min(1.0, factor)
    return OdeSolution(times, _stack(out), evals, rejected)


def rk4_grid(rhs: Callable, y0, grid, steps_per_interval: int = 8) -> list:
    """Fixed-step RK4 with a separate time grid per batch entry.

    ``grid`` is (B, K) with each row non-decreasing; ``y0`` has leading batch
    dimension B. ``rhs(t, y)`` receives ``t`` as a length-B array. Returns the
    K states (the first is ``y0``).
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or grid.shape[0] != y0.shape[0]:
        raise InvalidArgumentError("grid must be (B, K) matching the state batch")
    if np.any(np.diff(grid, axis=1) < 0):
        raise InvalidArgumentError("each time row must be non-decreasing")
    expand = (slice(None),) + (None,) * (y0.ndim - 1)
    out = [y0]
    y = y0
    n = steps_per_interval
    for j in range(grid.shape[1] - 1):
        h_np = (grid[:, j + 1] - grid[:, j]) / n
        if hasattr(y0, "new_tensor"):
            h = y0.new_tensor(h_np)[expand]
        else:
            h = h_np[expand]
        for i in range(n):
            t = grid[:, j] + i * h_np
            y = rk4_step(rhs, t, y, h, h_np)
        out.append(y)
    return out


def heat_rhs(L) -> Callable:
    """Right-hand side ``(t, f) -> -L f`` of the graph heat equation."""
    L = np.asarray(L, dtype=np.float64)

    def rhs(t, f):
        return -(L @ f)

    return rhs


def heat_closed_form(spectrum: LaplacianSpectrum, f0, t: float) -> np.ndarray:
    """Exact heat-flow solution by decaying each graph Fourier coefficient."""
    if t < 0:
        raise InvalidArgumentError("t must be non-negative")
    U = spectrum.eigenvectors
    coeffs = U.T @ np.asarray(f0, dtype=np.float64)
    return U @ (coeffs * np.exp(-spectrum.eigenvalues * t))
