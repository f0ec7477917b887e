"""Adaptive Dormand-Prince 5(4) stepping with post-step clipping of negative densities.

A small purpose-built stepper rather than ``scipy.integrate.solve_ivp``: the
solvers need to modify the state between accepted steps (clip negatives and
ledger what was clipped), land exactly on checkpoint times and stop on a
residual criterion evaluated on the FSAL derivative.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Dormand & Prince (1980), RK5(4)7M
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B_LOW

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
# stability guard: window of recent attempts, rejection share that triggers it,
# and the fraction of the median accepted step kept as the new cap
GUARD_WINDOW = 40
GUARD_REJECT_SHARE = 0.3
GUARD_SHRINK = 0.75


class StiffnessError(RuntimeError):
    """Step size collapsed below the underflow threshold."""


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    rhs_evals: int = 0
    clip_events: int = 0
    min_preclip: float = 0.0
    dt_cap: float = math.inf
    error_estimates: list[float] = field(default_factory=list)


@dataclass
class IntegrationResult:
    t: float
    y: np.ndarray
    dydt: np.ndarray
    stats: StepStats
    checkpoints: list[tuple[float, np.ndarray]]
    stopped: bool = False


def dopri54(
    fun: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t0: float,
    t_end: float,
    *,
    tol: float = 1e-10,
    dt0: float | None = None,
    clip: slice | None = None,
    on_clip: Callable[[np.ndarray, np.ndarray], None] | None = None,
    checkpoints: Sequence[float] = (),
    on_step: Callable[[float, np.ndarray, np.ndarray], bool] | None = None,
    dt_max: float = math.inf,
    underflow: float = 1e-14,
    keep_errors: bool = False,
    stability_guard: bool = False,
) -> IntegrationResult:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t_end``.

    Local error control uses the max-norm of ``err / (tol * (1 + |y|))``.
    After every accepted step the entries ``y[clip]`` that went negative are
    set to zero; ``on_clip(indices, values)`` receives their pre-clip values.
    ``on_step(t, y, dydt)`` returning True stops the run early.
    Raises :class:`StiffnessError` once ``dt < underflow * t_end``.

    With ``stability_guard`` the step is capped once rejections cluster, which
    is what happens when the step size is limited by stability rather than
    accuracy; left alone the controller chatters on the stability boundary
    and keeps kicking a stationary state by O(tol).
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    stats = StepStats()
    stops = sorted(float(c) for c in checkpoints if t0 <= c <= t_end)
    saved: list[tuple[float, np.ndarray]] = []
    while stops and stops[0] <= t:
        saved.append((t, y.copy()))
        stops.pop(0)

    f = fun(t, y)
    stats.rhs_evals += 1
    if t_end <= t:
        return IntegrationResult(t, y, f, stats, saved)

    if dt0 is None:
        scale = tol * (1.0 + np.abs(y))
        d0 = np.max(np.abs(y) / scale)
        d1 = np.max(np.abs(f) / scale)
        dt = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        dt = min(dt, (t_end - t0))
    else:
        dt = dt0
    dt_floor = underflow * max(abs(t_end), 1.0)
    k = np.empty((7, y.size))
    history: deque[float] = deque(maxlen=GUARD_WINDOW)  # accepted dt, or 0.0 for a rejection

    while t < t_end:
        target = stops[0] if stops else t_end
        dt = min(dt, dt_max)
        nominal = dt
        hit = t + dt >= target - 1e-12 * max(1.0, abs(target))
        if hit:
            dt = target - t
        if dt < dt_floor and not hit:
            raise StiffnessError(
                f"step size {dt:.3e} fell below {dt_floor:.3e} at t={t:.6g}; the system is too stiff "
                "for explicit stepping (try a smaller nmax; implicit stepping is not provided)"
            )
        k[0] = f
        for s in range(1, 7):
            ys = y + dt * np.dot(_A[s], k[:s])
            k[s] = fun(t + _C[s] * dt, ys)
        stats.rhs_evals += 6
        y_new = ys  # stage 7 sits at the 5th-order solution
        err = dt * np.dot(_E, k)
        scale = tol * (1.0 + np.maximum(np.abs(y), np.abs(y_new)))
        err_norm = float(np.max(np.abs(err) / scale))
        if not np.isfinite(err_norm):
            err_norm = math.inf

        if err_norm <= 1.0:
            t = target if hit else t + dt
            y = y_new
            f = k[6]
            stats.accepted += 1
            history.append(dt)
            if keep_errors:
                stats.error_estimates.append(float(np.max(np.abs(err))))
            if clip is not None:
                part = y[clip]
                neg = np.flatnonzero(part < 0.0)
                if neg.size:
                    stats.min_preclip = min(stats.min_preclip, float(part[neg].min()))
                    stats.clip_events += 1
                    if on_clip is not None:
                        on_clip(neg, part[neg].copy())
                    part[neg] = 0.0
                    f = fun(t, y)
                    stats.rhs_evals += 1
            if hit and stops:
                saved.append((t, y.copy()))
                stops.pop(0)
            if on_step is not None and on_step(t, y, f):
                return IntegrationResult(t, y, f, stats, saved, stopped=True)
            factor = MAX_FACTOR if err_norm == 0.0 else min(MAX_FACTOR, SAFETY * err_norm ** -0.2)
            dt = nominal if hit else dt * factor
        else:
            stats.rejected += 1
            history.append(0.0)
            if stability_guard and len(history) == GUARD_WINDOW:
                steps = [h for h in history if h > 0.0]
                if len(steps) < (1.0 - GUARD_REJECT_SHARE) * GUARD_WINDOW and steps:
                    dt_max = GUARD_SHRINK * float(np.median(steps))
                    stats.dt_cap = dt_max
                    history.clear()
            dt *= max(MIN_FACTOR, SAFETY * err_norm ** -0.2)
            if dt < dt_floor:
                raise StiffnessError(
                    f"step size {dt:.3e} fell below {dt_floor:.3e} at t={t:.6g}; the system is too stiff "
                    "for explicit stepping (try a smaller nmax; implicit stepping is not provided)"
                )
    return IntegrationResult(t, y, f, stats, saved)
