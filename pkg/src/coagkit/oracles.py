"""Closed-form solutions of the constant-kernel (K = 2) coagulation equation.

Factorial ratios go through ``math.lgamma`` so that sizes up to ~1e6 evaluate
without overflow.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np


class PoleError(ValueError):
    """The generating function is evaluated outside its series domain."""


def onecomp_time(k: int, t: float) -> float:
    """Monomer-start solution ``n_k(t) = t**(k-1) / (1+t)**(k+1)``.

    ``t = 0`` uses ``0**0 = 1`` so that ``n_1(0) = 1``.
    """
    if k < 1:
        raise ValueError("size must be >= 1")
    if t < 0:
        raise ValueError("time must be >= 0")
    if t == 0.0:
        return 1.0 if k == 1 else 0.0
    if k > 50:
        return math.exp((k - 1) * math.log(t) - (k + 1) * math.log1p(t))
    return t ** (k - 1) / (1.0 + t) ** (k + 1)


def onecomp_time_array(kmax: int, t: float) -> np.ndarray:
    """``n_k(t)`` for ``k = 0..kmax`` (index 0 is zero)."""
    out = np.zeros(kmax + 1)
    if t == 0.0:
        out[1] = 1.0
        return out
    k = np.arange(1, kmax + 1)
    out[1:] = np.exp((k - 1) * math.log(t) - (k + 1) * math.log1p(t))
    return out


def total_number(t: float) -> float:
    if t < 0:
        raise ValueError("time must be >= 0")
    return 1.0 / (1.0 + t)


def generating_fn(z: Sequence[float] | float, t: float) -> float:
    """``F(z, t) = F0 / ((1+t)(1+t-t*F0))`` with ``F0 = mean(z)``."""
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    f0 = float(zz.mean())
    if t * f0 >= 1.0 + t:
        raise PoleError(f"t*F0(z) = {t * f0!r} must stay below 1+t = {1.0 + t!r}")
    return f0 / ((1.0 + t) * (1.0 + t - t * f0))


def log_stationary_shell(k: int) -> float:
    """``log[(2k)! / ((2k-1) (2^k k!)^2)]``."""
    return math.lgamma(2 * k + 1) - math.log(2 * k - 1) - 2.0 * (k * math.log(2.0) + math.lgamma(k + 1))


def onecomp_stationary(k: int, h: float) -> float:
    """Stationary monomer-source profile ``sqrt(h) (2k)! / ((2k-1)(2^k k!)^2)``."""
    if k < 1:
        raise ValueError("size must be >= 1")
    if not h > 0:
        raise ValueError("source rate must be positive")
    if k <= 20:
        num = math.factorial(2 * k)
        den = (2 * k - 1) * (2 ** k * math.factorial(k)) ** 2
        return math.sqrt(h) * (num / den)
    return math.sqrt(h) * math.exp(log_stationary_shell(k))


def onecomp_stationary_array(kmax: int, h: float) -> np.ndarray:
    out = np.zeros(kmax + 1)
    for k in range(1, kmax + 1):
        out[k] = onecomp_stationary(k, h)
    return out


# sqrt(pi k) (2k)!/(4^k k!^2) -> 1 and (2k-1) ~ 2k, so n_k k^{3/2} -> 1/(2 sqrt(pi))
STATIONARY_TAIL_CONSTANT = 0.5 / math.sqrt(math.pi)
