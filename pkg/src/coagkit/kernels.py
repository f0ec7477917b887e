"""Coagulation kernels, their power-law envelopes and the stationary-regime test.

Every built-in kernel is stored together with an exact separable factorisation

    K(x, y) = (x + y)**s * sum_t c_t * x**p_t * y**q_t

which the solvers use to evaluate gain terms as convolutions and loss terms as
correlations.  ``eval_kernel`` never uses the factorisation; it evaluates the
closed-form physical expression directly so the two routes check each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

KINDS = ("constant", "free_molecular", "diffusive", "power_law")

# Brute-force min/max of K/w over a 400-point log grid on [1, 1e6]^2
# (scripts/scan_envelopes.py).  The diffusive and free-molecular infima are 1
# analytically; the scanned values are what the grid actually attains.
DIFFUSIVE_C1 = 1.0199980001999802
DIFFUSIVE_C2 = 2.0000000000000004
FREE_MOLECULAR_C1 = 1.0201004080398324
FREE_MOLECULAR_C2 = 2.8284271247461925


class KernelDomainError(ValueError):
    """Raised when a kernel evaluation is not finite."""


@dataclass(frozen=True)
class EnvelopeParams:
    """Power-law envelope ``c1*w <= K <= c2*w`` with
    ``w(x, y) = x**(gamma+lambda) * y**-lambda + y**(gamma+lambda) * x**-lambda``.
    """

    c1: float
    c2: float
    gamma: float
    lam: float

    def __post_init__(self):
        if not (0.0 < self.c1 <= self.c2 < math.inf):
            raise ValueError(f"envelope needs 0 < c1 <= c2 < inf, got c1={self.c1}, c2={self.c2}")

    def weight(self, x, y):
        a = self.gamma + self.lam
        return np.power(x, a) * np.power(y, -self.lam) + np.power(y, a) * np.power(x, -self.lam)


@dataclass(frozen=True)
class RegimeVerdict:
    exists: bool
    margin: float


@dataclass(frozen=True)
class KernelSpec:
    """An immutable coagulation kernel.

    Use the constructors :meth:`constant`, :meth:`diffusive`,
    :meth:`free_molecular` and :meth:`power_law` rather than building one by hand.
    """

    kind: str
    envelope: EnvelopeParams
    value: float = 2.0  # rate of the constant kernel
    gamma: float = 0.0  # power-law exponents and prefactor
    lam: float = 0.0
    c: float = 1.0
    sum_exponent: float = field(default=0.0, compare=False)
    terms: tuple[tuple[float, float, float], ...] = field(default=(), compare=False)

    @classmethod
    def constant(cls, value: float = 2.0) -> KernelSpec:
        if not value > 0:
            raise ValueError("constant kernel needs a positive rate")
        env = EnvelopeParams(value / 2, value / 2, 0.0, 0.0)
        return cls("constant", env, value=float(value), terms=((float(value), 0.0, 0.0),))

    @classmethod
    def diffusive(cls, envelope: EnvelopeParams | None = None) -> KernelSpec:
        # (x^-1/3 + y^-1/3)(x^1/3 + y^1/3) = 2 + x^-1/3 y^1/3 + x^1/3 y^-1/3
        t = 1.0 / 3.0
        return cls(
            "diffusive",
            envelope or default_envelope("diffusive"),
            terms=((2.0, 0.0, 0.0), (1.0, -t, t), (1.0, t, -t)),
        )

    @classmethod
    def free_molecular(cls, envelope: EnvelopeParams | None = None) -> KernelSpec:
        # (x^1/3 + y^1/3)^2 (1/x + 1/y)^1/2
        #   = (x+y)^1/2 [x^1/6 y^-1/2 + 2 x^-1/6 y^-1/6 + x^-1/2 y^1/6]
        s = 1.0 / 6.0
        return cls(
            "free_molecular",
            envelope or default_envelope("free_molecular"),
            sum_exponent=0.5,
            terms=((1.0, s, -0.5), (2.0, -s, -s), (1.0, -0.5, s)),
        )

    @classmethod
    def power_law(cls, gamma: float, lam: float, c: float = 1.0) -> KernelSpec:
        """``K = c * w(x, y)``; the envelope is exact with ``c1 = c2 = c``."""
        if not c > 0:
            raise ValueError("power-law prefactor must be positive")
        a = gamma + lam
        return cls(
            "power_law",
            EnvelopeParams(c, c, gamma, lam),
            gamma=float(gamma),
            lam=float(lam),
            c=float(c),
            terms=((float(c), a, -lam), (float(c), -lam, a)),
        )

    @classmethod
    def from_name(cls, name: str, *, value: float = 2.0, gamma: float | None = None,
                  lam: float | None = None, c: float = 1.0) -> KernelSpec:
        name = name.replace("-", "_")
        if name == "constant":
            return cls.constant(value)
        if name == "diffusive":
            return cls.diffusive()
        if name == "free_molecular":
            return cls.free_molecular()
        if name == "power_law":
            if gamma is None or lam is None:
                raise ValueError("power_law kernel needs gamma and lambda")
            return cls.power_law(gamma, lam, c)
        raise ValueError(f"unknown kernel kind {name!r}; expected one of {KINDS}")

    def __call__(self, x, y):
        return eval_kernel(self, x, y)

    def matrix(self, nmax: int) -> np.ndarray:
        """Memoisation table ``T[i, j] = K(i, j)`` for ``0 <= i, j <= nmax``
        (row and column 0 are zero)."""
        k = np.arange(1, nmax + 1, dtype=float)
        out = np.zeros((nmax + 1, nmax + 1))
        out[1:, 1:] = _formula(self, k[:, None], k[None, :])
        return out


def _formula(spec: KernelSpec, x, y):
    if spec.kind == "constant":
        return np.full(np.broadcast(x, y).shape, spec.value)
    if spec.kind == "diffusive":
        return (1.0 / np.cbrt(x) + 1.0 / np.cbrt(y)) * (np.cbrt(x) + np.cbrt(y))
    if spec.kind == "free_molecular":
        return (np.cbrt(x) + np.cbrt(y)) ** 2 * np.sqrt(1.0 / x + 1.0 / y)
    if spec.kind == "power_law":
        a = spec.gamma + spec.lam
        return spec.c * (np.power(x, a) * np.power(y, -spec.lam) + np.power(y, a) * np.power(x, -spec.lam))
    raise ValueError(f"unknown kernel kind {spec.kind!r}")


def eval_kernel(spec: KernelSpec, x, y):
    """Rate ``K(x, y)`` for sizes ``>= 1``; accepts scalars or broadcastable arrays."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if np.any(xa < 1) or np.any(ya < 1):
        raise KernelDomainError("kernel sizes must be >= 1")
    with np.errstate(over="ignore", invalid="ignore"):
        val = _formula(spec, xa, ya)
    bad = ~np.isfinite(val)
    if np.any(bad):
        xb, yb = np.broadcast_arrays(xa, ya)
        i = np.argwhere(bad)[0]
        idx = tuple(i)
        raise KernelDomainError(
            f"{spec.kind} kernel is not finite at (x, y) = ({xb[idx]!r}, {yb[idx]!r})"
        )
    if val.ndim == 0:
        return float(val)
    return val


def default_envelope(kind: str) -> EnvelopeParams:
    kind = kind.replace("-", "_")
    if kind == "diffusive":
        return EnvelopeParams(DIFFUSIVE_C1, DIFFUSIVE_C2, 0.0, 1.0 / 3.0)
    if kind == "free_molecular":
        return EnvelopeParams(FREE_MOLECULAR_C1, FREE_MOLECULAR_C2, 1.0 / 6.0, 0.5)
    if kind == "constant":
        return EnvelopeParams(1.0, 1.0, 0.0, 0.0)
    if kind == "power_law":
        raise ValueError("power_law kernels have no default envelope; pass one explicitly")
    raise ValueError(f"unknown kernel kind {kind!r}")


def classify_regime(env: EnvelopeParams) -> RegimeVerdict:
    """Stationary injection solutions exist iff ``|gamma + 2 lambda| < 1``.

    The boundary ``|gamma + 2 lambda| = 1`` is classified as nonexistence.
    """
    margin = 1.0 - abs(env.gamma + 2.0 * env.lam)
    return RegimeVerdict(exists=margin > 0.0, margin=margin)


def envelope_ratio_range(spec: KernelSpec, grid: Iterable[float], env: EnvelopeParams | None = None):
    """Return ``(min, max)`` of ``K / w`` over ``grid x grid``."""
    env = env or spec.envelope
    g = np.asarray(sorted(set(float(v) for v in grid)))
    x, y = g[:, None], g[None, :]
    r = eval_kernel(spec, x, y) / env.weight(x, y)
    return float(r.min()), float(r.max())


def verify_envelope(spec: KernelSpec, grid: Iterable[float]) -> dict:
    """Largest relative violation of ``c1*w <= K <= c2*w`` on ``grid x grid``.

    Zero when the envelope holds at every grid pair.
    """
    g = np.asarray(list(grid), dtype=float)
    if g.size == 0:
        raise ValueError("grid must be nonempty")
    if np.any(g < 1):
        raise ValueError("grid entries must be >= 1")
    env = spec.envelope
    x, y = g[:, None], g[None, :]
    k = eval_kernel(spec, x, y)
    w = env.weight(x, y)
    below = np.maximum(env.c1 * w - k, 0.0) / (env.c1 * w)
    above = np.maximum(k - env.c2 * w, 0.0) / (env.c2 * w)
    return {"max_violation": float(max(below.max(), above.max()))}


def min_kernel_on_window(spec: KernelSpec, upper: int, block: int = 512) -> float:
    """Exact minimum of ``K(i, j)`` over the integer lattice ``[1, upper]^2``."""
    k = np.arange(1, upper + 1, dtype=float)
    best = math.inf
    for start in range(0, upper, block):
        rows = k[start:start + block, None]
        best = min(best, float(eval_kernel(spec, rows, k[None, :]).min()))
    return best
