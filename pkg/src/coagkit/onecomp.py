"""Discrete one-component coagulation with injection on a truncated size lattice.

Densities are stored in arrays of length ``nmax + 1`` so that ``n[k]`` is the
density of clusters of size ``k``; ``n[0]`` is always zero.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft
from scipy.signal import fftconvolve

from .integrator import IntegrationResult, StepStats, dopri54
from .kernels import KernelSpec

CUTOFF_MODES = ("hard_drop", "zeta_ramp")
CONV_METHODS = ("auto", "direct", "fft", "generic")
DIRECT_CONV_MAX = 512  # "auto" switches from np.convolve to FFT above this nmax
FFT_NOISE = 64 * np.finfo(float).eps  # relative round-off floor of the FFT gain


@dataclass(frozen=True)
class SourceSpec:
    """Injection rates ``(size, rate)``; sizes may repeat and are summed."""

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self):
        clean = []
        for k, r in self.entries:
            k = int(k)
            r = float(r)
            if k < 1:
                raise ValueError(f"source size must be >= 1, got {k}")
            if not (r >= 0 and math.isfinite(r)):
                raise ValueError(f"source rate must be finite and >= 0, got {r}")
            clean.append((k, r))
        object.__setattr__(self, "entries", tuple(clean))

    @classmethod
    def monomers(cls, h: float) -> SourceSpec:
        return cls(((1, h),))

    @classmethod
    def none(cls) -> SourceSpec:
        return cls(())

    @property
    def L_eta(self) -> int:
        sizes = [k for k, r in self.entries if r > 0]
        return max(sizes) if sizes else 1

    @property
    def total_rate(self) -> float:
        return float(sum(r for _, r in self.entries))

    @property
    def mass_rate(self) -> float:
        return float(sum(k * r for k, r in self.entries))

    def vector(self, nmax: int) -> np.ndarray:
        out = np.zeros(nmax + 1)
        for k, r in self.entries:
            if k > nmax:
                raise ValueError(f"source size {k} exceeds nmax={nmax}")
            out[k] += r
        return out

    def mass_below(self, R: float) -> float:
        return float(sum(k * r for k, r in self.entries if k <= R))


@dataclass(frozen=True)
class SolverConfig:
    nmax: int = 4096
    r_star: int | None = None  # defaults to nmax // 2
    dt: float = 1e-3  # first trial step
    t_end: float = 1.0
    tol_step: float = 1e-10
    cutoff_mode: str = "hard_drop"
    conv: str = "auto"

    def __post_init__(self):
        if self.nmax < 2:
            raise ValueError("nmax must be >= 2")
        if self.r_star is None:
            object.__setattr__(self, "r_star", self.nmax // 2)
        if self.cutoff_mode not in CUTOFF_MODES:
            raise ValueError(f"cutoff_mode must be one of {CUTOFF_MODES}")
        if self.conv not in CONV_METHODS:
            raise ValueError(f"conv must be one of {CONV_METHODS}")
        if self.cutoff_mode == "zeta_ramp" and not (1 <= self.r_star and 2 * self.r_star <= self.nmax):
            raise ValueError("zeta_ramp needs 1 <= r_star and 2*r_star <= nmax")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.tol_step > 0:
            raise ValueError("tol_step must be positive")


@dataclass
class StateVector:
    """Densities plus what left the window.

    ``clip_mass`` / ``clip_number`` hold the (nonpositive) mass and number of the
    negative densities that were reset to zero, so that
    ``moment(n, 1) + leak_mass + clip_mass`` is conserved up to injection.
    """

    n: np.ndarray
    t: float = 0.0
    leak_number: float = 0.0
    leak_mass: float = 0.0
    clip_mass: float = 0.0
    clip_number: float = 0.0

    @classmethod
    def zeros(cls, nmax: int) -> StateVector:
        return cls(np.zeros(nmax + 1))

    @classmethod
    def monomers(cls, nmax: int, amount: float = 1.0) -> StateVector:
        n = np.zeros(nmax + 1)
        n[1] = amount
        return cls(n)

    @classmethod
    def from_densities(cls, values: dict[int, float] | Sequence[float], nmax: int) -> StateVector:
        n = np.zeros(nmax + 1)
        items = values.items() if isinstance(values, dict) else enumerate(values, start=1)
        for k, v in items:
            n[int(k)] = v
        return cls(n)

    @property
    def nmax(self) -> int:
        return self.n.size - 1

    def copy(self) -> StateVector:
        return replace(self, n=self.n.copy())


@dataclass
class FluxProfile:
    cuts: np.ndarray
    J: np.ndarray


def zeta_profile(cfg: SolverConfig, length: int) -> np.ndarray:
    """Gain multiplier per size ``0..length-1``; zero beyond ``nmax``."""
    s = np.arange(length, dtype=float)
    if cfg.cutoff_mode == "hard_drop":
        z = (s <= cfg.nmax).astype(float)
    else:
        r = float(cfg.r_star)
        z = np.clip((2.0 * r - s) / r, 0.0, 1.0)
        z[s > cfg.nmax] = 0.0
    z[0] = 0.0
    return z


def _merged_gain_terms(kernel: KernelSpec):
    # conv(x^p n, x^q n) is symmetric in (p, q): fold mirrored terms together
    acc: dict[tuple[float, float], float] = defaultdict(float)
    for c, p, q in kernel.terms:
        key = (p, q) if p <= q else (q, p)
        acc[key] += c
    return [(c, p, q) for (p, q), c in sorted(acc.items())]


class CoagulationOperator:
    """Precomputed gain/loss evaluation for one kernel on one window.

    ``conv`` selects the route: ``direct`` (np.convolve on the separable
    factorisation), ``fft`` (same factorisation, spectral products sharing one
    forward transform per exponent between gain and loss) or ``generic``
    (memoised kernel table, O(nmax^2) pair sums).
    """

    def __init__(self, kernel: KernelSpec, cfg: SolverConfig):
        self.kernel = kernel
        self.cfg = cfg
        m = cfg.nmax
        self.nmax = m
        method = cfg.conv
        if method == "auto":
            method = "direct" if m <= DIRECT_CONV_MAX else "fft"
        self.method = method
        self.size = np.arange(m + 1, dtype=float)
        self.size_full = np.arange(2 * m + 1, dtype=float)
        x = self.size.copy()
        x[0] = 1.0
        self._pow: dict[float, np.ndarray] = {}
        for _, p, q in kernel.terms:
            for e in (p, q):
                if e not in self._pow:
                    arr = np.power(x, e)
                    arr[0] = 0.0
                    self._pow[e] = arr
        self.gain_terms = _merged_gain_terms(kernel)
        sig = kernel.sum_exponent
        self.sum_factor = None
        if sig:
            self.sum_factor = np.power(np.maximum(self.size_full, 1.0), sig)
            self.sum_factor[0] = 0.0
        self.zeta = zeta_profile(cfg, 2 * m + 1)
        self.leak_weight = 1.0 - self.zeta
        self.leak_weight[0] = 0.0
        self.table = None
        if method == "generic":
            self.table = kernel.matrix(m)
            i = np.arange(m + 1)
            self._pair_index = (i[:, None] + i[None, :]).ravel()
        if method == "fft":
            # linear convolution needs 2m+1 points, the correlation with the
            # sum-size factor (length 2m+1) against length m+1 needs 3m+1
            self._nfft = next_fast_len(3 * m + 1 if sig else 2 * m + 1, real=True)
            self._sum_hat = None if self.sum_factor is None else rfft(self.sum_factor, self._nfft)
            by_p: dict[float, list[tuple[float, float]]] = defaultdict(list)
            for c, p, q in kernel.terms:
                by_p[p].append((c, q))
            self._loss_groups = sorted(by_p.items())

    def _conv(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.method == "direct":
            return np.convolve(a, b)
        out = fftconvolve(a, b)
        np.maximum(out, 0.0, out=out)
        return out

    def _spectra(self, n: np.ndarray) -> dict[float, np.ndarray]:
        return {e: rfft(w * n, self._nfft) for e, w in self._pow.items()}

    def _gain_from_spectra(self, spec: dict[float, np.ndarray]) -> np.ndarray:
        acc = np.zeros_like(next(iter(spec.values())))
        for c, p, q in self.gain_terms:
            acc += c * spec[p] * spec[q]
        g = irfft(acc, self._nfft)[: 2 * self.nmax + 1]
        # entries under the transform's round-off floor are noise; left in they
        # would show up as a spurious leak once weighted by size
        g[g < FFT_NOISE * g.max(initial=0.0)] = 0.0
        g *= 0.5
        if self.sum_factor is not None:
            g *= self.sum_factor
        return g

    def _loss_from_spectra(self, spec: dict[float, np.ndarray], n: np.ndarray) -> np.ndarray:
        m = self.nmax
        out = np.zeros(m + 1)
        if self.sum_factor is None:
            for c, p, q in self.kernel.terms:
                out += (c * float(np.dot(self._pow[q], n))) * self._pow[p]
            return out
        for p, group in self._loss_groups:
            acc = np.zeros_like(self._sum_hat)
            for c, q in group:
                acc += c * np.conj(spec[q])
            corr = irfft(acc * self._sum_hat, self._nfft)[: m + 1]
            np.maximum(corr, 0.0, out=corr)
            out += self._pow[p] * corr
        out[0] = 0.0
        return out

    def full_gain(self, n: np.ndarray) -> np.ndarray:
        """Uncut gain ``1/2 sum_{i+j=s} K(i,j) n_i n_j`` for ``s = 0..2 nmax``."""
        if self.table is not None:
            prod = self.table * np.outer(n, n)
            return 0.5 * np.bincount(self._pair_index, weights=prod.ravel(), minlength=2 * self.nmax + 1)
        if self.method == "fft":
            return self._gain_from_spectra(self._spectra(n))
        g = np.zeros(2 * self.nmax + 1)
        for c, p, q in self.gain_terms:
            a = self._pow[p] * n
            b = a if p == q else self._pow[q] * n
            g += c * self._conv(a, b)
        g *= 0.5
        if self.sum_factor is not None:
            g *= self.sum_factor
        return g

    def loss_rate(self, n: np.ndarray) -> np.ndarray:
        """``L_k = sum_{j<=nmax} K(k, j) n_j`` for ``k = 0..nmax``."""
        if self.table is not None:
            return self.table @ n
        if self.method == "fft":
            return self._loss_from_spectra(self._spectra(n) if self.sum_factor is not None else {}, n)
        m = self.nmax
        out = np.zeros(m + 1)
        if self.sum_factor is None:
            for c, p, q in self.kernel.terms:
                out += (c * float(np.dot(self._pow[q], n))) * self._pow[p]
        else:
            # sum_j (k+j)^s j^q n_j is a correlation with the sum-size factor
            for c, p, q in self.kernel.terms:
                b = (self._pow[q] * n)[::-1]
                corr = self._conv(self.sum_factor, b)[m:2 * m + 1]
                out += c * self._pow[p] * corr
            out[0] = 0.0
        return out

    def gain_and_loss(self, n: np.ndarray):
        if self.method == "fft":
            spec = self._spectra(n)
            return self._gain_from_spectra(spec), self._loss_from_spectra(spec, n)
        return self.full_gain(n), self.loss_rate(n)

    def rates(self, n: np.ndarray, source: np.ndarray):
        """Return ``(dn/dt, leak_number_rate, leak_mass_rate)``."""
        m = self.nmax
        g, L = self.gain_and_loss(n)
        dn = self.zeta[: m + 1] * g[: m + 1] - n * L + source
        dn[0] = 0.0
        lw = self.leak_weight * g
        return dn, float(lw.sum()), float(np.dot(self.size_full, lw))


def rhs(state: StateVector, kernel: KernelSpec, source: SourceSpec, cfg: SolverConfig,
        operator: CoagulationOperator | None = None):
    """Time derivative of the densities and the two leak rates.

    Returns ``(dn, (leak_number_rate, leak_mass_rate))``.
    """
    if state.nmax != cfg.nmax:
        raise ValueError(f"state has nmax={state.nmax} but config has nmax={cfg.nmax}")
    op = operator or CoagulationOperator(kernel, cfg)
    dn, ln, lm = op.rates(state.n, source.vector(cfg.nmax))
    return dn, (ln, lm)


@dataclass
class Trajectory:
    state: StateVector
    checkpoints: list[StateVector] = field(default_factory=list)
    stats: StepStats | None = None
    stopped: bool = False


def _pack(state: StateVector) -> np.ndarray:
    return np.concatenate([state.n[1:], [state.leak_number, state.leak_mass]])


def integrate(state: StateVector, kernel: KernelSpec, source: SourceSpec, cfg: SolverConfig,
              checkpoints: Iterable[float] = (), on_step=None, keep_errors: bool = False,
              operator: CoagulationOperator | None = None, stability_guard: bool = False) -> Trajectory:
    """Advance ``state`` to ``cfg.t_end`` with adaptive Dormand-Prince 5(4).

    ``on_step(t, state_view, dndt)`` may return True to stop early; the state
    passed to it shares memory with the integrator and must not be kept.
    """
    if state.nmax != cfg.nmax:
        raise ValueError(f"state has nmax={state.nmax} but config has nmax={cfg.nmax}")
    m = cfg.nmax
    op = operator or CoagulationOperator(kernel, cfg)
    src = source.vector(m)
    n_buf = np.zeros(m + 1)
    out = np.empty(m + 2)

    def fun(t, y):
        n_buf[1:] = y[:m]
        dn, ln, lm = op.rates(n_buf, src)
        out[:m] = dn[1:]
        out[m] = ln
        out[m + 1] = lm
        return out.copy()

    clip = {"mass": state.clip_mass, "number": state.clip_number}

    def on_clip(idx, vals):
        clip["mass"] += float(np.dot(idx + 1.0, vals))
        clip["number"] += float(vals.sum())

    def unpack(t, y):
        n = np.zeros(m + 1)
        n[1:] = y[:m]
        return StateVector(n, t, float(y[m]), float(y[m + 1]), clip["mass"], clip["number"])

    step_cb = None
    if on_step is not None:
        def step_cb(t, y, f):
            return on_step(t, unpack(t, y), f[:m])

    res: IntegrationResult = dopri54(
        fun, _pack(state), state.t, cfg.t_end, tol=cfg.tol_step, dt0=cfg.dt,
        clip=slice(0, m), on_clip=on_clip, checkpoints=list(checkpoints),
        on_step=step_cb, keep_errors=keep_errors, stability_guard=stability_guard,
    )
    return Trajectory(
        state=unpack(res.t, res.y),
        checkpoints=[unpack(t, y) for t, y in res.checkpoints],
        stats=res.stats,
        stopped=res.stopped,
    )


def moment(state: StateVector | np.ndarray, p: float) -> float:
    n = state.n if isinstance(state, StateVector) else np.asarray(state)
    k = np.arange(n.size, dtype=float)
    k[0] = 1.0
    return float(np.dot(np.power(k, p)[1:], n[1:]))


def total_number(state: StateVector) -> float:
    return float(state.n[1:].sum())


def mass_flux(state: StateVector, kernel: KernelSpec, cuts: Iterable[float],
              operator: CoagulationOperator | None = None) -> FluxProfile:
    """Mass flux ``J(R) = sum_{i<=R} sum_{R-i<j<=nmax} K(i,j) i n_i n_j``.

    Evaluated as (mass lost by sizes <= R) - (mass regained inside [1, R]),
    which equals the double sum exactly.
    """
    m = state.nmax
    cuts = np.asarray(list(cuts), dtype=float)
    if cuts.size and (cuts.min() < 1 or cuts.max() >= m):
        raise ValueError(f"cuts must lie in [1, nmax) = [1, {m})")
    # the uncut gain and the loss rates do not depend on the cutoff mode
    if operator is None or operator.nmax != m:
        operator = CoagulationOperator(kernel, SolverConfig(nmax=m))
    n = state.n
    g, L = operator.gain_and_loss(n)
    g = g[: m + 1]
    k = np.arange(m + 1, dtype=float)
    out_mass = np.cumsum(k * n * L)
    back_mass = np.cumsum(k * g)
    idx = np.floor(cuts).astype(int)
    J = np.maximum(out_mass[idx] - back_mass[idx], 0.0)
    return FluxProfile(cuts=cuts, J=J)


def leak_report(state: StateVector) -> tuple[float, float]:
    return state.leak_number, state.leak_mass
