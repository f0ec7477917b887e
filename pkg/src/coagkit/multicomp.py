"""Multicomponent discrete coagulation, shell decomposition and localization.

A cluster is a vector ``alpha`` of ``d`` component counts; only clusters with
``|alpha| = sum(alpha) <= cap`` are kept.  The kernel acts on total sizes
``K(|beta|, |alpha - beta|)``, so the gain is a d-dimensional convolution
(separable in the same way as the one-component case) and the loss only needs
the shell sums.  For ``d <= 3`` densities live in a dense array of shape
``(cap + 1,) * d``; for larger ``d`` in a dict over the nonzero clusters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np
from scipy.signal import convolve

from .integrator import dopri54
from .kernels import KernelSpec
from .onecomp import CoagulationOperator, SolverConfig
from .oracles import log_stationary_shell, onecomp_stationary, onecomp_time

DENSE_MAX_DIM = 3
DIRECT_CONV_MAX = 1024  # grid points below which the gain convolution is evaluated directly
TIE_RTOL = 1e-12  # relative gap under which two shell values count as tied

Alpha = tuple[int, ...]


def as_alpha(alpha: Iterable[int]) -> Alpha:
    a = tuple(int(v) for v in alpha)
    if not a:
        raise ValueError("multi-index needs at least one component")
    if any(v < 0 for v in a):
        raise ValueError(f"multi-index components must be >= 0, got {a}")
    if sum(a) < 1:
        raise ValueError("multi-index must not be all zero")
    return a


def shell(d: int, k: int) -> Iterator[Alpha]:
    """All ``alpha`` with ``d`` components and ``|alpha| = k``, lexicographic order."""
    if d == 1:
        yield (k,)
        return
    for first in range(k + 1):
        for rest in shell(d - 1, k - first):
            yield (first,) + rest


def shell_count(d: int, k: int) -> int:
    return math.comb(k + d - 1, d - 1)


def g_multinomial(alpha: Iterable[int]) -> float:
    """``k! / (alpha_1! ... alpha_d!) / d**k`` with ``k = |alpha|``."""
    a = sorted(as_alpha(alpha))
    d, k = len(a), sum(a)
    if k <= 20:
        num = math.factorial(k)
        for v in a:
            num //= math.factorial(v)
        return num / d ** k
    lg = math.lgamma(k + 1) - sum(math.lgamma(v + 1) for v in a) - k * math.log(d)
    return math.exp(lg)


def analytic_time_solution(alpha: Iterable[int], t: float) -> float:
    a = as_alpha(alpha)
    return onecomp_time(sum(a), t) * g_multinomial(a)


def analytic_stationary(alpha: Iterable[int], h: float) -> float:
    a = as_alpha(alpha)
    k = sum(a)
    if k > 20:
        if not h > 0:
            raise ValueError("source rate must be positive")
        return math.sqrt(h) * math.exp(log_stationary_shell(k)) * g_multinomial(a)
    return onecomp_stationary(k, h) * g_multinomial(a)


def mass_difference(alpha: Iterable[int]) -> float:
    """``(1/d) sum_{i,j} (alpha_i - alpha_j)**2`` over ordered pairs."""
    a = np.asarray(as_alpha(alpha), dtype=float)
    return float(((a[:, None] - a[None, :]) ** 2).sum() / a.size)


def scaling_profile(alpha: Iterable[int], t: float) -> tuple[float, float, float]:
    """``(xi, rho, phi)`` with ``xi = |alpha|/t``, ``rho = sqrt(|alpha|_-^2 / t)``,
    ``phi = xi**(-(d-1)/2) exp(-xi) exp(-rho**2 / (2 xi))``."""
    if not t > 0:
        raise ValueError("scaling form needs t > 0")
    a = as_alpha(alpha)
    d = len(a)
    xi = sum(a) / t
    rho = math.sqrt(mass_difference(a) / t)
    phi = xi ** (-(d - 1) / 2) * math.exp(-xi) * math.exp(-rho * rho / (2.0 * xi))
    return xi, rho, phi


def generating_series(z: Sequence[float], t: float, tail: float = 1e-16, max_shell: int = 10_000) -> float:
    """``sum_alpha z**alpha n_alpha(t)`` of the analytic solution, summed shell by
    shell until a shell contributes less than ``tail`` in absolute value."""
    zz = np.asarray(z, dtype=float)
    d = zz.size
    total = 0.0
    for k in range(1, max_shell + 1):
        part = 0.0
        nk = onecomp_time(k, t)
        for a in shell(d, k):
            part += float(np.prod(zz ** np.asarray(a))) * g_multinomial(a)
        part *= nk
        total += part
        # geometric bound on the remaining shells
        if abs(part) < tail and nk * float(np.abs(zz).mean()) ** k < tail:
            return total
    raise RuntimeError(f"series did not settle within {max_shell} shells")


@dataclass(frozen=True)
class MultiSource:
    d: int
    entries: tuple[tuple[Alpha, float], ...] = ()

    def __post_init__(self):
        clean = []
        for a, r in self.entries:
            a = as_alpha(a)
            if len(a) != self.d:
                raise ValueError(f"source index {a} has {len(a)} components, expected {self.d}")
            if not (r >= 0 and math.isfinite(r)):
                raise ValueError(f"source rate must be finite and >= 0, got {r}")
            clean.append((a, float(r)))
        object.__setattr__(self, "entries", tuple(clean))

    @classmethod
    def uniform_monomers(cls, d: int, h: float) -> MultiSource:
        """Rate ``h/d`` at every unit vector."""
        return cls(d, tuple((tuple(int(i == j) for j in range(d)), h / d) for i in range(d)))

    @property
    def total_rate(self) -> float:
        return float(sum(r for _, r in self.entries))

    def component_mass_rate(self) -> np.ndarray:
        out = np.zeros(self.d)
        for a, r in self.entries:
            out += r * np.asarray(a)
        return out


@dataclass
class MultiState:
    """Densities ``n_alpha`` for ``|alpha| <= cap``.

    ``leak_mass[i]`` is the amount of component ``i`` carried by clusters that
    formed above the cap; ``clip_mass[i]`` the (nonpositive) amount removed by
    resetting negative densities.
    """

    d: int
    cap: int
    dense: np.ndarray | None = None
    sparse: dict[Alpha, float] | None = None
    t: float = 0.0
    leak_mass: np.ndarray = field(default=None)
    leak_number: float = 0.0
    clip_mass: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.d < 1 or self.cap < 1:
            raise ValueError("need d >= 1 and cap >= 1")
        if self.dense is None and self.sparse is None:
            if self.d <= DENSE_MAX_DIM:
                self.dense = np.zeros((self.cap + 1,) * self.d)
            else:
                self.sparse = {}
        if self.leak_mass is None:
            self.leak_mass = np.zeros(self.d)
        if self.clip_mass is None:
            self.clip_mass = np.zeros(self.d)

    @classmethod
    def empty(cls, d: int, cap: int) -> MultiState:
        return cls(d, cap)

    @classmethod
    def uniform_monomers(cls, d: int, cap: int) -> MultiState:
        """Unit mass split evenly: ``n = (1/d) sum_i delta_{e_i}``."""
        s = cls(d, cap)
        for i in range(d):
            s[tuple(int(i == j) for j in range(d))] = 1.0 / d
        return s

    @classmethod
    def from_function(cls, d: int, cap: int, fn: Callable[[Alpha], float]) -> MultiState:
        s = cls(d, cap)
        for k in range(1, cap + 1):
            for a in shell(d, k):
                s[a] = fn(a)
        return s

    def _check(self, alpha) -> Alpha:
        a = as_alpha(alpha)
        if len(a) != self.d:
            raise ValueError(f"index {a} has {len(a)} components, state has d={self.d}")
        return a

    def __getitem__(self, alpha) -> float:
        a = self._check(alpha)
        if sum(a) > self.cap:
            return 0.0
        if self.dense is not None:
            return float(self.dense[a])
        return self.sparse.get(a, 0.0)

    def __setitem__(self, alpha, value: float):
        a = self._check(alpha)
        if sum(a) > self.cap:
            raise ValueError(f"|alpha| = {sum(a)} exceeds cap {self.cap}")
        if self.dense is not None:
            self.dense[a] = value
        elif value != 0.0:
            self.sparse[a] = float(value)
        else:
            self.sparse.pop(a, None)

    def items(self) -> Iterator[tuple[Alpha, float]]:
        """Nonzero entries, shell by shell in lexicographic order."""
        if self.dense is not None:
            for k in range(1, self.cap + 1):
                for a in shell(self.d, k):
                    v = float(self.dense[a])
                    if v != 0.0:
                        yield a, v
        else:
            for a in sorted(self.sparse, key=lambda a: (sum(a), a)):
                yield a, self.sparse[a]

    def shell_sums(self) -> np.ndarray:
        """``S[k] = sum_{|alpha|=k} n_alpha`` for ``k = 0..cap``."""
        out = np.zeros(self.cap + 1)
        if self.dense is not None:
            size = _size_grid(self.d, self.cap)
            inside = size <= self.cap
            np.add.at(out, size[inside], self.dense[inside])
        else:
            for a, v in self.sparse.items():
                out[sum(a)] += v
        return out

    def component_mass(self) -> np.ndarray:
        out = np.zeros(self.d)
        for a, v in self.items():
            out += v * np.asarray(a)
        return out

    def total_number(self) -> float:
        return float(self.shell_sums().sum())


def _size_grid(d: int, cap: int) -> np.ndarray:
    axes = np.indices((cap + 1,) * d)
    return axes.sum(axis=0)


class MultiOperator:
    """Right-hand side for one kernel, dimension and cap (dense storage)."""

    def __init__(self, kernel: KernelSpec, d: int, cap: int):
        self.kernel = kernel
        self.d = d
        self.cap = cap
        self.size = _size_grid(d, cap)
        self.inside = (self.size <= cap) & (self.size >= 1)
        full = _size_grid(d, 2 * cap)
        self.full_size = full
        sz = np.maximum(self.size, 1).astype(float)
        self._pow = {e: np.where(self.inside, sz ** e, 0.0) for _, p, q in kernel.terms for e in (p, q)}
        self._terms = kernel.terms
        self._sum_factor = None
        if kernel.sum_exponent:
            self._sum_factor = np.maximum(full, 1).astype(float) ** kernel.sum_exponent
        self._shell_op = CoagulationOperator(kernel, SolverConfig(nmax=cap, conv="direct"))
        self._comp = [np.indices(full.shape)[i] for i in range(d)]

    def full_gain(self, n: np.ndarray) -> np.ndarray:
        """``1/2 sum_{0<beta<alpha} K(|beta|, |alpha-beta|) n_beta n_{alpha-beta}`` on the
        doubled grid (clusters up to ``|alpha| = 2 cap``)."""
        n = np.where(self.inside, n, 0.0)
        g = np.zeros(self.full_size.shape)
        method = "direct" if n.size <= DIRECT_CONV_MAX else "fft"
        for c, p, q in self._terms:
            a = self._pow[p] * n
            b = self._pow[q] * n
            g += c * convolve(a, b, method=method)
        np.maximum(g, 0.0, out=g)
        g *= 0.5
        if self._sum_factor is not None:
            g *= self._sum_factor
        return g

    def rates(self, n: np.ndarray, source: np.ndarray):
        """``(dn/dt, leak_mass_rate per component, leak_number_rate)``."""
        g = self.full_gain(n)
        sums = np.zeros(self.cap + 1)
        np.add.at(sums, self.size[self.inside], n[self.inside])
        L_shell = self._shell_op.loss_rate(sums)
        idx = tuple(slice(0, self.cap + 1) for _ in range(self.d))
        dn = g[idx] - n * L_shell[np.minimum(self.size, self.cap)] + source
        dn[~self.inside] = 0.0
        out = self.full_size > self.cap
        lost = g[out]
        leak_m = np.array([float(np.dot(c[out], lost)) for c in self._comp])
        return dn, leak_m, float(lost.sum())


def _sparse_rates(state: MultiState, kernel: KernelSpec, source: MultiSource):
    # pairwise enumeration over nonzero clusters (d > DENSE_MAX_DIM)
    items = list(state.items())
    cap = state.cap
    d = state.d
    dn: dict[Alpha, float] = {}
    leak_m = np.zeros(d)
    leak_n = 0.0
    sums = np.zeros(cap + 1)
    for a, v in items:
        sums[sum(a)] += v
    shell_op = CoagulationOperator(kernel, SolverConfig(nmax=cap, conv="direct"))
    L = shell_op.loss_rate(sums)
    for a, v in items:
        dn[a] = dn.get(a, 0.0) - float(v * L[sum(a)])
    for i, (a, va) in enumerate(items):
        for b, vb in items[i:]:
            rate = float(kernel(sum(a), sum(b)) * va * vb)
            if a == b:
                rate *= 0.5
            c = tuple(x + y for x, y in zip(a, b))
            if sum(c) > cap:
                leak_m += rate * np.asarray(c)
                leak_n += rate
            else:
                dn[c] = dn.get(c, 0.0) + rate
    for a, r in source.entries:
        dn[a] = dn.get(a, 0.0) + r
    return dn, leak_m, leak_n


def multicomp_rhs(state: MultiState, kernel: KernelSpec, source: MultiSource | None = None,
                  operator: MultiOperator | None = None) -> MultiState:
    """Time derivative of ``state`` returned as a MultiState of the same shape.

    Its ``leak_mass`` / ``leak_number`` hold the rates at which component mass
    and clusters leave through the cap.
    """
    source = source or MultiSource(state.d)
    if source.d != state.d:
        raise ValueError(f"source has d={source.d} but state has d={state.d}")
    for a, _ in source.entries:
        if sum(a) > state.cap:
            raise ValueError(f"source index {a} lies above the cap {state.cap}")
    out = MultiState(state.d, state.cap, t=state.t)
    if state.dense is not None:
        op = operator or MultiOperator(kernel, state.d, state.cap)
        dn, lm, ln = op.rates(state.dense, _dense_source(source, state.cap))
        out.dense = dn
    else:
        dn, lm, ln = _sparse_rates(state, kernel, source)
        out.sparse = {a: v for a, v in dn.items() if v != 0.0}
    out.leak_mass = lm
    out.leak_number = ln
    return out


def _dense_source(source: MultiSource, cap: int) -> np.ndarray:
    s = np.zeros((cap + 1,) * source.d)
    for a, r in source.entries:
        s[a] += r
    return s


def integrate_multi(state: MultiState, kernel: KernelSpec, t_end: float, source: MultiSource | None = None, *,
                    tol: float = 1e-10, checkpoints: Iterable[float] = ()) -> tuple[MultiState, list[MultiState]]:
    """Advance a dense-storage state to ``t_end``; returns the final state and the checkpoints."""
    if state.dense is None:
        raise ValueError(f"time integration supports d <= {DENSE_MAX_DIM} (dense storage)")
    source = source or MultiSource(state.d)
    if source.d != state.d:
        raise ValueError(f"source has d={source.d} but state has d={state.d}")
    d, cap = state.d, state.cap
    op = MultiOperator(kernel, d, cap)
    mask = op.inside
    coords = np.argwhere(mask)
    comp = coords.T.astype(float)  # component counts per packed entry
    m = int(mask.sum())
    src_full = _dense_source(source, cap)
    buf = np.zeros(mask.shape)

    def fun(t, y):
        buf[mask] = y[:m]
        dn, lm, ln = op.rates(buf, src_full)
        return np.concatenate((dn[mask], lm, [ln]))

    clip = state.clip_mass.astype(float).copy()

    def on_clip(idx, vals):
        clip[:] += comp[:, idx] @ vals

    y0 = np.concatenate((state.dense[mask], state.leak_mass, [state.leak_number]))
    res = dopri54(fun, y0, state.t, t_end, tol=tol, clip=slice(0, m), on_clip=on_clip,
                  checkpoints=list(checkpoints))

    def unpack(t, y):
        s = MultiState(d, cap, t=t)
        s.dense[mask] = y[:m]
        s.leak_mass = y[m:m + d].copy()
        s.leak_number = float(y[m + d])
        s.clip_mass = clip.copy()
        return s

    return unpack(res.t, res.y), [unpack(t, y) for t, y in res.checkpoints]


@dataclass
class LocalizationReport:
    shell: int
    argmax: Alpha
    mass_difference_at_argmax: float
    value: float
    profile: dict[float, float]  # |alpha|_-^2 -> summed density on the shell


def localization_argmax(profile: MultiState | Callable[[Alpha], float], k: int, d: int | None = None) -> LocalizationReport:
    """Largest density on the shell ``|alpha| = k``.

    ``profile`` is a MultiState or a callable ``alpha -> density`` (then ``d``
    is required).  Ties within a relative ``TIE_RTOL`` go to the
    lexicographically smallest index.
    """
    if isinstance(profile, MultiState):
        d = profile.d
        if k > profile.cap:
            raise ValueError(f"shell k={k} is empty: it lies above the cap {profile.cap}")
        value_of = profile.__getitem__
    else:
        if d is None:
            raise ValueError("dimension d is required for a callable profile")
        value_of = profile
    if k < 1:
        raise ValueError(f"shell k={k} is empty: sizes start at 1")
    best, best_val = None, -math.inf
    binned: dict[float, float] = {}
    for a in shell(d, k):
        v = float(value_of(a))
        md = mass_difference(a)
        binned[md] = binned.get(md, 0.0) + v
        if best is None or v > best_val + TIE_RTOL * abs(best_val):
            best, best_val = a, v
    return LocalizationReport(
        shell=k,
        argmax=best,
        mass_difference_at_argmax=mass_difference(best),
        value=best_val,
        profile=dict(sorted(binned.items())),
    )
