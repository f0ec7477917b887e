"""Steady states under injection, the mass-flux plateau and truncation sweeps.

A steady state is reached by long-time integration from an empty window
(``method="integrate"``).  ``method="newton"`` integrates only until the
residual is moderate and then finishes with a preconditioned Newton-Krylov
solve; the sweep uses it, seeding each truncation from the previous one.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import NoConvergence, newton_krylov
from scipy.sparse.linalg import LinearOperator

from .integrator import StiffnessError
from .kernels import KernelSpec, min_kernel_on_window
from .onecomp import (
    CoagulationOperator,
    SolverConfig,
    SourceSpec,
    StateVector,
    integrate,
    mass_flux,
    moment,
)

METHODS = ("integrate", "newton")
VERDICTS = ("stabilizing", "diverging", "inconclusive")
PLATEAU_TOL = 1e-3


@dataclass
class SteadyResult:
    profile: StateVector
    residual: float  # ||dn/dt||_1 / total source rate
    plateau_flatness: float  # max |J(R)/mass rate - 1| over [L_eta, nmax/10]
    converged: bool
    method: str = "integrate"
    message: str = ""
    history: list[tuple[float, float]] = field(default_factory=list)  # (t, N) per accepted step
    wall_time: float = 0.0

    @property
    def total(self) -> float:
        return float(self.profile.n[1:].sum())


@dataclass(frozen=True)
class SweepThresholds:
    """Calibration constants of the sweep verdict (not derived from theory)."""

    stable_rel: float = 0.01  # largest-pair relative change of the total
    diverge_rel: float = 0.10  # last relative change when changes grow
    tail_margin: float = 0.05  # required |margin| of the fitted tail exponent
    fit_lo: int = 10  # tail fit window [fit_lo, nmax / fit_hi_div]
    fit_hi_div: int = 10


@dataclass
class SweepReport:
    truncations: list[int]
    totals: list[float]
    verdict: str
    residuals: list[float] = field(default_factory=list)
    envelope_moments: list[float] = field(default_factory=list)
    tail_exponents: list[float] = field(default_factory=list)
    tail_margin: float = math.nan
    failed: int | None = None  # truncation whose solve did not converge
    thresholds: SweepThresholds = field(default_factory=SweepThresholds)

    def __post_init__(self):
        if len(self.truncations) != len(self.totals):
            raise ValueError("truncations and totals must have equal length")


def _residual(dn: np.ndarray, source: SourceSpec) -> float:
    return float(np.abs(dn).sum()) / source.total_rate


def plateau_flatness(state: StateVector, kernel: KernelSpec, source: SourceSpec,
                     operator: CoagulationOperator | None = None) -> float:
    m = state.nmax
    lo = source.L_eta
    hi = max(lo, m // 10)
    cuts = np.arange(lo, hi + 1)
    J = mass_flux(state, kernel, cuts, operator=operator).J
    return float(np.max(np.abs(J / source.mass_rate - 1.0)))


def _extend(n: np.ndarray, nmax: int) -> np.ndarray:
    """Pad a steady profile to a wider window with a k^-3/2 tail."""
    out = np.zeros(nmax + 1)
    m = min(n.size - 1, nmax)
    out[: m + 1] = n[: m + 1]
    if nmax > m and n[m] > 0:
        k = np.arange(m + 1, nmax + 1, dtype=float)
        out[m + 1:] = n[m] * (k / m) ** -1.5
    return out


class _LossPreconditioner(LinearOperator):
    # the Jacobian diagonal is dominated by -L_k
    def __init__(self, op: CoagulationOperator, x0: np.ndarray):
        super().__init__(float, (x0.size, x0.size))
        self.op = op
        self.update(x0, None)

    def update(self, x, f):
        n = np.concatenate(([0.0], x))
        d = self.op.loss_rate(n)[1:]
        self.diag = -np.maximum(d, 1e-300)

    def _matvec(self, v):
        return np.ravel(v) / self.diag


def _newton(op: CoagulationOperator, src: np.ndarray, x0: np.ndarray, tol: float, maxiter: int):
    buf = np.zeros(x0.size + 1)
    scale = float(src.sum())

    def F(x):
        buf[1:] = x
        return op.rates(buf, src)[0][1:]

    try:
        x = newton_krylov(F, x0, f_tol=tol, method="lgmres", maxiter=maxiter,
                          tol_norm=lambda f: float(np.abs(f).sum()) / scale,
                          inner_M=_LossPreconditioner(op, x0))
        ok = True
    except NoConvergence as exc:
        x = np.asarray(exc.args[0])
        ok = False
    except (ValueError, FloatingPointError):
        return x0, False
    return x, ok


def solve_stationary(kernel: KernelSpec, source: SourceSpec, cfg: SolverConfig, *,
                     tol: float = 1e-10, t_cap: float = 1e7, method: str = "integrate",
                     initial: StateVector | np.ndarray | None = None,
                     newton_switch: float = 1e-4, newton_maxiter: int = 5000,
                     plateau_tol: float = PLATEAU_TOL,
                     operator: CoagulationOperator | None = None) -> SteadyResult:
    """Drive ``source``-fed coagulation on the window ``cfg.nmax`` to a fixed point.

    Converged means residual ``<= tol`` and plateau flatness ``<= plateau_tol``.
    Failing either is reported through ``converged=False`` and ``message``.
    """
    if source.total_rate <= 0:
        raise ValueError("steady states need a nonzero source")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    m = cfg.nmax
    op = operator or CoagulationOperator(kernel, cfg)
    src = source.vector(m)
    if initial is None:
        state = StateVector.zeros(m)
    elif isinstance(initial, StateVector):
        state = replace(initial.copy(), n=_extend(initial.n, m))
    else:
        state = StateVector(_extend(np.asarray(initial, dtype=float), m))

    start = time.perf_counter()
    history: list[tuple[float, float]] = []
    stop_at = tol if method == "integrate" else newton_switch
    message = ""

    def watch(t, s, dn):
        history.append((t, float(s.n[1:].sum())))
        return _residual(dn, source) < stop_at

    def run_integration(state):
        nonlocal message
        try:
            tr = integrate(state, kernel, source, replace(cfg, t_end=t_cap), on_step=watch,
                           operator=op, stability_guard=True)
        except StiffnessError as exc:
            message = str(exc)
            return state
        return tr.state

    dn = op.rates(state.n, src)[0]
    if _residual(dn, source) >= stop_at:
        state = run_integration(state)
    if method == "newton":
        x, ok = _newton(op, src, state.n[1:].copy(), 0.1 * tol, newton_maxiter)
        x = np.maximum(x, 0.0)
        cand = replace(state, n=np.concatenate(([0.0], x)))
        cand_res = _residual(op.rates(cand.n, src)[0], source)
        if cand_res <= tol:
            state = cand
        else:
            # fall back to plain integration from the better of the two points
            if cand_res < _residual(op.rates(state.n, src)[0], source):
                state = cand
            stop_at = tol
            message = "newton stalled; finished by integration"
            state = run_integration(state)

    res = _residual(op.rates(state.n, src)[0], source)
    flat = plateau_flatness(state, kernel, source, operator=op)
    converged = res <= tol and flat <= plateau_tol
    if not converged and not message:
        if res > tol:
            message = f"residual {res:.3e} above {tol:.1e} at t={state.t:.6g} (cap {t_cap:.3g})"
        else:
            message = f"plateau flatness {flat:.3e} above {plateau_tol:.1e}"
    return SteadyResult(
        profile=state,
        residual=res,
        plateau_flatness=flat,
        converged=converged,
        method=method,
        message=message,
        history=history,
        wall_time=time.perf_counter() - start,
    )


def invariant_region_bound(kernel: KernelSpec, source: SourceSpec, r_star: int, n0: float = 0.0) -> float:
    """Ceiling ``max(N0, sqrt(2 c0 / a1))`` on the total number.

    ``a1`` is the smallest kernel value on ``[1, 2 r_star]^2`` and ``c0`` the
    total injection rate; ``inf`` when the kernel vanishes on the window.
    """
    c0 = source.total_rate
    if c0 == 0.0:
        return float(n0)
    a1 = min_kernel_on_window(kernel, 2 * int(r_star))
    if not a1 > 0:
        return math.inf
    return max(float(n0), math.sqrt(2.0 * c0 / a1))


def tail_exponent(n: np.ndarray, lo: int, hi: int) -> float:
    """Least-squares slope of ``log n_k`` against ``log k`` on ``[lo, hi]``."""
    k = np.arange(lo, hi + 1)
    y = n[k]
    keep = y > 0
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(k[keep]), np.log(y[keep]), 1)[0])


def weak_identity_defect(state: StateVector, kernel: KernelSpec, source: SourceSpec, phi: np.ndarray) -> float:
    """``|1/2 sum_{i,j} K(i,j) (phi_{i+j} - phi_i - phi_j) n_i n_j + sum phi * source| / total rate``.

    ``phi`` is indexed by size (``phi[0]`` ignored) and is zero past its end,
    which must lie within ``nmax / 2``.  The pair sum is evaluated directly,
    independently of the solver's convolution route.
    """
    m = state.nmax
    phi = np.asarray(phi, dtype=float)
    S = phi.size - 1
    if S > m // 2:
        raise ValueError(f"test sequence support {S} exceeds nmax/2 = {m // 2}")
    if S < 1:
        return 0.0
    n = state.n
    i = np.arange(1, S + 1, dtype=float)
    j = np.arange(1, m + 1, dtype=float)
    rows = kernel(i[:, None], j[None, :])  # K(i, j) for i <= S, all j
    # phi_i and phi_j terms are equal by symmetry: sum_i phi_i n_i sum_j K n_j
    loss = float(np.dot(phi[1:] * n[1:S + 1], rows @ n[1:]))
    a = np.arange(1, S + 1)
    ij = a[:, None] + a[None, :]
    inside = ij <= S
    w = np.where(inside, phi[np.minimum(ij, S)], 0.0)
    gain = 0.5 * float(np.sum(rows[:, :S] * np.outer(n[1:S + 1], n[1:S + 1]) * w))
    src = source.vector(m)
    val = gain - loss + float(np.dot(phi[1:], src[1:S + 1]))
    return abs(val) / source.total_rate


def _sweep_verdict(rel: list[float], margin: float, th: SweepThresholds) -> str:
    growing = all(b > a for a, b in zip(rel, rel[1:]))
    if growing and rel[-1] > th.diverge_rel:
        return "diverging"
    if margin < -th.tail_margin:
        return "diverging"
    if rel[-1] < th.stable_rel and margin > th.tail_margin:
        return "stabilizing"
    return "inconclusive"


def truncation_sweep(kernel: KernelSpec, source: SourceSpec, truncations, *,
                     tol: float = 1e-10, method: str = "newton",
                     thresholds: SweepThresholds | None = None,
                     cutoff_mode: str = "hard_drop", on_result=None) -> SweepReport:
    """Steady totals on growing windows and a regime verdict.

    Besides the change of the total number between windows, the verdict uses
    the tail exponent of the largest window: the envelope moment of order
    ``gamma + lambda`` stays finite only if ``n_k`` decays faster than
    ``k^-(1 + gamma + lambda)``.  The margin is ``-slope - (1 + gamma + lambda)``.
    """
    th = thresholds or SweepThresholds()
    sizes = [int(v) for v in truncations]
    if len(sizes) < 3:
        raise ValueError("a sweep needs at least 3 truncations")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("truncations must be strictly increasing")
    env = kernel.envelope
    order = env.gamma + env.lam
    totals, residuals, moments, slopes = [], [], [], []
    seed = None
    failed = None
    for m in sizes:
        cfg = SolverConfig(nmax=m, cutoff_mode=cutoff_mode, t_end=1.0)
        res = solve_stationary(kernel, source, cfg, tol=tol, method=method, initial=seed)
        if on_result is not None:
            on_result(m, res)
        totals.append(res.total)
        residuals.append(res.residual)
        moments.append(moment(res.profile, order))
        slopes.append(tail_exponent(res.profile.n, th.fit_lo, max(th.fit_lo + 1, m // th.fit_hi_div)))
        seed = res.profile
        if not res.converged:
            failed = m
            break
    margin = -slopes[-1] - (1.0 + order)
    if failed is not None:
        verdict = "inconclusive"
    else:
        rel = [abs(b - a) / abs(b) for a, b in zip(totals, totals[1:])]
        verdict = _sweep_verdict(rel, margin, th)
    return SweepReport(
        truncations=sizes[: len(totals)],
        totals=totals,
        verdict=verdict,
        residuals=residuals,
        envelope_moments=moments,
        tail_exponents=slopes,
        tail_margin=margin,
        failed=failed,
        thresholds=th,
    )
