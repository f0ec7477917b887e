import functools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from coagkit.kernels import KernelSpec
from coagkit.onecomp import SolverConfig, SourceSpec, StateVector
from coagkit.stationary import (
    SweepReport,
    SweepThresholds,
    _sweep_verdict,
    invariant_region_bound,
    solve_stationary,
    tail_exponent,
    truncation_sweep,
    weak_identity_defect,
)

K2 = KernelSpec.constant(2.0)


def truncated_constant_steady(h: float, m: int) -> np.ndarray:
    """Exact steady state of the hard-drop truncated constant-kernel system.

    With N = sum n_k fixed the balance ``2 n_k N = sum_{j<k} n_j n_{k-j} + h d_k1``
    is a forward recursion; N is the root of ``sum n_k(N) = N``.
    """
    def profile(N):
        n = np.zeros(m + 1)
        n[1] = h / (2 * N)
        for k in range(2, m + 1):
            n[k] = np.dot(n[1:k], n[k - 1:0:-1]) / (2 * N)
        return n

    N = brentq(lambda N: profile(N).sum() - N, 0.5 * math.sqrt(h), 1.5 * math.sqrt(h), xtol=1e-15, rtol=1e-15)
    return profile(N)


@pytest.fixture(scope="module")
def steady_256():
    cfg = SolverConfig(nmax=256)
    return solve_stationary(K2, SourceSpec.monomers(1.0), cfg)


def test_integration_matches_recursion_oracle(steady_256):
    ref = truncated_constant_steady(1.0, 256)
    assert steady_256.converged
    assert steady_256.residual <= 1e-10
    assert np.max(np.abs(steady_256.profile.n - ref)) <= 1e-9
    assert steady_256.plateau_flatness <= 1e-3


def test_newton_cross_checks_integration(steady_256):
    res = solve_stationary(K2, SourceSpec.monomers(1.0), SolverConfig(nmax=256), method="newton")
    assert res.converged
    assert np.max(np.abs(res.profile.n - steady_256.profile.n)) <= 1e-9
    d = solve_stationary(KernelSpec.diffusive(), SourceSpec.monomers(1.0), SolverConfig(nmax=256))
    dn = solve_stationary(KernelSpec.diffusive(), SourceSpec.monomers(1.0), SolverConfig(nmax=256), method="newton")
    assert d.converged and dn.converged
    assert np.max(np.abs(d.profile.n - dn.profile.n)) <= 1e-9


def test_small_sizes_near_closed_form(steady_256):
    n = steady_256.profile.n
    assert n[1] == pytest.approx(0.5, rel=2e-2)
    assert n[2] == pytest.approx(0.125, rel=2e-2)


def test_history_below_ceiling(steady_256):
    bound = invariant_region_bound(K2, SourceSpec.monomers(1.0), 128)
    assert bound == 1.0
    totals = [N for _, N in steady_256.history]
    assert max(totals) <= bound
    # not monotone: pairs dropped at the window edge remove two particles, so
    # the truncated total overshoots a little before settling
    assert totals[-1] <= max(totals)


def test_non_convergence_is_reported():
    res = solve_stationary(K2, SourceSpec.monomers(1.0), SolverConfig(nmax=128), t_cap=2.0)
    assert not res.converged
    assert "residual" in res.message


def test_requires_source():
    with pytest.raises(ValueError):
        solve_stationary(K2, SourceSpec.none(), SolverConfig(nmax=16))


def test_invariant_region_examples():
    assert invariant_region_bound(K2, SourceSpec.monomers(1.0), 64) == pytest.approx(1.0)
    assert invariant_region_bound(K2, SourceSpec.none(), 64) == 0.0
    assert invariant_region_bound(KernelSpec.diffusive(), SourceSpec.monomers(1.0), 64) == pytest.approx(
        math.sqrt(0.5), rel=1e-12)
    assert invariant_region_bound(K2, SourceSpec.none(), 64, n0=0.7) == 0.7


def test_source_scaling(steady_256):
    s = 1.7
    res = solve_stationary(K2, SourceSpec.monomers(s * s), SolverConfig(nmax=256))
    assert res.total == pytest.approx(s * steady_256.total, rel=1e-8)


def test_weak_identity(steady_256):
    rng = np.random.default_rng(11)
    for _ in range(5):
        phi = np.zeros(65)
        phi[1:] = rng.normal(size=64)
        assert weak_identity_defect(steady_256.profile, K2, SourceSpec.monomers(1.0), phi) <= 1e-8


DIFF_SOURCE = SourceSpec(((1, 0.6), (2, 0.2)))


@functools.lru_cache(maxsize=None)
def steady_diffusive():
    return solve_stationary(KernelSpec.diffusive(), DIFF_SOURCE, SolverConfig(nmax=256))


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=64))
def test_weak_identity_property(vals):
    res = steady_diffusive()
    assert res.converged
    phi = np.concatenate(([0.0], vals))
    assert weak_identity_defect(res.profile, KernelSpec.diffusive(), DIFF_SOURCE, phi) <= 1e-8


def test_weak_identity_detects_non_steady():
    state = StateVector.monomers(64)
    phi = np.ones(33)
    # phi = 1: d/dt N = -N^2 + h for the constant kernel, here -1 + 1 = 0 ...
    assert weak_identity_defect(state, K2, SourceSpec.monomers(1.0), phi) == pytest.approx(0.0, abs=1e-15)
    # ... and -1 + 3 with h = 3
    assert weak_identity_defect(state, K2, SourceSpec.monomers(3.0), phi) == pytest.approx(2.0 / 3.0)
    with pytest.raises(ValueError):
        weak_identity_defect(state, K2, SourceSpec.monomers(1.0), np.ones(40))


def test_tail_exponent_exact_power():
    k = np.arange(1001, dtype=float)
    n = np.zeros(1001)
    n[1:] = 3.0 * k[1:] ** -1.5
    assert tail_exponent(n, 10, 1000) == pytest.approx(-1.5, abs=1e-12)


def test_sweep_verdict_rule():
    th = SweepThresholds()
    assert _sweep_verdict([0.02, 0.005], 0.2, th) == "stabilizing"
    assert _sweep_verdict([0.05, 0.2], 0.2, th) == "diverging"
    assert _sweep_verdict([0.02, 0.02], -0.2, th) == "diverging"
    assert _sweep_verdict([0.02, 0.02], 0.2, th) == "inconclusive"
    assert _sweep_verdict([0.005, 0.004], 0.01, th) == "inconclusive"


def test_sweep_needs_three_truncations():
    with pytest.raises(ValueError):
        truncation_sweep(K2, SourceSpec.monomers(1.0), [64, 128])
    with pytest.raises(ValueError):
        SweepReport([1, 2, 3], [1.0, 2.0], "inconclusive")


def test_small_constant_sweep_stabilizes():
    rep = truncation_sweep(K2, SourceSpec.monomers(1.0), [128, 256, 512])
    assert rep.verdict == "stabilizing"
    assert len(rep.totals) == 3 and rep.failed is None
    assert rep.totals == sorted(rep.totals)
    assert rep.totals[-1] == pytest.approx(1.0, abs=2e-3)
