import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coagkit.integrator import StiffnessError, dopri54
from coagkit.kernels import KernelSpec
from coagkit.onecomp import (
    CoagulationOperator,
    SolverConfig,
    SourceSpec,
    StateVector,
    integrate,
    leak_report,
    mass_flux,
    moment,
    rhs,
    total_number,
)
from coagkit.oracles import onecomp_time_array

K2 = KernelSpec.constant(2.0)
KERNELS = [K2, KernelSpec.diffusive(), KernelSpec.free_molecular(), KernelSpec.power_law(0.2, 0.3)]


def brute_rates(n, kernel, source, cfg):
    """Pair-by-pair evaluation of gain, loss and leaks (independent oracle)."""
    m = cfg.nmax
    zeta = np.zeros(2 * m + 1)
    s = np.arange(2 * m + 1, dtype=float)
    if cfg.cutoff_mode == "hard_drop":
        zeta[1:m + 1] = 1.0
    else:
        r = cfg.r_star
        zeta = np.clip((2 * r - s) / r, 0, 1)
        zeta[m + 1:] = 0
        zeta[0] = 0
    dn = np.zeros(m + 1)
    leak_n = leak_m = 0.0
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            rate = 0.5 * kernel(i, j) * n[i] * n[j]
            dn[i] -= 2 * rate
            if i + j <= m:
                dn[i + j] += zeta[i + j] * rate
            leak_n += (1 - zeta[i + j]) * rate
            leak_m += (i + j) * (1 - zeta[i + j]) * rate
    dn += source.vector(m)
    return dn, leak_n, leak_m


def test_rhs_examples():
    cfg = SolverConfig(nmax=16)
    dn, leak = rhs(StateVector.zeros(16), K2, SourceSpec.monomers(0.7), cfg)
    assert dn[1] == 0.7 and np.count_nonzero(dn) == 1 and leak == (0.0, 0.0)
    dn, _ = rhs(StateVector.monomers(16), K2, SourceSpec.none(), cfg)
    assert dn[1] == pytest.approx(-2.0) and dn[2] == pytest.approx(1.0)
    dn, _ = rhs(StateVector.from_densities({1: 1.0, 2: 1.0}, 16), K2, SourceSpec.none(), cfg)
    assert dn[3] == pytest.approx(2.0)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=12, max_size=12),
    st.sampled_from(range(len(KERNELS))),
    st.sampled_from(["hard_drop", "zeta_ramp"]),
    st.sampled_from(["direct", "fft", "generic"]),
)
def test_rates_match_brute_force(vals, ki, mode, conv):
    m = 12
    n = np.zeros(m + 1)
    n[1:] = vals
    kernel = KERNELS[ki]
    cfg = SolverConfig(nmax=m, r_star=5, cutoff_mode=mode, conv=conv)
    src = SourceSpec(((1, 0.3), (3, 0.1)))
    dn, (ln, lm) = rhs(StateVector(n), kernel, src, cfg)
    ref, rln, rlm = brute_rates(n, kernel, src, cfg)
    assert np.allclose(dn, ref, rtol=1e-12, atol=1e-13)
    assert ln == pytest.approx(rln, rel=1e-12, abs=1e-13)
    assert lm == pytest.approx(rlm, rel=1e-12, abs=1e-13)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.kind)
def test_fast_paths_agree_with_generic(kernel):
    m = 256
    rng = np.random.default_rng(3)
    n = np.zeros(m + 1)
    n[1:] = rng.random(m) * np.arange(1, m + 1) ** -1.5
    ref = CoagulationOperator(kernel, SolverConfig(nmax=m, conv="generic"))
    g0, L0 = ref.gain_and_loss(n)
    for conv in ["direct", "fft"]:
        g, L = CoagulationOperator(kernel, SolverConfig(nmax=m, conv=conv)).gain_and_loss(n)
        assert np.max(np.abs(g - g0)) <= 1e-12 * np.max(np.abs(g0))
        assert np.max(np.abs(L - L0)) <= 1e-12 * np.max(np.abs(L0))


def test_integrate_matches_oracle_small():
    cfg = SolverConfig(nmax=512, t_end=1.0)
    tr = integrate(StateVector.monomers(512), K2, SourceSpec.none(), cfg)
    ref = onecomp_time_array(512, 1.0)
    assert np.max(np.abs(tr.state.n[1:4] - [0.25, 0.125, 0.0625])) <= 1e-8
    assert np.max(np.abs(tr.state.n[:101] - ref[:101])) <= 1e-8
    assert total_number(tr.state) == pytest.approx(0.5, abs=1e-8)


def test_zero_state_stays_zero():
    tr = integrate(StateVector.zeros(64), K2, SourceSpec.none(), SolverConfig(nmax=64, t_end=3.0))
    assert np.all(tr.state.n == 0) and tr.state.leak_mass == 0


def ledger_error(init, final, source):
    lhs = moment(final, 1) + final.leak_mass + final.clip_mass
    rhs_ = moment(init, 1) + source.mass_rate * (final.t - init.t)
    return abs(lhs - rhs_) / rhs_


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.kind)
@pytest.mark.parametrize("mode", ["hard_drop", "zeta_ramp"])
def test_conservation_ledger(kernel, mode):
    src = SourceSpec(((1, 0.5), (2, 0.25)))
    cfg = SolverConfig(nmax=64, t_end=20.0, cutoff_mode=mode)
    init = StateVector.monomers(64)
    tr = integrate(init, kernel, src, cfg)
    assert tr.state.leak_mass > 0
    assert ledger_error(init, tr.state, src) <= 1e-9
    # leak accumulators are nondecreasing
    tr2 = integrate(init, kernel, src, cfg, checkpoints=[2.0, 5.0, 10.0, 20.0])
    leaks = [c.leak_mass for c in tr2.checkpoints]
    nums = [c.leak_number for c in tr2.checkpoints]
    assert leaks == sorted(leaks) and nums == sorted(nums)


def test_leak_examples():
    assert leak_report(StateVector.zeros(8)) == (0.0, 0.0)
    tr = integrate(StateVector.monomers(64), K2, SourceSpec.none(), SolverConfig(nmax=64, t_end=50.0))
    assert tr.state.leak_mass > 0
    # the leaked mass is what the exact solution carries above the window, give
    # or take the loss of sizes <= 64 against clusters that no longer exist
    ref = onecomp_time_array(20000, 50.0)
    k = np.arange(ref.size)
    assert tr.state.leak_mass == pytest.approx(float(np.sum(k[65:] * ref[65:])), rel=0.25)
    tr = integrate(StateVector.monomers(4096), K2, SourceSpec.none(), SolverConfig(nmax=4096, t_end=1.0))
    assert tr.state.leak_mass < 1e-12


def test_moment_examples():
    assert moment(StateVector.monomers(8), 1) == 1.0
    assert moment(StateVector.from_densities({2: 0.5, 4: 0.25}, 8), 1) == 2.0


def test_nonnegativity_preclip():
    tr = integrate(StateVector.monomers(256), KernelSpec.diffusive(), SourceSpec.none(),
                   SolverConfig(nmax=256, t_end=5.0, tol_step=1e-8))
    assert tr.stats.min_preclip >= -1e-10


def test_number_balance_with_source():
    h = 0.8
    cfg = SolverConfig(nmax=1024, t_end=2.0)
    ts = np.linspace(0.5, 2.0, 31)
    tr = integrate(StateVector.monomers(1024), K2, SourceSpec.monomers(h), cfg, checkpoints=ts)
    N = np.array([total_number(c) for c in tr.checkpoints])
    dt = ts[1] - ts[0]
    dN = (N[2:] - N[:-2]) / (2 * dt)
    assert np.max(np.abs(dN - (-N[1:-1] ** 2 + h))) <= 5 * dt ** 2


def test_refinement_within_error_estimate():
    init = StateVector.monomers(256)
    coarse = integrate(init, K2, SourceSpec.none(), SolverConfig(nmax=256, t_end=2.0, tol_step=1e-8), keep_errors=True)
    fine = integrate(init, K2, SourceSpec.none(), SolverConfig(nmax=256, t_end=2.0, tol_step=5e-9))
    diff = np.max(np.abs(coarse.state.n[:101] - fine.state.n[:101]))
    assert diff < sum(coarse.stats.error_estimates)


def test_checkpoints_land_exactly():
    tr = integrate(StateVector.monomers(64), K2, SourceSpec.none(), SolverConfig(nmax=64, t_end=2.0),
                   checkpoints=[0.3, 1.0, 2.0])
    assert [c.t for c in tr.checkpoints] == [0.3, 1.0, 2.0]


def test_mass_flux_examples():
    m = 16
    k = KernelSpec.constant(2.0)
    assert np.all(mass_flux(StateVector.zeros(m), k, [1, 5, 10]).J == 0)
    # n_1 = 2, R = 1: the single pair (1, 1) gives K * 1 * n_1 * n_1 = 2 * 1 * 2 * 2 = 8
    J = mass_flux(StateVector.from_densities({1: 2.0}, m), k, [1]).J
    assert J[0] == pytest.approx(8.0)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=10, max_size=10), st.sampled_from(range(len(KERNELS))))
def test_mass_flux_matches_double_sum(vals, ki):
    m = 10
    n = np.zeros(m + 1)
    n[1:] = vals
    kernel = KERNELS[ki]
    cuts = list(range(1, m))
    J = mass_flux(StateVector(n), kernel, cuts).J
    for R, got in zip(cuts, J):
        ref = sum(kernel(i, j) * i * n[i] * n[j] for i in range(1, R + 1) for j in range(R - i + 1, m + 1))
        assert got == pytest.approx(ref, rel=1e-12, abs=1e-13)
        assert got >= 0


def test_mass_flux_rejects_bad_cuts():
    with pytest.raises(ValueError):
        mass_flux(StateVector.zeros(8), K2, [8])


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(nmax=10, r_star=6, cutoff_mode="zeta_ramp")
    with pytest.raises(ValueError):
        SolverConfig(dt=0)
    with pytest.raises(ValueError):
        SourceSpec(((0, 1.0),))
    with pytest.raises(ValueError):
        SourceSpec(((1, -1.0),))
    assert SourceSpec(((1, 1.0), (3, 0.5))).L_eta == 3
    with pytest.raises(ValueError):
        integrate(StateVector.zeros(8), K2, SourceSpec.none(), SolverConfig(nmax=16))


def test_dopri54_exponential_and_stiffness():
    res = dopri54(lambda t, y: -y, np.array([1.0]), 0.0, 2.0, tol=1e-12)
    assert res.y[0] == pytest.approx(math.exp(-2.0), rel=1e-10)
    with pytest.raises(StiffnessError):
        dopri54(lambda t, y: np.array([1.0 / (1.0 - t)]), np.array([0.0]), 0.0, 2.0, tol=1e-10)


def test_dopri54_clipping_is_reported():
    seen = []
    res = dopri54(lambda t, y: np.array([-1.0]), np.array([0.5]), 0.0, 1.0, tol=1e-8,
                  clip=slice(0, 1), on_clip=lambda i, v: seen.append(v.sum()))
    assert res.y[0] == 0.0 and seen and res.stats.clip_events > 0
    assert sum(seen) <= 0
