import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coagkit.kernels import (
    EnvelopeParams,
    KernelDomainError,
    KernelSpec,
    classify_regime,
    default_envelope,
    envelope_ratio_range,
    eval_kernel,
    min_kernel_on_window,
    verify_envelope,
)

sizes = st.floats(min_value=1.0, max_value=1e6, allow_nan=False)
BUILTINS = [KernelSpec.constant(2.0), KernelSpec.diffusive(), KernelSpec.free_molecular()]


def test_diffusive_examples():
    k = KernelSpec.diffusive()
    for x in [1.0, 7.0, 1000.0]:
        assert eval_kernel(k, x, x) == pytest.approx(4.0, rel=1e-15)
    assert eval_kernel(k, 1, 8) == pytest.approx(4.5, rel=1e-15)


def test_free_molecular_and_constant_examples():
    assert eval_kernel(KernelSpec.free_molecular(), 1, 1) == pytest.approx(4 * math.sqrt(2), rel=1e-15)
    assert eval_kernel(KernelSpec.constant(2.0), 17, 3) == 2.0


def test_domain_errors():
    with pytest.raises(KernelDomainError):
        eval_kernel(KernelSpec.diffusive(), 0.5, 2)
    huge = KernelSpec.power_law(400.0, 0.0)
    with pytest.raises(KernelDomainError, match=r"\(x, y\)"):
        eval_kernel(huge, 1e6, 1e6)


def test_classify_examples():
    v = classify_regime(EnvelopeParams(1, 1, 0.0, 1 / 3))
    assert v.exists
    v = classify_regime(EnvelopeParams(1, 1, 1 / 6, 1 / 2))
    assert not v.exists
    assert 1 - v.margin == pytest.approx(7 / 6)
    v = classify_regime(EnvelopeParams(1, 1, 0.0, 0.0))
    assert v.exists and v.margin == 1.0


def test_boundary_is_nonexistence():
    assert not classify_regime(EnvelopeParams(1, 1, 0.0, 0.5)).exists
    assert not classify_regime(EnvelopeParams(1, 1, -3.0, 1.0)).exists


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.01, 10), st.floats(1, 10))
def test_classify_scale_free(g, lam, c1, ratio):
    a = classify_regime(EnvelopeParams(c1, c1 * ratio, g, lam))
    b = classify_regime(EnvelopeParams(1.0, 1.0, g, lam))
    assert a == b


def test_default_envelopes():
    d = default_envelope("diffusive")
    assert (d.gamma, d.lam) == (0.0, 1 / 3)
    f = default_envelope("free-molecular")
    assert (f.gamma, f.lam) == (1 / 6, 1 / 2)
    c = default_envelope("constant")
    assert (c.gamma, c.lam) == (0.0, 0.0)
    with pytest.raises(ValueError):
        default_envelope("power_law")


def test_verify_envelope_examples():
    grid = range(1, 101)
    assert verify_envelope(KernelSpec.constant(2.0), grid)["max_violation"] == 0.0
    assert verify_envelope(KernelSpec.diffusive(), range(1, 65))["max_violation"] == 0.0
    wrong = KernelSpec("free_molecular", EnvelopeParams(1, 1, 0, 0), sum_exponent=0.5,
                       terms=KernelSpec.free_molecular().terms)
    assert verify_envelope(wrong, grid)["max_violation"] > 0


def test_recorded_envelope_constants_match_scan():
    grid = np.logspace(0.0, 6.0, 400)
    for spec in BUILTINS[1:]:
        env = spec.envelope
        lo, hi = envelope_ratio_range(spec, grid, EnvelopeParams(1.0, 1.0, env.gamma, env.lam))
        assert lo == pytest.approx(env.c1, rel=1e-12)
        assert hi == pytest.approx(env.c2, rel=1e-12)
        assert verify_envelope(spec, grid)["max_violation"] <= 1e-15


@settings(max_examples=300)
@given(sizes, sizes)
def test_symmetry_exact(x, y):
    for spec in BUILTINS + [KernelSpec.power_law(0.3, 0.2)]:
        assert eval_kernel(spec, x, y) == eval_kernel(spec, y, x)
        assert eval_kernel(spec, x, y) >= 0


def test_symmetry_thousand_random_pairs():
    rng = np.random.default_rng(7)
    x = rng.uniform(1, 1e4, 1000)
    y = rng.uniform(1, 1e4, 1000)
    for spec in BUILTINS:
        assert np.array_equal(eval_kernel(spec, x, y), eval_kernel(spec, y, x))


@given(st.floats(1, 1e3), st.floats(1, 1e3), st.floats(1, 50))
def test_homogeneity(x, y, k):
    d = KernelSpec.diffusive()
    assert eval_kernel(d, k * x, k * y) == pytest.approx(eval_kernel(d, x, y), rel=1e-12)
    f = KernelSpec.free_molecular()
    assert eval_kernel(f, k * x, k * y) == pytest.approx(k ** (1 / 6) * eval_kernel(f, x, y), rel=1e-12)


@given(sizes, sizes)
def test_factorisation_matches_formula(x, y):
    for spec in BUILTINS + [KernelSpec.power_law(-0.4, 0.7, 1.5)]:
        fact = (x + y) ** spec.sum_exponent * sum(c * x ** p * y ** q for c, p, q in spec.terms)
        assert fact == pytest.approx(eval_kernel(spec, x, y), rel=1e-12)


def test_matrix_table():
    spec = KernelSpec.free_molecular()
    t = spec.matrix(10)
    assert t.shape == (11, 11)
    assert np.all(t[0] == 0) and np.all(t[:, 0] == 0)
    assert t[3, 7] == eval_kernel(spec, 3, 7)


def test_min_kernel_on_window():
    assert min_kernel_on_window(KernelSpec.constant(2.0), 50) == 2.0
    assert min_kernel_on_window(KernelSpec.diffusive(), 200) == pytest.approx(4.0, rel=1e-14)
    brute = KernelSpec.power_law(0.5, -0.2).matrix(30)[1:, 1:].min()
    assert min_kernel_on_window(KernelSpec.power_law(0.5, -0.2), 30, block=7) == brute


def test_from_name():
    assert KernelSpec.from_name("free-molecular").kind == "free_molecular"
    assert KernelSpec.from_name("constant", value=3.0).value == 3.0
    with pytest.raises(ValueError):
        KernelSpec.from_name("shear")
    with pytest.raises(ValueError):
        KernelSpec.from_name("power_law")
    with pytest.raises(ValueError):
        EnvelopeParams(2.0, 1.0, 0, 0)
