import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coagkit.oracles import (
    STATIONARY_TAIL_CONSTANT,
    PoleError,
    generating_fn,
    onecomp_stationary,
    onecomp_stationary_array,
    onecomp_time,
    onecomp_time_array,
    total_number,
)


def test_time_examples():
    assert onecomp_time(1, 0.0) == 1.0
    assert onecomp_time(2, 0.0) == 0.0
    assert onecomp_time(3, 1.0) == pytest.approx(1 / 16, rel=1e-15)


def test_log_space_branch_matches_exact():
    for k in [51, 80, 200]:
        exact = Fraction(2) ** (k - 1) / Fraction(3) ** (k + 1)
        assert onecomp_time(k, 2.0) == pytest.approx(float(exact), rel=1e-12)


@pytest.mark.parametrize("t", [0.0, 0.5, 1.0, 5.0])
def test_mass_and_number_sums(t):
    kmax = 20000
    n = onecomp_time_array(kmax, t)
    k = np.arange(kmax + 1)
    # tail beyond kmax is geometric with ratio t/(1+t)
    assert math.fsum(k * n) == pytest.approx(1.0, abs=1e-12)
    assert math.fsum(n) == pytest.approx(total_number(t), abs=1e-12)


def test_total_number_examples():
    assert total_number(0.0) == 1.0
    assert total_number(1.0) == 0.5


def test_generating_fn_examples():
    assert generating_fn([0.0], 3.0) == 0.0
    for t in [0.1, 1.0, 7.0]:
        assert generating_fn([1.0], t) == pytest.approx(total_number(t), rel=1e-15)
    assert generating_fn([1.0, 1.0], 1.0) == pytest.approx(0.5)
    with pytest.raises(PoleError):
        generating_fn([3.0], 1.0)


@given(st.floats(-0.5, 0.5), st.sampled_from([0.5, 1.0, 5.0]))
def test_series_matches_closed_form(z, t):
    n = onecomp_time_array(400, t)
    series = sum(z ** k * n[k] for k in range(1, 401))
    assert series == pytest.approx(generating_fn([z], t), abs=1e-10)


def test_stationary_examples():
    assert onecomp_stationary(1, 1.0) == 0.5
    assert onecomp_stationary(2, 1.0) == 0.125
    assert onecomp_stationary(2, 4.0) == 0.25


def test_stationary_lgamma_branch_continuity():
    exact = Fraction(math.factorial(42), 41 * (2 ** 21 * math.factorial(21)) ** 2)
    assert onecomp_stationary(21, 1.0) == pytest.approx(float(exact), rel=1e-12)


def test_stationary_recursion():
    # 0 = sum_{j<k} n_j n_{k-j} - 2 n_k N + h delta_{k1}, with N = sqrt(h)
    for h in [1.0, 2.5]:
        n = onecomp_stationary_array(200, h)
        N = math.sqrt(h)
        for k in range(1, 201):
            gain = sum(n[j] * n[k - j] for j in range(1, k))
            res = gain - 2 * n[k] * N + (h if k == 1 else 0.0)
            assert abs(res) <= 1e-10


def test_stationary_total_is_sqrt_h():
    # sum n_k = sqrt(h); the tail is ~ C k^-3/2 so the remainder is ~ 2 C / sqrt(K)
    K = 200000
    n = onecomp_stationary_array(K, 1.0)
    tail = 2 * STATIONARY_TAIL_CONSTANT / math.sqrt(K + 0.5)
    assert math.fsum(n) + tail == pytest.approx(1.0, abs=1e-6)


def test_stationary_monotone():
    n = onecomp_stationary_array(500, 1.0)[1:]
    assert np.all(np.diff(n) < 0) and np.all(n > 0)


def test_tail_constant_by_brute_force():
    r1 = onecomp_stationary(10_000, 1.0) * 10_000 ** 1.5
    r4 = onecomp_stationary(40_000, 1.0) * 40_000 ** 1.5
    assert abs(r1 / r4 - 1) < 1e-3
    assert r4 == pytest.approx(STATIONARY_TAIL_CONSTANT, rel=1e-4)
    assert math.isfinite(onecomp_stationary(10 ** 6, 1.0))
