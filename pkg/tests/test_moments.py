"""Moment-estimator tests against exact binomial/trinomial enumeration.

The enumeration helpers here are the oracle: they compute E[f(X)] by
summing f over the full outcome space with exact integer multinomial
coefficients, so any bias in an estimator shows up directly.
"""

import math

import numpy as np
import pytest

from delvekit.moments import (
    RowMoments,
    est_cube_norm,
    est_fourth_norm,
    est_omega_cube,
    est_omega_fourth,
    est_omega_sq,
    est_pair,
    est_pair_sq,
    est_sq_norm,
)


def expect_binomial(N, w, fn):
    """Exact E[fn(X)] for X ~ Binomial(N, w)."""
    return math.fsum(
        math.comb(N, x) * w ** x * (1.0 - w) ** (N - x) * fn(x)
        for x in range(N + 1)
    )


def expect_trinomial(N, w1, w2, fn):
    """Exact E[fn(X1, X2)] for (X1, X2, X3) ~ Multinomial(N, (w1, w2, 1-w1-w2))."""
    w3 = 1.0 - w1 - w2
    total = 0.0
    for x1 in range(N + 1):
        for x2 in range(N + 1 - x1):
            x3 = N - x1 - x2
            coeff = math.factorial(N) // (
                math.factorial(x1) * math.factorial(x2) * math.factorial(x3)
            )
            total += coeff * w1 ** x1 * w2 ** x2 * w3 ** x3 * fn(x1, x2)
    return total


def test_frozen_values():
    assert est_omega_sq(2, 4) == pytest.approx(1 / 6, abs=1e-15)
    assert est_omega_cube(3, 4) == pytest.approx(6 / 24, abs=1e-15)
    assert est_omega_fourth(4, 4) == pytest.approx(1.0, abs=1e-15)
    assert est_pair(2, 3, 5) == pytest.approx(0.3, abs=1e-15)
    assert est_pair_sq(2, 3, 5) == pytest.approx(0.1, abs=1e-15)
    assert est_sq_norm([2, 2], 4) == pytest.approx(1 / 3, abs=1e-15)
    assert est_cube_norm([3, 1], 4) == pytest.approx(0.25, abs=1e-15)
    assert est_fourth_norm([4], 4) == pytest.approx(1.0, abs=1e-15)
    # zero counts contribute exactly zero
    assert est_omega_sq(0, 5) == 0.0
    assert est_omega_fourth(1, 5) == 0.0


def test_single_column_unbiased():
    for N in range(4, 7):
        for w in np.arange(0.1, 1.0, 0.2):
            assert expect_binomial(N, w, lambda x: est_omega_sq(x, N)) == pytest.approx(
                w ** 2, abs=1e-13)
            assert expect_binomial(N, w, lambda x: est_omega_cube(x, N)) == pytest.approx(
                w ** 3, abs=1e-13)
            assert expect_binomial(N, w, lambda x: est_omega_fourth(x, N)) == pytest.approx(
                w ** 4, abs=1e-13)


def test_naive_fourth_moment_is_biased():
    # X^4/N^4 overshoots Omega^4; the falling-factorial form does not.
    N, w = 5, 0.4
    naive = expect_binomial(N, w, lambda x: (x / N) ** 4)
    assert naive > w ** 4 + 1e-3


def test_pair_estimators_unbiased():
    for N in (4, 5, 6):
        for w1 in (0.2, 0.5):
            for w2 in (0.1, 0.3):
                got = expect_trinomial(N, w1, w2, lambda a, b: est_pair(a, b, N))
                assert got == pytest.approx(w1 * w2, abs=1e-13)
                got = expect_trinomial(N, w1, w2, lambda a, b: est_pair_sq(a, b, N))
                assert got == pytest.approx(w1 ** 2 * w2 ** 2, abs=1e-13)


def test_norm_estimators_unbiased():
    N = 5
    w = np.array([0.2, 0.3, 0.5])

    def run(fn):
        return expect_trinomial(
            N, w[0], w[1], lambda a, b: fn(np.array([a, b, N - a - b]), N))

    assert run(est_sq_norm) == pytest.approx(float(np.sum(w ** 2)), abs=1e-13)
    assert run(est_cube_norm) == pytest.approx(float(np.sum(w ** 3)), abs=1e-13)
    assert run(est_fourth_norm) == pytest.approx(float(np.sum(w ** 2)) ** 2, abs=1e-13)


def test_preconditions():
    with pytest.raises(ValueError, match="N >= 2"):
        est_omega_sq(1, 1)
    with pytest.raises(ValueError, match="N >= 3"):
        est_omega_cube(2, 2)
    with pytest.raises(ValueError, match="N >= 4"):
        est_omega_fourth(3, 3)
    with pytest.raises(ValueError, match="N >= 4"):
        est_pair_sq(1, 1, 3)
    with pytest.raises(ValueError, match="outside"):
        est_omega_sq(7, 5)
    with pytest.raises(ValueError, match="N >= 2"):
        est_sq_norm([1], 1)
    with pytest.raises(ValueError, match="N >= 3"):
        est_cube_norm([2], 2)
    with pytest.raises(ValueError, match="N >= 4"):
        est_fourth_norm([3], 3)


def test_row_moments_lookup():
    row = RowMoments(cols=np.array([1, 4]), vals=np.array([3, 2]), N=5)
    assert row.omega(1) == pytest.approx(0.6)
    assert row.omega(0) == 0.0
    assert row.omega_sq(4) == pytest.approx(est_omega_sq(2, 5))
    assert row.omega_sq(3) == 0.0
    assert row.omega_cube(1) == pytest.approx(est_omega_cube(3, 5))
    assert row.omega_fourth(1) == 0.0  # 3 < 4 falling factorial vanishes
    assert row.pair(1, 4) == pytest.approx(est_pair(3, 2, 5))
    assert row.pair(0, 2) == 0.0
    assert row.pair_sq(1, 4) == pytest.approx(est_pair_sq(3, 2, 5))
    with pytest.raises(ValueError, match="distinct"):
        row.pair(1, 1)
