"""Unbiased falling-factorial moment estimators for multinomial rows.

For a row X ~ Multinomial(N, Omega), the falling factorial X_j(X_j-1)...
(X_j-k+1) divided by N(N-1)...(N-k+1) is an exactly unbiased estimator of
Omega_j^k; products across distinct columns estimate cross moments the same
way. Zero counts contribute exactly zero to every numerator, so sparse
evaluation is exact, not approximate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RowMoments",
    "est_omega_sq",
    "est_omega_cube",
    "est_omega_fourth",
    "est_pair",
    "est_pair_sq",
    "est_sq_norm",
    "est_cube_norm",
    "est_fourth_norm",
]


def _check_count(x, N, min_n, k):
    if N < min_n:
        raise ValueError(f"order-{k} moment estimator requires N >= {min_n}, got N={N}")
    if x < 0 or x > N:
        raise ValueError(f"count {x} outside [0, N={N}]")


def est_omega_sq(x: int, N: int) -> float:
    """Unbiased estimate of Omega_j^2 from one count: x(x-1)/(N(N-1))."""
    _check_count(x, N, 2, 2)
    return x * (x - 1) / (N * (N - 1))


def est_omega_cube(x: int, N: int) -> float:
    """Unbiased estimate of Omega_j^3: x(x-1)(x-2)/(N(N-1)(N-2))."""
    _check_count(x, N, 3, 3)
    return x * (x - 1) * (x - 2) / (N * (N - 1) * (N - 2))


def est_omega_fourth(x: int, N: int) -> float:
    """Unbiased estimate of Omega_j^4: x(x-1)(x-2)(x-3)/N^(4).

    The falling-factorial numerator expands to x^4 - 6x^3 + 11x^2 - 6x;
    this is the unique polynomial of degree four in x with expectation
    N(N-1)(N-2)(N-3) * Omega^4 under a Binomial(N, Omega) count.
    """
    _check_count(x, N, 4, 4)
    return x * (x - 1) * (x - 2) * (x - 3) / (N * (N - 1) * (N - 2) * (N - 3))


def est_pair(xj: int, xjp: int, N: int) -> float:
    """Unbiased estimate of Omega_j Omega_j' (j != j'): x_j x_j' / (N(N-1))."""
    _check_count(xj, N, 2, 2)
    _check_count(xjp, N, 2, 2)
    return xj * xjp / (N * (N - 1))


def est_pair_sq(xj: int, xjp: int, N: int) -> float:
    """Unbiased estimate of Omega_j^2 Omega_j'^2 (j != j')."""
    _check_count(xj, N, 4, 4)
    _check_count(xjp, N, 4, 4)
    num = xj * (xj - 1) * xjp * (xjp - 1)
    return num / (N * (N - 1) * (N - 2) * (N - 3))


def _ff_sums(vals: np.ndarray):
    """Falling-factorial column sums (s2, s3, s4, q2) for one sparse row.

    s_r = sum_j x_j^(r) and q2 = sum_j (x_j^(2))^2, over nonzero counts.
    """
    v = vals.astype(np.float64)
    f2 = v * (v - 1.0)
    f3 = f2 * (v - 2.0)
    f4 = f3 * (v - 3.0)
    return float(np.sum(f2)), float(np.sum(f3)), float(np.sum(f4)), float(np.sum(f2 * f2))


def est_sq_norm(vals, N: int) -> float:
    """Unbiased estimate of ||Omega||_2^2 from a sparse row."""
    if N < 2:
        raise ValueError(f"norm estimator requires N >= 2, got N={N}")
    s2, _, _, _ = _ff_sums(np.asarray(vals))
    return s2 / (N * (N - 1))


def est_cube_norm(vals, N: int) -> float:
    """Unbiased estimate of ||Omega||_3^3 from a sparse row."""
    if N < 3:
        raise ValueError(f"norm estimator requires N >= 3, got N={N}")
    _, s3, _, _ = _ff_sums(np.asarray(vals))
    return s3 / (N * (N - 1) * (N - 2))


def est_fourth_norm(vals, N: int) -> float:
    """Unbiased estimate of ||Omega||_2^4 = (sum_j Omega_j^2)^2.

    Splits the square into the diagonal sum_j Omega_j^4 and the off-diagonal
    pair products; both are separable falling-factorial sums:
    (s4 + s2^2 - q2) / N^(4).
    """
    if N < 4:
        raise ValueError(f"norm estimator requires N >= 4, got N={N}")
    s2, _, s4, q2 = _ff_sums(np.asarray(vals))
    return (s4 + s2 * s2 - q2) / (N * (N - 1) * (N - 2) * (N - 3))


@dataclass(frozen=True)
class RowMoments:
    """On-demand moment estimates for one sparse multinomial row.

    Column lookups return 0 for absent (zero-count) columns, matching the
    falling-factorial identities.
    """

    cols: np.ndarray
    vals: np.ndarray
    N: int

    def _get(self, j: int) -> int:
        pos = np.searchsorted(self.cols, j)
        if pos < self.cols.size and self.cols[pos] == j:
            return int(self.vals[pos])
        return 0

    def omega(self, j: int) -> float:
        return self._get(j) / self.N

    def omega_sq(self, j: int) -> float:
        return est_omega_sq(self._get(j), self.N)

    def omega_cube(self, j: int) -> float:
        return est_omega_cube(self._get(j), self.N)

    def omega_fourth(self, j: int) -> float:
        return est_omega_fourth(self._get(j), self.N)

    def pair(self, j: int, jp: int) -> float:
        if j == jp:
            raise ValueError("pair moment needs distinct columns")
        return est_pair(self._get(j), self._get(jp), self.N)

    def pair_sq(self, j: int, jp: int) -> float:
        if j == jp:
            raise ValueError("pair moment needs distinct columns")
        return est_pair_sq(self._get(j), self._get(jp), self.N)
