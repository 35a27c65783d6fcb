"""Test statistics and variance estimators for group-mean PMF equality.

The centerpiece is the de-biased statistic T: the group-variation sum of
squares with each row's within-row sampling noise subtracted, so that
E[T] equals the population variation rho^2 exactly. T is standardized by
one of three variance estimators:

* ``delve_V``      -- the pooled three-term estimator (default test),
* ``delve_kn``     -- the simplified per-row form when every row is its own
                      group (keeps only the dominant within-row term),
* ``exact_Vtilde`` -- the exact finite-category estimator built from
                      unbiased falling-factorial moment estimators.

Also here: the DELVE+ adjustment that tempers large positive Z-scores, the
closed two-sample form, a frequency-weighted variant of T, and the ANOVA /
likelihood-ratio baselines. Everything runs in one pass over the nonzero
entries plus per-column aggregation; no statistic loops over row pairs.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .counts import CountMatrix, GroupPartition, GroupSummaries, group_summaries

__all__ = [
    "PreconditionError",
    "SparseVector",
    "TestResult",
    "VARIANTS",
    "delve_T",
    "delve_V",
    "delve_test",
    "vplus",
    "delve_kn",
    "two_sample",
    "exact_Vtilde",
    "weighted_T",
    "anova_T",
    "lr_T",
    "normal_sf",
]

VARIANTS = ("delve", "delve_plus", "delve_exact", "delve_kn", "anova", "lr")

SparseVector = namedtuple("SparseVector", ["indices", "values", "size"])


class PreconditionError(ValueError):
    """A statistic's variant-specific precondition is violated."""


@dataclass(frozen=True)
class TestResult:
    """Outcome of one test: statistic, variance estimate, Z-score, p-value.

    ``psi`` is 0 whenever the variance estimate is nonpositive, and
    ``p_value`` = 1 - Phi(psi) for the normally calibrated variants. The
    baselines ``anova`` and ``lr`` have no variance estimator or normal
    calibration; their ``variance_estimate``, ``psi`` and ``p_value`` are
    NaN and thresholds come from the harness's empirical calibration.
    """

    T: float
    variance_estimate: float
    psi: float
    p_value: float
    variant: str
    per_coordinate_T: SparseVector | None = None

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "T": self.T,
            "variance_estimate": self.variance_estimate,
            "psi": self.psi,
            "p_value": self.p_value,
        }


def normal_sf(z: float) -> float:
    """Standard normal survival function 1 - Phi(z)."""
    return float(ndtr(-z))


def _require_lengths(X: CountMatrix, minimum: int) -> None:
    bad = np.flatnonzero(X.row_totals < minimum)
    if bad.size:
        i = int(bad[0])
        raise PreconditionError(
            f"row {i} has total {int(X.row_totals[i])}; this statistic "
            f"requires every row total >= {minimum}"
        )


def _centering_coeffs(gs: GroupSummaries) -> np.ndarray:
    """c_k = 1/C_k - 1/C with the exact integer numerator C - C_k."""
    C = gs.total_count
    num = (C - gs.group_counts).astype(np.float64)
    return num / (gs.group_counts.astype(np.float64) * float(C))


def _column_segments(values: np.ndarray, weights: np.ndarray):
    """Sum ``weights`` within equal-value segments of sorted ``values``."""
    uniq, starts = np.unique(values, return_index=True)
    if uniq.size == 0:
        return uniq, np.empty(0, dtype=np.float64)
    return uniq, np.add.reduceat(weights, starts)


def delve_T(X: CountMatrix, g: GroupPartition, gs: GroupSummaries | None = None):
    """De-biased group-variation statistic T and its column contributions.

    T_j is the between-group sum of squares for column j minus the plug-in
    bias of each group mean, leaving E[T_j] equal to the population
    variation in that column. Columns with no counts contribute exactly 0.

    Parameters
    ----------
    X : CountMatrix
    g : GroupPartition
    gs : GroupSummaries, optional
        Precomputed summaries (recomputed when omitted).

    Returns
    -------
    (float, SparseVector)
        Total T and the per-column values on the active columns.
    """
    _require_lengths(X, 2)
    if gs is None:
        gs = group_summaries(X, g)
    C = float(gs.total_count)
    ck = _centering_coeffs(gs)

    # Between-group part per column: sum_k Y_kj^2/C_k - Y_j^2/C.
    order = np.lexsort((gs.group_idx, gs.col_idx))
    cols_sorted = gs.col_idx[order]
    y_sorted = gs.y_vals[order].astype(np.float64)
    ratio = y_sorted * y_sorted / gs.group_counts[gs.group_idx[order]].astype(np.float64)
    active, between = _column_segments(cols_sorted, ratio)
    yj = gs.col_totals[active].astype(np.float64)

    # De-biasing part per column: sum over entries of c_k x(N-x)/(N-1).
    eorder = np.argsort(X.cols, kind="stable")
    ecols = X.cols[eorder]
    x = X.vals[eorder].astype(np.float64)
    N = X.row_totals[X.rows[eorder]].astype(np.float64)
    debias_terms = ck[g.labels[X.rows[eorder]]] * x * (N - x) / (N - 1.0)
    eactive, debias = _column_segments(ecols, debias_terms)
    assert np.array_equal(active, eactive)

    per_col = between - yj * yj / C - debias
    T = float(np.sum(per_col))
    return T, SparseVector(indices=active, values=per_col, size=X.p)


def delve_V(X: CountMatrix, g: GroupPartition, gs: GroupSummaries | None = None) -> float:
    """Three-term variance estimator V for T under the null.

    The cross-document sums are computed algebraically from column sums and
    group column sums -- sum_j [Y_j^2 - sum_k Y_kj^2] across groups and
    sum_j [Y_kj^2 - sum_{i in S_k} X_ij^2] within groups -- never by a
    double loop over rows.
    """
    _require_lengths(X, 2)
    if gs is None:
        gs = group_summaries(X, g)
    C = float(gs.total_count)
    ck = _centering_coeffs(gs)
    ck2 = ck * ck

    x = X.vals.astype(np.float64)
    N = X.row_totals[X.rows].astype(np.float64)
    lab = g.labels[X.rows]
    ratio = N / (N - 1.0)
    within_rows = 2.0 * float(np.sum(ck2[lab] * ratio * ratio * x * (x - 1.0)))

    y = gs.y_vals.astype(np.float64)
    ysq_by_group = np.bincount(gs.group_idx, weights=y * y, minlength=gs.K)
    xsq_by_group = np.bincount(lab, weights=x * x, minlength=gs.K)
    ct = gs.col_totals.astype(np.float64)
    across_groups = (2.0 / (C * C)) * (float(np.sum(ct * ct)) - float(np.sum(y * y)))
    within_groups = 2.0 * float(np.sum(ck2 * (ysq_by_group - xsq_by_group)))
    return within_rows + across_groups + within_groups


def vplus(T: float, V: float, mu_hat_norm: float) -> float:
    """Adjusted Z-score psi+ = T / sqrt(V (1 + ||mu_hat|| T / sqrt(V))).

    Inflating the variance tempers large positive Z-scores. When the
    adjusted variance is nonpositive (strongly negative T), the unadjusted
    psi is returned; the adjustment only targets the positive tail.
    """
    if V <= 0:
        raise PreconditionError("vplus requires a positive variance estimate")
    psi = T / np.sqrt(V)
    v_plus = V * (1.0 + mu_hat_norm * psi)
    if v_plus <= 0:
        return float(psi)
    return float(T / np.sqrt(v_plus))


def delve_kn(X: CountMatrix) -> TestResult:
    """Simplified test for the fully ungrouped case (every row its own group).

    T specializes the general statistic to singleton groups; the variance
    keeps only the dominant within-row term
    2 sum_i sum_j c_i^2 N_i^2 (X_ij^2 - X_ij)/(N_i - 1)^2 with
    c_i = 1/N_i - 1/C, which is what makes this variant cheap.
    """
    _require_lengths(X, 2)
    C = float(X.row_totals.sum())
    x = X.vals.astype(np.float64)
    N = X.row_totals[X.rows].astype(np.float64)
    ci = (C - N) / (N * C)

    eorder = np.argsort(X.cols, kind="stable")
    ecols = X.cols[eorder]
    xs = x[eorder]
    Ns = N[eorder]
    sq_over_n = xs * xs / Ns
    debias = (1.0 - Ns / C) * xs * (Ns - xs) / (Ns * (Ns - 1.0))
    active, part1 = _column_segments(ecols, sq_over_n)
    _, part3 = _column_segments(ecols, debias)
    ct = X.column_totals()[active].astype(np.float64)
    per_col = part1 - ct * ct / C - part3
    T = float(np.sum(per_col))

    ratio = N / (N - 1.0)
    V = 2.0 * float(np.sum(ci * ci * ratio * ratio * x * (x - 1.0)))
    psi = float(T / np.sqrt(V)) if V > 0 else 0.0
    return TestResult(
        T=T,
        variance_estimate=float(V),
        psi=psi,
        p_value=normal_sf(psi),
        variant="delve_kn",
        per_coordinate_T=SparseVector(indices=active, values=per_col, size=X.p),
    )


def two_sample(X_group: CountMatrix, G_group: CountMatrix) -> TestResult:
    """Closed-form two-sample test on two count matrices over one vocabulary.

    Equivalent to the general path on the concatenated matrix with K = 2:
    T = (ab/(a+b)) [ ||eta - theta||^2 - within-sample de-biasing ] where
    a, b are the two total counts and eta, theta the two pooled PMFs.
    """
    if X_group.p != G_group.p:
        raise ValueError("the two samples must share a vocabulary size")
    if X_group.n == 0 or G_group.n == 0:
        raise PreconditionError("two_sample requires both sides nonempty")
    _require_lengths(X_group, 2)
    _require_lengths(G_group, 2)
    a = float(X_group.row_totals.sum())
    b = float(G_group.row_totals.sum())
    C = a + b

    ya = X_group.column_totals().astype(np.float64)
    yb = G_group.column_totals().astype(np.float64)
    eta = ya / a
    theta = yb / b
    diff_sq = (eta - theta) ** 2

    def _row_debias(M: CountMatrix) -> np.ndarray:
        x = M.vals.astype(np.float64)
        N = M.row_totals[M.rows].astype(np.float64)
        per = x * (N - x) / (N - 1.0)
        return np.bincount(M.cols, weights=per, minlength=M.p)

    deb_a = _row_debias(X_group)
    deb_b = _row_debias(G_group)
    scale = a * b / C
    per_col = scale * (diff_sq - deb_a / (a * a) - deb_b / (b * b))
    T = float(np.sum(per_col))

    def _within_row_var(M: CountMatrix, c: float) -> float:
        x = M.vals.astype(np.float64)
        N = M.row_totals[M.rows].astype(np.float64)
        ratio = N / (N - 1.0)
        return 2.0 * c * c * float(np.sum(ratio * ratio * x * (x - 1.0)))

    def _within_group_var(M: CountMatrix, y: np.ndarray, c: float) -> float:
        x = M.vals.astype(np.float64)
        return 2.0 * c * c * (float(np.sum(y * y)) - float(np.sum(x * x)))

    c1 = b / (a * C)
    c2 = a / (b * C)
    V = (
        _within_row_var(X_group, c1)
        + _within_row_var(G_group, c2)
        + (4.0 / (C * C)) * float(np.sum(ya * yb))
        + _within_group_var(X_group, ya, c1)
        + _within_group_var(G_group, yb, c2)
    )
    psi = float(T / np.sqrt(V)) if V > 0 else 0.0
    active = np.flatnonzero((ya > 0) | (yb > 0))
    return TestResult(
        T=T,
        variance_estimate=float(V),
        psi=psi,
        p_value=normal_sf(psi),
        variant="delve",
        per_coordinate_T=SparseVector(indices=active, values=per_col[active], size=X_group.p),
    )


def exact_Vtilde(X: CountMatrix, g: GroupPartition, gs: GroupSummaries | None = None) -> float:
    """Exact finite-category variance estimator for T.

    Estimates the null variance of T without the vanishing-moment
    approximations behind ``delve_V``: the within-row component plugs
    unbiased falling-factorial estimates of ||Omega_i||_2^2, ||Omega_i||_3^3
    and ||Omega_i||_2^4 into the exact single-row variance, and the
    row-pair components estimate N_i N_m <C_i, C_m>_F for every ordered row
    pair, where C_i = diag(Omega_i) - Omega_i Omega_i'.

    The pair terms need two sparse n x n Gram products (counts and
    second-falling-factorial counts against counts), so the cost and memory
    are quadratic in the number of rows; intended for corpus-scale n, not
    millions of rows.
    """
    _require_lengths(X, 4)
    if gs is None:
        gs = group_summaries(X, g)
    C = float(gs.total_count)
    ck = _centering_coeffs(gs)
    ck2 = ck * ck

    x = X.vals.astype(np.float64)
    N_entries = X.row_totals[X.rows].astype(np.float64)
    f2 = x * (x - 1.0)
    f3 = f2 * (x - 2.0)
    f4 = f3 * (x - 3.0)
    s2 = np.bincount(X.rows, weights=f2, minlength=X.n)
    s3 = np.bincount(X.rows, weights=f3, minlength=X.n)
    s4 = np.bincount(X.rows, weights=f4, minlength=X.n)
    q2 = np.bincount(X.rows, weights=f2 * f2, minlength=X.n)

    N = X.row_totals.astype(np.float64)
    n2 = N * (N - 1.0)
    n3 = n2 * (N - 2.0)
    n4 = n3 * (N - 3.0)
    norm_sq = s2 / n2
    norm_cube = s3 / n3
    norm_fourth = (s4 + s2 * s2 - q2) / n4
    bracket = norm_sq - 2.0 * norm_cube + norm_fourth
    weight = N ** 3 / (N - 1.0)
    within_rows = 2.0 * float(
        np.sum(ck2[g.labels] * weight * bracket)
    )

    if X.n > 40000:
        raise PreconditionError(
            f"exact variance estimator materializes an n x n pair matrix; "
            f"n={X.n} is too large"
        )
    A = X.to_csr()
    B = A.copy()
    B.data = B.data * (B.data - 1.0)
    S = (A @ A.T).toarray()
    P = (B @ A.T).toarray()
    inv = 1.0 / (N - 1.0)
    DP = P * inv[:, None]
    pair = S - DP - DP.T + (S * S - (P + P.T + S)) * np.outer(inv, inv)

    onehot = np.zeros((g.K, X.n))
    onehot[g.labels, np.arange(X.n)] = 1.0
    R = onehot @ pair @ onehot.T
    diag_by_group = np.bincount(g.labels, weights=np.diagonal(pair), minlength=g.K)
    across_groups = (2.0 / (C * C)) * (float(np.sum(R)) - float(np.sum(np.diagonal(R))))
    within_groups = 2.0 * float(np.sum(ck2 * (np.diagonal(R) - diag_by_group)))
    return within_rows + across_groups + within_groups


def weighted_T(X: CountMatrix, g: GroupPartition) -> float:
    """Frequency-weighted statistic T(w) = sum_j w_j T_j.

    Down-weights common categories: w_j = 1 / max(1/p, mu_hat_j). Inactive
    columns have T_j = 0 and contribute nothing regardless of weight.
    """
    _, per_coord = delve_T(X, g)
    gs = group_summaries(X, g)
    mu_active = gs.col_totals[per_coord.indices] / float(gs.total_count)
    w = 1.0 / np.maximum(1.0 / X.p, mu_active)
    return float(np.sum(w * per_coord.values))


def anova_T(X: CountMatrix, g: GroupPartition, gs: GroupSummaries | None = None) -> float:
    """Uncorrected group-variation statistic sum_k C_k ||mu_hat_k - mu_hat||^2.

    Biased upward by the sampling noise of each group mean; kept as the
    classical baseline the de-biased statistic improves on.
    """
    if gs is None:
        gs = group_summaries(X, g)
    y = gs.y_vals.astype(np.float64)
    ct = gs.col_totals.astype(np.float64)
    between = float(np.sum(y * y / gs.group_counts[gs.group_idx]))
    return between - float(np.sum(ct * ct)) / gs.total_count


def lr_T(X: CountMatrix, g: GroupPartition, gs: GroupSummaries | None = None) -> float:
    """Likelihood-ratio statistic sum_k C_k sum_j mu_hat_kj log(mu_hat_kj/mu_hat_j).

    Zero counts contribute zero (0 log 0 = 0 and log(0/0) = 0), so the sum
    runs over the stored group column sums only.
    """
    if gs is None:
        gs = group_summaries(X, g)
    y = gs.y_vals.astype(np.float64)
    ck = gs.group_counts[gs.group_idx].astype(np.float64)
    yj = gs.col_totals[gs.col_idx].astype(np.float64)
    C = float(gs.total_count)
    return float(np.sum(y * (np.log(y) - np.log(ck) - np.log(yj) + np.log(C))))


def delve_test(X: CountMatrix, g: GroupPartition, variant: str = "delve") -> TestResult:
    """Run one variant of the test and package the outcome.

    ``delve`` standardizes T by the pooled V; ``delve_plus`` additionally
    inflates V on the positive tail; ``delve_exact`` standardizes by the
    exact finite-category estimator (needs every N_i >= 4); ``delve_kn``
    requires the singleton partition K = n; ``anova`` and ``lr`` return the
    raw baseline statistics with NaN calibration fields.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if g.n != X.n:
        raise ValueError(f"partition covers {g.n} rows, matrix has {X.n}")

    if variant == "delve_kn":
        if g.K != X.n:
            raise PreconditionError(
                f"variant delve_kn requires every row in its own group (K=n), got K={g.K}, n={X.n}"
            )
        return delve_kn(X)

    if variant in ("anova", "lr"):
        gs = group_summaries(X, g)
        stat = anova_T(X, g, gs) if variant == "anova" else lr_T(X, g, gs)
        nan = float("nan")
        return TestResult(T=stat, variance_estimate=nan, psi=nan, p_value=nan, variant=variant)

    gs = group_summaries(X, g)
    T, per_coord = delve_T(X, g, gs)
    if variant == "delve_exact":
        V = exact_Vtilde(X, g, gs)
    else:
        V = delve_V(X, g, gs)
    if V > 0:
        psi = float(T / np.sqrt(V))
        if variant == "delve_plus":
            adj = 1.0 + gs.mu_hat_norm() * psi
            if adj > 0:
                V = V * adj
                psi = float(T / np.sqrt(V))
    else:
        psi = 0.0
    return TestResult(
        T=T,
        variance_estimate=float(V),
        psi=psi,
        p_value=normal_sf(psi),
        variant=variant,
        per_coordinate_T=per_coord,
    )
