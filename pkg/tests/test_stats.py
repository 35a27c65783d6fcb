"""Statistic tests: frozen hand-computed instances, literal-formula
reference implementations, closed-form equivalences, and invariances.

The reference implementations below are deliberately naive (dense arrays,
explicit loops over groups, rows, and row pairs) so that they share no code
path with the sparse production versions.
"""

import math

import numpy as np
import pytest

from delvekit.counts import CountMatrix, GroupPartition, group_summaries
from delvekit.moments import est_cube_norm, est_fourth_norm, est_sq_norm
from delvekit.stats import (
    PreconditionError,
    anova_T,
    delve_T,
    delve_V,
    delve_kn,
    delve_test,
    exact_Vtilde,
    lr_T,
    normal_sf,
    two_sample,
    vplus,
    weighted_T,
)

# ---------------------------------------------------------------------------
# Literal-formula references


def ref_T(dense, labels):
    dense = np.asarray(dense, dtype=float)
    labels = np.asarray(labels)
    n, p = dense.shape
    N = dense.sum(axis=1)
    K = labels.max() + 1
    Ck = np.array([N[labels == k].sum() for k in range(K)])
    C = N.sum()
    muk = np.stack([dense[labels == k].sum(axis=0) / Ck[k] for k in range(K)])
    mu = dense.sum(axis=0) / C
    total = 0.0
    for j in range(p):
        for k in range(K):
            total += Ck[k] * (muk[k, j] - mu[j]) ** 2
            ck = 1.0 / Ck[k] - 1.0 / C
            for i in np.flatnonzero(labels == k):
                total -= ck * dense[i, j] * (N[i] - dense[i, j]) / (N[i] - 1.0)
    return total


def ref_V(dense, labels):
    dense = np.asarray(dense, dtype=float)
    labels = np.asarray(labels)
    n, p = dense.shape
    N = dense.sum(axis=1)
    K = labels.max() + 1
    Ck = np.array([N[labels == k].sum() for k in range(K)])
    C = N.sum()
    ck = 1.0 / Ck - 1.0 / C
    total = 0.0
    for k in range(K):
        for i in np.flatnonzero(labels == k):
            for j in range(p):
                x = dense[i, j]
                total += 2.0 * ck[k] ** 2 * N[i] ** 2 * (x * x - x) / (N[i] - 1.0) ** 2
    for i in range(n):
        for m in range(n):
            if labels[i] != labels[m]:
                total += (2.0 / C ** 2) * float(dense[i] @ dense[m])
    for k in range(K):
        rows = np.flatnonzero(labels == k)
        for i in rows:
            for m in rows:
                if i != m:
                    total += 2.0 * ck[k] ** 2 * float(dense[i] @ dense[m])
    return total


def ref_pair_estimate(xi, xm, Ni, Nm):
    """Literal unbiased estimate of N_i N_m <C_i, C_m>_F for one row pair."""
    S = float(np.sum(xi * xm))
    t2 = float(np.sum(xi * (xi - 1.0) * xm)) / (Ni - 1.0)
    t3 = float(np.sum(xi * xm * (xm - 1.0))) / (Nm - 1.0)
    t4 = (S * S - float(np.sum(xi * xm * (xi + xm - 1.0)))) / ((Ni - 1.0) * (Nm - 1.0))
    return S - t2 - t3 + t4


def ref_Vtilde(dense, labels):
    dense = np.asarray(dense, dtype=float)
    labels = np.asarray(labels)
    n, p = dense.shape
    N = dense.sum(axis=1)
    K = labels.max() + 1
    Ck = np.array([N[labels == k].sum() for k in range(K)])
    C = N.sum()
    ck = 1.0 / Ck - 1.0 / C
    total = 0.0
    for i in range(n):
        row = dense[i][dense[i] > 0]
        bracket = (
            est_sq_norm(row, int(N[i]))
            - 2.0 * est_cube_norm(row, int(N[i]))
            + est_fourth_norm(row, int(N[i]))
        )
        total += 2.0 * ck[labels[i]] ** 2 * N[i] ** 3 / (N[i] - 1.0) * bracket
    for i in range(n):
        for m in range(n):
            if i == m:
                continue
            est = ref_pair_estimate(dense[i], dense[m], N[i], N[m])
            if labels[i] == labels[m]:
                total += 2.0 * ck[labels[i]] ** 2 * est
            else:
                total += (2.0 / C ** 2) * est
    return total


def random_instance(rng, n_max=8, p_max=6, singletons=False):
    n = int(rng.integers(2, n_max + 1))
    p = int(rng.integers(2, p_max + 1))
    if singletons:
        labels = np.arange(n)
    else:
        K = int(rng.integers(1, n + 1))
        labels = np.concatenate([np.arange(K), rng.integers(0, K, n - K)])
    dense = rng.integers(0, 5, (n, p))
    dense += rng.multinomial(4, np.full(p, 1.0 / p), size=n)  # row totals >= 4
    return dense, labels


# ---------------------------------------------------------------------------
# Frozen hand-computed instances


def test_frozen_diagonal_instance():
    X = CountMatrix.from_dense([[2, 0], [0, 2]])
    g = GroupPartition.singletons(2)
    T, per_col = delve_T(X, g)
    assert T == pytest.approx(2.0, abs=1e-14)
    assert per_col.indices.tolist() == [0, 1]
    assert per_col.values.tolist() == pytest.approx([1.0, 1.0], abs=1e-14)
    assert per_col.size == 2
    assert delve_V(X, g) == pytest.approx(2.0, abs=1e-14)
    res = delve_test(X, g)
    assert res.psi == pytest.approx(math.sqrt(2.0), abs=1e-14)
    assert res.p_value == pytest.approx(normal_sf(math.sqrt(2.0)), abs=1e-16)
    kn = delve_kn(X)
    assert kn.T == pytest.approx(T, abs=1e-14)
    assert kn.variance_estimate == pytest.approx(2.0, abs=1e-14)
    assert anova_T(X, g) == pytest.approx(2.0, abs=1e-14)
    assert lr_T(X, g) == pytest.approx(4.0 * math.log(2.0), abs=1e-14)
    assert weighted_T(X, g) == pytest.approx(4.0, abs=1e-14)


def test_frozen_single_column():
    # p = 1 leaves no room for group variation: T = 0, psi = 0, p-value 1/2.
    X = CountMatrix.from_dense([[3], [2]])
    g = GroupPartition.from_labels([0, 1])
    res = delve_test(X, g)
    assert res.T == pytest.approx(0.0, abs=1e-14)
    assert res.variance_estimate == pytest.approx(2.88, abs=1e-14)
    assert res.psi == 0.0
    assert res.p_value == pytest.approx(0.5, abs=1e-15)


def test_frozen_two_sample():
    left = CountMatrix.from_dense([[4, 0]])
    right = CountMatrix.from_dense([[0, 4]])
    res = two_sample(left, right)
    assert res.T == pytest.approx(4.0, abs=1e-13)
    assert res.variance_estimate == pytest.approx(4.0 / 3.0, abs=1e-13)
    assert res.psi == pytest.approx(2.0 * math.sqrt(3.0), abs=1e-12)
    assert res.variant == "delve"
    assert res.per_coordinate_T.indices.tolist() == [0, 1]
    assert sum(res.per_coordinate_T.values) == pytest.approx(res.T, abs=1e-13)


# ---------------------------------------------------------------------------
# Reference-implementation battery


def test_matches_literal_reference():
    rng = np.random.default_rng(11)
    for _ in range(30):
        dense, labels = random_instance(rng)
        X = CountMatrix.from_dense(dense)
        g = GroupPartition.from_labels(labels)
        T, per_col = delve_T(X, g)
        assert T == pytest.approx(ref_T(dense, labels), rel=1e-10, abs=1e-10)
        assert float(np.sum(per_col.values)) == pytest.approx(T, rel=1e-12, abs=1e-12)
        assert delve_V(X, g) == pytest.approx(ref_V(dense, labels), rel=1e-10, abs=1e-10)
        assert exact_Vtilde(X, g) == pytest.approx(
            ref_Vtilde(dense, labels), rel=1e-9, abs=1e-9)


def test_inactive_columns_contribute_zero():
    dense = np.array([[2, 0, 3, 0], [1, 0, 4, 0]])
    X = CountMatrix.from_dense(dense)
    g = GroupPartition.from_labels([0, 1])
    T, per_col = delve_T(X, g)
    assert per_col.indices.tolist() == [0, 2]
    X2 = CountMatrix.from_dense(dense[:, [0, 2]])
    T2, _ = delve_T(X2, g)
    assert T == pytest.approx(T2, abs=1e-14)
    assert delve_V(X, g) == pytest.approx(delve_V(X2, g), abs=1e-14)
    assert exact_Vtilde(X, g) == pytest.approx(exact_Vtilde(X2, g), abs=1e-14)


# ---------------------------------------------------------------------------
# Closed-form equivalences and invariances


def test_two_sample_matches_general_K2():
    rng = np.random.default_rng(23)
    for _ in range(20):
        na, nb = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        p = int(rng.integers(2, 6))
        da = rng.multinomial(6, np.full(p, 1.0 / p), size=na) + rng.integers(0, 3, (na, p))
        db = rng.multinomial(6, np.full(p, 1.0 / p), size=nb) + rng.integers(0, 3, (nb, p))
        res2 = two_sample(CountMatrix.from_dense(da), CountMatrix.from_dense(db))
        X = CountMatrix.from_dense(np.vstack([da, db]))
        g = GroupPartition.from_labels([0] * na + [1] * nb)
        resg = delve_test(X, g)
        assert res2.T == pytest.approx(resg.T, rel=1e-10, abs=1e-12)
        assert res2.variance_estimate == pytest.approx(
            resg.variance_estimate, rel=1e-10, abs=1e-12)
        assert res2.psi == pytest.approx(resg.psi, rel=1e-10, abs=1e-12)


def test_kn_matches_general_singletons():
    rng = np.random.default_rng(37)
    for _ in range(20):
        dense, _ = random_instance(rng, singletons=True)
        X = CountMatrix.from_dense(dense)
        g = GroupPartition.singletons(X.n)
        T, _ = delve_T(X, g)
        kn = delve_kn(X)
        assert kn.T == pytest.approx(T, rel=1e-10, abs=1e-12)
        # the simplified variance keeps only the within-row term
        gs = group_summaries(X, g)
        C = float(gs.total_count)
        N = X.row_totals[X.rows].astype(float)
        x = X.vals.astype(float)
        ci = (C - N) / (N * C)
        expect = 2.0 * float(np.sum(ci ** 2 * (N / (N - 1.0)) ** 2 * x * (x - 1.0)))
        assert kn.variance_estimate == pytest.approx(expect, rel=1e-12)


def test_permutation_invariance():
    rng = np.random.default_rng(41)
    for _ in range(10):
        dense, labels = random_instance(rng)
        X = CountMatrix.from_dense(dense)
        g = GroupPartition.from_labels(labels)
        base = (delve_T(X, g)[0], delve_V(X, g), exact_Vtilde(X, g),
                anova_T(X, g), lr_T(X, g))

        perm = rng.permutation(dense.shape[0])
        Xp = CountMatrix.from_dense(dense[perm])
        gp = GroupPartition.from_labels(labels[perm])
        rows = (delve_T(Xp, gp)[0], delve_V(Xp, gp), exact_Vtilde(Xp, gp),
                anova_T(Xp, gp), lr_T(Xp, gp))

        cperm = rng.permutation(dense.shape[1])
        Xc = CountMatrix.from_dense(dense[:, cperm])
        cols = (delve_T(Xc, g)[0], delve_V(Xc, g), exact_Vtilde(Xc, g),
                anova_T(Xc, g), lr_T(Xc, g))

        np.testing.assert_allclose(rows, base, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(cols, base, rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------------------
# Adjusted Z-score and variant dispatch


def test_vplus_behavior():
    with pytest.raises(PreconditionError):
        vplus(1.0, 0.0, 0.5)
    psi = 3.0 / math.sqrt(4.0)
    got = vplus(3.0, 4.0, 0.2)
    assert got == pytest.approx(3.0 / math.sqrt(4.0 * (1.0 + 0.2 * psi)))
    assert got < psi  # positive tail is tempered
    # nonpositive adjusted variance falls back to the unadjusted Z-score
    psi_neg = -8.0 / math.sqrt(1.0)
    assert vplus(-8.0, 1.0, 0.5) == pytest.approx(psi_neg)
    # negative T with mild adjustment stays adjusted
    assert vplus(-1.0, 4.0, 0.2) == pytest.approx(
        -1.0 / math.sqrt(4.0 * (1.0 - 0.2 * 0.5)))


def test_delve_plus_consistent_with_vplus():
    rng = np.random.default_rng(43)
    dense, labels = random_instance(rng)
    X = CountMatrix.from_dense(dense)
    g = GroupPartition.from_labels(labels)
    base = delve_test(X, g, "delve")
    plus = delve_test(X, g, "delve_plus")
    gs = group_summaries(X, g)
    assert plus.psi == pytest.approx(
        vplus(base.T, delve_V(X, g), gs.mu_hat_norm()), rel=1e-12)
    assert plus.p_value == pytest.approx(normal_sf(plus.psi), abs=1e-15)


def test_variant_dispatch_and_preconditions():
    X = CountMatrix.from_dense([[2, 1], [1, 2], [3, 1]])
    g = GroupPartition.from_labels([0, 0, 1])
    with pytest.raises(ValueError, match="unknown variant"):
        delve_test(X, g, "nope")
    with pytest.raises(PreconditionError, match="K=n"):
        delve_test(X, g, "delve_kn")
    with pytest.raises(PreconditionError, match="row total >= 4"):
        delve_test(X, g, "delve_exact")
    for variant in ("anova", "lr"):
        res = delve_test(X, g, variant)
        assert math.isnan(res.psi) and math.isnan(res.p_value)
        assert math.isnan(res.variance_estimate)
        assert res.variant == variant
    short = CountMatrix.from_dense([[1, 0], [2, 2]])
    with pytest.raises(PreconditionError, match="row 0"):
        delve_test(short, GroupPartition.from_labels([0, 1]))
    with pytest.raises(ValueError, match="partition covers"):
        delve_test(X, GroupPartition.from_labels([0, 1]))


def test_exact_vtilde_agrees_with_grouped_paths():
    # precomputed summaries must not change the value
    rng = np.random.default_rng(53)
    dense, labels = random_instance(rng)
    X = CountMatrix.from_dense(dense)
    g = GroupPartition.from_labels(labels)
    gs = group_summaries(X, g)
    assert exact_Vtilde(X, g) == exact_Vtilde(X, g, gs)
    assert delve_V(X, g) == delve_V(X, g, gs)
    assert delve_T(X, g)[0] == delve_T(X, g, gs)[0]


def test_two_sample_validation():
    a = CountMatrix.from_dense([[2, 2]])
    with pytest.raises(ValueError, match="vocabulary"):
        two_sample(a, CountMatrix.from_dense([[1, 1, 1]]))
    empty = CountMatrix.from_dense(np.zeros((0, 2), dtype=int))
    with pytest.raises(PreconditionError, match="nonempty"):
        two_sample(a, empty)
    with pytest.raises(PreconditionError, match="row total >= 2"):
        two_sample(a, CountMatrix.from_dense([[1, 0]]))
