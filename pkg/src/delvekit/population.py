"""Population-level quantities computed from simulation ground truth.

Everything here takes TrueParams -- the actual row PMFs Omega_i, totals N_i
and group labels a simulator used -- and returns the population quantities
the theory is stated in: the group variation rho^2, the scale-free signal
omega_n, the signal-to-noise ratio, the four variance components
approximating Var(T) under the null, the regularity diagnostics alpha_n and
beta_n, and the dimension ratio.

A plug-in constructor substituting Omega_i ~ X_i/N_i exists for data-only
diagnostics; its outputs are labeled as plug-in by the CLI and carry no
population guarantee.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .counts import CountMatrix, GroupPartition

__all__ = [
    "TrueParams",
    "ThetaComponents",
    "rho_squared",
    "omega_n",
    "omega_n_sq",
    "snr",
    "theta_components",
    "alpha_beta",
    "anova_bias",
    "dimension_ratio",
]

ThetaComponents = namedtuple("ThetaComponents", ["t1", "t2", "t3", "t4"])


@dataclass(frozen=True)
class TrueParams:
    """Ground truth for one synthetic dataset.

    Attributes
    ----------
    lengths : ndarray of int64, shape (n,)
        Multinomial totals N_i, each >= 1.
    omegas : ndarray of float64, shape (n, p)
        Row PMFs; each row sums to 1 within 1e-12.
    labels : ndarray of int64, shape (n,)
        Group id per row, in [0, K).
    K : int
    """

    lengths: np.ndarray
    omegas: np.ndarray
    labels: np.ndarray
    K: int

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=np.int64)
        omegas = np.asarray(self.omegas, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "labels", labels)
        if omegas.ndim != 2 or lengths.shape != (omegas.shape[0],):
            raise ValueError("omegas must be (n, p) with one length per row")
        if labels.shape != (omegas.shape[0],):
            raise ValueError("one group label per row required")
        if np.any(lengths < 1):
            raise ValueError("every length must be >= 1")
        if np.any(omegas < 0):
            raise ValueError("row PMFs must be nonnegative")
        sums = omegas.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-12):
            i = int(np.argmax(np.abs(sums - 1.0)))
            raise ValueError(f"row {i} PMF sums to {sums[i]!r}, not 1")
        if labels.min() < 0 or labels.max() >= self.K:
            raise ValueError(f"labels must lie in [0, {self.K})")
        if np.any(np.bincount(labels, minlength=self.K) == 0):
            raise ValueError("every group needs at least one row")

    @property
    def n(self) -> int:
        return int(self.lengths.size)

    @property
    def p(self) -> int:
        return int(self.omegas.shape[1])

    @property
    def group_counts(self) -> np.ndarray:
        """Exact integer token totals C_k per group."""
        return np.bincount(self.labels, weights=self.lengths,
                           minlength=self.K).astype(np.int64)

    @property
    def total_count(self) -> int:
        return int(self.lengths.sum())

    def weighted_rows(self) -> np.ndarray:
        """N_i Omega_i rows, shape (n, p)."""
        return self.omegas * self.lengths[:, None]

    def group_means(self) -> np.ndarray:
        """Count-weighted group-mean PMFs mu_k, shape (K, p)."""
        w = self.weighted_rows()
        sums = np.zeros((self.K, self.p))
        np.add.at(sums, self.labels, w)
        return sums / self.group_counts[:, None]

    def pooled_mean(self) -> np.ndarray:
        """Count-weighted pooled mean PMF mu."""
        return self.weighted_rows().sum(axis=0) / self.total_count

    def centering_coeffs(self) -> np.ndarray:
        """c_k = 1/C_k - 1/C with the exact integer numerator."""
        C = self.total_count
        Ck = self.group_counts
        return (C - Ck).astype(np.float64) / (Ck.astype(np.float64) * float(C))

    def to_dict(self) -> dict:
        return {
            "lengths": self.lengths.tolist(),
            "omegas": self.omegas.tolist(),
            "labels": self.labels.tolist(),
            "K": self.K,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrueParams":
        return cls(
            lengths=np.asarray(d["lengths"], dtype=np.int64),
            omegas=np.asarray(d["omegas"], dtype=np.float64),
            labels=np.asarray(d["labels"], dtype=np.int64),
            K=int(d["K"]),
        )

    @classmethod
    def plugin_from_counts(cls, X: CountMatrix, g: GroupPartition) -> "TrueParams":
        """Plug-in instance with Omega_i = X_i / N_i (data, not population)."""
        if np.any(X.row_totals < 1):
            raise ValueError("plug-in params need every row total >= 1")
        dense = X.to_dense().astype(np.float64)
        omegas = dense / X.row_totals[:, None]
        return cls(lengths=X.row_totals.copy(), omegas=omegas,
                   labels=g.labels.copy(), K=g.K)


def rho_squared(params: TrueParams) -> float:
    """Total weighted variation rho^2 = sum_k C_k ||mu_k - mu||^2.

    Zero if and only if all group means coincide.
    """
    mu_k = params.group_means()
    mu = params.pooled_mean()
    diffs = mu_k - mu[None, :]
    return float(np.sum(params.group_counts * np.sum(diffs * diffs, axis=1)))


def omega_n_sq(params: TrueParams) -> float:
    """Scale-free signal proportion rho^2 / (C ||mu||^2)."""
    mu = params.pooled_mean()
    denom = float(np.sum(mu * mu))
    if denom <= 0:
        raise ValueError("pooled mean PMF is zero; omega_n undefined")
    return rho_squared(params) / (params.total_count * denom)


def omega_n(params: TrueParams) -> float:
    """Square root of the scale-free signal proportion."""
    return float(np.sqrt(omega_n_sq(params)))


def snr(params: TrueParams) -> float:
    """Signal-to-noise ratio rho^2 / sqrt(sum_k ||mu_k||^2)."""
    mu_k = params.group_means()
    denom = float(np.sqrt(np.sum(mu_k * mu_k)))
    return rho_squared(params) / denom


def theta_components(params: TrueParams) -> ThetaComponents:
    """The four population components approximating Var(T).

    t1 is the signal-dependent term (zero under the null); t2 the
    within-row term; t3 the across-group pair term; t4 the within-group
    pair term. Requires every N_i >= 2.
    """
    if np.any(params.lengths < 2):
        raise ValueError("theta components need every length >= 2")
    N = params.lengths.astype(np.float64)
    ck = params.centering_coeffs()
    ck2 = ck * ck
    C = float(params.total_count)

    mu_k = params.group_means()
    mu = params.pooled_mean()
    diffs = mu_k - mu[None, :]
    t1 = 4.0 * float(np.sum(params.group_counts[:, None] * diffs * diffs * mu_k))

    omega_sq = np.sum(params.omegas * params.omegas, axis=1)
    t2 = 2.0 * float(np.sum(ck2[params.labels] * (N ** 3 / (N - 1.0)) * omega_sq))

    w_k = mu_k * params.group_counts[:, None]
    w_k_sq = np.sum(w_k * w_k, axis=1)
    w = w_k.sum(axis=0)
    t3 = (2.0 / (C * C)) * (float(np.sum(w * w)) - float(np.sum(w_k_sq)))

    per_row = (N * N) * omega_sq
    row_sq_by_group = np.bincount(params.labels, weights=per_row, minlength=params.K)
    t4 = 2.0 * float(np.sum(ck2 * (w_k_sq - row_sq_by_group)))
    return ThetaComponents(t1=t1, t2=t2, t3=t3, t4=t4)


def alpha_beta(params: TrueParams) -> tuple[float, float]:
    """Regularity diagnostics (alpha_n, beta_n).

    alpha_n gauges the balance of group-mean norms against group sizes;
    beta_n gauges within-group heterogeneity, with the group second-moment
    matrix norm computed through the within-group Gram matrix of rows
    (exact, and cheap when groups are small relative to p).
    """
    mu_k = params.group_means()
    mu_k_sq = np.sum(mu_k * mu_k, axis=1)
    mu_k_cube = np.sum(mu_k ** 3, axis=1)
    Ck = params.group_counts.astype(np.float64)
    denom = float(np.sum(mu_k_sq)) ** 2
    alpha = max(float(np.sum(mu_k_cube / Ck)), float(np.sum(mu_k_sq / (Ck * Ck)))) / denom

    mu = params.pooled_mean()
    mu_sq = float(np.sum(mu * mu))
    N = params.lengths.astype(np.float64)
    omega_cube = np.sum(params.omegas ** 3, axis=1)
    piece1 = float(np.sum((N * N / (Ck * Ck)[params.labels]) * omega_cube))
    piece2 = 0.0
    for k in range(params.K):
        rows = np.flatnonzero(params.labels == k)
        gram = params.omegas[rows] @ params.omegas[rows].T
        w = N[rows]
        piece2 += float(w @ (gram * gram) @ w) / (Ck[k] * Ck[k])
    beta = max(piece1, piece2) / (params.K * mu_sq)
    return alpha, beta


def anova_bias(params: TrueParams) -> float:
    """Expected excess of the uncorrected statistic over rho^2.

    E[anova_T] = rho^2 + this term; it is the aggregated sampling noise of
    the group means that the de-biased statistic removes.
    """
    N = params.lengths.astype(np.float64)
    Ck = params.group_counts.astype(np.float64)
    C = float(params.total_count)
    omega_sq = np.sum(params.omegas * params.omegas, axis=1)
    per_row = (1.0 - Ck[params.labels] / C) * N * (1.0 - omega_sq) / Ck[params.labels]
    return float(np.sum(per_row))


def dimension_ratio(n: float, nbar: float, K: float, p: float) -> float:
    """Dimension ratio (n Nbar)^2 / (K p); large values favor the asymptotics."""
    if n <= 0 or nbar <= 0 or K <= 0 or p <= 0:
        raise ValueError("dimension ratio needs positive inputs")
    return (n * nbar) ** 2 / (K * p)
