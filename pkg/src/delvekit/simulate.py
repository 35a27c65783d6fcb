"""Seeded generators for every simulation design in the test suite.

Each generator returns a SimDraw bundling the counts, the partition, and
the TrueParams actually used, so population quantities and oracles can be
evaluated against exactly the parameters that produced the data.

Generators draw from a caller-supplied numpy Generator in a fixed,
documented order, and the null and alternative branches of one design
consume the same stream, so paired null/alt runs at one seed are coupled
(the alternative at zero signal reproduces the null draw bitwise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .counts import CountMatrix, GroupPartition
from .population import TrueParams
from .rng import shared_rng

__all__ = [
    "SimConfig",
    "SimDraw",
    "sample_dirichlet",
    "sample_multinomial",
    "gen_experiment1",
    "gen_experiment2",
    "gen_contiguity",
    "gen_lower_bound",
    "gen_anova_powerless",
    "make_generator",
    "max_feasible_signal",
]

DESIGNS = ("experiment1", "experiment2", "contiguity", "lower_bound", "anova_powerless")


@dataclass(frozen=True)
class SimDraw:
    """One synthetic dataset plus the ground truth that generated it."""

    X: CountMatrix
    groups: GroupPartition
    params: TrueParams


@dataclass
class SimConfig:
    """Design tuple for the simulation experiments.

    ``design`` selects the generator; the scalar fields it does not use are
    ignored. ``lam`` is the signal level of the mixing design, ``a`` the
    boundary constant, ``alpha`` the rank-one perturbation size, ``omega``
    the minimax signal, and ``N`` the fixed length of the equal-length
    designs.
    """

    design: str = "experiment1"
    n: int = 50
    p: int = 100
    K: int = 5
    N_min: int = 10
    N_max: int = 20
    phi: float = 0.3
    hypothesis: str = "null"
    lam: float = 0.0
    a: float = 0.0
    alpha: float = 0.0
    omega: float = 0.0
    N: int = 10
    fresh_mu: bool = True
    iid_signs: bool = False

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ValueError(f"unknown design {self.design!r}; expected one of {DESIGNS}")
        if self.hypothesis not in ("null", "alt"):
            raise ValueError(f"hypothesis must be 'null' or 'alt', got {self.hypothesis!r}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def sample_dirichlet(dim: int, phi: float, rng: np.random.Generator) -> np.ndarray:
    """Symmetric Dirichlet draw via normalized Gamma(phi) variates.

    numpy's gamma sampler is exact for shape < 1 (the small-shape boost of
    the Marsaglia-Tsang method), which matters here: concentrations well
    below 1 are routine in the sparse-topic designs.
    """
    if dim < 1:
        raise ValueError("dirichlet dimension must be >= 1")
    if phi <= 0:
        raise ValueError(f"dirichlet concentration must be positive, got {phi}")
    g = rng.standard_gamma(phi, dim)
    while g.sum() == 0.0:  # all-underflow guard for tiny shapes
        g = rng.standard_gamma(phi, dim)
    return g / g.sum()


def sample_multinomial(N: int, omega, rng: np.random.Generator) -> np.ndarray:
    """One multinomial draw (numpy's sequential conditional-binomial method)."""
    w = np.asarray(omega, dtype=np.float64)
    if N < 0:
        raise ValueError("multinomial total must be nonnegative")
    if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("omega must be a probability vector")
    return rng.multinomial(N, w)


def _draw_counts(lengths, omegas, rng) -> CountMatrix:
    rows = [rng.multinomial(int(N), om) for N, om in zip(lengths, omegas)]
    return CountMatrix.from_dense(np.stack(rows))


def _equal_groups(n: int, K: int) -> GroupPartition:
    if n % K != 0:
        raise ValueError(f"equal-size groups need K | n, got n={n}, K={K}")
    return GroupPartition.from_labels(np.repeat(np.arange(K, dtype=np.int64), n // K), K=K)


def _balanced_signs(count: int, rng: np.random.Generator) -> np.ndarray:
    """Random permutation of a balanced +/-1 vector.

    For odd ``count`` the leftover sign is itself random, so the vector sum
    is 0 for even counts and +/-1 for odd ones.
    """
    half = count // 2
    signs = np.concatenate([np.ones(half), -np.ones(half)])
    if count % 2:
        signs = np.concatenate([signs, rng.choice([-1.0, 1.0], 1)])
    return rng.permutation(signs)


def gen_experiment1(n, p, K, N_min, N_max, phi, hypothesis, rng) -> SimDraw:
    """Heterogeneous-rows design: row PMFs i.i.d. Dirichlet under the
    alternative; under the null every row equals their count-weighted mean.

    Draw order: lengths, Dirichlet rows, multinomial rows. Both hypotheses
    consume the Dirichlet draws (the null needs them to form the mean).
    """
    groups = _equal_groups(n, K)
    lengths = rng.integers(N_min, N_max + 1, size=n).astype(np.int64)
    alt = np.stack([sample_dirichlet(p, phi, rng) for _ in range(n)])
    mu = (lengths[:, None] * alt).sum(axis=0) / lengths.sum()
    omegas = alt if hypothesis == "alt" else np.tile(mu, (n, 1))
    X = _draw_counts(lengths, omegas, rng)
    params = TrueParams(lengths=lengths, omegas=omegas, labels=groups.labels, K=K)
    return SimDraw(X=X, groups=groups, params=params)


def max_feasible_signal(K: int, total_count: int, mu_tilde_norm: float) -> float:
    """Largest signal level lam the mixing design can represent (tau = 1)."""
    return total_count * mu_tilde_norm / math.sqrt(K)


def gen_experiment2(n, p, K, N_min, N_max, phi, lam, hypothesis, rng,
                    mu_half=None, iid_signs=False) -> SimDraw:
    """Mirrored mixing design with group-level signs.

    The base PMF is a Dirichlet draw on p/2 categories mirrored into p with
    halved mass. Under the alternative, group k's rows are
    mu_tilde * (1 +/- tau z_k b_j) with the sign pattern mirrored across
    the halves, so every row still sums to 1. The signal level lam converts
    to the mixing rate via tau^2 = lam sqrt(K) / (C ||mu_tilde||) with the
    realized total count C.

    By default the group signs z are a random permutation of a balanced
    +/-1 vector: independent signs make all groups identical with
    probability 2^(1-K), which silently turns those replicates into exact
    nulls and caps attainable power. ``iid_signs=True`` restores fully
    independent signs.

    Draw order: lengths, base PMF (when not supplied), z, b, multinomial
    rows; the null consumes the same stream with tau = 0, so a zero-signal
    alternative reproduces the null draw bitwise.
    """
    if p % 2 != 0:
        raise ValueError(f"mixing design needs even p, got {p}")
    groups = _equal_groups(n, K)
    lengths = rng.integers(N_min, N_max + 1, size=n).astype(np.int64)
    if mu_half is None:
        mu_half = sample_dirichlet(p // 2, phi, rng)
    else:
        mu_half = np.asarray(mu_half, dtype=np.float64)
        if mu_half.size != p // 2:
            raise ValueError("base PMF must have p/2 categories")
    mu_tilde = np.concatenate([mu_half, mu_half]) / 2.0

    if iid_signs:
        z = rng.integers(0, 2, size=K).astype(np.float64) * 2.0 - 1.0
    else:
        z = _balanced_signs(K, rng)
    b = rng.integers(0, 2, size=p // 2).astype(np.float64) * 2.0 - 1.0
    b_tilde = np.concatenate([b, -b])

    C = int(lengths.sum())
    norm = float(np.sqrt(np.sum(mu_tilde * mu_tilde)))
    tau_sq = lam * math.sqrt(K) / (C * norm)
    if hypothesis == "alt" and tau_sq > 1.0:
        # under the null tau is forced to 0, so lam is irrelevant there
        raise ValueError(
            f"signal level lam={lam} needs tau^2={tau_sq:.6g} > 1; "
            f"max feasible lam is {max_feasible_signal(K, C, norm):.6g}"
        )
    tau = math.sqrt(tau_sq) if hypothesis == "alt" else 0.0

    factors = 1.0 + tau * z[groups.labels][:, None] * b_tilde[None, :]
    omegas = mu_tilde[None, :] * factors
    X = _draw_counts(lengths, omegas, rng)
    params = TrueParams(lengths=lengths, omegas=omegas, labels=groups.labels, K=K)
    return SimDraw(X=X, groups=groups, params=params)


def gen_contiguity(n, p, N, a, hypothesis, rng) -> SimDraw:
    """Boundary-regime design: singleton groups, equal lengths, uniform null,
    and a rank-one balanced +/-1 perturbation of relative size nu.

    nu^2 = a sqrt(2p) / (N sqrt(n)) places the alternative exactly at the
    detection boundary with limiting Z-score mean a. Draw order: row signs,
    column signs, multinomial rows (both hypotheses consume the signs).
    """
    if n % 2 or p % 2:
        raise ValueError(f"boundary design needs even n and p, got n={n}, p={p}")
    nu_sq = a * math.sqrt(2.0 * p) / (N * math.sqrt(n))
    if nu_sq > 1.0:
        raise ValueError(f"boundary constant a={a} gives nu^2={nu_sq:.6g} > 1; infeasible")
    eps = _balanced_signs(n, rng)
    sigma = _balanced_signs(p, rng)
    if hypothesis == "alt":
        omegas = (1.0 + math.sqrt(nu_sq) * np.outer(eps, sigma)) / p
    else:
        omegas = np.full((n, p), 1.0 / p)
    lengths = np.full(n, int(N), dtype=np.int64)
    X = _draw_counts(lengths, omegas, rng)
    groups = GroupPartition.singletons(n)
    params = TrueParams(lengths=lengths, omegas=omegas, labels=groups.labels, K=n)
    return SimDraw(X=X, groups=groups, params=params)


def gen_lower_bound(mu_half, omega, lengths, labels, hypothesis, rng) -> SimDraw:
    """Minimax lower-bound configuration.

    ``mu_half`` carries half the probability mass on p/2 categories; the
    null mirrors it. The alternative scales group k's mirrored perturbation
    by omega (C/K)/C_k z_k with i.i.d. group signs z, kept only when
    |sum z| <= 100 sqrt(K) (rejection sampling; the bound is loose enough
    that acceptance is near-certain at practical K). Draw order: z until
    accepted, then b, then multinomial rows.
    """
    mu_half = np.asarray(mu_half, dtype=np.float64)
    if np.any(mu_half < 0) or abs(mu_half.sum() - 0.5) > 1e-12:
        raise ValueError("mu_half must be nonnegative with total mass 1/2")
    lengths = np.asarray(lengths, dtype=np.int64)
    groups = GroupPartition.from_labels(labels)
    if lengths.size != groups.n:
        raise ValueError("one length per row required")
    K = groups.K
    Ck = np.bincount(groups.labels, weights=lengths, minlength=K)
    C = float(lengths.sum())
    amp = omega * (C / K) / Ck
    if omega < 0 or np.any(amp > 1.0):
        raise ValueError(
            f"signal omega={omega} infeasible; needs omega <= {K * Ck.min() / C:.6g}"
        )

    z = rng.integers(0, 2, size=K).astype(np.float64) * 2.0 - 1.0
    tries = 1
    while abs(z.sum()) > 100.0 * math.sqrt(K):
        if tries > 1000:
            raise RuntimeError("sign conditioning failed to accept after 1000 tries")
        z = rng.integers(0, 2, size=K).astype(np.float64) * 2.0 - 1.0
        tries += 1
    m = mu_half.size
    b = rng.integers(0, 2, size=m).astype(np.float64) * 2.0 - 1.0

    if hypothesis == "alt":
        scale = (amp * z)[groups.labels]
        first = mu_half[None, :] * (1.0 + scale[:, None] * b[None, :])
        second = mu_half[None, :] * (1.0 - scale[:, None] * b[None, :])
        omegas = np.concatenate([first, second], axis=1)
    else:
        omegas = np.tile(np.concatenate([mu_half, mu_half]), (groups.n, 1))
    X = _draw_counts(lengths, omegas, rng)
    params = TrueParams(lengths=lengths, omegas=omegas, labels=groups.labels, K=K)
    return SimDraw(X=X, groups=groups, params=params)


def gen_anova_powerless(n, p, N, alpha, hypothesis, rng) -> SimDraw:
    """Rank-one design on singleton groups where de-biasing matters most.

    Null rows are uniform; alternative rows are (1 + alpha eps_i sigma_j)/p
    with balanced signs. alpha must lie in [0, 1) so rows stay valid PMFs
    (alpha = 0 reproduces the null). Draw order: row signs, column signs,
    multinomial rows.
    """
    if n % 2 or p % 2:
        raise ValueError(f"rank-one design needs even n and p, got n={n}, p={p}")
    if not (0.0 <= alpha < 1.0):
        raise ValueError(f"perturbation size must be in [0, 1), got {alpha}")
    eps = _balanced_signs(n, rng)
    sigma = _balanced_signs(p, rng)
    if hypothesis == "alt":
        omegas = (1.0 + alpha * np.outer(eps, sigma)) / p
    else:
        omegas = np.full((n, p), 1.0 / p)
    lengths = np.full(n, int(N), dtype=np.int64)
    X = _draw_counts(lengths, omegas, rng)
    groups = GroupPartition.singletons(n)
    params = TrueParams(lengths=lengths, omegas=omegas, labels=groups.labels, K=n)
    return SimDraw(X=X, groups=groups, params=params)


def make_generator(cfg: SimConfig, seed: int = 0, lam=None, hypothesis=None):
    """Build a ``draw(rng) -> SimDraw`` closure for one design point.

    ``lam`` and ``hypothesis`` override the config (the power curve sweeps
    lam with hypothesis fixed to the alternative). When the mixing design
    runs with ``fresh_mu=False``, the base PMF is drawn once from the
    shared stream of ``seed`` and reused by every replicate.
    """
    hyp = cfg.hypothesis if hypothesis is None else hypothesis
    if cfg.design == "experiment1":
        return lambda rng: gen_experiment1(
            cfg.n, cfg.p, cfg.K, cfg.N_min, cfg.N_max, cfg.phi, hyp, rng)
    if cfg.design == "experiment2":
        level = cfg.lam if lam is None else lam
        fixed_mu = None
        if not cfg.fresh_mu:
            fixed_mu = sample_dirichlet(cfg.p // 2, cfg.phi, shared_rng(seed))
        return lambda rng: gen_experiment2(
            cfg.n, cfg.p, cfg.K, cfg.N_min, cfg.N_max, cfg.phi, level, hyp, rng,
            mu_half=fixed_mu, iid_signs=cfg.iid_signs)
    if cfg.design == "contiguity":
        return lambda rng: gen_contiguity(cfg.n, cfg.p, cfg.N, cfg.a, hyp, rng)
    if cfg.design == "anova_powerless":
        return lambda rng: gen_anova_powerless(cfg.n, cfg.p, cfg.N, cfg.alpha, hyp, rng)
    if cfg.design == "lower_bound":
        mu_half = np.full(cfg.p // 2, 0.5 / (cfg.p // 2))
        lengths = np.full(cfg.n, cfg.N, dtype=np.int64)
        labels = _equal_groups(cfg.n, cfg.K).labels
        return lambda rng: gen_lower_bound(mu_half, cfg.omega, lengths, labels, hyp, rng)
    raise ValueError(f"unknown design {cfg.design!r}")
