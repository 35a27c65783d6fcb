"""Monte-Carlo harness: replication runner, exact-enumeration oracle,
empirical thresholds, and the pairwise group-comparison workflow.

Replicate i of a run with master seed s always draws from the substream
(s, i) defined in :mod:`delvekit.rng`, and results are aggregated in
replicate order, so thread count never changes any output byte.

The enumeration oracle computes exact expectations of the test statistics
by summing over every joint multinomial outcome, weighted by its exact
probability (integer multinomial coefficients times float powers). It is
the arbiter for the unbiasedness identities: E[T] equals the population
variation, E[V] equals the variance components, and the exact variance
estimator is unbiased for Var(T) under the null.
"""

from __future__ import annotations

import csv
import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import kstest

from .counts import CountMatrix, GroupPartition, group_summaries
from .population import TrueParams
from .rng import replicate_rng
from .simulate import SimDraw
from .stats import (
    PreconditionError,
    anova_T,
    delve_T,
    delve_V,
    delve_kn,
    delve_test,
    exact_Vtilde,
    lr_T,
)

__all__ = [
    "MCReport",
    "PowerTable",
    "PairwiseZMatrix",
    "run_null_calibration",
    "run_power_curve",
    "empirical_threshold",
    "pairwise_zscores",
    "oracle_expected_statistic",
    "oracle_variance_T",
    "oracle_outcome_count",
    "z_quantile",
    "ks_to_normal",
    "evaluate_variants",
    "write_report_json",
    "write_samples_csv",
    "write_histogram_csv",
    "write_power_csv",
]

NORMAL_VARIANTS = ("delve", "delve_plus", "delve_exact", "delve_kn")

ORACLE_STATISTICS = ("T", "V", "Vtilde", "anova", "lr")

_ORACLE_LIMIT = 10 ** 7


def z_quantile(level: float) -> float:
    """Upper critical value of the standard normal at the given level."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    return float(ndtri(1.0 - level))


def ks_to_normal(samples) -> float:
    """Kolmogorov-Smirnov distance of a sample to the standard normal."""
    return float(kstest(np.asarray(samples, dtype=np.float64), "norm").statistic)


def evaluate_variants(draw: SimDraw, variants) -> dict:
    """One replicate's statistic per variant, sharing the group summaries.

    Returns the Z-score for the normally calibrated variants and the raw
    statistic for the baselines; values match ``delve_test`` exactly.
    """
    X, g = draw.X, draw.groups
    out = {}
    core = [v for v in variants if v in ("delve", "delve_plus", "delve_exact")]
    if core:
        gs = group_summaries(X, g)
        T, _ = delve_T(X, g, gs)
        if "delve" in core or "delve_plus" in core:
            V = delve_V(X, g, gs)
            psi = float(T / np.sqrt(V)) if V > 0 else 0.0
            if "delve" in core:
                out["delve"] = psi
            if "delve_plus" in core:
                psi_plus = psi
                if V > 0:
                    adj = 1.0 + gs.mu_hat_norm() * psi
                    if adj > 0:
                        psi_plus = float(T / np.sqrt(V * adj))
                out["delve_plus"] = psi_plus
        if "delve_exact" in core:
            Vt = exact_Vtilde(X, g, gs)
            out["delve_exact"] = float(T / np.sqrt(Vt)) if Vt > 0 else 0.0
    if "delve_kn" in variants:
        if g.K != X.n:
            raise PreconditionError(
                f"variant delve_kn requires every row in its own group (K=n), got K={g.K}, n={X.n}"
            )
        out["delve_kn"] = delve_kn(X).psi
    if "anova" in variants:
        out["anova"] = anova_T(X, g)
    if "lr" in variants:
        out["lr"] = lr_T(X, g)
    return {v: out[v] for v in variants}


def _run_replicates(make_draw, reps, variants, seed, threads):
    def one(i):
        try:
            draw = make_draw(replicate_rng(seed, i))
            return evaluate_variants(draw, variants)
        except PreconditionError:
            raise
        except Exception as exc:
            raise RuntimeError(f"replicate {i} failed: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(reps)))
    else:
        rows = [one(i) for i in range(reps)]
    return {v: np.array([r[v] for r in rows]) for v in variants}


@dataclass
class MCReport:
    """Replicated statistics with summaries and rejection rates.

    ``samples`` holds the per-replicate Z-scores (raw statistics for the
    baselines). ``runtime`` is wall-clock seconds and is excluded from the
    serialized numeric outputs so that re-runs remain byte-identical.
    """

    config: dict
    seed: int
    level: float
    reps: int
    variants: tuple
    samples: dict
    summary: dict
    rejection_rates: dict
    runtime: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "level": self.level,
            "reps": self.reps,
            "variants": list(self.variants),
            "summary": self.summary,
            "rejection_rates": self.rejection_rates,
            "samples": {v: np.asarray(s).tolist() for v, s in self.samples.items()},
        }


def run_null_calibration(make_draw, reps, variants=("delve",), seed=0,
                         level=0.05, threads=1, config=None) -> MCReport:
    """Replicate a generator and summarize each variant's statistic.

    Despite the name this runs any generator (the alternative branches are
    used for mean-shift comparisons); calibration against N(0,1) only makes
    sense for generators whose null hypothesis holds.
    """
    if reps < 1:
        raise ValueError("need at least one replicate")
    start = time.perf_counter()
    samples = _run_replicates(make_draw, reps, tuple(variants), seed, threads)
    crit = z_quantile(level)
    summary = {}
    rejection = {}
    for v, vals in samples.items():
        entry = {"mean": float(np.mean(vals)), "sd": float(np.std(vals, ddof=1)) if reps > 1 else 0.0}
        if v in NORMAL_VARIANTS:
            entry["ks_normal"] = ks_to_normal(vals)
            rejection[v] = float(np.mean(vals > crit))
        summary[v] = entry
    return MCReport(
        config=dict(config or {}),
        seed=int(seed),
        level=float(level),
        reps=int(reps),
        variants=tuple(variants),
        samples=samples,
        summary=summary,
        rejection_rates=rejection,
        runtime=time.perf_counter() - start,
    )


@dataclass
class PowerTable:
    """Rejection rates along a signal grid, one column set per variant.

    Infeasible grid points carry NaN power and a note instead of aborting
    the sweep.
    """

    grid: list
    power: dict
    notes: list
    level: float
    reps: int
    seed: int
    config: dict
    runtime: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "grid": list(self.grid),
            "power": {v: list(p) for v, p in self.power.items()},
            "notes": list(self.notes),
            "level": self.level,
            "reps": self.reps,
            "seed": self.seed,
            "config": self.config,
        }


def run_power_curve(make_family, grid, reps, variants=("delve",), seed=0,
                    level=0.05, threads=1, config=None) -> PowerTable:
    """Rejection rate of each variant along a grid of signal levels.

    ``make_family(lam)`` must return a ``draw(rng) -> SimDraw`` closure.
    Every grid point reuses the same per-replicate substreams (common
    random numbers), so the zero-signal entry reproduces the calibration
    run's rejection rate at the same seed. Only normally calibrated
    variants are allowed; the baselines need empirical thresholds.
    """
    bad = [v for v in variants if v not in NORMAL_VARIANTS]
    if bad:
        raise ValueError(f"power curve needs normally calibrated variants, got {bad}")
    start = time.perf_counter()
    crit = z_quantile(level)
    power = {v: [] for v in variants}
    notes = []
    for lam in grid:
        try:
            samples = _run_replicates(make_family(lam), reps, tuple(variants), seed, threads)
        except (ValueError, RuntimeError) as exc:
            for v in variants:
                power[v].append(float("nan"))
            notes.append(f"skipped: {exc}")
            continue
        for v in variants:
            power[v].append(float(np.mean(samples[v] > crit)))
        notes.append("")
    return PowerTable(
        grid=[float(x) for x in grid],
        power=power,
        notes=notes,
        level=float(level),
        reps=int(reps),
        seed=int(seed),
        config=dict(config or {}),
        runtime=time.perf_counter() - start,
    )


def empirical_threshold(stat_fn, make_null_draw, reps, level, seed=0, threads=1) -> float:
    """Empirical (1 - level) quantile of a statistic under a null generator.

    Uses the order statistic at or above the target probability
    (level = 1 returns the sample minimum). ``stat_fn`` maps a SimDraw to a
    scalar.
    """
    if reps < 1:
        raise ValueError("need at least one replicate")

    def one(i):
        return float(stat_fn(make_null_draw(replicate_rng(seed, i))))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = np.array(list(pool.map(one, range(reps))))
    else:
        vals = np.array([one(i) for i in range(reps)])
    return float(np.quantile(vals, 1.0 - level, method="higher"))


@dataclass
class PairwiseZMatrix:
    """Symmetric matrix of two-group Z-scores with NaN diagonal.

    ``errors`` maps failed pairs (a, b) to the reason; their entries are
    NaN rather than fatal, since real corpora contain degenerate groups.
    """

    labels: list
    matrix: np.ndarray
    errors: dict = field(default_factory=dict)


def pairwise_zscores(X: CountMatrix, g: GroupPartition, variant="delve_plus",
                     names=None) -> PairwiseZMatrix:
    """Two-sample Z-score for every unordered pair of groups.

    Each pair restricts the matrix to the two groups' rows and runs the
    requested variant with K = 2.
    """
    if g.K < 2:
        raise ValueError("pairwise comparison needs at least two groups")
    mat = np.full((g.K, g.K), np.nan)
    errors = {}
    for a in range(g.K):
        rows_a = g.group_rows(a)
        for b in range(a + 1, g.K):
            rows_b = g.group_rows(b)
            sub = X.take_rows(np.concatenate([rows_a, rows_b]))
            part = GroupPartition.from_labels(
                np.concatenate([np.zeros(rows_a.size, dtype=np.int64),
                                np.ones(rows_b.size, dtype=np.int64)]), K=2)
            try:
                mat[a, b] = mat[b, a] = delve_test(sub, part, variant).psi
            except (PreconditionError, ValueError) as exc:
                errors[(a, b)] = str(exc)
    labels = list(names) if names is not None else list(range(g.K))
    return PairwiseZMatrix(labels=labels, matrix=mat, errors=errors)


# ---------------------------------------------------------------------------
# Exact enumeration oracle


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def _row_outcomes(N: int, omega: np.ndarray):
    """All count vectors of one row with their exact probabilities."""
    p = omega.size
    outcomes = []
    probs = []
    for x in _compositions(N, p):
        coeff = math.factorial(N)
        for xj in x:
            coeff //= math.factorial(xj)
        prob = float(coeff)
        for xj, oj in zip(x, omega):
            if xj:
                prob *= float(oj) ** xj
        outcomes.append(x)
        probs.append(prob)
    return outcomes, probs


def oracle_outcome_count(params: TrueParams) -> int:
    """Size of the joint outcome space the oracle must enumerate."""
    size = 1
    for N in params.lengths.tolist():
        size *= math.comb(N + params.p - 1, params.p - 1)
    return size


def _stat_fn(statistic: str):
    if statistic == "T":
        return lambda X, g: delve_T(X, g)[0]
    if statistic == "V":
        return delve_V
    if statistic == "Vtilde":
        return exact_Vtilde
    if statistic == "anova":
        return anova_T
    if statistic == "lr":
        return lr_T
    raise ValueError(f"unknown oracle statistic {statistic!r}; expected one of {ORACLE_STATISTICS}")


def _oracle_sweep(params: TrueParams, statistics):
    """Probability weights and statistic values over the joint outcome space."""
    size = oracle_outcome_count(params)
    if size > _ORACLE_LIMIT:
        raise ValueError(f"outcome space has {size} points, above the {_ORACLE_LIMIT} limit")
    fns = {s: _stat_fn(s) for s in statistics}
    g = GroupPartition.from_labels(params.labels, K=params.K)
    per_row = [_row_outcomes(int(N), om) for N, om in zip(params.lengths, params.omegas)]
    dense = np.zeros((params.n, params.p), dtype=np.int64)
    weights = []
    values = {s: [] for s in statistics}
    for combo in itertools.product(*[range(len(o)) for o, _ in per_row]):
        w = 1.0
        for i, c in enumerate(combo):
            outcomes, probs = per_row[i]
            dense[i, :] = outcomes[c]
            w *= probs[c]
        X = CountMatrix.from_dense(dense)
        weights.append(w)
        for s in statistics:
            values[s].append(fns[s](X, g))
    return weights, values


def oracle_expected_statistic(params: TrueParams, statistic: str) -> float:
    """Exact E[statistic] over the full joint multinomial outcome space."""
    weights, values = _oracle_sweep(params, (statistic,))
    return math.fsum(w * v for w, v in zip(weights, values[statistic]))


def oracle_variance_T(params: TrueParams) -> float:
    """Exact Var(T) by enumeration (two centered passes)."""
    weights, values = _oracle_sweep(params, ("T",))
    mean = math.fsum(w * v for w, v in zip(weights, values["T"]))
    return math.fsum(w * (v - mean) ** 2 for w, v in zip(weights, values["T"]))


def oracle_expectations(params: TrueParams, statistics) -> dict:
    """Exact expectations of several statistics in one enumeration sweep."""
    weights, values = _oracle_sweep(params, tuple(statistics))
    return {s: math.fsum(w * v for w, v in zip(weights, values[s]))
            for s in statistics}


# ---------------------------------------------------------------------------
# Report serialization


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_report_json(report: MCReport, path) -> None:
    """Canonical JSON report (runtime excluded; byte-stable per seed)."""
    import json

    with open(path, "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_samples_csv(report: MCReport, path) -> None:
    """Per-replicate statistics, one column per variant."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replicate", *report.variants])
        for i in range(report.reps):
            writer.writerow([i, *(_fmt(float(report.samples[v][i])) for v in report.variants)])


def write_histogram_csv(report: MCReport, path, bins: int = 40) -> None:
    """Histogram bins per variant in long format (for external plotting)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "bin_left", "bin_right", "count", "density"])
        for v in report.variants:
            vals = np.asarray(report.samples[v], dtype=np.float64)
            counts, edges = np.histogram(vals, bins=bins)
            widths = np.diff(edges)
            dens = counts / (counts.sum() * widths) if counts.sum() else counts * 0.0
            for i in range(bins):
                writer.writerow([v, _fmt(float(edges[i])), _fmt(float(edges[i + 1])),
                                 int(counts[i]), _fmt(float(dens[i]))])


def write_power_csv(table: PowerTable, path) -> None:
    """Power table as CSV: one row per grid point, one column per variant."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["signal", *[f"power_{v}" for v in table.power], "note"])
        for i, lam in enumerate(table.grid):
            row = [_fmt(float(lam))]
            for v in table.power:
                row.append(_fmt(float(table.power[v][i])))
            row.append(table.notes[i])
            writer.writerow(row)
