"""Harness tests: enumeration-oracle identities, deterministic threading,
empirical thresholds, the pairwise workflow, and report serialization."""

import json
import math

import numpy as np
import pytest

from delvekit.counts import CountMatrix, GroupPartition
from delvekit.harness import (
    empirical_threshold,
    evaluate_variants,
    ks_to_normal,
    oracle_expectations,
    oracle_expected_statistic,
    oracle_outcome_count,
    oracle_variance_T,
    pairwise_zscores,
    run_null_calibration,
    run_power_curve,
    write_histogram_csv,
    write_power_csv,
    write_report_json,
    write_samples_csv,
    z_quantile,
)
from delvekit.population import TrueParams, anova_bias, rho_squared, theta_components
from delvekit.rng import replicate_rng
from delvekit.simulate import SimConfig, gen_contiguity, make_generator
from delvekit.stats import PreconditionError, delve_test


def test_z_quantile_frozen():
    assert z_quantile(0.05) == pytest.approx(1.6448536269514722, abs=1e-12)
    with pytest.raises(ValueError):
        z_quantile(0.0)


def test_ks_to_normal():
    rng = np.random.default_rng(0)
    close = ks_to_normal(rng.standard_normal(4000))
    far = ks_to_normal(rng.uniform(0, 1, 4000))
    assert close < 0.03
    assert far > 0.3


# ---------------------------------------------------------------------------
# Enumeration oracle


def test_oracle_outcome_count_and_guard():
    par = TrueParams(lengths=np.array([4, 5]), omegas=np.full((2, 2), 0.5),
                     labels=np.array([0, 1]), K=2)
    assert oracle_outcome_count(par) == 5 * 6
    big = TrueParams(lengths=np.full(10, 30), omegas=np.full((10, 3), 1 / 3),
                     labels=np.arange(10), K=10)
    with pytest.raises(ValueError, match="outcome space"):
        oracle_expected_statistic(big, "T")
    with pytest.raises(ValueError, match="unknown oracle statistic"):
        oracle_expected_statistic(par, "bogus")


def test_oracle_T_unbiased_alternative():
    par = TrueParams(
        lengths=np.array([4, 4, 5]),
        omegas=np.array([[0.6, 0.4], [0.5, 0.5], [0.2, 0.8]]),
        labels=np.array([0, 1, 1]),
        K=2,
    )
    assert oracle_expected_statistic(par, "T") == pytest.approx(
        rho_squared(par), abs=1e-12)


def test_oracle_V_and_Vtilde_null():
    par = TrueParams(lengths=np.array([4, 5, 4]), omegas=np.tile([0.3, 0.7], (3, 1)),
                     labels=np.array([0, 0, 1]), K=2)
    e = oracle_expectations(par, ("T", "V", "Vtilde"))
    th = theta_components(par)
    assert e["T"] == pytest.approx(0.0, abs=1e-12)
    assert e["V"] == pytest.approx(th.t2 + th.t3 + th.t4, abs=1e-12)
    assert e["Vtilde"] == pytest.approx(oracle_variance_T(par), abs=1e-12)


def test_oracle_anova_mean_is_rho2_plus_bias():
    par = TrueParams(lengths=np.array([2, 2]), omegas=np.full((2, 2), 0.5),
                     labels=np.array([0, 1]), K=2)
    mean = oracle_expected_statistic(par, "anova")
    assert mean == pytest.approx(rho_squared(par) + anova_bias(par), abs=1e-12)
    assert mean == pytest.approx(0.5, abs=1e-12)


# ---------------------------------------------------------------------------
# Replication runner


def tiny_cfg(**kw):
    base = dict(design="experiment1", n=4, p=6, K=2, N_min=4, N_max=7, phi=0.5)
    base.update(kw)
    return SimConfig(**base)


def test_calibration_report_and_threading():
    gen = make_generator(tiny_cfg(), seed=3)
    serial = run_null_calibration(gen, reps=12, variants=("delve", "delve_plus", "anova"),
                                  seed=3, threads=1)
    threaded = run_null_calibration(gen, reps=12, variants=("delve", "delve_plus", "anova"),
                                    seed=3, threads=4)
    for v in serial.variants:
        assert serial.samples[v].tobytes() == threaded.samples[v].tobytes()
    assert serial.summary == threaded.summary
    assert set(serial.summary["delve"]) == {"mean", "sd", "ks_normal"}
    assert set(serial.summary["anova"]) == {"mean", "sd"}
    assert "anova" not in serial.rejection_rates
    assert 0.0 <= serial.rejection_rates["delve"] <= 1.0
    assert serial.reps == 12 and serial.level == 0.05
    with pytest.raises(ValueError):
        run_null_calibration(gen, reps=0)


def test_evaluate_variants_matches_delve_test():
    draw = gen_contiguity(4, 4, 8, 0.5, "alt", replicate_rng(5, 0))
    got = evaluate_variants(draw, ("delve", "delve_plus", "delve_exact", "delve_kn"))
    for v, val in got.items():
        assert val == pytest.approx(delve_test(draw.X, draw.groups, v).psi,
                                    rel=1e-14), v
    for v in ("anova", "lr"):
        stat = evaluate_variants(draw, (v,))[v]
        assert stat == pytest.approx(delve_test(draw.X, draw.groups, v).T, rel=1e-14)


def test_evaluate_variants_kn_needs_singletons():
    gen = make_generator(tiny_cfg(), seed=0)
    with pytest.raises(PreconditionError, match="K=n"):
        run_null_calibration(gen, reps=2, variants=("delve_kn",), seed=0)


def test_replicate_failure_is_reported_with_index():
    def bad(rng):
        raise OSError("backing store vanished")

    with pytest.raises(RuntimeError, match="replicate 0 failed"):
        run_null_calibration(bad, reps=2, seed=0)


def test_power_curve_coupling_and_feasibility():
    cfg = tiny_cfg(design="experiment2", n=4, p=6, K=2, N_min=6, N_max=9)

    def family(lam):
        return make_generator(cfg, seed=7, lam=lam, hypothesis="alt")

    table = run_power_curve(family, [0.0, 0.3, 1e9], reps=10, variants=("delve",),
                            seed=7, level=0.2, threads=2)
    # zero signal reproduces the null calibration run at the same seed
    calib = run_null_calibration(make_generator(cfg, seed=7, hypothesis="null"),
                                 reps=10, variants=("delve",), seed=7, level=0.2)
    assert table.power["delve"][0] == calib.rejection_rates["delve"]
    assert math.isnan(table.power["delve"][2])
    assert "max feasible" in table.notes[2]
    assert table.notes[0] == "" and table.notes[1] == ""
    with pytest.raises(ValueError, match="normally calibrated"):
        run_power_curve(family, [0.0], reps=2, variants=("anova",))


def test_empirical_threshold_order_statistic():
    # serial execution visits replicates in order, so a counter gives 0..99
    draws = iter(range(100))
    thr = empirical_threshold(float, lambda rng: next(draws), reps=100, level=0.05)
    # quantile with method="higher" picks the order statistic at or above
    assert thr == 95.0
    draws2 = iter(range(10))
    assert empirical_threshold(float, lambda rng: next(draws2), reps=10,
                               level=1.0) == 0.0
    with pytest.raises(ValueError):
        empirical_threshold(float, lambda rng: 0.0, reps=0, level=0.05)


def test_pairwise_zscores_structure():
    rng = np.random.default_rng(13)
    dense = rng.multinomial(12, np.full(5, 0.2), size=9)
    X = CountMatrix.from_dense(dense)
    g = GroupPartition.from_labels(np.repeat([0, 1, 2], 3))
    pz = pairwise_zscores(X, g, variant="delve")
    assert pz.matrix.shape == (3, 3)
    assert np.all(np.isnan(np.diag(pz.matrix)))
    off = pz.matrix[~np.eye(3, dtype=bool)]
    assert np.all(np.isfinite(off))
    np.testing.assert_allclose(pz.matrix, pz.matrix.T, equal_nan=True)
    assert pz.errors == {}
    assert pz.labels == [0, 1, 2]

    sub = X.take_rows(np.concatenate([g.group_rows(0), g.group_rows(2)]))
    direct = delve_test(sub, GroupPartition.from_labels([0] * 3 + [1] * 3), "delve")
    assert pz.matrix[0, 2] == pytest.approx(direct.psi, rel=1e-14)


def test_pairwise_records_degenerate_pairs():
    # group c has single-token rows: any pair involving it fails
    dense = np.array([[4, 2], [3, 3], [1, 0], [0, 1], [5, 1], [2, 2]])
    X = CountMatrix.from_dense(dense)
    g = GroupPartition.from_labels([0, 0, 1, 1, 2, 2])
    pz = pairwise_zscores(X, g, variant="delve", names=["a", "b", "c"])
    assert pz.labels == ["a", "b", "c"]
    assert set(pz.errors) == {(0, 1), (1, 2)}
    assert np.isnan(pz.matrix[0, 1]) and np.isnan(pz.matrix[1, 2])
    assert np.isfinite(pz.matrix[0, 2])
    with pytest.raises(ValueError, match="at least two groups"):
        pairwise_zscores(X, GroupPartition.from_labels([0] * 6))


# ---------------------------------------------------------------------------
# Serialization


def test_report_writers(tmp_path):
    gen = make_generator(tiny_cfg(), seed=5)
    report = run_null_calibration(gen, reps=6, variants=("delve", "lr"), seed=5,
                                  config=tiny_cfg().to_dict())
    jpath = tmp_path / "report.json"
    write_report_json(report, jpath)
    doc = json.loads(jpath.read_text())
    assert doc["reps"] == 6 and doc["seed"] == 5
    assert "runtime" not in jpath.read_text()
    assert doc["samples"]["delve"] == report.samples["delve"].tolist()
    assert doc["config"]["design"] == "experiment1"

    cpath = tmp_path / "samples.csv"
    write_samples_csv(report, cpath)
    lines = cpath.read_text().strip().splitlines()
    assert lines[0] == "replicate,delve,lr"
    assert len(lines) == 7
    first = float(lines[1].split(",")[1])
    assert first == report.samples["delve"][0]

    hpath = tmp_path / "hist.csv"
    write_histogram_csv(report, hpath, bins=5)
    hlines = hpath.read_text().strip().splitlines()
    assert hlines[0] == "variant,bin_left,bin_right,count,density"
    assert len(hlines) == 1 + 2 * 5
    counts = sum(int(r.split(",")[3]) for r in hlines[1:] if r.startswith("delve"))
    assert counts == 6


def test_power_writer(tmp_path):
    cfg = tiny_cfg(design="experiment2", n=4, p=6, K=2)

    def family(lam):
        return make_generator(cfg, seed=1, lam=lam, hypothesis="alt")

    table = run_power_curve(family, [0.0, 0.5], reps=4, seed=1)
    path = tmp_path / "power.csv"
    write_power_csv(table, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "signal,power_delve,note"
    assert len(lines) == 3
    assert table.to_json_dict()["grid"] == [0.0, 0.5]
    assert "runtime" not in json.dumps(table.to_json_dict())
