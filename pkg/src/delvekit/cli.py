"""Command-line entry point.

Subcommands
-----------
test       run one test variant on a counts file plus a group file
pairwise   two-group Z-score for every pair of groups, with a heatmap
simulate   draw one synthetic dataset from a named design
calibrate  replicate a design and report the statistic's null behavior
power      rejection-rate curve along a signal grid
diagnose   population diagnostics from ground truth or plug-in estimates

Every command that writes to ``--out`` also drops a ``manifest.json``
recording the command line, the package version, sha256 digests of the
inputs, the output names, and timings. Timestamps and runtimes live only
in the manifest, so the numeric outputs of a run are byte-identical for a
fixed seed regardless of ``--threads``.

Exit codes: 0 on success, 2 for bad arguments or malformed input files,
3 when a variant's statistical precondition fails (for example the exact
variance estimator on rows shorter than 4).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .counts import (
    load_counts_csv,
    load_counts_mm,
    load_groups_csv,
    save_counts_csv,
    save_groups_csv,
)
from .harness import (
    pairwise_zscores,
    run_null_calibration,
    run_power_curve,
    write_histogram_csv,
    write_power_csv,
    write_report_json,
    write_samples_csv,
)
from .population import (
    TrueParams,
    alpha_beta,
    anova_bias,
    dimension_ratio,
    omega_n,
    omega_n_sq,
    rho_squared,
    snr,
    theta_components,
)
from .rng import replicate_rng
from .simulate import DESIGNS, SimConfig, make_generator
from .stats import VARIANTS, PreconditionError, delve_test, weighted_T

_SIGNAL_FIELDS = {
    "experiment2": "lam",
    "contiguity": "a",
    "lower_bound": "omega",
    "anova_powerless": "alpha",
}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


_CONFIG_TYPES = {
    "design": str,
    "n": int,
    "p": int,
    "K": int,
    "N_min": int,
    "N_max": int,
    "phi": float,
    "hypothesis": str,
    "lam": float,
    "a": float,
    "alpha": float,
    "omega": float,
    "N": int,
    "fresh_mu": _parse_bool,
    "iid_signs": _parse_bool,
}


def parse_config(path) -> dict:
    """Parse a flat ``key = value`` config file into typed design settings."""
    out = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected 'key = value', got {raw.strip()!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _CONFIG_TYPES:
                raise ValueError(f"{path}:{ln}: unknown config key {key!r}")
            try:
                out[key] = _CONFIG_TYPES[key](val)
            except ValueError:
                raise ValueError(f"{path}:{ln}: bad value for {key!r}: {val!r}") from None
    return out


def build_sim_config(args) -> SimConfig:
    """Merge config-file settings with explicit command-line overrides."""
    merged = {}
    if getattr(args, "config", None):
        merged.update(parse_config(args.config))
    for key in _CONFIG_TYPES:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    if "design" not in merged:
        raise ValueError("missing required key: design (use --design or set it in --config)")
    return SimConfig(**merged)


def _default_threads() -> int:
    raw = os.environ.get("DELVEKIT_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(args, out_dir, inputs, outputs, seed=None, config=None,
                    started=None, t0=None) -> None:
    manifest = {
        "command": "delvekit " + " ".join(args._argv),
        "subcommand": args.command,
        "version": __version__,
        "seed": seed,
        "config": config or {},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
        "started_utc": started or "",
        "runtime_seconds": (time.perf_counter() - t0) if t0 is not None else 0.0,
    }
    _dump_json(manifest, os.path.join(out_dir, "manifest.json"))


def _load_counts(path, n=None, p=None):
    ext = os.path.splitext(str(path))[1].lower()
    if ext in (".mtx", ".mm"):
        return load_counts_mm(path)
    return load_counts_csv(path, n=n, p=p)


def _doc_csv_wide(doc: dict) -> str:
    keys = list(doc)
    return ",".join(keys) + "\n" + ",".join(_fmt(doc[k]) for k in keys) + "\n"


def _doc_csv_long(doc: dict) -> str:
    return "key,value\n" + "".join(f"{k},{_fmt(v)}\n" for k, v in doc.items())


# ---------------------------------------------------------------------------
# Subcommands


def cmd_test(args) -> int:
    started, t0 = _utcnow(), time.perf_counter()
    part, _ = load_groups_csv(args.groups)
    X = _load_counts(args.counts, n=part.n, p=args.cols)
    res = delve_test(X, part, args.variant)
    doc = res.to_dict()
    if args.weighted:
        doc["weighted_T"] = weighted_T(X, part)
    if args.format == "json":
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        sys.stdout.write(_doc_csv_wide(doc))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _dump_json(doc, os.path.join(args.out, "result.json"))
        with open(os.path.join(args.out, "result.csv"), "w") as fh:
            fh.write(_doc_csv_wide(doc))
        _write_manifest(args, args.out, [args.counts, args.groups],
                        ["result.json", "result.csv"], started=started, t0=t0)
    return 0


def cmd_pairwise(args) -> int:
    started, t0 = _utcnow(), time.perf_counter()
    part, names = load_groups_csv(args.groups)
    X = _load_counts(args.counts, n=part.n, p=args.cols)
    pz = pairwise_zscores(X, part, variant=args.variant, names=names)
    os.makedirs(args.out, exist_ok=True)

    doc = {
        "variant": args.variant,
        "labels": [str(x) for x in pz.labels],
        "matrix": [[float(v) for v in row] for row in pz.matrix],
        "errors": {f"{a},{b}": msg for (a, b), msg in pz.errors.items()},
    }
    _dump_json(doc, os.path.join(args.out, "pairwise.json"))
    with open(os.path.join(args.out, "pairwise.csv"), "w") as fh:
        fh.write("group," + ",".join(doc["labels"]) + "\n")
        for label, row in zip(doc["labels"], pz.matrix):
            fh.write(label + "," + ",".join(_fmt(float(v)) for v in row) + "\n")
    from .figures import plot_pairwise_heatmap

    plot_pairwise_heatmap(pz, os.path.join(args.out, "pairwise.png"))
    _write_manifest(args, args.out, [args.counts, args.groups],
                    ["pairwise.json", "pairwise.csv", "pairwise.png"],
                    started=started, t0=t0)
    print(f"pairwise {args.variant}: {part.K} groups, "
          f"{len(pz.errors)} failed pairs, wrote {args.out}")
    return 0


def cmd_simulate(args) -> int:
    started, t0 = _utcnow(), time.perf_counter()
    cfg = build_sim_config(args)
    draw = make_generator(cfg, seed=args.seed)(replicate_rng(args.seed, 0))
    os.makedirs(args.out, exist_ok=True)
    save_counts_csv(draw.X, os.path.join(args.out, "counts.csv"))
    save_groups_csv(draw.groups, os.path.join(args.out, "groups.csv"))
    _dump_json(draw.params.to_dict(), os.path.join(args.out, "params.json"))
    inputs = [args.config] if args.config else []
    _write_manifest(args, args.out, inputs,
                    ["counts.csv", "groups.csv", "params.json"],
                    seed=args.seed, config=cfg.to_dict(), started=started, t0=t0)
    print(f"simulated {draw.X.n} rows x {draw.X.p} columns "
          f"({draw.groups.K} groups, total count {draw.X.total}) into {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    started, t0 = _utcnow(), time.perf_counter()
    cfg = build_sim_config(args)
    variants = tuple(args.variant) if args.variant else ("delve",)
    gen = make_generator(cfg, seed=args.seed)
    report = run_null_calibration(
        gen, reps=args.reps, variants=variants, seed=args.seed,
        level=args.level, threads=args.threads, config=cfg.to_dict(),
    )
    os.makedirs(args.out, exist_ok=True)
    write_report_json(report, os.path.join(args.out, "report.json"))
    write_samples_csv(report, os.path.join(args.out, "samples.csv"))
    write_histogram_csv(report, os.path.join(args.out, "histogram.csv"))
    from .figures import plot_null_histogram

    plot_null_histogram(report, os.path.join(args.out, "histogram.png"))
    inputs = [args.config] if args.config else []
    _write_manifest(args, args.out, inputs,
                    ["report.json", "samples.csv", "histogram.csv", "histogram.png"],
                    seed=args.seed, config=cfg.to_dict(), started=started, t0=t0)
    for v in variants:
        s = report.summary[v]
        line = f"{v}: mean={s['mean']:.4f} sd={s['sd']:.4f}"
        if "ks_normal" in s:
            line += (f" ks={s['ks_normal']:.4f}"
                     f" reject@{args.level:g}={report.rejection_rates[v]:.4f}")
        print(line)
    return 0


def cmd_power(args) -> int:
    started, t0 = _utcnow(), time.perf_counter()
    cfg = build_sim_config(args)
    field = _SIGNAL_FIELDS.get(cfg.design)
    if field is None:
        raise ValueError(f"design {cfg.design!r} has no signal level to sweep")
    if args.grid:
        grid = [float(tok) for tok in args.grid.split(",") if tok.strip()]
        if not grid:
            raise ValueError("empty --grid")
    else:
        grid = np.linspace(0.0, 12.0, 10).tolist()
    variants = tuple(args.variant) if args.variant else ("delve",)

    def family(level):
        return make_generator(replace(cfg, **{field: float(level)}),
                              seed=args.seed, hypothesis="alt")

    table = run_power_curve(
        family, grid, reps=args.reps, variants=variants, seed=args.seed,
        level=args.level, threads=args.threads, config=cfg.to_dict(),
    )
    os.makedirs(args.out, exist_ok=True)
    _dump_json(table.to_json_dict(), os.path.join(args.out, "power.json"))
    write_power_csv(table, os.path.join(args.out, "power.csv"))
    from .figures import plot_power_curves

    plot_power_curves(table, os.path.join(args.out, "power.png"))
    inputs = [args.config] if args.config else []
    _write_manifest(args, args.out, inputs, ["power.json", "power.csv", "power.png"],
                    seed=args.seed, config=cfg.to_dict(), started=started, t0=t0)
    for i, lam in enumerate(table.grid):
        vals = " ".join(f"{v}={table.power[v][i]:.4f}" for v in variants)
        note = f"  ({table.notes[i]})" if table.notes[i] else ""
        print(f"{field}={lam:g}: {vals}{note}")
    return 0


def compute_diagnostics(params: TrueParams, plugin: bool) -> dict:
    """Population diagnostics of one parameter set, NaN where undefined."""
    nan = float("nan")
    doc = {
        "plugin": bool(plugin),
        "n": params.n,
        "p": params.p,
        "K": params.K,
        "total_count": params.total_count,
        "rho_squared": rho_squared(params),
        "omega_n": omega_n(params),
        "omega_n_sq": omega_n_sq(params),
        "snr": snr(params),
        "anova_bias": anova_bias(params),
        "dimension_ratio": dimension_ratio(
            params.n, params.total_count / params.n, params.K, params.p),
    }
    a, b = alpha_beta(params)
    doc["alpha_n"] = a
    doc["beta_n"] = b
    try:
        t = theta_components(params)
        doc.update(theta1=t.t1, theta2=t.t2, theta3=t.t3, theta4=t.t4,
                   theta_total=t.t2 + t.t3 + t.t4)
    except ValueError:
        doc.update(theta1=nan, theta2=nan, theta3=nan, theta4=nan, theta_total=nan)
    return doc


def cmd_diagnose(args) -> int:
    started, t0 = _utcnow(), time.perf_counter()
    if args.params and (args.counts or args.groups):
        raise ValueError("pass either --params or --counts/--groups, not both")
    if args.params:
        with open(args.params) as fh:
            params = TrueParams.from_dict(json.load(fh))
        plugin = False
        inputs = [args.params]
    elif args.counts and args.groups:
        if not args.plugin:
            raise ValueError(
                "diagnosing from counts treats the data as ground truth; "
                "pass --plugin to confirm"
            )
        part, _ = load_groups_csv(args.groups)
        X = _load_counts(args.counts, n=part.n, p=args.cols)
        params = TrueParams.plugin_from_counts(X, part)
        plugin = True
        inputs = [args.counts, args.groups]
    else:
        raise ValueError("diagnose needs --params, or --counts and --groups with --plugin")

    doc = compute_diagnostics(params, plugin)
    if args.format == "json":
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        sys.stdout.write(_doc_csv_long(doc))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _dump_json(doc, os.path.join(args.out, "diagnostics.json"))
        with open(os.path.join(args.out, "diagnostics.csv"), "w") as fh:
            fh.write(_doc_csv_long(doc))
        _write_manifest(args, args.out, inputs,
                        ["diagnostics.json", "diagnostics.csv"],
                        started=started, t0=t0)
    return 0


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


# ---------------------------------------------------------------------------
# Parser


def _add_io(p, out_required: bool) -> None:
    p.add_argument("--out", required=out_required, metavar="DIR",
                   help="output directory" + ("" if out_required else " (optional)"))
    p.add_argument("--format", choices=("json", "csv"), default="json",
                   help="stdout rendering for commands that print a document")


def _add_run(p) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help="worker threads (default: DELVEKIT_THREADS or 1); "
                        "never changes the results")
    p.add_argument("--level", type=float, default=0.05, help="test level")


def _add_design(p) -> None:
    p.add_argument("--config", metavar="FILE",
                   help="flat 'key = value' file of design settings")
    p.add_argument("--design", choices=DESIGNS, default=None)
    for flag, typ in (("--n", int), ("--p", int), ("--K", int), ("--N-min", int),
                      ("--N-max", int), ("--phi", float), ("--lam", float),
                      ("--a", float), ("--alpha", float), ("--omega", float),
                      ("--N", int)):
        p.add_argument(flag, type=typ, default=None)
    p.add_argument("--hypothesis", choices=("null", "alt"), default=None)
    p.add_argument("--fresh-mu", type=_parse_bool, default=None, metavar="BOOL")
    p.add_argument("--iid-signs", type=_parse_bool, default=None, metavar="BOOL")


def _add_data_inputs(p) -> None:
    p.add_argument("--counts", required=True, metavar="FILE",
                   help="row,col,count CSV or MatrixMarket .mtx")
    p.add_argument("--groups", required=True, metavar="FILE",
                   help="row,group CSV")
    p.add_argument("--cols", type=int, default=None,
                   help="force the number of columns (default: inferred)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delvekit",
        description="K-sample tests of equality of group-mean PMFs for multinomial counts.",
    )
    parser.add_argument("--version", action="version", version=f"delvekit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="run one test variant on a dataset")
    _add_data_inputs(p)
    p.add_argument("--variant", choices=VARIANTS, default="delve")
    p.add_argument("--weighted", action="store_true",
                   help="also report the frequency-weighted statistic")
    _add_io(p, out_required=False)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("pairwise", help="two-group Z-scores for all group pairs")
    _add_data_inputs(p)
    p.add_argument("--variant", choices=VARIANTS, default="delve_plus")
    _add_io(p, out_required=True)
    p.set_defaults(func=cmd_pairwise)

    p = sub.add_parser("simulate", help="draw one synthetic dataset")
    _add_design(p)
    p.add_argument("--seed", type=int, default=0)
    _add_io(p, out_required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="replicate a design under its null")
    _add_design(p)
    p.add_argument("--variant", choices=VARIANTS, action="append",
                   help="variant to evaluate (repeatable; default delve)")
    p.add_argument("--reps", type=int, default=500)
    _add_run(p)
    _add_io(p, out_required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("power", help="rejection-rate curve along a signal grid")
    _add_design(p)
    p.add_argument("--variant", choices=VARIANTS, action="append",
                   help="variant to evaluate (repeatable; default delve)")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--grid", metavar="X,Y,...",
                   help="comma-separated signal levels (default 0..12 in 10 steps)")
    _add_run(p)
    _add_io(p, out_required=True)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("diagnose", help="population diagnostics of a parameter set")
    p.add_argument("--params", metavar="FILE", help="ground-truth parameters (JSON)")
    p.add_argument("--counts", metavar="FILE")
    p.add_argument("--groups", metavar="FILE")
    p.add_argument("--cols", type=int, default=None)
    p.add_argument("--plugin", action="store_true",
                   help="allow plug-in diagnostics computed from the counts")
    _add_io(p, out_required=False)
    p.set_defaults(func=cmd_diagnose)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    try:
        return args.func(args)
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
