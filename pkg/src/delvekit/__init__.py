"""delvekit: K-sample tests of equality of group-mean PMFs for multinomial counts.

The core object is a de-biased group-variation statistic T whose expectation
equals the population variation exactly, standardized into a Z-score by one
of several variance estimators and calibrated against the standard normal.
The package bundles the statistics, population-level diagnostics, seeded
simulation designs, a deterministic Monte-Carlo harness with an exact
enumeration oracle, and a CLI (``delvekit``) whose report commands render
figures next to the delimited outputs.

Figure rendering lives in :mod:`delvekit.figures` and is imported lazily to
keep library import light.
"""

from .counts import (
    CountMatrix,
    GroupPartition,
    GroupSummaries,
    build_count_matrix,
    group_summaries,
    load_counts_csv,
    load_counts_mm,
    load_groups_csv,
    save_counts_csv,
    save_groups_csv,
)
from .harness import (
    MCReport,
    PairwiseZMatrix,
    PowerTable,
    empirical_threshold,
    ks_to_normal,
    oracle_expected_statistic,
    oracle_variance_T,
    pairwise_zscores,
    run_null_calibration,
    run_power_curve,
    z_quantile,
)
from .moments import (
    est_cube_norm,
    est_fourth_norm,
    est_omega_cube,
    est_omega_fourth,
    est_omega_sq,
    est_pair,
    est_pair_sq,
    est_sq_norm,
)
from .population import (
    ThetaComponents,
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
from .rng import replicate_rng, shared_rng
from .simulate import (
    DESIGNS,
    SimConfig,
    SimDraw,
    gen_anova_powerless,
    gen_contiguity,
    gen_experiment1,
    gen_experiment2,
    gen_lower_bound,
    make_generator,
    max_feasible_signal,
    sample_dirichlet,
    sample_multinomial,
)
from .stats import (
    VARIANTS,
    PreconditionError,
    TestResult,
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

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "CountMatrix",
    "GroupPartition",
    "GroupSummaries",
    "build_count_matrix",
    "group_summaries",
    "load_counts_csv",
    "load_counts_mm",
    "load_groups_csv",
    "save_counts_csv",
    "save_groups_csv",
    "est_omega_sq",
    "est_omega_cube",
    "est_omega_fourth",
    "est_pair",
    "est_pair_sq",
    "est_sq_norm",
    "est_cube_norm",
    "est_fourth_norm",
    "VARIANTS",
    "PreconditionError",
    "TestResult",
    "delve_T",
    "delve_V",
    "delve_test",
    "delve_kn",
    "two_sample",
    "exact_Vtilde",
    "vplus",
    "weighted_T",
    "anova_T",
    "lr_T",
    "normal_sf",
    "ThetaComponents",
    "TrueParams",
    "rho_squared",
    "omega_n",
    "omega_n_sq",
    "snr",
    "theta_components",
    "alpha_beta",
    "anova_bias",
    "dimension_ratio",
    "replicate_rng",
    "shared_rng",
    "DESIGNS",
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
    "MCReport",
    "PowerTable",
    "PairwiseZMatrix",
    "run_null_calibration",
    "run_power_curve",
    "empirical_threshold",
    "pairwise_zscores",
    "oracle_expected_statistic",
    "oracle_variance_T",
    "z_quantile",
    "ks_to_normal",
]
