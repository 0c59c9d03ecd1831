"""Exact power and sample size for t tests and stratified ANCOVA contrasts."""
from .design import (
    Contrast,
    Plan,
    SampleSizeResult,
    StratifiedDesign,
    TestSpec,
    bonferroni,
    brute_force_contrast_variance,
    contrast_variance,
    error_df,
    evaluate_plan,
    evaluate_test,
    gold_standard_overall,
    gold_standard_plan,
    solve_sample_size,
)
from .distributions import (
    NoncentralTParams,
    OwensQArgs,
    f_cdf,
    f_quantile,
    owens_q,
    scaled_chisq_cdf,
    std_normal_cdf,
    t_cdf_noncentral,
    t_quantile,
)
from .errors import (
    AccuracyError,
    ConfigError,
    DomainError,
    PowerAnalysisError,
    RankDeficiencyError,
    UnreachableTargetError,
)
from .power_engine import (
    AncovaPowerInput,
    KnownVarTest,
    Margins,
    PowerResult,
    WelchDesign,
    integrate_f_mixture,
    power_equivalence_ancova,
    power_equivalence_known_var,
    power_equivalence_welch,
    power_sup_ni_ancova,
    power_sup_ni_exact,
    power_sup_ni_welch,
)
from .simulation import SimModel, SimResult, WelchSimModel, fit_ancova, mc_power, mc_power_welch

__version__ = "0.1.0"
