"""capcover: random partial coverings of the unit sphere by equal caps.

Simulates the covered volume V_N of N independent uniform caps with
normalized measure 1/N each, exactly in d=2 and by Monte Carlo in d>=3,
and checks the moment identities, locality properties, and Gaussian
convergence bounds that govern the fluctuations of V_N.
"""

from .coverage import (
    BASE,
    PRIMED,
    TILDE,
    CapConfiguration,
    CoverageValue,
    ReplacementScheme,
    covered_volume_exact_d2,
    covered_volume_mc,
    delta1,
    delta12,
    make_common_points_volume_fn,
    replacement_difference,
)
from .experiments import (
    CLTReport,
    DegenerateDistributionError,
    DeltaMomentEstimates,
    EmpiricalDistribution,
    ExperimentPlan,
    ExperimentResult,
    LedgerEntry,
    VerificationBudget,
    VerificationReport,
    dkw_radius,
    estimate_delta_moments,
    kolmogorov_distance,
    replication_rng,
    run_replications,
    sample_disjoint_pair_scheme,
    simulate_experiment,
    variance_denoise,
    verify_all,
)
from .oracles import (
    BoundReport,
    PaperConstants,
    admissible_dimension,
    exact_mean,
    exact_pN,
    exact_variance_d2,
    rate_bound,
    rate_bound_regime,
    rate_regime_exponent,
    shao_zhang_bound,
    variance_sandwich,
)
from .sphere import (
    Cap,
    ModelParams,
    cap_measure,
    cap_radius_for_measure,
    caps_intersect,
    geodesic_distance,
    sample_uniform_sphere,
)

__version__ = "0.1.0"

__all__ = [
    "BASE",
    "PRIMED",
    "TILDE",
    "BoundReport",
    "CLTReport",
    "Cap",
    "CapConfiguration",
    "CoverageValue",
    "DegenerateDistributionError",
    "DeltaMomentEstimates",
    "EmpiricalDistribution",
    "ExperimentPlan",
    "ExperimentResult",
    "LedgerEntry",
    "ModelParams",
    "PaperConstants",
    "ReplacementScheme",
    "VerificationBudget",
    "VerificationReport",
    "admissible_dimension",
    "cap_measure",
    "cap_radius_for_measure",
    "caps_intersect",
    "covered_volume_exact_d2",
    "covered_volume_mc",
    "delta1",
    "delta12",
    "dkw_radius",
    "estimate_delta_moments",
    "exact_mean",
    "exact_pN",
    "exact_variance_d2",
    "geodesic_distance",
    "kolmogorov_distance",
    "make_common_points_volume_fn",
    "rate_bound",
    "rate_bound_regime",
    "rate_regime_exponent",
    "replacement_difference",
    "replication_rng",
    "run_replications",
    "sample_disjoint_pair_scheme",
    "sample_uniform_sphere",
    "shao_zhang_bound",
    "simulate_experiment",
    "variance_denoise",
    "variance_sandwich",
    "verify_all",
    "__version__",
]
