"""Replication driver and statistics for the covering model.

Reproducibility contract: replication k draws everything from a Philox
stream keyed by (seed, k), so results are bit-identical for any worker
count and any scheduling order. All estimators take explicit generators.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .coverage import (
    BASE,
    TILDE,
    CapConfiguration,
    CoverageValue,
    ReplacementScheme,
    covered_volume_exact_d2,
    covered_volume_mc,
    delta12,
    make_common_points_volume_fn,
)
from .oracles import (
    BoundReport,
    PaperConstants,
    exact_mean,
    exact_pN,
    exact_variance_d2,
    shao_zhang_bound,
    variance_sandwich,
)
from .sphere import ModelParams, geodesic_distance

SCHEMA_VERSION = 1

# Numerical zero for "the alternating sum vanished": well above accumulated
# rounding of the exact d=2 evaluator (~N * 2^-50), well below any true
# nonzero difference the estimators meet.
ZERO_TOL = 1e-12

__all__ = [
    "SCHEMA_VERSION",
    "ZERO_TOL",
    "ExperimentPlan",
    "EmpiricalDistribution",
    "CLTReport",
    "ExperimentResult",
    "DeltaMomentEstimates",
    "VerificationBudget",
    "LedgerEntry",
    "VerificationReport",
    "DegenerateDistributionError",
    "replication_rng",
    "run_replications",
    "simulate_experiment",
    "variance_denoise",
    "dkw_radius",
    "kolmogorov_distance",
    "estimate_delta_moments",
    "sample_disjoint_pair_scheme",
    "verify_all",
]


class DegenerateDistributionError(ValueError):
    """Raised when standardization would divide by a vanishing variance."""


@dataclass(frozen=True)
class ExperimentPlan:
    """What to simulate: model, replication count, evaluator, seeding."""

    params: ModelParams
    replications: int
    evaluator: str = "exact-d2"  # "exact-d2" | "mc"
    mc_points: int | None = None  # defaults to 256 * N for the mc evaluator
    standardization: str = "oracle-moments"  # "oracle-moments" | "sample-moments"
    seed: int = 42
    threads: int = 1

    def __post_init__(self):
        if self.evaluator not in ("exact-d2", "mc"):
            raise ValueError(f"unknown evaluator {self.evaluator!r}")
        if self.evaluator == "exact-d2" and self.params.d != 2:
            raise ValueError("the exact evaluator requires d=2")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        if self.standardization not in ("oracle-moments", "sample-moments"):
            raise ValueError(f"unknown standardization {self.standardization!r}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.evaluator == "mc":
            m = 256 * self.params.N if self.mc_points is None else int(self.mc_points)
            if m < 1:
                raise ValueError(f"mc_points must be >= 1, got {self.mc_points}")
            object.__setattr__(self, "mc_points", m)
        else:
            object.__setattr__(self, "mc_points", 0)

    @property
    def evaluator_kind(self) -> str:
        return "exact" if self.evaluator == "exact-d2" else "monte-carlo"


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Sorted sample of V_N values with the moments the CLT checks need."""

    sorted_values: np.ndarray
    mean: float
    variance: float  # unbiased; 0.0 for a single value
    fourth_central_moment: float

    @classmethod
    def from_values(cls, values: np.ndarray) -> "EmpiricalDistribution":
        v = np.asarray(values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("need a one-dimensional, nonempty value array")
        mean = float(v.mean())
        var = float(v.var(ddof=1)) if v.size >= 2 else 0.0
        m4 = float(((v - mean) ** 4).mean())
        return cls(np.sort(v), mean, var, m4)

    @property
    def replications(self) -> int:
        return int(self.sorted_values.size)


@dataclass(frozen=True)
class CLTReport:
    """Kolmogorov distance of the standardized sample to a standard normal."""

    empirical_dK: float
    dkw_radius: float
    theoretical_bound: float | None = None
    mean_abs_error: float | None = None
    variance_ratio: float | None = None


@dataclass(frozen=True)
class ExperimentResult:
    """Per-replication values (in replication order) plus run metadata."""

    plan: ExperimentPlan
    values: np.ndarray
    wall_seconds: float
    schema_version: int = SCHEMA_VERSION

    def distribution(self) -> EmpiricalDistribution:
        return EmpiricalDistribution.from_values(self.values)


def replication_rng(seed: int, replication_index: int) -> np.random.Generator:
    """Counter-keyed stream for one replication: Philox(key=(seed, k))."""
    key = np.array([seed, replication_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _replication_value(plan: ExperimentPlan, k: int) -> float:
    rng = replication_rng(plan.seed, k)
    config = CapConfiguration.sample(plan.params, rng)
    if plan.evaluator == "exact-d2":
        return covered_volume_exact_d2(config).value
    return covered_volume_mc(config, plan.mc_points, rng).value


def simulate_experiment(plan: ExperimentPlan) -> ExperimentResult:
    """R independent replications; identical output for any thread count."""
    t0 = time.perf_counter()
    r = plan.replications
    values = np.empty(r, dtype=float)
    if plan.threads == 1:
        for k in range(r):
            values[k] = _replication_value(plan, k)
    else:
        block = max(1, math.ceil(r / (plan.threads * 8)))

        def fill(lo: int) -> None:
            for k in range(lo, min(lo + block, r)):
                values[k] = _replication_value(plan, k)

        with ThreadPoolExecutor(max_workers=plan.threads) as pool:
            list(pool.map(fill, range(0, r, block)))
    return ExperimentResult(plan=plan, values=values, wall_seconds=time.perf_counter() - t0)


def run_replications(plan: ExperimentPlan) -> EmpiricalDistribution:
    return simulate_experiment(plan).distribution()


def variance_denoise(raw_variance: float, mean: float, M: int) -> float:
    """Remove the conditional MC noise E[V(1-V)]/M from a sample variance.

    M=0 is the exact-evaluator sentinel and returns the input unchanged.
    The mean*(1-mean) surrogate is first-order; the result is floored at 0.
    """
    if M == 0:
        return raw_variance
    if M < 0:
        raise ValueError(f"mc sample count must be >= 0, got {M}")
    return max(0.0, raw_variance - mean * (1.0 - mean) / M)


def dkw_radius(replications: int, confidence: float = 0.95) -> float:
    """Dvoretzky-Kiefer-Wolfowitz half-width sqrt(ln(2/delta) / (2R))."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * replications))


def kolmogorov_distance(
    dist: EmpiricalDistribution,
    standardize: str = "oracle-moments",
    oracle_mean: float | None = None,
    oracle_var: float | None = None,
    theoretical_bound: float | None = None,
    confidence: float = 0.95,
) -> CLTReport:
    """Sup-distance of the standardized sample law to the standard normal.

    Uses the order-statistics form max_k max(k/R - Phi(w_(k)),
    Phi(w_(k)) - (k-1)/R); Phi through the complementary error function.
    """
    r = dist.replications
    if standardize == "oracle-moments":
        if oracle_mean is None or oracle_var is None:
            raise ValueError("oracle-moments standardization needs both oracle moments")
        mu, var = float(oracle_mean), float(oracle_var)
    elif standardize == "sample-moments":
        if r < 2:
            raise DegenerateDistributionError(
                "sample-moments standardization needs at least two values"
            )
        mu, var = dist.mean, dist.variance
    else:
        raise ValueError(f"unknown standardization {standardize!r}")
    if var <= 0.0:
        raise DegenerateDistributionError(f"nonpositive variance {var} cannot standardize")

    w = (dist.sorted_values - mu) / math.sqrt(var)
    phi = ndtr(w)
    k = np.arange(1, r + 1, dtype=float)
    d_k = float(max((k / r - phi).max(), (phi - (k - 1.0) / r).max()))

    mean_err = None if oracle_mean is None else abs(dist.mean - float(oracle_mean))
    var_ratio = None
    if oracle_var is not None and oracle_var > 0.0 and r >= 2:
        var_ratio = dist.variance / float(oracle_var)
    return CLTReport(
        empirical_dK=d_k,
        dkw_radius=dkw_radius(r, confidence),
        theoretical_bound=theoretical_bound,
        mean_abs_error=mean_err,
        variance_ratio=var_ratio,
    )


# ---------------------------------------------------------------------------
# Replacement-difference moment estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeltaMomentEstimates:
    """Monte Carlo averages of the indicator-weighted fourth moments.

    delta1: E[ 1{D_{1,2}f(Y) != 0} (D_1 f(Z))^4 ]
    delta2: E[ 1{D_{1,2}f(Y) != 0, D_{1,3}f(Y') != 0} (D_2 f(Z))^4 ]
    m4:     E[ (D_1 f(X))^4 ]

    Iterable as (delta1, delta2, m4); standard errors ride along so callers
    can add sampling slack to bound comparisons.
    """

    delta1: float
    delta2: float
    m4: float
    se_delta1: float
    se_delta2: float
    se_m4: float
    trials: int

    def __iter__(self):
        return iter((self.delta1, self.delta2, self.m4))


def _volume_fn_for(params: ModelParams, rng: np.random.Generator, mc_points: int | None):
    if params.d == 2:
        return covered_volume_exact_d2
    m = 256 * params.N if mc_points is None else int(mc_points)
    return make_common_points_volume_fn(params, m, rng)


def _delta_terms(scheme: ReplacementScheme, volume_fn) -> tuple[float, float, float]:
    """(1{dd12 != 0} d1^4, 1{dd12 != 0, dd13 != 0} d2^4, helper d1) for one
    recombination, evaluating each of the six distinct configurations once."""
    f = volume_fn(scheme.recombined()).value
    f1 = volume_fn(scheme.recombined_replaced((0,))).value
    f2 = volume_fn(scheme.recombined_replaced((1,))).value
    f3 = volume_fn(scheme.recombined_replaced((2,))).value
    f12 = volume_fn(scheme.recombined_replaced((0, 1))).value
    f13 = volume_fn(scheme.recombined_replaced((0, 2))).value
    d1 = f - f1
    d2 = f - f2
    dd12 = f - f1 - f2 + f12
    dd13 = f - f1 - f3 + f13
    ind12 = abs(dd12) > ZERO_TOL
    ind13 = abs(dd13) > ZERO_TOL
    t1 = d1**4 if ind12 else 0.0
    t2 = d2**4 if (ind12 and ind13) else 0.0
    return t1, t2, d1


def estimate_delta_moments(
    params: ModelParams,
    trials: int,
    rng: np.random.Generator,
    recombination_policy: str = "canonical",
    k: int = 4,
    mc_points: int | None = None,
) -> DeltaMomentEstimates:
    """Estimate the interaction moments over `trials` draws of (X, X', X~).

    canonical evaluates Y = Y' = Z = X. random-k additionally samples k
    random selectors per trial and records the per-trial maximum, a sampled
    lower bound on the supremum over recombinations (the theoretical bounds
    are uniform over recombinations, so either policy must respect them).
    d=2 uses the exact evaluator; d >= 3 shares one common point set per
    trial so the differences are noise-free on the sampled points.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if params.N < 3:
        raise ValueError("delta moment estimation needs N >= 3 (coordinates 1..3)")
    if recombination_policy not in ("canonical", "random-k"):
        raise ValueError(f"unknown recombination policy {recombination_policy!r}")
    if recombination_policy == "random-k" and k < 1:
        raise ValueError(f"random-k policy needs k >= 1, got {k}")

    t1s = np.empty(trials)
    t2s = np.empty(trials)
    m4s = np.empty(trials)
    zeros = np.zeros(params.N, dtype=np.int8)
    for t in range(trials):
        volume_fn = _volume_fn_for(params, rng, mc_points)
        canonical = ReplacementScheme.sample(params, rng, random_selector=False)
        t1, t2, d1 = _delta_terms(canonical, volume_fn)
        m4s[t] = d1**4  # plain fourth moment of the first difference at X
        if recombination_policy == "random-k":
            for _ in range(k):
                sel = rng.integers(0, 3, size=params.N, dtype=np.int8)
                if (sel == zeros).all():
                    continue
                scheme = ReplacementScheme(
                    canonical.base, canonical.primed, canonical.tilde, sel
                )
                u1, u2, _ = _delta_terms(scheme, volume_fn)
                t1 = max(t1, u1)
                t2 = max(t2, u2)
        t1s[t] = t1
        t2s[t] = t2

    def _se(a: np.ndarray) -> float:
        return float(a.std(ddof=1) / math.sqrt(trials)) if trials >= 2 else float("inf")

    return DeltaMomentEstimates(
        delta1=float(t1s.mean()),
        delta2=float(t2s.mean()),
        m4=float(m4s.mean()),
        se_delta1=_se(t1s),
        se_delta2=_se(t2s),
        se_m4=_se(m4s),
        trials=trials,
    )


def sample_disjoint_pair_scheme(
    params: ModelParams,
    rng: np.random.Generator,
    max_retries: int = 10**6,
) -> ReplacementScheme:
    """Rejection-sample a scheme whose four caps relevant to the (1,2)
    second difference -- Z_1, Z_2, X'_1, X'_2 -- are pairwise disjoint.

    The selector at the first two coordinates is restricted to the unprimed
    copies so those four centers stay independent (selecting the primed copy
    there would alias Z_i with X'_i and make disjointness impossible).
    """
    threshold = 2.0 * params.r_N
    unprimed = (BASE, TILDE)
    for _ in range(max_retries):
        scheme = ReplacementScheme.sample(params, rng)
        sel = scheme.selector.copy()
        sel[0] = unprimed[int(rng.integers(0, 2))]
        sel[1] = unprimed[int(rng.integers(0, 2))]
        scheme = ReplacementScheme(scheme.base, scheme.primed, scheme.tilde, sel)
        z = scheme.recombined()
        quad = np.stack(
            (z.centers[0], z.centers[1], scheme.primed.centers[0], scheme.primed.centers[1])
        )
        ok = True
        for a in range(4):
            for b in range(a + 1, 4):
                if geodesic_distance(quad[a], quad[b]) <= threshold:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return scheme
    raise RuntimeError(
        f"could not force pairwise-disjoint caps within {max_retries} retries "
        f"(N={params.N} may be too small for four disjoint caps)"
    )


# ---------------------------------------------------------------------------
# Full verification sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerificationBudget:
    """Trial counts for verify_all; defaults finish in a few seconds."""

    first_difference_trials: int = 2000
    locality_trials: int = 500
    delta_trials: int = 20000
    replications: int = 20000
    seed: int = 42


@dataclass(frozen=True)
class LedgerEntry:
    """One machine-checkable statement: observed vs target."""

    check: str
    passed: bool
    observed: float
    target: float
    comparison: str  # "<=" | "<" | "abs<="
    note: str = ""


@dataclass(frozen=True)
class VerificationReport:
    bounds: BoundReport
    entries: list[LedgerEntry] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.entries)


def _entry(check, observed, target, comparison, note=""):
    if comparison == "<=":
        ok = observed <= target
    elif comparison == "<":
        ok = observed < target
    elif comparison == "abs<=":
        ok = abs(observed) <= target
    else:
        raise ValueError(f"unknown comparison {comparison!r}")
    return LedgerEntry(
        check=check,
        passed=bool(ok),
        observed=float(observed),
        target=float(target),
        comparison=comparison,
        note=note,
    )


def verify_all(
    params: ModelParams,
    constants: PaperConstants,
    budget: VerificationBudget | None = None,
) -> VerificationReport:
    """Run every empirical check against its stated bound.

    Returns a report whose entries identify each check by the mathematical
    statement it verifies; `all_passed` is the overall verdict.
    """
    if params.N < 3:
        raise ValueError("verification needs N >= 3")
    b = budget or VerificationBudget()
    rng = np.random.Generator(np.random.Philox(key=np.array([b.seed, 0], dtype=np.uint64)))
    entries: list[LedgerEntry] = []
    n = params.N

    # |first difference| <= 1/N on random recombinations
    if params.d == 2:
        volume_fn = covered_volume_exact_d2
    else:
        volume_fn = make_common_points_volume_fn(params, 256 * n, rng)
    worst_d1 = 0.0
    for _ in range(b.first_difference_trials):
        scheme = ReplacementScheme.sample(params, rng)
        f = volume_fn(scheme.recombined()).value
        f1 = volume_fn(scheme.recombined_replaced((0,))).value
        worst_d1 = max(worst_d1, abs(f - f1))
    entries.append(
        _entry(
            "first_difference_bound",
            worst_d1,
            1.0 / n + ZERO_TOL,
            "<=",
            f"max |D_1 f| over {b.first_difference_trials} random recombinations",
        )
    )

    # second difference vanishes when the four relevant caps are disjoint
    worst_dd = 0.0
    for _ in range(b.locality_trials):
        scheme = sample_disjoint_pair_scheme(params, rng)
        worst_dd = max(worst_dd, abs(delta12(scheme, 0, 1, volume_fn)))
    entries.append(
        _entry(
            "second_difference_locality",
            worst_dd,
            ZERO_TOL,
            "<=",
            f"max |D_12 f| over {b.locality_trials} disjoint-forced schemes",
        )
    )

    # interaction moments against their intersection-probability bounds
    p = exact_pN(params)
    est = estimate_delta_moments(params, b.delta_trials, rng)
    entries.append(
        _entry(
            "first_difference_fourth_moment",
            est.m4,
            1.0 / n**4 + ZERO_TOL,
            "<=",
            "sampled fourth moment of the first difference",
        )
    )
    entries.append(
        _entry(
            "delta1_bound",
            est.delta1,
            4.0 * p / n**4 + 4.0 * est.se_delta1,
            "<=",
            "sampled interaction moment vs 4 p_N / N^4 with 4-SE slack",
        )
    )
    entries.append(
        _entry(
            "delta2_bound",
            est.delta2,
            16.0 * p**2 / n**4 + 4.0 * est.se_delta2,
            "<=",
            "sampled interaction moment vs 16 p_N^2 / N^4 with 4-SE slack",
        )
    )

    # intersection probability: exact in d=2, strict bound above
    if params.d == 2:
        entries.append(
            _entry(
                "intersection_probability_tightness",
                p - 2.0 / n,
                1e-14,
                "abs<=",
                "d=2 doubled-radius measure equals 2/N exactly",
            )
        )
    entries.append(
        _entry(
            "intersection_probability_bound",
            p,
            2.0 ** (params.d - 1) / n,
            "<=" if params.d == 2 else "<",
            "p_N against 2^{d-1}/N (equality in d=2, strict above)",
        )
    )

    # variance sandwich is an interval
    lo, hi = variance_sandwich(params, constants)
    entries.append(
        _entry(
            "variance_sandwich_shape",
            lo,
            hi,
            "<=",
            f"lower bound {lo:.3e} does not exceed upper bound {hi:.3e}",
        )
    )

    # empirical mean / variance / CLT distance
    evaluator = "exact-d2" if params.d == 2 else "mc"
    plan = ExperimentPlan(
        params=params,
        replications=b.replications,
        evaluator=evaluator,
        seed=b.seed,
    )
    dist = run_replications(plan)
    se_mean = math.sqrt(max(dist.variance, 1e-300) / b.replications)
    entries.append(
        _entry(
            "mean_vs_oracle",
            dist.mean - exact_mean(n),
            4.0 * se_mean,
            "abs<=",
            f"sample mean over {b.replications} replications vs closed form",
        )
    )

    var_est = variance_denoise(dist.variance, dist.mean, plan.mc_points)
    if params.d == 2:
        oracle_var = exact_variance_d2(n)
        entries.append(
            _entry(
                "variance_vs_oracle",
                var_est / oracle_var - 1.0,
                0.10,
                "abs<=",
                "sample variance vs pair-overlap quadrature, 10% window",
            )
        )
        report = kolmogorov_distance(
            dist, "oracle-moments", oracle_mean=exact_mean(n), oracle_var=oracle_var
        )
    else:
        report = kolmogorov_distance(dist, "sample-moments")

    sz_est = shao_zhang_bound(n, var_est, est.delta1, est.delta2, est.m4)
    entries.append(
        _entry(
            "kolmogorov_vs_plugin_bound",
            report.empirical_dK,
            sz_est,
            "<=",
            "empirical Kolmogorov distance vs plug-in bound on estimated ingredients",
        )
    )

    bounds = BoundReport.compute(params, constants)
    return VerificationReport(bounds=bounds, entries=entries)
