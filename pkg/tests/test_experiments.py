"""Replication driver, moment estimators, Kolmogorov statistics, verify_all."""

import math

import numpy as np
import pytest
from scipy.special import ndtri

from capcover import (
    BASE,
    PRIMED,
    TILDE,
    DegenerateDistributionError,
    EmpiricalDistribution,
    ExperimentPlan,
    ModelParams,
    PaperConstants,
    VerificationBudget,
    covered_volume_exact_d2,
    delta12,
    dkw_radius,
    estimate_delta_moments,
    exact_mean,
    exact_pN,
    exact_variance_d2,
    geodesic_distance,
    kolmogorov_distance,
    replication_rng,
    run_replications,
    sample_disjoint_pair_scheme,
    simulate_experiment,
    variance_denoise,
    verify_all,
)
from capcover.experiments import SCHEMA_VERSION


class TestExperimentPlan:
    def test_exact_evaluator_needs_d2(self):
        with pytest.raises(ValueError):
            ExperimentPlan(params=ModelParams(d=3, N=10), replications=5)

    def test_mc_points_defaults(self):
        mc = ExperimentPlan(params=ModelParams(d=3, N=10), replications=5, evaluator="mc")
        assert mc.mc_points == 2560
        assert mc.evaluator_kind == "monte-carlo"
        exact = ExperimentPlan(params=ModelParams(d=2, N=10), replications=5)
        assert exact.mc_points == 0
        assert exact.evaluator_kind == "exact"

    def test_validation(self):
        params = ModelParams(d=2, N=10)
        with pytest.raises(ValueError):
            ExperimentPlan(params=params, replications=0)
        with pytest.raises(ValueError):
            ExperimentPlan(params=params, replications=5, evaluator="analytic")
        with pytest.raises(ValueError):
            ExperimentPlan(params=params, replications=5, standardization="robust")
        with pytest.raises(ValueError):
            ExperimentPlan(params=params, replications=5, threads=0)
        with pytest.raises(ValueError):
            ExperimentPlan(
                params=ModelParams(d=3, N=4), replications=5, evaluator="mc", mc_points=0
            )


class TestReplicationRng:
    def test_deterministic(self):
        a = replication_rng(42, 7).standard_normal(4)
        b = replication_rng(42, 7).standard_normal(4)
        assert np.array_equal(a, b)

    def test_streams_differ_across_indices(self):
        a = replication_rng(42, 0).standard_normal(4)
        b = replication_rng(42, 1).standard_normal(4)
        assert not np.array_equal(a, b)

    def test_streams_differ_across_seeds(self):
        a = replication_rng(1, 0).standard_normal(4)
        b = replication_rng(2, 0).standard_normal(4)
        assert not np.array_equal(a, b)


class TestSimulateExperiment:
    def test_single_full_cap_is_always_one(self):
        plan = ExperimentPlan(params=ModelParams(d=2, N=1), replications=25)
        result = simulate_experiment(plan)
        assert np.all(result.values == 1.0)
        assert result.schema_version == SCHEMA_VERSION

    def test_thread_count_does_not_change_values(self):
        params = ModelParams(d=2, N=40)
        runs = [
            simulate_experiment(
                ExperimentPlan(params=params, replications=500, seed=11, threads=t)
            )
            for t in (1, 4, 8)
        ]
        assert np.array_equal(runs[0].values, runs[1].values)
        assert np.array_equal(runs[0].values, runs[2].values)

    def test_thread_count_does_not_change_mc_values(self):
        params = ModelParams(d=3, N=15)
        runs = [
            simulate_experiment(
                ExperimentPlan(
                    params=params, replications=60, evaluator="mc", seed=5, threads=t
                )
            )
            for t in (1, 4)
        ]
        assert np.array_equal(runs[0].values, runs[1].values)

    def test_same_plan_reproduces(self):
        plan = ExperimentPlan(params=ModelParams(d=2, N=12), replications=100, seed=3)
        assert np.array_equal(simulate_experiment(plan).values, simulate_experiment(plan).values)

    def test_values_lie_in_unit_interval(self):
        plan = ExperimentPlan(
            params=ModelParams(d=4, N=8), replications=50, evaluator="mc", seed=1
        )
        values = simulate_experiment(plan).values
        assert np.all((0.0 <= values) & (values <= 1.0))

    def test_half_circle_pair_law(self):
        # V_2 = 1/2 + theta/(2 pi): mean 3/4, variance 1/48
        dist = run_replications(
            ExperimentPlan(params=ModelParams(d=2, N=2), replications=20000, seed=9)
        )
        se = math.sqrt(dist.variance / 20000)
        assert abs(dist.mean - 0.75) <= 4.0 * se
        assert abs(dist.variance - 1.0 / 48.0) <= 0.10 / 48.0


class TestEmpiricalDistribution:
    def test_moments_match_manual_computation(self):
        v = np.array([0.2, 0.9, 0.4, 0.4, 0.7])
        dist = EmpiricalDistribution.from_values(v)
        assert np.array_equal(dist.sorted_values, np.sort(v))
        assert abs(dist.mean - v.mean()) <= 1e-15
        assert abs(dist.variance - v.var(ddof=1)) <= 1e-15
        assert abs(dist.fourth_central_moment - ((v - v.mean()) ** 4).mean()) <= 1e-15
        assert dist.replications == 5

    def test_single_value(self):
        dist = EmpiricalDistribution.from_values(np.array([0.3]))
        assert dist.variance == 0.0
        assert dist.replications == 1

    def test_validation(self):
        with pytest.raises(ValueError):
            EmpiricalDistribution.from_values(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            EmpiricalDistribution.from_values(np.array([]))


class TestVarianceDenoise:
    def test_exact_sentinel_is_identity(self):
        assert variance_denoise(0.0123, 0.6, 0) == 0.0123

    def test_subtracts_conditional_noise(self):
        got = variance_denoise(0.01, 0.5, 1000)
        assert abs(got - (0.01 - 0.25 / 1000)) <= 1e-15

    def test_floors_at_zero(self):
        assert variance_denoise(1e-5, 0.5, 100) == 0.0

    def test_rejects_negative_m(self):
        with pytest.raises(ValueError):
            variance_denoise(0.01, 0.5, -1)

    def test_recovers_oracle_variance_under_mc_noise(self):
        # R = 2*10^4 keeps this quick; the estimate concentrates well within
        # the 10% window around the quadrature oracle
        n = 50
        plan = ExperimentPlan(
            params=ModelParams(d=2, N=n), replications=20000, evaluator="mc", seed=21
        )
        dist = run_replications(plan)
        oracle = exact_variance_d2(n)
        denoised = variance_denoise(dist.variance, dist.mean, plan.mc_points)
        assert abs(denoised - oracle) <= 0.10 * oracle
        # and the raw variance is visibly inflated by the MC noise term
        assert dist.variance > oracle


class TestDkwRadius:
    def test_reference_value(self):
        assert abs(dkw_radius(10**5) - 0.004294694083467375) <= 1e-15

    def test_formula(self):
        for r, conf in ((100, 0.9), (4096, 0.95), (10**6, 0.99)):
            want = math.sqrt(math.log(2.0 / (1.0 - conf)) / (2.0 * r))
            assert abs(dkw_radius(r, conf) - want) <= 1e-15

    def test_decreasing_in_replications(self):
        assert dkw_radius(10**4) > dkw_radius(10**5) > dkw_radius(10**6)

    def test_validation(self):
        with pytest.raises(ValueError):
            dkw_radius(0)
        with pytest.raises(ValueError):
            dkw_radius(100, confidence=1.0)


class TestKolmogorovDistance:
    def test_normal_quantile_construction(self):
        r = 1000
        values = ndtri((np.arange(1, r + 1) - 0.5) / r)
        dist = EmpiricalDistribution.from_values(values)
        rep = kolmogorov_distance(dist, "oracle-moments", oracle_mean=0.0, oracle_var=1.0)
        assert rep.empirical_dK <= 1.0 / (2.0 * r) + 1e-6

    def test_single_point_at_oracle_mean(self):
        dist = EmpiricalDistribution.from_values(np.array([0.7]))
        rep = kolmogorov_distance(dist, "oracle-moments", oracle_mean=0.7, oracle_var=0.01)
        assert abs(rep.empirical_dK - 0.5) <= 1e-15

    def test_degenerate_sample(self):
        dist = EmpiricalDistribution.from_values(np.full(10, 0.4))
        with pytest.raises(DegenerateDistributionError):
            kolmogorov_distance(dist, "sample-moments")

    def test_degenerate_oracle_variance(self):
        dist = EmpiricalDistribution.from_values(np.array([0.1, 0.2, 0.3]))
        with pytest.raises(DegenerateDistributionError):
            kolmogorov_distance(dist, "oracle-moments", oracle_mean=0.2, oracle_var=0.0)

    def test_sample_mode_needs_two_values(self):
        dist = EmpiricalDistribution.from_values(np.array([0.5]))
        with pytest.raises(DegenerateDistributionError):
            kolmogorov_distance(dist, "sample-moments")

    def test_oracle_mode_needs_moments(self):
        dist = EmpiricalDistribution.from_values(np.array([0.1, 0.9]))
        with pytest.raises(ValueError):
            kolmogorov_distance(dist, "oracle-moments", oracle_mean=0.5)

    def test_unknown_mode(self):
        dist = EmpiricalDistribution.from_values(np.array([0.1, 0.9]))
        with pytest.raises(ValueError):
            kolmogorov_distance(dist, "median-moments")

    def test_report_fields(self):
        rng = np.random.default_rng(31)
        values = rng.normal(0.6, 0.02, size=5000)
        dist = EmpiricalDistribution.from_values(values)
        rep = kolmogorov_distance(
            dist,
            "oracle-moments",
            oracle_mean=0.6,
            oracle_var=0.0004,
            theoretical_bound=12.5,
        )
        assert 0.0 <= rep.empirical_dK <= 1.0
        assert rep.empirical_dK <= 0.05  # genuinely normal data
        assert rep.dkw_radius == dkw_radius(5000)
        assert rep.theoretical_bound == 12.5
        assert rep.mean_abs_error == abs(dist.mean - 0.6)
        assert rep.variance_ratio == dist.variance / 0.0004

    def test_sample_mode_lacks_oracle_diagnostics(self):
        values = np.random.default_rng(32).normal(size=100)
        rep = kolmogorov_distance(EmpiricalDistribution.from_values(values), "sample-moments")
        assert rep.mean_abs_error is None
        assert rep.variance_ratio is None


class TestEstimateDeltaMoments:
    def test_bounds_hold_with_slack_d2(self):
        params = ModelParams(d=2, N=32)
        est = estimate_delta_moments(params, 3000, np.random.default_rng(41))
        p = exact_pN(params)
        n4 = 32.0**4
        assert est.delta1 <= 4.0 * p / n4 + 4.0 * est.se_delta1
        assert est.delta2 <= 16.0 * p * p / n4 + 4.0 * est.se_delta2
        assert est.m4 <= 1.0 / n4 + 1e-15
        assert est.trials == 3000

    def test_indicator_only_removes_mass(self):
        params = ModelParams(d=2, N=16)
        est = estimate_delta_moments(params, 1500, np.random.default_rng(42))
        assert est.delta1 <= est.m4 + 1e-18
        assert est.delta2 >= 0.0 and est.delta1 >= 0.0

    def test_iterates_as_triple(self):
        params = ModelParams(d=2, N=8)
        est = estimate_delta_moments(params, 200, np.random.default_rng(43))
        d1, d2, m4 = est
        assert (d1, d2, m4) == (est.delta1, est.delta2, est.m4)

    def test_random_k_policy_runs(self):
        params = ModelParams(d=2, N=12)
        est = estimate_delta_moments(
            params, 300, np.random.default_rng(44), recombination_policy="random-k", k=3
        )
        assert est.m4 <= 1.0 / 12.0**4 + 1e-15
        assert est.delta1 >= 0.0

    def test_mc_path_d3(self):
        params = ModelParams(d=3, N=8)
        est = estimate_delta_moments(params, 40, np.random.default_rng(45), mc_points=2000)
        assert np.isfinite((est.delta1, est.delta2, est.m4)).all()
        assert est.delta1 >= 0.0 and est.delta2 >= 0.0

    def test_validation(self):
        rng = np.random.default_rng(46)
        with pytest.raises(ValueError):
            estimate_delta_moments(ModelParams(d=2, N=2), 10, rng)
        with pytest.raises(ValueError):
            estimate_delta_moments(ModelParams(d=2, N=8), 0, rng)
        with pytest.raises(ValueError):
            estimate_delta_moments(ModelParams(d=2, N=8), 10, rng, recombination_policy="all")
        with pytest.raises(ValueError):
            estimate_delta_moments(
                ModelParams(d=2, N=8), 10, rng, recombination_policy="random-k", k=0
            )


class TestSampleDisjointPairScheme:
    def test_forced_quadruple_is_pairwise_disjoint(self):
        rng = np.random.default_rng(51)
        for n in (8, 16, 64):
            params = ModelParams(d=2, N=n)
            for _ in range(10):
                scheme = sample_disjoint_pair_scheme(params, rng)
                z = scheme.recombined()
                quad = [
                    z.centers[0],
                    z.centers[1],
                    scheme.primed.centers[0],
                    scheme.primed.centers[1],
                ]
                for a in range(4):
                    for b in range(a + 1, 4):
                        assert geodesic_distance(quad[a], quad[b]) > 2.0 * params.r_N
                assert scheme.selector[0] in (BASE, TILDE)
                assert scheme.selector[1] in (BASE, TILDE)

    def test_second_difference_vanishes(self):
        rng = np.random.default_rng(52)
        params = ModelParams(d=2, N=12)
        for _ in range(25):
            scheme = sample_disjoint_pair_scheme(params, rng)
            assert abs(delta12(scheme, 0, 1, covered_volume_exact_d2)) <= 1e-12

    def test_impossible_for_half_circles(self):
        # N=2 caps are half-circles; four pairwise-disjoint ones cannot exist
        rng = np.random.default_rng(53)
        with pytest.raises(RuntimeError):
            sample_disjoint_pair_scheme(ModelParams(d=2, N=2), rng, max_retries=200)


class TestVerifyAll:
    def test_d2_report_passes(self):
        budget = VerificationBudget(
            first_difference_trials=300,
            locality_trials=60,
            delta_trials=1500,
            replications=4000,
            seed=3,
        )
        report = verify_all(ModelParams(d=2, N=32), PaperConstants(), budget)
        assert report.all_passed
        checks = [e.check for e in report.entries]
        assert checks == [
            "first_difference_bound",
            "second_difference_locality",
            "first_difference_fourth_moment",
            "delta1_bound",
            "delta2_bound",
            "intersection_probability_tightness",
            "intersection_probability_bound",
            "variance_sandwich_shape",
            "mean_vs_oracle",
            "variance_vs_oracle",
            "kolmogorov_vs_plugin_bound",
        ]
        tight = next(e for e in report.entries if e.check == "intersection_probability_tightness")
        assert abs(tight.observed) <= 1e-14
        assert report.bounds.p_N <= report.bounds.p_N_bound

    def test_d3_report_passes(self):
        budget = VerificationBudget(
            first_difference_trials=80,
            locality_trials=25,
            delta_trials=300,
            replications=2500,
            seed=3,
        )
        report = verify_all(ModelParams(d=3, N=16), PaperConstants(), budget)
        assert report.all_passed
        checks = {e.check for e in report.entries}
        assert "intersection_probability_tightness" not in checks
        assert "variance_vs_oracle" not in checks
        bound_entry = next(
            e for e in report.entries if e.check == "intersection_probability_bound"
        )
        assert bound_entry.comparison == "<"

    def test_entries_carry_context(self):
        budget = VerificationBudget(
            first_difference_trials=50,
            locality_trials=10,
            delta_trials=100,
            replications=500,
            seed=1,
        )
        report = verify_all(ModelParams(d=2, N=8), PaperConstants(), budget)
        for e in report.entries:
            assert e.comparison in ("<=", "<", "abs<=")
            assert isinstance(e.note, str) and e.note
            assert math.isfinite(e.observed) and math.isfinite(e.target)

    def test_needs_three_coordinates(self):
        with pytest.raises(ValueError):
            verify_all(ModelParams(d=2, N=2), PaperConstants())
