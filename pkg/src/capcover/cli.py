"""Command-line entry point: reproducible simulation and verification runs.

Outputs are written atomically (temp file + rename). Every JSON report
embeds its schema version, subcommand, and full config; `--replay` re-runs
a report's config and checks that the recorded numbers reproduce exactly.
Exit codes: 0 success, 1 validation failure (bad flags, failed ledger,
replay mismatch, unwritable path), 2 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import experiments, oracles
from .sphere import ModelParams

PROG = "capcover"
CSV_HEADER = "replication_index,v_value,evaluator_kind,mc_points"

__all__ = ["build_parser", "main", "entry"]


class CLIValidationError(ValueError):
    """User-facing configuration problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures through exit code 1
        raise CLIValidationError(message)


def _default_threads() -> int:
    raw = os.environ.get("CAPCOVER_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _add_model_args(p: argparse.ArgumentParser, n_default: int = 100) -> None:
    p.add_argument("--d", type=int, default=2, help="ambient dimension (sphere is S^{d-1})")
    p.add_argument("--N", type=int, default=n_default, help="number of caps")


def _add_run_args(p: argparse.ArgumentParser, r_default: int = 1000) -> None:
    p.add_argument("--R", type=int, default=r_default, help="replication count")
    p.add_argument(
        "--M",
        type=int,
        default=None,
        help="Monte Carlo points per replication (default 256*N for the mc evaluator)",
    )
    p.add_argument(
        "--evaluator",
        choices=("auto", "exact", "mc"),
        default="auto",
        help="volume evaluator; auto = exact for d=2, mc otherwise",
    )
    p.add_argument("--seed", type=int, default=42, help="base seed for the Philox streams")
    p.add_argument(
        "--threads",
        type=int,
        default=_default_threads(),
        help="worker threads (results are identical for any value; "
        "env CAPCOVER_THREADS overrides the default)",
    )


def _add_constants_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--c1", type=float, default=0.25, help="lower variance constant in (0,1)")
    p.add_argument("--c2", type=float, default=0.75, help="upper variance constant in (0,1)")
    p.add_argument("--C1", type=float, default=1.5, help="exponential constant in (1,2)")
    p.add_argument("--alpha", type=float, default=0.2, help="dimension growth rate alpha")


def _add_output_args(p: argparse.ArgumentParser, fmt_default: str) -> None:
    p.add_argument(
        "--output-path",
        "-o",
        default=None,
        help="output base path; writes <path>.csv and/or <path>.json",
    )
    p.add_argument(
        "--output-format",
        choices=("csv", "json", "both"),
        default=fmt_default,
        help="which artifacts to write at the output path",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog=PROG,
        description=(
            "Random partial sphere coverings: simulate the covered volume of N "
            "uniform caps of measure 1/N, check the distributional bounds, and "
            "quantify Gaussian convergence."
        ),
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "--replay",
        metavar="REPORT_JSON",
        default=None,
        help="re-run the config recorded in a JSON report and verify that "
        "every recorded number reproduces exactly",
    )
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser(
        "simulate",
        help="replicate V_N and write per-replication values",
        formatter_class=fmt,
    )
    _add_model_args(p)
    _add_run_args(p)
    _add_output_args(p, "both")

    p = sub.add_parser(
        "clt",
        help="replicate V_N, standardize, and estimate the Kolmogorov distance",
        formatter_class=fmt,
    )
    _add_model_args(p, n_default=1000)
    _add_run_args(p, r_default=100_000)
    p.add_argument(
        "--standardize",
        choices=("auto", "oracle", "sample"),
        default="auto",
        help="standardization moments; auto = oracle for d=2, sample otherwise",
    )
    p.add_argument(
        "--dkw-confidence",
        type=float,
        default=0.95,
        help="confidence level for the DKW radius",
    )
    _add_constants_args(p)
    _add_output_args(p, "both")

    p = sub.add_parser(
        "verify-lemmas",
        help="run every distributional check and emit a pass/fail ledger",
        formatter_class=fmt,
    )
    _add_model_args(p, n_default=32)
    p.add_argument("--seed", type=int, default=42, help="base seed")
    p.add_argument(
        "--scheme-trials", type=int, default=2000, help="random recombinations to test"
    )
    p.add_argument(
        "--locality-trials", type=int, default=500, help="disjoint-forced schemes to test"
    )
    p.add_argument(
        "--delta-trials", type=int, default=20000, help="trials for the interaction moments"
    )
    p.add_argument("--R", type=int, default=20000, help="replications for the empirical law")
    _add_constants_args(p)
    _add_output_args(p, "json")

    p = sub.add_parser(
        "bounds",
        help="evaluate the theoretical bounds at one (d, N)",
        formatter_class=fmt,
    )
    _add_model_args(p, n_default=10_000)
    _add_constants_args(p)
    _add_output_args(p, "json")

    p = sub.add_parser(
        "mean-variance",
        help="closed-form mean/variance oracles, optionally vs a simulation",
        formatter_class=fmt,
    )
    _add_model_args(p)
    _add_run_args(p, r_default=0)
    _add_constants_args(p)
    _add_output_args(p, "json")

    return parser


# ---------------------------------------------------------------------------
# pure computation per subcommand (shared by normal runs and --replay)
# ---------------------------------------------------------------------------


def _resolve_evaluator(d: int, evaluator: str) -> str:
    if evaluator == "auto":
        return "exact-d2" if d == 2 else "mc"
    if evaluator == "exact":
        return "exact-d2"
    return "mc"


def _plan_from_config(cfg: dict) -> experiments.ExperimentPlan:
    params = ModelParams(d=cfg["d"], N=cfg["N"])
    evaluator = _resolve_evaluator(cfg["d"], cfg["evaluator"])
    return experiments.ExperimentPlan(
        params=params,
        replications=cfg["R"],
        evaluator=evaluator,
        mc_points=cfg["M"],
        seed=cfg["seed"],
        threads=cfg.get("threads", 1),
    )


def _simulate_config(args: argparse.Namespace) -> dict:
    return {
        "d": args.d,
        "N": args.N,
        "R": args.R,
        "M": args.M,
        "evaluator": args.evaluator,
        "seed": args.seed,
        "threads": args.threads,
    }


def _compute_simulate(cfg: dict) -> tuple[dict, experiments.ExperimentResult]:
    result = experiments.simulate_experiment(_plan_from_config(cfg))
    dist = result.distribution()
    plan = result.plan
    results = {
        "mean": dist.mean,
        "variance": dist.variance,
        "variance_denoised": experiments.variance_denoise(
            dist.variance, dist.mean, plan.mc_points
        ),
        "fourth_central_moment": dist.fourth_central_moment,
        "min": float(result.values.min()),
        "max": float(result.values.max()),
        "evaluator_kind": plan.evaluator_kind,
        "mc_points": plan.mc_points,
        "wall_seconds": result.wall_seconds,
    }
    return results, result


def _compute_clt(cfg: dict) -> tuple[dict, experiments.ExperimentResult]:
    plan = _plan_from_config(cfg)
    params = plan.params
    constants = oracles.PaperConstants(
        c1=cfg["c1"], c2=cfg["c2"], C1=cfg["C1"], alpha=cfg["alpha"]
    )
    mode = cfg["standardize"]
    if mode == "auto":
        mode = "oracle" if params.d == 2 else "sample"
    if mode == "oracle" and params.d != 2:
        raise CLIValidationError("oracle-moment standardization needs d=2 (exact oracles)")

    result = experiments.simulate_experiment(plan)
    dist = result.distribution()
    theoretical = oracles.rate_bound(params, constants)
    if mode == "oracle":
        oracle_mean = oracles.exact_mean(params.N)
        oracle_var = oracles.exact_variance_d2(params.N)
        report = experiments.kolmogorov_distance(
            dist,
            "oracle-moments",
            oracle_mean=oracle_mean,
            oracle_var=oracle_var,
            theoretical_bound=theoretical,
            confidence=cfg["dkw_confidence"],
        )
    else:
        oracle_mean = oracle_var = None
        report = experiments.kolmogorov_distance(
            dist,
            "sample-moments",
            theoretical_bound=theoretical,
            confidence=cfg["dkw_confidence"],
        )
    results = {
        "mean": dist.mean,
        "variance": dist.variance,
        "variance_denoised": experiments.variance_denoise(
            dist.variance, dist.mean, plan.mc_points
        ),
        "fourth_central_moment": dist.fourth_central_moment,
        "standardization": mode,
        "oracle_mean": oracle_mean,
        "oracle_var": oracle_var,
        "empirical_dK": report.empirical_dK,
        "dkw_radius": report.dkw_radius,
        "theoretical_bound": report.theoretical_bound,
        "mean_abs_error": report.mean_abs_error,
        "variance_ratio": report.variance_ratio,
        "evaluator_kind": plan.evaluator_kind,
        "mc_points": plan.mc_points,
        "wall_seconds": result.wall_seconds,
    }
    return results, result


def _compute_verify(cfg: dict) -> dict:
    params = ModelParams(d=cfg["d"], N=cfg["N"])
    constants = oracles.PaperConstants(
        c1=cfg["c1"], c2=cfg["c2"], C1=cfg["C1"], alpha=cfg["alpha"]
    )
    budget = experiments.VerificationBudget(
        first_difference_trials=cfg["scheme_trials"],
        locality_trials=cfg["locality_trials"],
        delta_trials=cfg["delta_trials"],
        replications=cfg["R"],
        seed=cfg["seed"],
    )
    report = experiments.verify_all(params, constants, budget)
    return {
        "all_passed": report.all_passed,
        "entries": [dataclasses.asdict(e) for e in report.entries],
        "bounds": dataclasses.asdict(report.bounds),
    }


def _compute_bounds(cfg: dict) -> dict:
    params = ModelParams(d=cfg["d"], N=cfg["N"])
    constants = oracles.PaperConstants(
        c1=cfg["c1"], c2=cfg["c2"], C1=cfg["C1"], alpha=cfg["alpha"]
    )
    report = oracles.BoundReport.compute(params, constants)
    lo, hi = oracles.variance_sandwich(params, constants)
    out = dataclasses.asdict(report)
    out.update(
        {
            "variance_lower": lo,
            "variance_upper": hi,
            "rate_exponent": oracles.rate_regime_exponent(constants),
            "rate_bound_regime": oracles.rate_bound_regime(params.N, constants),
            "admissible_dimension": oracles.admissible_dimension(params.N, constants.alpha),
        }
    )
    return out


def _compute_mean_variance(cfg: dict) -> tuple[dict, experiments.ExperimentResult | None]:
    params = ModelParams(d=cfg["d"], N=cfg["N"])
    constants = oracles.PaperConstants(
        c1=cfg["c1"], c2=cfg["c2"], C1=cfg["C1"], alpha=cfg["alpha"]
    )
    lo, hi = oracles.variance_sandwich(params, constants)
    results: dict = {
        "exact_mean": oracles.exact_mean(params.N),
        "variance_d2": oracles.exact_variance_d2(params.N) if params.N >= 2 else None,
        "variance_lower": lo,
        "variance_upper": hi,
    }
    result = None
    if cfg["R"] > 0:
        sim, result = _compute_simulate(cfg)
        results["simulated"] = sim
        results["mean_abs_error"] = abs(sim["mean"] - results["exact_mean"])
        if params.d == 2 and results["variance_d2"]:
            results["variance_ratio"] = sim["variance_denoised"] / results["variance_d2"]
    return results, result


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".capcover-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(result: experiments.ExperimentResult) -> str:
    kind = result.plan.evaluator_kind
    m = result.plan.mc_points
    lines = [CSV_HEADER]
    lines.extend(
        f"{k},{v:.17g},{kind},{m}" for k, v in enumerate(result.values)
    )
    return "\n".join(lines) + "\n"


def _json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _report_payload(subcommand: str, config: dict, results: dict) -> dict:
    return {
        "schema_version": experiments.SCHEMA_VERSION,
        "tool": PROG,
        "subcommand": subcommand,
        "config": config,
        "results": results,
    }


def _emit(
    subcommand: str,
    config: dict,
    results: dict,
    result: experiments.ExperimentResult | None,
    output_path: str | None,
    output_format: str,
) -> list[str]:
    written = []
    if output_path is None:
        return written
    if output_format in ("csv", "both") and result is not None:
        path = output_path + ".csv"
        _write_atomic(path, _csv_text(result))
        written.append(path)
    if output_format in ("json", "both"):
        path = output_path + ".json"
        _write_atomic(path, _json_text(_report_payload(subcommand, config, results)))
        written.append(path)
    return written


_VOLATILE_KEYS = ("wall_seconds",)


def _strip_volatile(obj):
    if isinstance(obj, dict):
        return {k: _strip_volatile(v) for k, v in obj.items() if k not in _VOLATILE_KEYS}
    if isinstance(obj, list):
        return [_strip_volatile(v) for v in obj]
    return obj


def _replay(path: str) -> int:
    with open(path) as fh:
        report = json.load(fh)
    for key in ("schema_version", "subcommand", "config", "results"):
        if key not in report:
            raise CLIValidationError(f"replay report is missing the {key!r} field")
    if report["schema_version"] != experiments.SCHEMA_VERSION:
        raise CLIValidationError(
            f"replay schema version {report['schema_version']} is not supported"
        )
    sub = report["subcommand"]
    cfg = report["config"]
    if sub == "simulate":
        results, _ = _compute_simulate(cfg)
    elif sub == "clt":
        results, _ = _compute_clt(cfg)
    elif sub == "verify-lemmas":
        results = _compute_verify(cfg)
    elif sub == "bounds":
        results = _compute_bounds(cfg)
    elif sub == "mean-variance":
        results, _ = _compute_mean_variance(cfg)
    else:
        raise CLIValidationError(f"replay cannot handle subcommand {sub!r}")
    fresh = _strip_volatile(results)
    recorded = _strip_volatile(report["results"])
    if fresh == recorded:
        print(f"replay ok: {sub} config reproduces every recorded number")
        return 0
    mismatched = sorted(
        k
        for k in set(fresh) | set(recorded)
        if fresh.get(k, "<missing>") != recorded.get(k, "<missing>")
    )
    print(f"replay MISMATCH: {sub} differs at {', '.join(mismatched)}", file=sys.stderr)
    return 1


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _run_subcommand(args: argparse.Namespace) -> int:
    sub = args.subcommand
    if sub == "simulate":
        config = _simulate_config(args)
        results, result = _compute_simulate(config)
        written = _emit(sub, config, results, result, args.output_path, args.output_format)
        print(
            f"simulate d={args.d} N={args.N} R={args.R} seed={args.seed} "
            f"evaluator={results['evaluator_kind']}: mean={results['mean']:.6g} "
            f"variance={results['variance']:.6g}"
            + (f" -> {', '.join(written)}" if written else "")
        )
        return 0

    if sub == "clt":
        config = _simulate_config(args)
        config.update(
            {
                "standardize": args.standardize,
                "dkw_confidence": args.dkw_confidence,
                "c1": args.c1,
                "c2": args.c2,
                "C1": args.C1,
                "alpha": args.alpha,
            }
        )
        results, result = _compute_clt(config)
        written = _emit(sub, config, results, result, args.output_path, args.output_format)
        print(
            f"clt d={args.d} N={args.N} R={args.R} seed={args.seed} "
            f"standardize={results['standardization']}: mean={results['mean']:.6g} "
            f"variance={results['variance']:.6g} d_K={results['empirical_dK']:.6g} "
            f"dkw={results['dkw_radius']:.6g} rate_bound={results['theoretical_bound']:.6g}"
            + (f" -> {', '.join(written)}" if written else "")
        )
        return 0

    if sub == "verify-lemmas":
        config = {
            "d": args.d,
            "N": args.N,
            "seed": args.seed,
            "scheme_trials": args.scheme_trials,
            "locality_trials": args.locality_trials,
            "delta_trials": args.delta_trials,
            "R": args.R,
            "c1": args.c1,
            "c2": args.c2,
            "C1": args.C1,
            "alpha": args.alpha,
        }
        results = _compute_verify(config)
        written = _emit(sub, config, results, None, args.output_path, args.output_format)
        n_pass = sum(1 for e in results["entries"] if e["passed"])
        print(
            f"verify-lemmas d={args.d} N={args.N}: {n_pass}/{len(results['entries'])} "
            f"checks passed"
            + (f" -> {', '.join(written)}" if written else "")
        )
        for e in results["entries"]:
            flag = "pass" if e["passed"] else "FAIL"
            print(
                f"  [{flag}] {e['check']}: observed={e['observed']:.6g} "
                f"{e['comparison']} target={e['target']:.6g}"
            )
        return 0 if results["all_passed"] else 1

    if sub == "bounds":
        config = {
            "d": args.d,
            "N": args.N,
            "c1": args.c1,
            "c2": args.c2,
            "C1": args.C1,
            "alpha": args.alpha,
        }
        results = _compute_bounds(config)
        written = _emit(sub, config, results, None, args.output_path, args.output_format)
        print(
            f"bounds d={args.d} N={args.N}: p_N={results['p_N']:.6g} "
            f"(bound {results['p_N_bound']:.6g}) rate={results['rate_bound']:.6g} "
            f"shao_zhang={results['shao_zhang_bound']:.6g}"
            + (f" -> {', '.join(written)}" if written else "")
        )
        return 0

    if sub == "mean-variance":
        config = _simulate_config(args)
        config.update({"c1": args.c1, "c2": args.c2, "C1": args.C1, "alpha": args.alpha})
        results, result = _compute_mean_variance(config)
        written = _emit(sub, config, results, result, args.output_path, args.output_format)
        var_txt = (
            f"{results['variance_d2']:.6g}" if results["variance_d2"] is not None else "n/a"
        )
        print(
            f"mean-variance N={args.N}: mean={results['exact_mean']:.10g} "
            f"variance_d2={var_txt}"
            + (f" -> {', '.join(written)}" if written else "")
        )
        return 0

    raise CLIValidationError("a subcommand (or --replay) is required; see --help")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.replay is not None:
            if args.subcommand is not None:
                raise CLIValidationError("--replay replaces the subcommand; give only one")
            return _replay(args.replay)
        return _run_subcommand(args)
    except CLIValidationError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # pragma: no cover - internal failure path
        print(f"{PROG}: internal error: {exc!r}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
