"""Closed-form and quadrature ground truth for the covering model, plus
evaluators for the theoretical bounds.

The mean and the d=2 variance are derived refinements (not asymptotics):

* mean: a point stays uncovered by one cap with probability 1 - 1/N, so
  by independence E[V_N] = 1 - (1 - 1/N)^N for every d.
* d=2 second moment: for two circle points, P(both uncovered) =
  (1 - 2/N + ov(theta))^N with ov the pair-overlap measure and theta the
  angular distance, uniform on [0, pi]. Both formulas are gated behind
  Monte Carlo cross-validation in the test suite before anything relies
  on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sphere import ModelParams, cap_measure

__all__ = [
    "PaperConstants",
    "BoundReport",
    "exact_mean",
    "exact_variance_d2",
    "exact_pN",
    "shao_zhang_bound",
    "rate_bound",
    "rate_regime_exponent",
    "rate_bound_regime",
    "admissible_dimension",
    "variance_sandwich",
]


@dataclass(frozen=True)
class PaperConstants:
    """Absolute constants of the variance and rate bounds.

    No numeric values are published for c1, c2, C1; the defaults below are
    for bound-shape demonstrations only and never enter acceptance checks.
    alpha controls how fast the dimension may grow with N.
    """

    c1: float = 0.25
    c2: float = 0.75
    C1: float = 1.5
    alpha: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.c1 < 1.0:
            raise ValueError(f"c1 must lie in (0, 1), got {self.c1}")
        if not 0.0 < self.c2 < 1.0:
            raise ValueError(f"c2 must lie in (0, 1), got {self.c2}")
        if not 1.0 < self.C1 < 2.0:
            raise ValueError(f"C1 must lie in (1, 2), got {self.C1}")
        if self.alpha <= 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    @property
    def alpha_limit(self) -> float:
        """Largest admissible alpha for a vanishing rate exponent."""
        return 1.0 / (2.0 * math.log(2.0 / self.c1))

    def require_clt_regime(self) -> None:
        if self.alpha >= self.alpha_limit:
            raise ValueError(
                f"alpha={self.alpha} is outside the vanishing-rate regime "
                f"(needs alpha < {self.alpha_limit:.6g} for c1={self.c1})"
            )


def exact_mean(N: int) -> float:
    """E[V_N] = 1 - (1 - 1/N)^N, independent of the dimension."""
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise ValueError(f"cap count N must be an integer >= 1, got {N!r}")
    return 1.0 - (1.0 - 1.0 / N) ** N


def _pair_uncovered_integral(N: int, panels: int) -> float:
    """(1/pi) * int_0^pi (1 - 2/N + ov(t))^N dt by composite Simpson.

    ov(t) = max(0, 2 r_N - t) / (2 pi) with r_N = pi/N. The integrand has a
    kink at t = 2 r_N, so the domain is split there and each piece gets its
    own panel set; the tail piece is constant and integrates exactly.
    """
    r = math.pi / N
    kink = min(2.0 * r, math.pi)

    def integrand(t: np.ndarray) -> np.ndarray:
        ov = np.maximum(0.0, 2.0 * r - t) / (2.0 * math.pi)
        return (1.0 - 2.0 / N + ov) ** N

    def simpson(lo: float, hi: float, n_panels: int) -> float:
        if hi <= lo:
            return 0.0
        x = np.linspace(lo, hi, 2 * n_panels + 1)
        y = integrand(x)
        h = (hi - lo) / (2 * n_panels)
        return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())

    half = max(panels // 2, 32)
    head = simpson(0.0, kink, half)
    if kink < math.pi:
        # constant tail: (1 - 2/N)^N over [2 r_N, pi]
        tail = (1.0 - 2.0 / N) ** N * (math.pi - kink)
    else:
        tail = 0.0
    return (head + tail) / math.pi


def exact_variance_d2(N: int, quad_nodes: int = 4096) -> float:
    """Var(V_N) on the circle through the pair-uncovered quadrature.

    E[V_N^2] = 1 - 2(1 - 1/N)^N + (1/pi) int_0^pi (1 - 2/N + ov(t))^N dt.
    Relative accuracy 1e-8 or better for quad_nodes >= 64.
    """
    if not isinstance(N, (int, np.integer)) or N < 2:
        raise ValueError(f"variance oracle needs an integer N >= 2, got {N!r}")
    if quad_nodes < 64:
        raise ValueError(f"quad_nodes must be >= 64, got {quad_nodes}")
    second_moment = (
        1.0 - 2.0 * (1.0 - 1.0 / N) ** N + _pair_uncovered_integral(N, int(quad_nodes))
    )
    return second_moment - exact_mean(N) ** 2


def exact_pN(params: ModelParams) -> float:
    """Probability that two independent uniform caps intersect: the measure
    of a cap of doubled radius."""
    if params.N < 2:
        raise ValueError("intersection probability needs N >= 2")
    return cap_measure(params.d, min(2.0 * params.r_N, math.pi))


def shao_zhang_bound(
    N: int, variance: float, delta1: float, delta2: float, m4: float
) -> float:
    """Berry-Esseen-type bound for symmetric functionals:
    12 sqrt(N) / variance * (sqrt(N delta1) + N sqrt(delta2) + sqrt(m4))."""
    if variance <= 0.0:
        raise ValueError(f"variance must be positive, got {variance}")
    if min(N, 1) < 1 or delta1 < 0.0 or delta2 < 0.0 or m4 < 0.0:
        raise ValueError("N must be >= 1 and moment inputs nonnegative")
    return (
        12.0
        * math.sqrt(N)
        / variance
        * (math.sqrt(N * delta1) + N * math.sqrt(delta2) + math.sqrt(m4))
    )


def rate_bound(params: ModelParams, constants: PaperConstants) -> float:
    """Convergence-rate bound 72 e^{C1} c1 (2/c1)^d / sqrt(N)."""
    return (
        72.0
        * math.exp(constants.C1)
        * constants.c1
        * (2.0 / constants.c1) ** params.d
        / math.sqrt(params.N)
    )


def rate_regime_exponent(constants: PaperConstants) -> float:
    """Exponent of N in the growing-dimension regime d ~ alpha ln N.

    Negative exactly when alpha < 1 / (2 ln(2/c1)).
    """
    return constants.alpha * math.log(2.0 / constants.c1) - 0.5


def rate_bound_regime(N: int, constants: PaperConstants) -> float:
    """Rate bound with the dimension absorbed: 72 e^{C1} c1 N^{exponent}."""
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    return 72.0 * math.exp(constants.C1) * constants.c1 * N ** rate_regime_exponent(constants)


def admissible_dimension(N: int, alpha: float) -> int:
    """Largest dimension the growing-d regime permits at this N:
    max(2, floor(alpha * ln N)). Natural logarithm."""
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    if alpha <= 0.0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return max(2, math.floor(alpha * math.log(N)))


def variance_sandwich(params: ModelParams, constants: PaperConstants) -> tuple[float, float]:
    """(e^{-C1} c1^{d-1} / N, e^{-1} c2^{d-1} / N)."""
    lower = math.exp(-constants.C1) * constants.c1 ** (params.d - 1) / params.N
    upper = math.exp(-1.0) * constants.c2 ** (params.d - 1) / params.N
    return lower, upper


@dataclass(frozen=True)
class BoundReport:
    """Numeric values of every bound at one (d, N) with given constants.

    variance_plugin records the variance used inside shao_zhang_bound; the
    default builder plugs the sandwich lower bound, which is the lossy but
    always-available theoretical route.
    """

    p_N: float
    p_N_bound: float
    delta1_bound: float
    delta2_bound: float
    shao_zhang_bound: float
    rate_bound: float
    variance_plugin: float

    def __post_init__(self):
        if self.p_N > self.p_N_bound + 1e-15:
            raise ValueError("intersection probability exceeds its bound")

    @classmethod
    def compute(
        cls,
        params: ModelParams,
        constants: PaperConstants,
        variance: float | None = None,
    ) -> "BoundReport":
        p = exact_pN(params)
        n = params.N
        var = variance_sandwich(params, constants)[0] if variance is None else variance
        d1_bound = 4.0 * p / n**4
        d2_bound = 16.0 * p**2 / n**4
        # m4 plug-in 16/N^4: the lossy substitution the rate derivation uses
        sz = shao_zhang_bound(n, var, d1_bound, d2_bound, 16.0 / n**4)
        return cls(
            p_N=p,
            p_N_bound=2.0 ** (params.d - 1) / n,
            delta1_bound=d1_bound,
            delta2_bound=d2_bound,
            shao_zhang_bound=sz,
            rate_bound=rate_bound(params, constants),
            variance_plugin=var,
        )
