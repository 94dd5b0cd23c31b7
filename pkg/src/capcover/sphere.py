"""Uniform sampling on S^{d-1} and spherical-cap geometry.

Everything here treats the sphere through its normalized surface measure:
a cap of geodesic radius r covers the fraction

    measure(d, r) = int_0^r sin^{d-2}(t) dt / int_0^pi sin^{d-2}(t) dt

of the sphere. All functions are pure; randomness always comes from an
explicitly passed numpy Generator, so concurrent callers just need their
own streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

# Tolerance on the *measure* (not the radius): the measure is what enters
# every downstream formula.
MEASURE_TOL = 1e-12

__all__ = [
    "MEASURE_TOL",
    "ModelParams",
    "Cap",
    "sample_uniform_sphere",
    "cap_measure",
    "cap_radius_for_measure",
    "geodesic_distance",
    "caps_intersect",
]


def _check_dimension(d: int) -> None:
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {d!r}")


def _sin_power_total(d: int) -> float:
    """int_0^pi sin^{d-2}(t) dt = sqrt(pi) * Gamma((d-1)/2) / Gamma(d/2)."""
    return math.exp(
        0.5 * math.log(math.pi)
        + math.lgamma((d - 1) / 2.0)
        - math.lgamma(d / 2.0)
    )


def cap_measure(d: int, r: float) -> float:
    """Normalized surface measure of a geodesic cap of radius r on S^{d-1}.

    Closed forms for d=2 (r/pi) and d=3 ((1-cos r)/2); adaptive quadrature
    of the sin-power integrand otherwise, absolute accuracy 1e-12.
    """
    _check_dimension(d)
    if not 0.0 <= r <= math.pi:
        raise ValueError(f"cap radius must lie in [0, pi], got {r}")
    if d == 2:
        return r / math.pi
    if d == 3:
        return 0.5 * (1.0 - math.cos(r))
    total = _sin_power_total(d)
    # Symmetry about pi/2 keeps the quadrature interval short and the
    # integrand single-signed.
    if r > math.pi / 2:
        return 1.0 - cap_measure(d, math.pi - r)
    val, _ = integrate.quad(
        lambda t: math.sin(t) ** (d - 2), 0.0, r, epsabs=1e-14, epsrel=1e-13
    )
    return min(val / total, 1.0)


def cap_radius_for_measure(d: int, m: float) -> float:
    """Invert cap_measure in its radius argument.

    Returns r with |cap_measure(d, r) - m| <= 1e-12. Bracketed Brent on
    [0, pi]; for m <= 1/2 the result satisfies r <= pi/2.
    """
    _check_dimension(d)
    if not 0.0 < m < 1.0:
        raise ValueError(f"cap measure must lie in (0, 1), got {m}")
    if d == 2:
        return math.pi * m
    if d == 3:
        return math.acos(1.0 - 2.0 * m)
    r = optimize.brentq(
        lambda t: cap_measure(d, t) - m,
        0.0,
        math.pi,
        xtol=1e-15,
        rtol=8.9e-16,
        maxiter=200,
    )
    if abs(cap_measure(d, r) - m) > MEASURE_TOL:
        # Unreachable for the monotone integrand; kept as a hard guard.
        raise RuntimeError(f"radius solver failed to reach tolerance for d={d}, m={m}")
    return r


def sample_uniform_sphere(
    d: int, rng: np.random.Generator, count: int | None = None
) -> np.ndarray:
    """Uniform point(s) on S^{d-1}: normalize a vector of d iid Gaussians.

    Returns shape (d,) when count is None, else (count, d).
    """
    _check_dimension(d)
    n = 1 if count is None else int(count)
    if n < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    x = rng.standard_normal((n, d))
    norms = np.linalg.norm(x, axis=1)
    bad = norms < 1e-12
    while bad.any():  # probability ~0, but keeps the postcondition exact
        x[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(x, axis=1)
        bad = norms < 1e-12
    x /= norms[:, None]
    return x[0] if count is None else x


def geodesic_distance(x: np.ndarray, y: np.ndarray) -> float:
    """Geodesic (great-circle) distance between unit vectors, in [0, pi]."""
    # Clamp before arccos: rounding can push |<x,y>| past 1 for (anti)parallel
    # inputs and boundary caps at r = pi/2.
    return float(np.arccos(np.clip(np.dot(x, y), -1.0, 1.0)))


@dataclass(frozen=True)
class Cap:
    """Closed geodesic cap: all points within `radius` of `center`."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", c)
        if abs(np.linalg.norm(c) - 1.0) > 1e-12:
            raise ValueError("cap center must be a unit vector")
        if not 0.0 < self.radius <= math.pi:
            raise ValueError(f"cap radius must lie in (0, pi], got {self.radius}")

    def contains(self, point: np.ndarray) -> bool:
        # closed cap; 1e-12 slack keeps exact-boundary points in despite
        # arccos rounding
        dist = geodesic_distance(self.center, np.asarray(point, dtype=float))
        return dist <= self.radius + 1e-12


def caps_intersect(c1: Cap, c2: Cap) -> bool:
    """Closed caps intersect iff their centers are within the radius sum.

    Tangent caps count as intersecting; the 1e-12 slack makes the closed
    convention robust to rounding in the distance computation.
    """
    return geodesic_distance(c1.center, c2.center) <= c1.radius + c2.radius + 1e-12


@dataclass(frozen=True)
class ModelParams:
    """The covering model: N caps on S^{d-1}, each of measure 1/N.

    r_N is derived from (d, N) so that cap_measure(d, r_N) = 1/N within
    1e-12. For N >= 2 this gives 0 < r_N <= pi/2; N=1 is the degenerate
    full-sphere cap (r_1 = pi), accepted so drivers can exercise the
    trivial covering.
    """

    d: int
    N: int
    r_N: float = field(init=False)

    def __post_init__(self):
        _check_dimension(self.d)
        if not isinstance(self.N, (int, np.integer)) or self.N < 1:
            raise ValueError(f"cap count N must be an integer >= 1, got {self.N!r}")
        r = math.pi if self.N == 1 else cap_radius_for_measure(self.d, 1.0 / self.N)
        object.__setattr__(self, "r_N", r)

    @property
    def cap_measure_value(self) -> float:
        return 1.0 / self.N
