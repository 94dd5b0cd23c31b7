"""Covered volume of a cap union, exactly (d=2) or by Monte Carlo (d>=3),
plus replacement differences on recombinations of three independent copies.

The d=2 evaluator represents caps as angular intervals, splits intervals
crossing 0/2pi, and merges them with one linear sweep over sorted starts;
the result is exact up to floating-point rounding. For d >= 3 a point is
covered iff its inner product with some center reaches cos(r_N); the hot
loop runs either through a compiled z-window scan (d=3) or through batched
chunked matmuls (general d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .sphere import ModelParams, sample_uniform_sphere

TWO_PI = 2.0 * math.pi

# selector tags for ReplacementScheme
BASE, PRIMED, TILDE = 0, 1, 2

__all__ = [
    "BASE",
    "PRIMED",
    "TILDE",
    "CapConfiguration",
    "ReplacementScheme",
    "CoverageValue",
    "covered_volume_exact_d2",
    "covered_volume_mc",
    "make_common_points_volume_fn",
    "delta1",
    "delta12",
    "replacement_difference",
]


@dataclass(frozen=True)
class CapConfiguration:
    """One realization (X_1, ..., X_N) of the N cap centers."""

    params: ModelParams
    centers: np.ndarray  # shape (N, d), rows unit-norm

    def __post_init__(self):
        c = np.ascontiguousarray(self.centers, dtype=float)
        object.__setattr__(self, "centers", c)
        if c.shape != (self.params.N, self.params.d):
            raise ValueError(
                f"centers must have shape ({self.params.N}, {self.params.d}), got {c.shape}"
            )
        norms = np.einsum("ij,ij->i", c, c)
        if np.max(np.abs(norms - 1.0)) > 1e-10:
            raise ValueError("every cap center must be a unit vector")

    @classmethod
    def sample(cls, params: ModelParams, rng: np.random.Generator) -> "CapConfiguration":
        return cls(params, sample_uniform_sphere(params.d, rng, params.N))

    def angles(self) -> np.ndarray:
        """Center angles in [0, 2pi) for d=2 configurations."""
        if self.params.d != 2:
            raise ValueError("angles are defined only for d=2")
        return np.mod(np.arctan2(self.centers[:, 1], self.centers[:, 0]), TWO_PI)

    def with_replaced(self, indices: Sequence[int], points: np.ndarray) -> "CapConfiguration":
        """Copy of the configuration with centers at `indices` overwritten."""
        new = self.centers.copy()
        new[list(indices)] = points
        return CapConfiguration(self.params, new)


@dataclass(frozen=True)
class CoverageValue:
    """A covered-volume evaluation V = sigma(union of caps)."""

    value: float
    kind: str  # "exact" | "monte-carlo"
    mc_points: int = 0
    mc_hits: int = 0

    def __post_init__(self):
        if self.kind not in ("exact", "monte-carlo"):
            raise ValueError(f"unknown evaluation kind {self.kind!r}")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"covered volume must lie in [0, 1], got {self.value}")
        if self.kind == "monte-carlo":
            if self.mc_points <= 0:
                raise ValueError("monte-carlo evaluations need mc_points >= 1")
            if self.mc_hits != round(self.value * self.mc_points):
                raise ValueError("monte-carlo value must equal mc_hits / mc_points")


def _merged_arc_length(starts: np.ndarray, ends: np.ndarray) -> float:
    """Total length of a union of [start, end] segments inside [0, 2pi]."""
    order = np.argsort(starts, kind="stable")
    s = starts[order]
    e = ends[order]
    cm = np.maximum.accumulate(e)
    prev = np.concatenate(([0.0], cm[:-1]))
    return float(np.maximum(0.0, e - np.maximum(s, prev)).sum())


def covered_volume_exact_d2(config: CapConfiguration) -> CoverageValue:
    """Exact union measure of equal caps on the circle via interval merging."""
    if config.params.d != 2:
        raise ValueError("exact evaluation is implemented for d=2 only")
    r = config.params.r_N
    theta = config.angles()
    if 2.0 * r >= TWO_PI:  # a single cap already wraps the whole circle
        return CoverageValue(value=1.0, kind="exact")
    length = 2.0 * r
    a = np.mod(theta - r, TWO_PI)
    b = a + length
    wrap = b > TWO_PI
    # split wraparound intervals so merging is a single sweep
    starts = np.concatenate((a, np.zeros(int(wrap.sum()))))
    ends = np.concatenate((np.minimum(b, TWO_PI), b[wrap] - TWO_PI))
    covered = _merged_arc_length(starts, ends)
    value = min(max(covered / TWO_PI, 0.0), 1.0)
    return CoverageValue(value=value, kind="exact")


# ---------------------------------------------------------------------------
# Monte Carlo membership counting
# ---------------------------------------------------------------------------

_D3_KERNEL = None


def _get_d3_kernel():
    """Compile (once) the z-window membership counter for d=3."""
    global _D3_KERNEL
    if _D3_KERNEL is None:
        from numba import njit

        @njit(nogil=True, cache=True)
        def count_hits_d3(pts, centers, zs, cos_r, dz):  # pragma: no cover
            hits = 0
            n = zs.shape[0]
            for i in range(pts.shape[0]):
                x = pts[i, 0]
                y = pts[i, 1]
                z = pts[i, 2]
                lo = np.searchsorted(zs, z - dz)
                for j in range(lo, n):
                    if zs[j] > z + dz:
                        break
                    if x * centers[j, 0] + y * centers[j, 1] + z * centers[j, 2] >= cos_r:
                        hits += 1
                        break
            return hits

        _D3_KERNEL = count_hits_d3
    return _D3_KERNEL


def _count_hits_d3(points: np.ndarray, centers: np.ndarray, radius: float) -> int:
    """d=3 hit count. Centers sorted by z; only caps with |z_p - z_c| within
    the chord length 2 sin(r/2) can contain a point, which prunes the scan
    to an O(sqrt(N)) window without changing any membership decision."""
    order = np.argsort(centers[:, 2], kind="stable")
    cen = np.ascontiguousarray(centers[order])
    zs = np.ascontiguousarray(cen[:, 2])
    cos_r = math.cos(radius)
    dz = 2.0 * math.sin(min(radius, math.pi) / 2.0) + 1e-12
    kernel = _get_d3_kernel()
    return int(kernel(np.ascontiguousarray(points), cen, zs, cos_r, dz))


def _count_hits_matmul(points: np.ndarray, centers: np.ndarray, radius: float) -> int:
    """Chunked batched inner products; works for every d >= 2."""
    cos_r = math.cos(radius)
    ct = np.ascontiguousarray(centers.T)
    n = centers.shape[0]
    chunk = max(1, int(4_000_000 // max(n, 1)))
    hits = 0
    for lo in range(0, points.shape[0], chunk):
        block = points[lo : lo + chunk]
        hits += int(((block @ ct) >= cos_r).any(axis=1).sum())
    return hits


def _count_hits(points: np.ndarray, centers: np.ndarray, radius: float) -> int:
    if centers.shape[1] == 3:
        return _count_hits_d3(points, centers, radius)
    return _count_hits_matmul(points, centers, radius)


def covered_volume_mc(
    config: CapConfiguration, M: int, rng: np.random.Generator
) -> CoverageValue:
    """Unbiased Monte Carlo estimate of the union measure from M uniform
    points; conditional variance V(1-V)/M given the configuration."""
    if M < 1:
        raise ValueError(f"sample count M must be >= 1, got {M}")
    points = sample_uniform_sphere(config.params.d, rng, M)
    hits = _count_hits(points, config.centers, config.params.r_N)
    return CoverageValue(value=hits / M, kind="monte-carlo", mc_points=M, mc_hits=hits)


def make_common_points_volume_fn(
    params: ModelParams, M: int, rng: np.random.Generator
) -> Callable[[CapConfiguration], CoverageValue]:
    """Evaluator that scores every configuration on ONE shared point set.

    Differences of two evaluations are then exact on the sampled points,
    which is what makes O(1/N) replacement differences measurable under
    Monte Carlo noise.
    """
    if M < 1:
        raise ValueError(f"sample count M must be >= 1, got {M}")
    points = sample_uniform_sphere(params.d, rng, M)

    def volume_fn(config: CapConfiguration) -> CoverageValue:
        if config.params.d != params.d:
            raise ValueError("configuration dimension does not match the point set")
        hits = _count_hits(points, config.centers, config.params.r_N)
        return CoverageValue(value=hits / M, kind="monte-carlo", mc_points=M, mc_hits=hits)

    return volume_fn


# ---------------------------------------------------------------------------
# Recombinations and replacement differences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplacementScheme:
    """Three independent copies (X, X', X~) plus a per-coordinate selector.

    The selector (values in {BASE, PRIMED, TILDE}) defines the recombination
    Z with Z_i drawn from the tagged copy. Coordinate replacements always
    substitute from the primed copy, matching the convention that Z^{i}
    overwrites coordinate i with X'_i.
    """

    base: CapConfiguration
    primed: CapConfiguration
    tilde: CapConfiguration
    selector: np.ndarray

    def __post_init__(self):
        if not (self.base.params == self.primed.params == self.tilde.params):
            raise ValueError("all three configurations must share the same ModelParams")
        sel = np.asarray(self.selector, dtype=np.int8)
        object.__setattr__(self, "selector", sel)
        if sel.shape != (self.base.params.N,):
            raise ValueError(f"selector must have shape ({self.base.params.N},)")
        if not np.isin(sel, (BASE, PRIMED, TILDE)).all():
            raise ValueError("selector entries must be BASE, PRIMED or TILDE")

    @property
    def params(self) -> ModelParams:
        return self.base.params

    @classmethod
    def sample(
        cls,
        params: ModelParams,
        rng: np.random.Generator,
        random_selector: bool = True,
    ) -> "ReplacementScheme":
        """Three fresh independent configurations; selector uniform over the
        3^N recombinations when random_selector, else the canonical Z = X."""
        base = CapConfiguration.sample(params, rng)
        primed = CapConfiguration.sample(params, rng)
        tilde = CapConfiguration.sample(params, rng)
        if random_selector:
            sel = rng.integers(0, 3, size=params.N, dtype=np.int8)
        else:
            sel = np.zeros(params.N, dtype=np.int8)
        return cls(base, primed, tilde, sel)

    def recombined(self) -> CapConfiguration:
        """The recombination Z induced by the selector."""
        stacked = np.stack((self.base.centers, self.primed.centers, self.tilde.centers))
        z = stacked[self.selector, np.arange(self.params.N)]
        return CapConfiguration(self.params, z)

    def recombined_replaced(self, indices: Sequence[int]) -> CapConfiguration:
        """Z with the listed coordinates overwritten from the primed copy."""
        z = self.recombined()
        return z.with_replaced(indices, self.primed.centers[list(indices)])


VolumeFn = Callable[[CapConfiguration], CoverageValue]


def _value(v) -> float:
    return v.value if isinstance(v, CoverageValue) else float(v)


def replacement_difference(scheme: ReplacementScheme, i: int, volume_fn: VolumeFn) -> float:
    """f(Z) - f(Z^{i}): the change from substituting X'_i at coordinate i
    (0-based)."""
    if not 0 <= i < scheme.params.N:
        raise ValueError(f"coordinate index {i} out of range for N={scheme.params.N}")
    z = scheme.recombined()
    zi = scheme.recombined_replaced((i,))
    return _value(volume_fn(z)) - _value(volume_fn(zi))


def delta1(scheme: ReplacementScheme, volume_fn: VolumeFn) -> float:
    """First replacement difference at the first coordinate."""
    return replacement_difference(scheme, 0, volume_fn)


def delta12(scheme: ReplacementScheme, i: int, j: int, volume_fn: VolumeFn) -> float:
    """Second replacement difference
    f(Z) - f(Z^{i}) - f(Z^{j}) + f(Z^{i,j}) at 0-based coordinates i != j."""
    if i == j:
        raise ValueError("second replacement difference needs distinct coordinates")
    n = scheme.params.N
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"coordinate indices ({i}, {j}) out of range for N={n}")
    z = scheme.recombined()
    zi = scheme.recombined_replaced((i,))
    zj = scheme.recombined_replaced((j,))
    zij = scheme.recombined_replaced((i, j))
    return (
        _value(volume_fn(z))
        - _value(volume_fn(zi))
        - _value(volume_fn(zj))
        + _value(volume_fn(zij))
    )
