"""Monte Carlo estimation of normalizing constants, scaling exponents, and
distributional statistics.

All estimators are pure functions of their parameters and a root seed:
replica seeds are derived deterministically, replicas may run in parallel
processes, and results are collected in replica order so the output does not
depend on completion order.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .errors import DataError, DomainError, GeometryError
from .field import Field, GridSpec, constant_field
from .metric import (
    AnnulusSpec,
    around_annulus,
    build_weighted_grid,
    crossing_length,
    distance,
)
from .store import cached_field, derive_seed

GAMMA_MAX = math.sqrt(8.0 / 3.0)
UNIT_SQUARE = (0.0, 0.0, 1.0)


@dataclass
class SampleSet:
    """Replica values of one functional, with their seeds."""

    values: np.ndarray
    seeds: list
    descriptor: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.values) != len(self.seeds):
            raise DataError("values and seeds lengths differ")
        if len(self.values) == 0:
            raise DataError("empty sample set")
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"{self.descriptor}: non-finite sample values")
        if not self.descriptor:
            raise DataError("sample set needs a descriptor")


@dataclass(frozen=True)
class QuantileEstimate:
    """Order-statistic quantile estimate with a distribution-free CI."""

    p: float
    point: float
    ci_lo: float
    ci_hi: float
    confidence: float
    n: int


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares fit of log(value) against log(eps)."""

    slope: float
    intercept: float
    stderr: float
    r2: float
    points: tuple


def quantile_estimate(samples: SampleSet, p: float, confidence: float = 0.95) -> QuantileEstimate:
    """p-quantile of a sample set with a binomial order-statistic CI."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile level must be in (0, 1), got {p}")
    x = np.sort(samples.values)
    n = len(x)
    k = min(max(math.ceil(n * p), 1), n)
    point = float(x[k - 1])
    alpha = 1.0 - confidence
    lo = int(binom.ppf(alpha / 2, n, p))
    hi = int(binom.ppf(1.0 - alpha / 2, n, p)) + 1
    lo = min(max(lo, 1), n)
    hi = min(max(hi, 1), n)
    return QuantileEstimate(
        p=p, point=point,
        ci_lo=float(x[lo - 1]), ci_hi=float(x[hi - 1]),
        confidence=confidence, n=n,
    )


def map_replicas(fn, tasks, workers: int = 1) -> list:
    """Run replica tasks, optionally in parallel, preserving task order."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=1))


def _grid_tuple(grid: GridSpec) -> tuple:
    return (grid.n, grid.half_width, grid.pad_factor)


def _replica_field(grid_tuple, seed, eps, const) -> Field:
    spec = GridSpec(*grid_tuple)
    if const is not None:
        return constant_field(spec, const, eps=eps)
    return cached_field(spec, seed, eps)


def _crossing_task(args) -> float:
    grid_tuple, xi, eps, seed, const = args
    fld = _replica_field(grid_tuple, seed, eps, const)
    return crossing_length(build_weighted_grid(fld, xi), UNIT_SQUARE).value


def _around_task(args) -> float:
    grid_tuple, xi, eps, seed, const, r1, r2 = args
    fld = _replica_field(grid_tuple, seed, eps, const)
    ann = AnnulusSpec((0.0, 0.0), r1, r2)
    return around_annulus(build_weighted_grid(fld, xi), ann).value


def _beta_task(args) -> float:
    grid_tuple, xi, eps, seed, const = args
    fld = _replica_field(grid_tuple, seed, eps, const)
    return distance(build_weighted_grid(fld, xi), (0.0, 0.0), (1.0, 0.0)).value


def _collect(fn, tasks, seeds, descriptor, workers) -> SampleSet:
    try:
        values = map_replicas(fn, tasks, workers)
    except Exception:
        # re-run serially to attribute the failure to a replica
        values = []
        for idx, task in enumerate(tasks):
            try:
                values.append(fn(task))
            except Exception as exc:
                raise type(exc)(f"replica {idx} (seed {seeds[idx]:#x}): {exc}") from exc
    return SampleSet(values=np.array(values), seeds=list(seeds), descriptor=descriptor)


def crossing_samples(xi: float, eps: float, replicas: int, root_seed: int,
                     grid: GridSpec, *, workers: int = 1,
                     const_field_value: float | None = None) -> SampleSet:
    """Unit-square crossing lengths over replicas."""
    seeds = [derive_seed(root_seed, i) for i in range(replicas)]
    tasks = [(_grid_tuple(grid), xi, eps, s, const_field_value) for s in seeds]
    return _collect(_crossing_task, tasks, seeds, f"crossing:eps={eps:g}:xi={xi:g}", workers)


def around_samples(xi: float, eps: float, replicas: int, root_seed: int,
                   grid: GridSpec, *, r1: float = 1.0, r2: float = 2.0,
                   workers: int = 1, const_field_value: float | None = None) -> SampleSet:
    """Around-annulus lengths on A_{r1,r2}(0) over replicas."""
    if grid.half_width < r2 + 3 * grid.delta:
        raise GeometryError(
            f"annulus radius {r2} needs half_width >= {r2} plus margin, got {grid.half_width}"
        )
    seeds = [derive_seed(root_seed, i) for i in range(replicas)]
    tasks = [(_grid_tuple(grid), xi, eps, s, const_field_value, r1, r2) for s in seeds]
    return _collect(_around_task, tasks, seeds,
                    f"around:r1={r1:g}:r2={r2:g}:eps={eps:g}:xi={xi:g}", workers)


def beta_samples(xi: float, eps: float, replicas: int, root_seed: int,
                 grid: GridSpec, *, workers: int = 1,
                 const_field_value: float | None = None) -> SampleSet:
    """Distances from the origin to (1, 0) over replicas."""
    seeds = [derive_seed(root_seed, i) for i in range(replicas)]
    tasks = [(_grid_tuple(grid), xi, eps, s, const_field_value) for s in seeds]
    return _collect(_beta_task, tasks, seeds, f"point:eps={eps:g}:xi={xi:g}", workers)


def estimate_a_eps(xi: float, eps: float, replicas: int, root_seed: int,
                   grid: GridSpec, *, workers: int = 1,
                   const_field_value: float | None = None) -> QuantileEstimate:
    """Median unit-square crossing length (the metric normalizer) with CI."""
    if replicas < 16:
        raise DataError(f"need at least 16 replicas, got {replicas}")
    samples = crossing_samples(xi, eps, replicas, root_seed, grid,
                               workers=workers, const_field_value=const_field_value)
    return quantile_estimate(samples, 0.5)


def estimate_alpha(xi: float, p: float, replicas: int, root_seed: int,
                   grid: GridSpec, eps: float, *, workers: int = 1,
                   const_field_value: float | None = None) -> QuantileEstimate:
    """p-quantile of the around-annulus length on A_{1,2}(0) with CI."""
    if replicas < 16:
        raise DataError(f"need at least 16 replicas, got {replicas}")
    samples = around_samples(xi, eps, replicas, root_seed, grid,
                             workers=workers, const_field_value=const_field_value)
    return quantile_estimate(samples, p)


def estimate_beta(replicas: int, root_seed: int, grid: GridSpec, eps: float, *,
                  xi: float | None = None, gamma: float | None = None,
                  workers: int = 1, const_field_value: float | None = None) -> QuantileEstimate:
    """Median origin-to-(1,0) distance with CI.

    Exactly one of ``xi`` and ``gamma`` must be given; a gamma routes through
    the provable enclosure of the temperature with the midpoint as default.
    """
    if replicas < 16:
        raise DataError(f"need at least 16 replicas, got {replicas}")
    if (xi is None) == (gamma is None):
        raise DataError("give exactly one of xi and gamma")
    if xi is None:
        xi = xi_of_gamma(gamma)
    samples = beta_samples(xi, eps, replicas, root_seed, grid,
                           workers=workers, const_field_value=const_field_value)
    return quantile_estimate(samples, 0.5)


def fit_scaling_exponent(points) -> ExponentFit:
    """OLS of log(value) on log(eps); points are (eps, value) pairs with eps
    strictly decreasing."""
    pts = [(float(e), float(a)) for e, a in points]
    if len(pts) < 3:
        raise DataError(f"need at least 3 points, got {len(pts)}")
    eps = np.array([p[0] for p in pts])
    val = np.array([p[1] for p in pts])
    if np.any(eps <= 0) or np.any(val <= 0):
        raise DataError("eps and values must be positive for a log-log fit")
    if not np.all(np.diff(eps) < 0):
        raise DataError("eps must be strictly decreasing")
    x = np.log(eps)
    y = np.log(val)
    xbar, ybar = x.mean(), y.mean()
    sxx = float(np.sum((x - xbar) ** 2))
    slope = float(np.sum((x - xbar) * (y - ybar)) / sxx)
    intercept = ybar - slope * xbar
    resid = y - (slope * x + intercept)
    ssr = float(np.sum(resid**2))
    sst = float(np.sum((y - ybar) ** 2))
    dof = len(pts) - 2
    stderr = math.sqrt(ssr / dof / sxx) if dof > 0 else 0.0
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    return ExponentFit(slope=slope, intercept=float(intercept), stderr=stderr,
                       r2=r2, points=tuple(zip(x.tolist(), y.tolist())))


def q_subcritical(gamma: float) -> float:
    """2/gamma + gamma/2 on (0, 2]; equals 2 at the critical point."""
    if not 0.0 < gamma <= 2.0:
        raise DomainError(f"gamma must be in (0, 2], got {gamma}")
    return 2.0 / gamma + gamma / 2.0


def d_gamma_upper(gamma: float) -> float:
    """Upper bound 2 + gamma^2/2 + sqrt(2)*gamma for the dimension exponent,
    valid on (0, sqrt(8/3)]."""
    if not 0.0 < gamma <= GAMMA_MAX + 1e-12:
        raise DomainError(f"gamma must be in (0, sqrt(8/3)], got {gamma}")
    return 2.0 + gamma * gamma / 2.0 + math.sqrt(2.0) * gamma


def xi_bounds_of_gamma(gamma: float) -> tuple[float, float]:
    """Provable enclosure (gamma/d_upper, gamma/2) of the temperature
    xi = gamma/d_gamma, using d_gamma in (2, d_upper]."""
    return (gamma / d_gamma_upper(gamma), gamma / 2.0)


def xi_of_gamma(gamma: float) -> float:
    """Default temperature for a gamma: midpoint of the enclosure."""
    lo, hi = xi_bounds_of_gamma(gamma)
    return 0.5 * (lo + hi)


def ks_statistic(a: SampleSet, b: SampleSet) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    xa = np.sort(a.values)
    xb = np.sort(b.values)
    allx = np.concatenate([xa, xb])
    fa = np.searchsorted(xa, allx, side="right") / len(xa)
    fb = np.searchsorted(xb, allx, side="right") / len(xb)
    return float(np.max(np.abs(fa - fb)))


def ks_critical(n: int, m: int, alpha: float = 0.05) -> float:
    """Asymptotic two-sample KS critical value at level alpha."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n + m) / (n * m))
