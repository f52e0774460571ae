"""Scenario runners turning scaling-limit predictions into desk-scale
statistical checks with structured reports.

Each runner is a pure function of its ExperimentSpec (timing aside): replica
seeds derive from the root seed, replicas can run in parallel processes, and
ladder arms (different gamma or xi at one replica) share the replica's field,
which both matches the coupled statements being probed and suppresses
replica noise in the comparisons.

Verdicts are three-valued: exact identities and oracle equalities report
pass/fail; sampling-based checks report pass/statistical-warn so a flaky
desk-scale check can never masquerade as an exact one.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .errors import DataError
from .estimate import (
    SampleSet,
    fit_scaling_exponent,
    ks_critical,
    ks_statistic,
    map_replicas,
    quantile_estimate,
    xi_of_gamma,
)
from .field import Field, GridSpec, add_function, circle_average, constant_field
from .metric import (
    AnnulusSpec,
    DistanceResult,
    _MaskedGraph,
    across_annulus,
    around_annulus,
    build_weighted_grid,
    crossing_length,
    distance,
    path_length,
    witnesses_intersect,
)
from .store import cached_field, derive_seed

PASS, FAIL, WARN = "pass", "fail", "statistical-warn"

KINDS = (
    "continuity",
    "euclidean_limit",
    "exponent_scan",
    "xi_infty",
    "annulus_scaling",
    "weyl_check",
    "invariance_check",
)

_STATISTICAL = {"continuity", "euclidean_limit", "exponent_scan", "xi_infty",
                "annulus_scaling", "invariance_check"}

# max over directions of (octile length / Euclidean length): the maximizer
# of (t*(sqrt(2)-1) + 1)/sqrt(1 + t^2) is t = sqrt(2)-1, giving ~1.08239
OCTILE_RATIO = math.sqrt(4.0 - 2.0 * math.sqrt(2.0))


@dataclass
class ExperimentSpec:
    """What to run: a kind, its parameters, the grid, and the seed."""

    kind: str
    parameters: dict
    root_seed: int
    grid: GridSpec
    replicas: int
    workers: int = dc_field(default=1, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown experiment kind {self.kind!r} (accepted: {KINDS})")
        if self.kind in _STATISTICAL and not self._synthetic() and self.replicas < 16:
            raise DataError(f"{self.kind} needs >= 16 replicas, got {self.replicas}")

    def _synthetic(self) -> bool:
        return (self.parameters.get("field", "sample") == "const"
                or "synthetic_powerlaw" in self.parameters)

    def const_value(self) -> float | None:
        if self.parameters.get("field", "sample") == "const":
            return float(self.parameters.get("c", 0.0))
        return None


@dataclass
class Report:
    """Structured experiment output; serializable via store.write_report."""

    spec: ExperimentSpec
    per_replica: list
    summary: dict
    verdicts: dict
    wall_time: float = 0.0

    def same_results(self, other: "Report") -> bool:
        """Equality with timing excluded."""
        return (self.spec == other.spec
                and self.per_replica == other.per_replica
                and self.summary == other.summary
                and self.verdicts == other.verdicts)

    @property
    def failed(self) -> bool:
        return any(v == FAIL for v in self.verdicts.values())

    @property
    def warned(self) -> bool:
        return any(v == WARN for v in self.verdicts.values())


_REQUIRED = {
    "continuity": ("gammas", "eps"),
    "euclidean_limit": ("gammas", "eps"),
    "exponent_scan": ("xis", "eps_ladder"),
    "xi_infty": ("xis", "eps", "p"),
    "annulus_scaling": ("xi", "radii", "eps"),
    "weyl_check": ("xi", "f", "eps"),
    "invariance_check": ("xi", "shift", "r1", "r2", "eps"),
}


def _validate_parameters(kind: str, params: dict) -> None:
    missing = [k for k in _REQUIRED[kind] if k not in params]
    if missing:
        raise DataError(f"{kind}: missing parameters {missing}")
    if kind == "continuity":
        g = params["gammas"]
        if len(g) < 3 or sorted(g) != list(g):
            raise DataError("continuity needs >= 3 gammas in increasing order")
        if not all(0 < x < 2 for x in g):
            raise DataError("gammas must lie in (0, 2)")
    elif kind == "euclidean_limit":
        g = params["gammas"]
        if len(g) < 2 or any(b >= a for a, b in zip(g, g[1:])):
            raise DataError("euclidean_limit needs a decreasing gamma ladder")
    elif kind == "exponent_scan":
        if len(params["eps_ladder"]) < 3:
            raise DataError("exponent_scan needs >= 3 ladder rungs")
    elif kind == "xi_infty":
        x = params["xis"]
        if any(v < 1 for v in x) or any(b <= a for a, b in zip(x, x[1:])):
            raise DataError("xi_infty needs an increasing ladder with xi >= 1")
        if not 0 < params["p"] < 1:
            raise DataError("p must be in (0, 1)")
    elif kind == "annulus_scaling":
        r = params["radii"]
        if len(r) < 3 or any(b <= a for a, b in zip(r, r[1:])):
            raise DataError("annulus_scaling needs >= 3 increasing radii")
    elif kind == "weyl_check":
        f = params["f"]
        if f not in ("const", "bump"):
            raise DataError(f"weyl_check f must be 'const' or 'bump', got {f!r}")


def _hard(ok: bool) -> str:
    return PASS if ok else FAIL


def _stat(ok: bool) -> str:
    return PASS if ok else WARN


def _replica_seeds(spec: ExperimentSpec) -> list:
    return [derive_seed(spec.root_seed, i) for i in range(spec.replicas)]


def _field_for(grid_tuple, seed, eps, const) -> Field:
    spec = GridSpec(*grid_tuple)
    if const is not None:
        return constant_field(spec, const, eps=eps)
    return cached_field(spec, seed, eps)


def point_distances(grid, source, targets) -> list:
    """Distances from one point to many, sharing a single sweep."""
    spec = grid.spec
    graph = _MaskedGraph(grid, None)
    ns = spec.node_of(source)
    src = int(graph.compact[ns[0] * spec.n + ns[1]])
    dist, pred = _csgraph_dijkstra(graph.csr, directed=True, indices=src,
                                   return_predecessors=True)
    reached = int(np.isfinite(dist).sum())
    results = []
    for t in targets:
        nt = spec.node_of(t)
        tgt = int(graph.compact[nt[0] * spec.n + nt[1]])
        if not np.isfinite(dist[tgt]):
            results.append(DistanceResult(value=math.inf, path=[], relaxations=reached,
                                          reachable=False))
            continue
        chain = [tgt]
        cur = tgt
        while pred[cur] >= 0:
            cur = int(pred[cur])
            chain.append(cur)
        path = [graph.node_ij(c) for c in reversed(chain)]
        results.append(DistanceResult(value=path_length(grid, path), path=path,
                                      relaxations=reached))
    return results


def pair_battery(spec: GridSpec, distances=(0.25, 0.5, 1.0)) -> list:
    """Origin-anchored point pairs at the given separations in two
    orientations (axis and diagonal), snapped to grid nodes."""
    pairs = []
    for d in distances:
        pairs.append(((0.0, 0.0), (d, 0.0), d))
        m = round(d / math.sqrt(2.0) / spec.delta)
        diag = m * spec.delta
        pairs.append(((0.0, 0.0), (diag, diag), diag * math.sqrt(2.0)))
    return pairs


# ---------------------------------------------------------------------------
# continuity in gamma


def _continuity_task(args) -> dict:
    grid_tuple, seed, eps, gammas, const = args
    fld = _field_for(grid_tuple, seed, eps, const)
    rec = {"seed_hex": f"{seed:016x}"}
    for g in gammas:
        grid = build_weighted_grid(fld, xi_of_gamma(g))
        rec[f"d01_g{g:g}"] = distance(grid, (0.0, 0.0), (1.0, 0.0)).value
    return rec


def run_continuity(gammas, spec: ExperimentSpec) -> Report:
    """Distributional continuity of the normalized point metric along a
    gamma ladder: the KS distance between neighbouring arms should not
    exceed the KS distance between the extreme arms."""
    spec = _merged(spec, "continuity", gammas=list(gammas))
    params = spec.parameters
    t0 = time.perf_counter()
    gammas = params["gammas"]
    seeds = _replica_seeds(spec)
    tasks = [(_gt(spec.grid), s, params["eps"], gammas, spec.const_value())
             for s in seeds]
    records = map_replicas(_continuity_task, tasks, spec.workers)
    per_replica = [{"replica": i, **rec} for i, rec in enumerate(records)]
    arms = {}
    for g in gammas:
        vals = np.array([rec[f"d01_g{g:g}"] for rec in records])
        beta = float(np.median(vals))
        arms[g] = SampleSet(values=vals / beta, seeds=seeds,
                            descriptor=f"d01_hat:g={g:g}")
    k = len(gammas)
    ks = [[0.0] * k for _ in range(k)]
    for i in range(k):
        for j in range(i + 1, k):
            ks[i][j] = ks[j][i] = ks_statistic(arms[gammas[i]], arms[gammas[j]])
    adjacent_ok = all(ks[i][i + 1] <= ks[0][k - 1] for i in range(k - 1))
    summary = {
        "gammas": list(gammas),
        "xis": [xi_of_gamma(g) for g in gammas],
        "betas": [float(np.median([rec[f"d01_g{g:g}"] for rec in records]))
                  for g in gammas],
        "ks_matrix": ks,
        "ks_extreme": ks[0][k - 1],
        "sample_size": spec.replicas,
        "significance": "ordering check, no level",
        "synthetic": spec._synthetic(),
    }
    verdicts = {"ks_ordering": _stat(adjacent_ok)}
    return Report(spec=spec, per_replica=per_replica, summary=summary,
                  verdicts=verdicts, wall_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# gamma -> 0 Euclidean limit


def _euclid_task(args) -> dict:
    grid_tuple, seed, eps, gammas, distances, const = args
    gspec = GridSpec(*grid_tuple)
    fld = _field_for(grid_tuple, seed, eps, const)
    pairs = pair_battery(gspec, distances)
    targets = [p[1] for p in pairs] + [(1.0, 0.0)]
    rec = {"seed_hex": f"{seed:016x}"}
    for g in gammas:
        grid = build_weighted_grid(fld, xi_of_gamma(g))
        res = point_distances(grid, (0.0, 0.0), targets)
        rec[f"d01_g{g:g}"] = res[-1].value
        for idx, (_, _, true_d) in enumerate(pairs):
            rec[f"pair{idx}_g{g:g}"] = res[idx].value / true_d
    return rec


def run_euclidean_limit(gammas, spec: ExperimentSpec) -> Report:
    """Ratios of normalized distances to Euclidean separations along a
    decreasing gamma ladder: their spread should shrink and the median
    should approach 1."""
    spec = _merged(spec, "euclidean_limit", gammas=list(gammas))
    params = spec.parameters
    t0 = time.perf_counter()
    gammas = params["gammas"]
    distances = tuple(params.get("distances", (0.25, 0.5, 1.0)))
    n_pairs = 2 * len(distances)
    seeds = _replica_seeds(spec)
    tasks = [(_gt(spec.grid), s, params["eps"], gammas, distances, spec.const_value())
             for s in seeds]
    records = map_replicas(_euclid_task, tasks, spec.workers)
    per_replica = [{"replica": i, **rec} for i, rec in enumerate(records)]
    medians, spreads = [], []
    ratio_sets = {}
    for g in gammas:
        beta = float(np.median([rec[f"d01_g{g:g}"] for rec in records]))
        ratios = np.array([rec[f"pair{idx}_g{g:g}"] / beta
                           for rec in records for idx in range(n_pairs)])
        ratio_sets[g] = ratios
        medians.append(float(np.median(ratios)))
        q10, q90 = np.quantile(ratios, [0.1, 0.9])
        spreads.append(float(q90 - q10))
    decreasing = all(b < a for a, b in zip(spreads, spreads[1:]))
    final_ok = 0.8 <= medians[-1] <= 1.25
    summary = {
        "gammas": list(gammas),
        "median_ratio": medians,
        "interdecile_spread": spreads,
        "pairs": n_pairs,
        "sample_size": spec.replicas * n_pairs,
        "significance": "monotone spread + terminal enclosure [0.8, 1.25]",
        "synthetic": spec._synthetic(),
    }
    verdicts = {
        "spread_decreasing": _stat(decreasing),
        "terminal_median_ratio": _stat(final_ok),
    }
    if spec.const_value() is not None:
        # the field factor is global: every ratio must collapse to one value
        flat_ok = all(
            np.allclose(r, r[0], rtol=1e-12, atol=0.0) for r in ratio_sets.values()
        )
        summary["ratio_uniformity_dev"] = max(
            float(np.max(np.abs(r - r[0]))) for r in ratio_sets.values()
        )
        verdicts["constant_field_ratios_uniform"] = _hard(flat_ok)
        if spec.const_value() == 0.0:
            inside = all(
                bool(np.all((r >= 1.0 - 1e-12) & (r <= OCTILE_RATIO + 1e-12)))
                for r in ratio_sets.values()
            )
            summary["ratio_range"] = [
                min(float(r.min()) for r in ratio_sets.values()),
                max(float(r.max()) for r in ratio_sets.values()),
            ]
            verdicts["octile_enclosure"] = _hard(inside)
    return Report(spec=spec, per_replica=per_replica, summary=summary,
                  verdicts=verdicts, wall_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# exponent scan


def _scan_task(args) -> dict:
    grid_tuple, seed, eps_ladder, xis, const = args
    gspec = GridSpec(*grid_tuple)
    rec = {"seed_hex": f"{seed:016x}"}
    for eps in eps_ladder:
        mfld = _field_for(grid_tuple, seed, eps, const)
        for xi in xis:
            grid = build_weighted_grid(mfld, xi)
            rec[f"cross_e{eps:g}_x{xi:g}"] = crossing_length(grid, (0.0, 0.0, 1.0)).value
    return rec


def run_exponent_scan(xis, eps_ladder, spec: ExperimentSpec) -> Report:
    """Normalizer medians across an eps ladder, fitted per temperature.

    The implied exponent (1 - slope)/xi must decrease in xi; a wrong slope
    sign is a hard failure, a miss of the reference window is statistical.
    With the synthetic power-law injection the fit must recover exactly.
    """
    spec = _merged(spec, "exponent_scan", xis=list(xis), eps_ladder=list(eps_ladder))
    params = spec.parameters
    t0 = time.perf_counter()
    xis = list(params["xis"])
    ladder = list(params["eps_ladder"])
    synth = params.get("synthetic_powerlaw")
    if synth is not None:
        a_table = {xi: [(e, e**synth) for e in ladder] for xi in xis}
        per_replica = []
    else:
        seeds = _replica_seeds(spec)
        tasks = [(_gt(spec.grid), s, ladder, xis, spec.const_value()) for s in seeds]
        records = map_replicas(_scan_task, tasks, spec.workers)
        per_replica = [{"replica": i, **rec} for i, rec in enumerate(records)]
        a_table = {
            xi: [(e, float(np.median([rec[f"cross_e{e:g}_x{xi:g}"] for rec in records])))
                 for e in ladder]
            for xi in xis
        }
    fits = {xi: fit_scaling_exponent(a_table[xi]) for xi in xis}
    slopes = {xi: fits[xi].slope for xi in xis}
    q_hat = {xi: (1.0 - slopes[xi]) / xi for xi in xis}
    verdicts = {}
    if len(xis) > 1 and not spec._synthetic():
        qs = [q_hat[xi] for xi in xis]
        verdicts["q_decreasing"] = _stat(all(b < a for a, b in zip(qs, qs[1:])))
    ref_xi = [xi for xi in xis if abs(xi - 0.408248) < 1e-4]
    if ref_xi and not spec._synthetic():
        verdicts["slope_reference_window"] = _stat(abs(slopes[ref_xi[0]] - 1.0 / 6.0) <= 0.08)
    verdicts["slope_sign"] = _hard(all(s > 0 for s in slopes.values()))
    if synth is not None:
        verdicts["synthetic_recovery"] = _hard(
            all(abs(slopes[xi] - synth) <= 1e-12 for xi in xis)
        )
    summary = {
        "xis": xis,
        "eps_ladder": ladder,
        "a_eps": {f"{xi:g}": [[e, a] for e, a in a_table[xi]] for xi in xis},
        "slope": {f"{xi:g}": slopes[xi] for xi in xis},
        "stderr": {f"{xi:g}": fits[xi].stderr for xi in xis},
        "r2": {f"{xi:g}": fits[xi].r2 for xi in xis},
        "q_hat": {f"{xi:g}": q_hat[xi] for xi in xis},
        "sample_size": spec.replicas,
        "significance": "fit windows (see verdicts)",
        "synthetic": spec._synthetic(),
    }
    return Report(spec=spec, per_replica=per_replica, summary=summary,
                  verdicts=verdicts, wall_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# xi -> infinity


def _xi_infty_task(args) -> dict:
    grid_tuple, seed, eps, xis, r1, r2, const = args
    fld = _field_for(grid_tuple, seed, eps, const)
    ann = AnnulusSpec((0.0, 0.0), r1, r2)
    rec = {"seed_hex": f"{seed:016x}"}
    for xi in xis:
        grid = build_weighted_grid(fld, xi)
        around = around_annulus(grid, ann)
        across = across_annulus(grid, ann)
        rec[f"around_x{xi:g}"] = around.value
        rec[f"across_x{xi:g}"] = across.value
        rec[f"witness_x{xi:g}"] = witnesses_intersect(across.path, around.path)
    return rec


def run_xi_infty(xis, spec: ExperimentSpec) -> Report:
    """Tightness proxy for the high-temperature rescaled metric: quantiles of
    (across / alpha)^(1/xi) must stay bounded along the ladder, and every
    across geodesic must meet the separating cycle it is dual to."""
    spec = _merged(spec, "xi_infty", xis=list(xis))
    params = spec.parameters
    t0 = time.perf_counter()
    xis = list(params["xis"])
    r1, r2 = params.get("r1", 1.0), params.get("r2", 2.0)
    seeds = _replica_seeds(spec)
    tasks = [(_gt(spec.grid), s, params["eps"], xis, r1, r2, spec.const_value())
             for s in seeds]
    records = map_replicas(_xi_infty_task, tasks, spec.workers)
    per_replica = [{"replica": i, **rec} for i, rec in enumerate(records)]
    p_level = params["p"]
    summary = {
        "xis": xis, "p": p_level, "r1": r1, "r2": r2,
        "alpha": {}, "iqr": {}, "q05": {}, "q95": {},
        "sample_size": spec.replicas,
        "significance": f"quantile envelope at p={p_level}",
        "synthetic": spec._synthetic(),
    }
    q95s, q05s = [], []
    witness_failures = 0
    for xi in xis:
        around = SampleSet(
            values=np.array([r[f"around_x{xi:g}"] for r in records]),
            seeds=seeds, descriptor=f"around:x={xi:g}")
        alpha = quantile_estimate(around, p_level).point
        rescaled = np.array(
            [(r[f"across_x{xi:g}"] / alpha) ** (1.0 / xi) for r in records])
        q05, q25, q75, q95 = np.quantile(rescaled, [0.05, 0.25, 0.75, 0.95])
        summary["alpha"][f"{xi:g}"] = alpha
        summary["iqr"][f"{xi:g}"] = float(q75 - q25)
        summary["q05"][f"{xi:g}"] = float(q05)
        summary["q95"][f"{xi:g}"] = float(q95)
        q95s.append(float(q95))
        q05s.append(float(q05))
        witness_failures += sum(not r[f"witness_x{xi:g}"] for r in records)
    summary["witness_failures"] = witness_failures
    verdicts = {
        "q95_bounded": _stat(max(q95s) < 10.0 * min(q95s)),
        "q05_positive": _stat(all(q > 0 for q in q05s)),
        "witness_intersection": _hard(witness_failures == 0),
    }
    return Report(spec=spec, per_replica=per_replica, summary=summary,
                  verdicts=verdicts, wall_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# annulus scaling


def _annulus_task(args) -> dict:
    grid_tuple, seed, eps, xi, radii, const = args
    fld = _field_for(grid_tuple, seed, eps, const)
    grid = build_weighted_grid(fld, xi)
    rec = {"seed_hex": f"{seed:016x}"}
    for r in radii:
        rec[f"across_r{r:g}"] = across_annulus(grid, AnnulusSpec((0.0, 0.0), r, 2 * r)).value
    return rec


def run_annulus_scaling(xi, radii, spec: ExperimentSpec) -> Report:
    """Median across-annulus distance regressed on the annulus scale; the
    slope estimates the temperature-times-exponent product."""
    spec = _merged(spec, "annulus_scaling", xi=xi, radii=list(radii))
    params = spec.parameters
    t0 = time.perf_counter()
    xi = params["xi"]
    radii = list(params["radii"])
    seeds = _replica_seeds(spec)
    tasks = [(_gt(spec.grid), s, params["eps"], xi, radii, spec.const_value())
             for s in seeds]
    records = map_replicas(_annulus_task, tasks, spec.workers)
    per_replica = [{"replica": i, **rec} for i, rec in enumerate(records)]
    medians = [[r, float(np.median([rec[f"across_r{r:g}"] for rec in records]))]
               for r in radii]
    fit = fit_scaling_exponent(sorted(medians, key=lambda p: -p[0]))
    verdicts = {}
    if spec.const_value() == 0.0:
        # discrete rasterization bends the unit-weight values by O(delta/r);
        # the admissible slope window follows from the per-rung enclosures
        tol = _zero_field_slope_tolerance(spec.grid, radii)
        verdicts["euclidean_scaling"] = _hard(abs(fit.slope - 1.0) <= tol)
    if abs(xi - 0.408248) < 1e-4 and not spec._synthetic():
        verdicts["slope_reference_window"] = _stat(abs(fit.slope - 5.0 / 6.0) <= 0.1)
    if "expected_xiq" in params:
        tolq = params.get("expected_xiq_tol", 0.15)
        verdicts["scan_consistency"] = _stat(abs(fit.slope - params["expected_xiq"]) <= tolq)
    summary = {
        "xi": xi, "radii": radii,
        "median_across": medians,
        "slope": fit.slope, "stderr": fit.stderr, "r2": fit.r2,
        "sample_size": spec.replicas,
        "significance": "fit windows (see verdicts)",
        "synthetic": spec._synthetic(),
    }
    return Report(spec=spec, per_replica=per_replica, summary=summary,
                  verdicts=verdicts, wall_time=time.perf_counter() - t0)


def _zero_field_slope_tolerance(grid: GridSpec, radii) -> float:
    """Slope window for unit weights: each rung's value sits within
    [r - sqrt(2) delta, octile * (r + sqrt(2) delta)], which bounds how far
    the log-log fit can bend away from slope 1."""
    d = grid.delta * math.sqrt(2.0)
    lo = math.log(radii[0])
    hi = math.log(radii[-1])
    bend = (abs(math.log((radii[0] - d) / radii[0]))
            + math.log(OCTILE_RATIO * (radii[-1] + d) / radii[-1]))
    return bend / (hi - lo)


# ---------------------------------------------------------------------------
# Weyl scaling check


def _bump(params):
    amp = params.get("amp", 1.0)
    sig = params.get("sigma", 0.35)
    cx, cy = params.get("center", (0.0, 0.0))

    def f(x, y):
        return amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sig * sig))

    return f


def _weyl_queries(gspec: GridSpec, seed: int, count: int) -> list:
    """Deterministic battery of point pairs inside the central square."""
    rng = np.random.default_rng(seed)
    lim = min(1.0, gspec.half_width - 1.2)
    pts = rng.uniform(-lim, lim, size=(count, 4))
    out = []
    for x0, y0, x1, y1 in pts:
        if math.hypot(x1 - x0, y1 - y0) < 8 * gspec.delta:
            x1 = x0 + 10 * gspec.delta
        out.append(((x0, y0), (x1, y1)))
    return out


def _weyl_task(args) -> dict:
    grid_tuple, seed, eps, xi, fkind, fparams, n_queries, const = args
    gspec = GridSpec(*grid_tuple)
    fld = _field_for(grid_tuple, seed, eps, const)
    if fkind == "const":
        c = fparams.get("c", 0.7)
        shifted = add_function(fld, lambda x, y: np.full(np.broadcast(x, y).shape, float(c)))
        fmin = fmax = c
    else:
        f = _bump(fparams)
        shifted = add_function(fld, f)
        ax = gspec.axis()
        fv = f(ax[:, None], ax[None, :])
        fmin, fmax = float(np.min(fv)), float(np.max(fv))
    g0 = build_weighted_grid(fld, xi)
    g1 = build_weighted_grid(shifted, xi)
    rec = {"seed_hex": f"{seed:016x}", "fmin": fmin, "fmax": fmax}
    queries = _weyl_queries(gspec, derive_seed(seed, 0xF), n_queries)
    base, moved = [], []
    for a, b in queries:
        base.append(distance(g0, a, b).value)
        moved.append(distance(g1, a, b).value)
    ann = AnnulusSpec((0.0, 0.0), 0.25, 0.5)
    functionals = [(across_annulus, ann), (around_annulus, ann)]
    if gspec.half_width > 1.1:
        functionals.append((crossing_length, (0.0, 0.0, 1.0)))
    for fn, q in functionals:
        base.append(fn(g0, q).value)
        moved.append(fn(g1, q).value)
    rec["base"] = base
    rec["shifted"] = moved
    return rec


def run_weyl_check(xi, f, spec: ExperimentSpec) -> Report:
    """Adding a function to the field scales distances.

    For constant shifts the scaling is an exact identity on the discrete
    graph (1e-12 relative); for a smooth bump only the two-sided bound
    exp(xi*min f) <= shifted/base <= exp(xi*max f) is literally true.
    """
    spec = _merged(spec, "weyl_check", xi=xi, f=f)
    params = spec.parameters
    t0 = time.perf_counter()
    xi = params["xi"]
    fkind = params["f"]
    n_queries = int(params.get("n_queries", 13))
    seeds = _replica_seeds(spec)
    tasks = [(_gt(spec.grid), s, params["eps"], xi, fkind, params, n_queries,
              spec.const_value()) for s in seeds]
    records = map_replicas(_weyl_task, tasks, spec.workers)
    per_replica = []
    worst = 0.0
    ok = True
    lo_margin = math.inf
    for i, rec in enumerate(records):
        base = np.array(rec["base"])
        moved = np.array(rec["shifted"])
        if fkind == "const":
            factor = math.exp(xi * params.get("c", 0.7))
            rel = np.abs(moved - factor * base) / np.abs(moved)
            worst = max(worst, float(rel.max()))
            ok &= bool(np.all(rel <= 1e-12))
            per_replica.append({"replica": i, "seed_hex": rec["seed_hex"],
                                "factor": factor,
                                "max_rel_dev": float(rel.max())})
        else:
            lo = math.exp(xi * rec["fmin"]) * base
            hi = math.exp(xi * rec["fmax"]) * base
            slack = 1e-12
            inside = np.all((moved >= lo * (1 - slack)) & (moved <= hi * (1 + slack)))
            ok &= bool(inside)
            lo_margin = min(lo_margin, float(np.min(moved / lo)), float(np.min(hi / moved)))
            per_replica.append({"replica": i, "seed_hex": rec["seed_hex"],
                                "sandwich_ok": bool(inside)})
    if fkind == "const":
        summary = {"factor": math.exp(xi * params.get("c", 0.7)),
                   "max_rel_dev": worst, "queries": len(records[0]["base"]),
                   "synthetic": spec._synthetic()}
        verdicts = {"weyl_exact": _hard(ok)}
    else:
        summary = {"min_margin": lo_margin, "queries": len(records[0]["base"]),
                   "synthetic": spec._synthetic()}
        verdicts = {"weyl_sandwich": _hard(ok)}
    return Report(spec=spec, per_replica=per_replica, summary=summary,
                  verdicts=verdicts, wall_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# translation invariance


def _invariance_task(args) -> dict:
    grid_tuple, seed, eps, xi, shift, r1, r2, const = args
    fld = _field_for(grid_tuple, seed, eps, const)
    grid = build_weighted_grid(fld, xi)
    origin = across_annulus(grid, AnnulusSpec((0.0, 0.0), r1, r2)).value
    moved_raw = across_annulus(grid, AnnulusSpec(tuple(shift), r1, r2)).value
    # re-centered normalization: remove the smoothed-field level difference
    # between the translated center and the origin
    level = (circle_average(fld, tuple(shift), 1.0)
             - circle_average(fld, (0.0, 0.0), 1.0))
    return {
        "seed_hex": f"{seed:016x}",
        "across_origin": origin,
        "across_shifted": moved_raw * math.exp(-xi * level),
    }


def run_invariance_check(xi, spec: ExperimentSpec) -> Report:
    """Across-annulus samples at the origin versus a translated center,
    after re-centering the normalization; compared with a two-sample KS test
    (statistical-warn only, never a hard failure)."""
    spec = _merged(spec, "invariance_check", xi=xi)
    params = spec.parameters
    t0 = time.perf_counter()
    seeds = _replica_seeds(spec)
    tasks = [(_gt(spec.grid), s, params["eps"], params["xi"], params["shift"],
              params["r1"], params["r2"], spec.const_value()) for s in seeds]
    records = map_replicas(_invariance_task, tasks, spec.workers)
    per_replica = [{"replica": i, **rec} for i, rec in enumerate(records)]
    a = SampleSet(values=np.array([r["across_origin"] for r in records]),
                  seeds=seeds, descriptor="across:origin")
    b = SampleSet(values=np.array([r["across_shifted"] for r in records]),
                  seeds=seeds, descriptor="across:shifted")
    ks = ks_statistic(a, b)
    crit = ks_critical(len(a.values), len(b.values), alpha=0.05)
    summary = {
        "ks": ks, "ks_critical": crit, "alpha": 0.05,
        "shift": list(params["shift"]), "r1": params["r1"], "r2": params["r2"],
        "sample_size": spec.replicas,
        "significance": "two-sample KS at alpha=0.05",
        "synthetic": spec._synthetic(),
    }
    verdicts = {"translation_invariance": _stat(ks < crit)}
    return Report(spec=spec, per_replica=per_replica, summary=summary,
                  verdicts=verdicts, wall_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# dispatch


def _gt(grid: GridSpec) -> tuple:
    return (grid.n, grid.half_width, grid.pad_factor)


def _merged(spec: ExperimentSpec, kind: str, **overrides) -> ExperimentSpec:
    """Rebuild the spec with call-site parameters merged in (and validated)."""
    params = dict(spec.parameters)
    params.update(overrides)
    _validate_parameters(kind, params)
    return ExperimentSpec(kind=kind, parameters=params, root_seed=spec.root_seed,
                          grid=spec.grid, replicas=spec.replicas, workers=spec.workers)


def run_experiment(spec: ExperimentSpec) -> Report:
    """Dispatch an ExperimentSpec to its runner."""
    _validate_parameters(spec.kind, spec.parameters)
    params = spec.parameters
    if spec.kind == "continuity":
        return run_continuity(params["gammas"], spec)
    if spec.kind == "euclidean_limit":
        return run_euclidean_limit(params["gammas"], spec)
    if spec.kind == "exponent_scan":
        return run_exponent_scan(params["xis"], params["eps_ladder"], spec)
    if spec.kind == "xi_infty":
        return run_xi_infty(params["xis"], spec)
    if spec.kind == "annulus_scaling":
        return run_annulus_scaling(params["xi"], params["radii"], spec)
    if spec.kind == "weyl_check":
        return run_weyl_check(params["xi"], params["f"], spec)
    if spec.kind == "invariance_check":
        return run_invariance_check(params["xi"], spec)
    raise DataError(f"unknown experiment kind {spec.kind!r}")
