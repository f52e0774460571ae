"""Acceptance suite: one test per criterion, each printing a verdict line.

Statistical criteria run at pinned root seeds so the suite is reproducible;
tolerances are as specified.  Run with `pytest tests/test_acceptance.py -v -s`.
"""

import math
import subprocess
import sys

import numpy as np
import pytest

from lfpp.estimate import crossing_samples, fit_scaling_exponent
from lfpp.experiments import (
    ExperimentSpec,
    PASS,
    run_continuity,
    run_euclidean_limit,
    run_weyl_check,
    run_xi_infty,
)
from lfpp.field import GridSpec, constant_field, field_from_values, mollify, sample_field
from lfpp.metric import (
    AnnulusSpec,
    across_annulus,
    annulus_region,
    around_annulus,
    build_weighted_grid,
    circle_band,
    crossing_length,
    distance,
)
from lfpp.store import load_field, save_field

from conftest import COV_EPS, COV_PROBES
from oracles import oracle_separating_cycle, oracle_shortest_path

SQRT2 = math.sqrt(2.0)
OCTILE = math.sqrt(4.0 - 2.0 * SQRT2)
WORKERS = 2


def report(criterion: int, status: str, detail: str) -> None:
    print(f"\n[criterion {criterion:2d}] {status} - {detail}")


def test_criterion_1_weyl_scaling_exact():
    """50 random queries: distances over h+c equal exp(xi*c) times distances
    over h to 1e-12 relative."""
    spec = ExperimentSpec(
        kind="weyl_check",
        parameters={"xi": 0.8, "f": "const", "c": 0.7, "eps": 0.0625,
                    "n_queries": 10},
        root_seed=101, grid=GridSpec(n=128, half_width=2.0, pad_factor=4),
        replicas=5, workers=WORKERS)
    rep = run_weyl_check(0.8, "const", spec)
    queries = rep.summary["queries"] * spec.replicas
    assert queries >= 50
    assert rep.verdicts["weyl_exact"] == PASS, rep.summary
    report(1, "PASS", f"{queries} queries, max relative deviation "
                      f"{rep.summary['max_rel_dev']:.2e} <= 1e-12")


def test_criterion_2_oracle_equivalence():
    """distance/crossing/across/around equal exhaustive enumeration exactly
    on fixtures with <= 81 masked vertices."""
    rng = np.random.default_rng(2024)
    checks = 0

    # point-to-point distances on full 5x5 grids
    spec5 = GridSpec(n=5, half_width=2.5, pad_factor=2)
    for vals in [np.zeros((5, 5))] + [rng.normal(0, 0.7, (5, 5)) for _ in range(3)]:
        g = build_weighted_grid(
            field_from_values(spec5, vals, kind="mollified", eps=2.0), 0.8)
        got = distance(g, spec5.coord_of(0, 0), spec5.coord_of(4, 3)).value
        want = oracle_shortest_path(g.vertex_weight, spec5.delta,
                                    [(0, 0)], {(4, 3)}, np.ones((5, 5), bool))
        assert got == pytest.approx(want, abs=1e-12)
        checks += 1

    # left-right crossings on full 6x6 grids
    spec6 = GridSpec(n=6, half_width=3.0, pad_factor=2)
    for vals in [rng.normal(0, 0.6, (6, 6)) for _ in range(3)]:
        g = build_weighted_grid(
            field_from_values(spec6, vals, kind="mollified", eps=2.0), 0.8)
        x0, y0 = spec6.coord_of(0, 0)
        got = crossing_length(g, (x0, y0, 5.0)).value
        want = oracle_shortest_path(
            g.vertex_weight, spec6.delta,
            [(0, j) for j in range(6)], {(5, j) for j in range(6)},
            np.ones((6, 6), bool))
        assert got == pytest.approx(want, abs=1e-12)
        checks += 1

    # across/around on an annulus with 68 masked vertices
    spec16 = GridSpec(n=16, half_width=8.0, pad_factor=2)
    ann = AnnulusSpec(spec16.coord_of(8, 8), 0.8, 4.8)
    fat = spec16.delta / SQRT2
    amask = annulus_region(spec16, ann, fatten=fat)
    omask = annulus_region(spec16, ann, open_annulus=True)
    inner = circle_band(spec16, ann.center, ann.r1) & amask
    outer = circle_band(spec16, ann.center, ann.r2) & amask
    ax = spec16.axis()
    fields = [np.zeros((16, 16))]
    fields += [rng.normal(0, 0.3, (16, 16)) for _ in range(3)]
    fields.append(0.08 * ax[:, None] + 0.05 * ax[None, :])
    for vals in fields:
        g = build_weighted_grid(
            field_from_values(spec16, vals, kind="mollified", eps=2.0), 1.0)
        got = across_annulus(g, ann).value
        want = oracle_shortest_path(
            g.vertex_weight, spec16.delta,
            list(zip(*inner.nonzero())), set(zip(*outer.nonzero())), amask)
        assert got == pytest.approx(want, abs=1e-12)
        got = around_annulus(g, ann).value
        want = oracle_separating_cycle(g.vertex_weight, spec16.delta, omask, (8, 8))
        assert got == pytest.approx(want, abs=1e-12)
        checks += 2
    report(2, "PASS", f"{checks} fixture comparisons, all exact")


def test_criterion_3_zero_field_geometry():
    """Unit-weight distances stay within the octile enclosure of Euclidean."""
    spec = GridSpec(n=256, half_width=2.0, pad_factor=4)
    g = build_weighted_grid(constant_field(spec, 0.0), 1.0)
    rng = np.random.default_rng(3)
    pairs = [((0.0, 0.0), (1.0, 0.0)), ((0.0, 0.0), (1.0, 1.0)),
             ((-0.5, 0.5), (0.5, -0.5)), ((0.0, 0.0), (0.25, 1.0))]
    pairs += [tuple(map(tuple, rng.uniform(-1.2, 1.2, (2, 2)))) for _ in range(8)]
    worst = 1.0
    for a, b in pairs:
        na, nb = spec.node_of(a), spec.node_of(b)
        d = math.dist(spec.coord_of(*na), spec.coord_of(*nb))
        if d < 8 * spec.delta:
            continue
        value = distance(g, a, b).value
        ratio = value / d
        assert 1.0 - 1e-12 <= ratio <= OCTILE + 4 * spec.delta / d, (a, b, ratio)
        worst = max(worst, ratio)
    report(3, "PASS", f"{len(pairs)} pairs, worst ratio {worst:.4f} "
                      f"(bound {OCTILE:.4f} + 4*delta/|z-w|)")


def test_criterion_4_field_statistics(field_statistics):
    """Circle-average increments are Brownian within 20%; the mollified
    covariance tracks log(1/(|x| v eps)) within 1.5."""
    for t, var in field_statistics["increment_var"].items():
        assert abs(var - t) <= 0.2 * t, f"t={t}: var={var}"
    for x in COV_PROBES:
        target = math.log(1.0 / max(x, COV_EPS))
        got = field_statistics["cov"][x]
        assert abs(got - target) <= 1.5, f"|x|={x}: cov={got} target={target}"
    vs = ", ".join(f"Var({t})={v:.3f}" for t, v in field_statistics["increment_var"].items())
    report(4, "PASS", f"200 replicas at n=256: {vs}; covariance within 1.5 of log law")


def test_criterion_5_exponent_recovery():
    """Temperature 0.408248, eps ladder 2^-3..2^-7, n=1024, 64 replicas per
    rung: fitted slope within 1/6 +- 0.08 (statistical; sign is hard)."""
    xi = 0.408248
    ladder = [2**-3, 2**-4, 2**-5, 2**-6, 2**-7]
    grid = GridSpec(n=1024, half_width=2.0, pad_factor=4)
    points = []
    for eps in ladder:
        samples = crossing_samples(xi, eps, 64, 424242, grid, workers=WORKERS)
        points.append((eps, float(np.median(samples.values))))
    fit = fit_scaling_exponent(points)
    assert fit.slope > 0, f"slope sign wrong: {fit.slope}"  # hard failure
    inside = abs(fit.slope - 1.0 / 6.0) <= 0.08
    status = "PASS" if inside else "WARN (statistical)"
    report(5, status, f"slope {fit.slope:.4f} vs 1/6 = 0.1667 +- 0.08, "
                      f"stderr {fit.stderr:.4f}, r2 {fit.r2:.4f}")
    if not inside:
        pytest.xfail("slope outside the statistical window; sign correct")


def test_criterion_6_continuity_proxy():
    """KS(1.0 vs 1.05) < KS(1.0 vs 1.5) with 64 replicas per arm in at least
    9 of 10 root seeds."""
    grid = GridSpec(n=256, half_width=2.0, pad_factor=4)
    wins = 0
    margins = []
    for seed in range(1, 11):
        spec = ExperimentSpec(
            kind="continuity",
            parameters={"gammas": [1.0, 1.05, 1.5], "eps": 0.0625},
            root_seed=seed, grid=grid, replicas=64, workers=WORKERS)
        rep = run_continuity([1.0, 1.05, 1.5], spec)
        ks = rep.summary["ks_matrix"]
        wins += ks[0][1] < ks[0][2]
        margins.append(ks[0][2] - ks[0][1])
    assert wins >= 9, f"only {wins}/10 seeds ordered"
    report(6, "PASS", f"{wins}/10 seeds with KS(1.0,1.05) < KS(1.0,1.5); "
                      f"median margin {np.median(margins):.4f}")


def test_criterion_7_euclidean_limit_proxy():
    """Interdecile spread of normalized ratios strictly decreasing along
    gamma 0.8 -> 0.1 in >= 8 of 10 seeds; terminal median ratio in
    [0.8, 1.25]."""
    grid = GridSpec(n=256, half_width=2.0, pad_factor=4)
    gammas = [0.8, 0.4, 0.2, 0.1]
    decreasing = 0
    terminal_medians = []
    for seed in range(1, 11):
        spec = ExperimentSpec(
            kind="euclidean_limit",
            parameters={"gammas": gammas, "eps": 0.0625},
            root_seed=seed, grid=grid, replicas=64, workers=WORKERS)
        rep = run_euclidean_limit(gammas, spec)
        spreads = rep.summary["interdecile_spread"]
        decreasing += all(b < a for a, b in zip(spreads, spreads[1:]))
        terminal_medians.append(rep.summary["median_ratio"][-1])
    terminal = float(np.median(terminal_medians))
    assert decreasing >= 8, f"only {decreasing}/10 seeds strictly decreasing"
    assert 0.8 <= terminal <= 1.25, terminal
    report(7, "PASS", f"{decreasing}/10 seeds with shrinking spread; "
                      f"terminal median ratio {terminal:.3f} in [0.8, 1.25]")


def test_criterion_8_xi_infty_proxy():
    """Rescaled across-annulus quantiles along xi in {2,4,8} at p=0.9:
    0.95-quantile varies by < 10x and 0.05-quantile stays positive."""
    spec = ExperimentSpec(
        kind="xi_infty",
        parameters={"xis": [2.0, 4.0, 8.0], "eps": 0.0625, "p": 0.9},
        root_seed=77, grid=GridSpec(n=256, half_width=3.0, pad_factor=4),
        replicas=64, workers=WORKERS)
    rep = run_xi_infty([2.0, 4.0, 8.0], spec)
    q95 = [rep.summary["q95"][k] for k in ("2", "4", "8")]
    q05 = [rep.summary["q05"][k] for k in ("2", "4", "8")]
    assert max(q95) < 10.0 * min(q95), q95
    assert all(q > 0 for q in q05), q05
    assert rep.verdicts["witness_intersection"] == PASS
    report(8, "PASS", f"q95 range {min(q95):.4f}..{max(q95):.4f} "
                      f"(ratio {max(q95)/min(q95):.2f} < 10), min q05 {min(q05):.4f} > 0")


def test_criterion_9_metric_axioms():
    """Symmetry, triangle inequality, mask monotonicity, and nested-annulus
    across-additivity over 500 randomized queries."""
    rng = np.random.default_rng(31337)
    spec = GridSpec(n=128, half_width=2.0, pad_factor=4)
    fields = [build_weighted_grid(mollify(sample_field(spec, 640000 + k), 0.0625), 0.7)
              for k in range(4)]

    # 200 triples: symmetry is bit-equal, triangle holds with 1e-9 slack
    for q in range(200):
        g = fields[q % len(fields)]
        a, b, c = rng.uniform(-1.4, 1.4, (3, 2))
        dab = distance(g, a, b).value
        assert distance(g, b, a).value == dab
        dac = distance(g, a, c).value
        dbc = distance(g, b, c).value
        assert dac <= dab + dbc + 1e-9
        assert distance(g, a, a).value == 0.0

    # 150 mask pairs: enlarging the mask never increases the distance
    n = spec.n
    for q in range(150):
        g = fields[q % len(fields)]
        i0, j0 = rng.integers(4, 40, 2)
        h, w = rng.integers(40, 80, 2)
        small = np.zeros((n, n), bool)
        small[i0:min(i0 + h, n - 4), j0:min(j0 + w, n - 4)] = True
        big = np.zeros((n, n), bool)
        big[max(i0 - 4, 0):min(i0 + h + 4, n), max(j0 - 4, 0):min(j0 + w + 4, n)] = True
        ii = np.argwhere(small)
        a = spec.coord_of(*ii[rng.integers(len(ii))])
        b = spec.coord_of(*ii[rng.integers(len(ii))])
        assert distance(g, a, b, mask=big).value <= distance(g, a, b, mask=small).value + 1e-12

    # 150 nested annuli: across(r,4r) >= across(r,2r) + across(2r,4r) - 1e-9
    spec2 = GridSpec(n=256, half_width=2.0, pad_factor=4)
    for q in range(150):
        g = build_weighted_grid(
            mollify(sample_field(spec2, 650000 + q % 8), 1.0 / 16.0), 0.6)
        r = float(rng.uniform(0.22, 0.35))
        whole = across_annulus(g, AnnulusSpec((0, 0), r, 4 * r)).value
        first = across_annulus(g, AnnulusSpec((0, 0), r, 2 * r)).value
        second = across_annulus(g, AnnulusSpec((0, 0), 2 * r, 4 * r)).value
        assert whole >= first + second - 1e-9
    report(9, "PASS", "500 randomized queries: symmetry bit-equal, triangle "
                      "(1e-9), mask monotone, nested across superadditive")


def test_criterion_10_determinism_and_formats(tmp_path):
    """Byte-identical CSV/report outputs across reruns; field cache
    round-trips bit-exactly."""
    outs = []
    for tag in ("a", "b"):
        out_dir = tmp_path / tag
        res = subprocess.run(
            [sys.executable, "-m", "lfpp.cli", "experiment", "--experiment",
             "weyl_check", "--c", "0.7", "--n", "128", "--replicas", "3",
             "--seed", "11", "--workers", "1", "--out", str(out_dir)],
            capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        outs.append(out_dir)
    csv_a = (outs[0] / "weyl_check.csv").read_bytes()
    csv_b = (outs[1] / "weyl_check.csv").read_bytes()
    rep_a = (outs[0] / "weyl_check.report.json").read_bytes()
    rep_b = (outs[1] / "weyl_check.report.json").read_bytes()
    assert csv_a == csv_b and rep_a == rep_b

    spec = GridSpec(n=128, half_width=2.0, pad_factor=4)
    fld = mollify(sample_field(spec, 99), 0.0625)
    save_field(fld, tmp_path / "f.fld")
    back = load_field(tmp_path / "f.fld")
    assert np.array_equal(back.values, fld.values)
    report(10, "PASS", f"CSV {len(csv_a)}B and report {len(rep_a)}B byte-identical; "
                       "cache round-trip bit-exact")
