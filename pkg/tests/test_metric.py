import math

import numpy as np
import pytest

from lfpp.errors import GeometryError, RangeError, StateError
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
    distance_sets,
    path_length,
    witnesses_intersect,
)

from oracles import oracle_separating_cycle, oracle_shortest_path

SQRT2 = math.sqrt(2.0)
OCTILE = math.sqrt(4.0 - 2.0 * SQRT2)


def unit_grid(n, half_width, xi=1.0, values=None, pad=2):
    spec = GridSpec(n=n, half_width=half_width, pad_factor=pad)
    vals = np.zeros((n, n)) if values is None else np.asarray(values, float)
    fld = field_from_values(spec, vals, kind="mollified", eps=4 * spec.delta)
    return build_weighted_grid(fld, xi)


class TestOctileConstant:
    def test_worst_case_ratio(self):
        # maximize (t*(sqrt(2)-1) + 1)/sqrt(1 + t^2) over t in [0, 1]
        t = np.linspace(0.0, 1.0, 200001)
        ratios = (t * (SQRT2 - 1.0) + 1.0) / np.sqrt(1.0 + t * t)
        assert ratios.max() == pytest.approx(OCTILE, abs=1e-9)
        assert OCTILE == pytest.approx(1.0824, abs=1e-4)


class TestBuildWeightedGrid:
    def test_zero_field_unit_weights(self, grid128):
        g = build_weighted_grid(constant_field(grid128, 0.0), 0.7)
        assert np.all(g.vertex_weight == 1.0)

    def test_constant_field(self, grid128):
        g = build_weighted_grid(constant_field(grid128, 1.5), 0.5)
        assert np.allclose(g.vertex_weight, math.exp(0.75), rtol=1e-15)

    def test_small_grid_hand_values(self):
        spec = GridSpec(n=4, half_width=2.0, pad_factor=2)
        vals = np.arange(16.0).reshape(4, 4) / 8.0
        g = build_weighted_grid(
            field_from_values(spec, vals, kind="mollified", eps=4.0), 0.3
        )
        assert np.array_equal(g.vertex_weight, np.exp(0.3 * vals))

    def test_raw_field_rejected(self, grid128):
        with pytest.raises(StateError):
            build_weighted_grid(constant_field(grid128, 0.0, kind="raw"), 1.0)

    def test_overflow_guard_names_node(self, grid128):
        vals = np.zeros((128, 128))
        vals[3, 5] = 800.0
        fld = field_from_values(grid128, vals, kind="mollified", eps=0.0625)
        with pytest.raises(RangeError) as err:
            build_weighted_grid(fld, 1.0)
        assert "(3, 5)" in str(err.value)


class TestDistance:
    def test_zero_field_axis_pair_exact(self):
        g = unit_grid(256, 2.0)  # delta = 1/64
        res = distance(g, (0.0, 0.0), (1.0, 0.0))
        assert res.value == 1.0
        assert res.path[0] == (128, 128) and res.path[-1] == (192, 128)

    def test_constant_field_scales(self):
        g0 = unit_grid(128, 2.0, xi=0.7)
        spec = g0.spec
        c = 1.1
        g1 = build_weighted_grid(
            field_from_values(spec, np.full((128, 128), c), kind="mollified",
                              eps=4 * spec.delta), 0.7)
        a, b = (0.0, 0.0), (0.75, -0.5)
        r0 = distance(g0, a, b)
        r1 = distance(g1, a, b)
        assert r1.value == pytest.approx(math.exp(0.7 * c) * r0.value, rel=1e-12)

    def test_matches_enumeration_on_random_5x5(self):
        rng = np.random.default_rng(42)
        for _ in range(6):
            spec = GridSpec(n=5, half_width=2.5, pad_factor=2)
            vals = rng.normal(0, 0.7, (5, 5))
            g = build_weighted_grid(
                field_from_values(spec, vals, kind="mollified", eps=2.0), 0.8)
            res = distance(g, spec.coord_of(0, 0), spec.coord_of(4, 3))
            oracle = oracle_shortest_path(
                g.vertex_weight, spec.delta, [(0, 0)], {(4, 3)},
                np.ones((5, 5), bool))
            assert res.value == pytest.approx(oracle, abs=1e-12)

    def test_path_length_matches_value(self):
        g = unit_grid(64, 2.0, values=np.random.default_rng(1).normal(0, 0.4, (64, 64)))
        res = distance(g, (-0.8, 0.3), (0.9, -0.6))
        assert path_length(g, res.path) == res.value

    def test_symmetry_bit_equal(self):
        g = unit_grid(64, 2.0, values=np.random.default_rng(2).normal(0, 0.5, (64, 64)))
        rng = np.random.default_rng(3)
        for _ in range(20):
            a, b = rng.uniform(-1.5, 1.5, (2, 2))
            assert distance(g, a, b).value == distance(g, b, a).value

    def test_triangle_inequality(self):
        g = unit_grid(64, 2.0, values=np.random.default_rng(4).normal(0, 0.5, (64, 64)))
        rng = np.random.default_rng(5)
        for _ in range(30):
            a, b, c = rng.uniform(-1.5, 1.5, (3, 2))
            dab = distance(g, a, b).value
            dbc = distance(g, b, c).value
            dac = distance(g, a, c).value
            assert dac <= dab + dbc + 1e-9

    def test_identity(self):
        g = unit_grid(64, 2.0)
        assert distance(g, (0.3, 0.3), (0.3, 0.3)).value == 0.0

    def test_masked_out_endpoint(self):
        g = unit_grid(64, 2.0)
        mask = np.zeros((64, 64), bool)
        mask[10:20, 10:20] = True
        with pytest.raises(GeometryError):
            distance(g, (0.0, 0.0), (1.0, 1.0), mask=mask)

    def test_disconnected_mask_unreachable(self):
        g = unit_grid(64, 2.0)
        mask = np.zeros((64, 64), bool)
        mask[5:10, 5:10] = True
        mask[50:55, 50:55] = True
        a = g.spec.coord_of(7, 7)
        b = g.spec.coord_of(52, 52)
        res = distance(g, a, b, mask=mask)
        assert not res.reachable and res.value == math.inf and res.path == []

    def test_mask_monotonicity(self):
        g = unit_grid(64, 2.0, values=np.random.default_rng(6).normal(0, 0.5, (64, 64)))
        small = np.zeros((64, 64), bool)
        small[8:40, 8:40] = True
        big = np.zeros((64, 64), bool)
        big[4:56, 4:56] = True
        a = g.spec.coord_of(10, 10)
        b = g.spec.coord_of(36, 30)
        assert distance(g, a, b, mask=big).value <= distance(g, a, b, mask=small).value


class TestDistanceSets:
    def test_overlapping_sets_zero(self):
        g = unit_grid(64, 2.0)
        pts = [(0.1, 0.1), (0.2, 0.2)]
        assert distance_sets(g, pts, pts).value == 0.0

    def test_circle_to_circle_enclosure(self):
        g = unit_grid(256, 2.0)  # delta = 1/64
        spec = g.spec
        inner = circle_band(spec, (0.0, 0.0), 0.25)
        outer = circle_band(spec, (0.0, 0.0), 0.5)
        value = distance_sets(g, inner, outer).value
        # sharp bounds for banded rasterization (half-width delta/sqrt(2))
        assert 0.25 - SQRT2 * spec.delta <= value <= 0.25 * OCTILE + 4 * spec.delta

    def test_matches_pairwise_min(self):
        rng = np.random.default_rng(7)
        g = unit_grid(32, 2.0, values=rng.normal(0, 0.5, (32, 32)))
        a_pts = [(-1.0, -1.0), (-0.9, 0.4)]
        b_pts = [(1.0, 1.0), (0.8, -0.7), (1.2, 0.1)]
        combined = distance_sets(g, a_pts, b_pts).value
        pairwise = min(distance(g, a, b).value for a in a_pts for b in b_pts)
        assert combined == pytest.approx(pairwise, abs=1e-12)


class TestAcrossAnnulus:
    def test_zero_field_enclosure(self):
        g = unit_grid(256, 2.0)
        res = across_annulus(g, AnnulusSpec((0.0, 0.0), 0.25, 0.5))
        d = g.spec.delta
        assert 0.25 - SQRT2 * d <= res.value <= 0.25 * OCTILE + 4 * d

    def test_constant_field_scaling(self):
        spec = GridSpec(n=128, half_width=2.0, pad_factor=2)
        ann = AnnulusSpec((0.0, 0.0), 0.25, 0.5)
        base = across_annulus(unit_grid(128, 2.0, xi=0.6), ann).value
        c = 0.9
        g1 = build_weighted_grid(
            field_from_values(spec, np.full((128, 128), c), kind="mollified",
                              eps=4 * spec.delta), 0.6)
        assert across_annulus(g1, ann).value == pytest.approx(
            math.exp(0.6 * c) * base, rel=1e-12)

    def test_matches_enumeration(self):
        rng = np.random.default_rng(8)
        spec = GridSpec(n=16, half_width=8.0, pad_factor=2)
        cx, cy = spec.coord_of(8, 8)
        ann = AnnulusSpec((cx, cy), 0.8, 4.8)
        fat = spec.delta / SQRT2
        mask = annulus_region(spec, ann, fatten=fat)
        inner = circle_band(spec, ann.center, ann.r1) & mask
        outer = circle_band(spec, ann.center, ann.r2) & mask
        for _ in range(4):
            vals = rng.normal(0, 0.5, (16, 16))
            g = build_weighted_grid(
                field_from_values(spec, vals, kind="mollified", eps=2.0), 1.0)
            res = across_annulus(g, ann)
            oracle = oracle_shortest_path(
                g.vertex_weight, spec.delta,
                list(zip(*inner.nonzero())), set(zip(*outer.nonzero())), mask)
            assert res.value == pytest.approx(oracle, abs=1e-12)

    def test_nested_superadditivity(self, grid256):
        for seed in range(5):
            fld = mollify(sample_field(grid256, 5150 + seed), 1.0 / 16.0)
            g = build_weighted_grid(fld, 0.6)
            r = 0.3
            whole = across_annulus(g, AnnulusSpec((0, 0), r, 4 * r)).value
            first = across_annulus(g, AnnulusSpec((0, 0), r, 2 * r)).value
            second = across_annulus(g, AnnulusSpec((0, 0), 2 * r, 4 * r)).value
            assert whole >= first + second - 1e-9

    def test_invalid_annulus(self, grid128):
        g = build_weighted_grid(constant_field(grid128, 0.0), 1.0)
        with pytest.raises(GeometryError):
            across_annulus(g, AnnulusSpec((0.0, 0.0), 0.5, 0.25))
        with pytest.raises(GeometryError):
            across_annulus(g, AnnulusSpec((0.0, 0.0), 0.25, 3.0))


class TestAroundAnnulus:
    def test_zero_field_enclosure(self):
        g = unit_grid(512, 2.0, pad=2)  # delta = 1/128
        d = g.spec.delta
        res = around_annulus(g, AnnulusSpec((0.0, 0.0), 0.25, 0.5))
        lo = 2 * math.pi * 0.25 * (1 - 3 * d / 0.25)
        hi = 2 * math.pi * (0.25 + 2 * d) * OCTILE + 4 * d
        assert lo <= res.value <= hi
        assert res.path[0] == res.path[-1]  # closed witness

    def test_constant_field_scaling(self):
        spec = GridSpec(n=128, half_width=2.0, pad_factor=2)
        ann = AnnulusSpec((0.0, 0.0), 0.25, 0.5)
        base = around_annulus(unit_grid(128, 2.0, xi=0.6), ann).value
        c = -0.4
        g1 = build_weighted_grid(
            field_from_values(spec, np.full((128, 128), c), kind="mollified",
                              eps=4 * spec.delta), 0.6)
        assert around_annulus(g1, ann).value == pytest.approx(
            math.exp(0.6 * c) * base, rel=1e-12)

    def test_matches_cycle_enumeration_unit(self):
        spec = GridSpec(n=16, half_width=8.0, pad_factor=2)
        cx, cy = spec.coord_of(8, 8)
        for r1, r2 in ((1.0, 5.0), (0.8, 4.8)):
            ann = AnnulusSpec((cx, cy), r1, r2)
            g = unit_grid(16, 8.0)
            res = around_annulus(g, ann)
            mask = annulus_region(spec, ann, open_annulus=True)
            oracle = oracle_separating_cycle(g.vertex_weight, spec.delta, mask, (8, 8))
            assert res.value == pytest.approx(oracle, abs=1e-12)

    def test_matches_cycle_enumeration_varied(self):
        rng = np.random.default_rng(9)
        spec = GridSpec(n=16, half_width=8.0, pad_factor=2)
        cx, cy = spec.coord_of(8, 8)
        ann = AnnulusSpec((cx, cy), 0.8, 4.8)
        mask = annulus_region(spec, ann, open_annulus=True)
        cases = [rng.normal(0, 0.3, (16, 16)) for _ in range(3)]
        ax = spec.axis()
        cases.append(0.08 * ax[:, None] + 0.05 * ax[None, :])  # smooth gradient
        for vals in cases:
            g = build_weighted_grid(
                field_from_values(spec, vals, kind="mollified", eps=2.0), 1.0)
            res = around_annulus(g, ann)
            oracle = oracle_separating_cycle(g.vertex_weight, spec.delta, mask, (8, 8))
            assert res.value == pytest.approx(oracle, abs=1e-12)

    def test_shrinking_annulus_monotone(self):
        g = unit_grid(256, 2.0,
                      values=np.random.default_rng(10).normal(0, 0.4, (256, 256)))
        wide = around_annulus(g, AnnulusSpec((0.0, 0.0), 0.2, 0.6)).value
        narrow = around_annulus(g, AnnulusSpec((0.0, 0.0), 0.3, 0.5)).value
        assert narrow >= wide - 1e-12

    def test_too_thin(self, grid128):
        g = build_weighted_grid(constant_field(grid128, 0.0), 1.0)
        with pytest.raises(GeometryError):
            around_annulus(g, AnnulusSpec((0.0, 0.0), 0.25, 0.27))


class TestCrossing:
    def test_zero_field_unit_square(self):
        g = unit_grid(256, 2.0)
        assert crossing_length(g, (0.0, 0.0, 1.0)).value == 1.0

    def test_constant_field(self):
        spec = GridSpec(n=128, half_width=2.0, pad_factor=2)
        c = 0.8
        g = build_weighted_grid(
            field_from_values(spec, np.full((128, 128), c), kind="mollified",
                              eps=4 * spec.delta), 1.0)
        assert crossing_length(g, (0.0, 0.0, 1.0)).value == pytest.approx(
            math.exp(c), rel=1e-12)

    def test_matches_enumeration_6x6(self):
        rng = np.random.default_rng(11)
        spec = GridSpec(n=6, half_width=3.0, pad_factor=2)  # delta = 1
        for _ in range(3):
            vals = rng.normal(0, 0.6, (6, 6))
            g = build_weighted_grid(
                field_from_values(spec, vals, kind="mollified", eps=2.0), 0.8)
            x0, y0 = spec.coord_of(0, 0)
            side = 5.0  # all 36 nodes
            res = crossing_length(g, (x0, y0, side))
            left = {(0, j) for j in range(6)}
            right = {(5, j) for j in range(6)}
            oracle = oracle_shortest_path(
                g.vertex_weight, spec.delta, sorted(left), right,
                np.ones((6, 6), bool))
            assert res.value == pytest.approx(oracle, abs=1e-12)

    def test_unresolvable_square(self, grid128):
        g = build_weighted_grid(constant_field(grid128, 0.0), 1.0)
        with pytest.raises(GeometryError):
            crossing_length(g, (0.0, 0.0, grid128.delta))


class TestDuality:
    def test_across_meets_around(self, grid256):
        ann = AnnulusSpec((0.0, 0.0), 0.25, 0.5)
        for seed in range(8):
            fld = mollify(sample_field(grid256, 37000 + seed), 1.0 / 16.0)
            g = build_weighted_grid(fld, 0.8)
            acr = across_annulus(g, ann)
            arn = around_annulus(g, ann)
            assert witnesses_intersect(acr.path, arn.path)


class TestRotation:
    def test_quarter_turn_relabels_exactly(self):
        rng = np.random.default_rng(13)
        n = 64
        spec = GridSpec(n=n, half_width=2.0, pad_factor=2)
        vals = rng.normal(0, 0.5, (n, n))
        g = build_weighted_grid(
            field_from_values(spec, vals, kind="mollified", eps=4 * spec.delta), 0.9)
        # np.rot90 with axes (1, 0) relabels node (a, b) to (b, n-1-a); a
        # quarter turn of the index lattice preserves axis/diagonal steps,
        # so rotating the query geometry in lockstep relabels the geodesic
        rot = np.rot90(vals, k=1, axes=(1, 0))
        g_rot = build_weighted_grid(
            field_from_values(spec, rot, kind="mollified", eps=4 * spec.delta), 0.9)
        a, b = (0.75, 0.25), (-0.5, 0.625)

        def rot_pt(p):
            i, j = spec.node_of(p)
            return spec.coord_of(j, n - 1 - i)

        r0 = distance(g, a, b)
        r1 = distance(g_rot, rot_pt(a), rot_pt(b))
        assert r0.value == r1.value
