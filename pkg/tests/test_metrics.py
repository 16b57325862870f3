import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isegeval.errors import EmptyInput, InsufficientSeries, ShapeMismatch
from isegeval.metrics import (
    ConvergenceTarget,
    MetricSeries,
    dice,
    median_curve,
    nauc,
    noi,
    nsd,
    quantile,
    summarize,
    surface_extract,
)


def surface_oracle(mask):
    """Six-neighbour surface by explicit looping."""
    out = set()
    shape = mask.shape
    for idx in np.argwhere(mask):
        i, j, k = (int(x) for x in idx)
        for d in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
            n = (i + d[0], j + d[1], k + d[2])
            if not all(0 <= c < s for c, s in zip(n, shape)) or not mask[n]:
                out.add((i, j, k))
                break
    return out


def nsd_bruteforce(pred, ref, spacing, tau):
    """O(|S_P| * |S_R|) pairwise-distance oracle for the boundary metric."""
    sp = sorted(surface_oracle(pred))
    sr = sorted(surface_oracle(ref))
    if not sp and not sr:
        return 1.0
    if not sp or not sr:
        return 0.0

    def near(points, others):
        hits = 0
        for p in points:
            best = math.inf
            for q in others:
                dx = (p[0] - q[0]) * spacing[0]
                dy = (p[1] - q[1]) * spacing[1]
                dz = (p[2] - q[2]) * spacing[2]
                d = math.sqrt(dx * dx + dy * dy + dz * dz)
                if d < best:
                    best = d
            if best <= tau:
                hits += 1
        return hits

    return (near(sp, sr) + near(sr, sp)) / (len(sp) + len(sr))


def random_mask(rng, shape, p=0.2):
    return rng.random(shape) < p


class TestDice:
    def test_identical(self):
        m = np.zeros((4, 4, 4), dtype=bool)
        m[1:3, 1:3, 1:3] = True
        assert dice(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4, 4), dtype=bool)
        b = np.zeros((4, 4, 4), dtype=bool)
        a[0, 0, 0] = True
        b[3, 3, 3] = True
        assert dice(a, b) == 0.0

    def test_half_overlap(self):
        a = np.zeros((4, 4, 4), dtype=bool)
        b = np.zeros((4, 4, 4), dtype=bool)
        a[0, 0, 0] = a[0, 0, 1] = True
        b[0, 0, 1] = b[0, 0, 2] = True
        assert dice(a, b) == 0.5

    def test_both_empty(self):
        e = np.zeros((2, 2, 2), dtype=bool)
        assert dice(e, e) == 1.0
        assert dice(e, e, empty_value=0.0) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            dice(np.zeros((2, 2, 2), bool), np.zeros((3, 3, 3), bool))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        a, b = random_mask(rng, (6, 6, 6)), random_mask(rng, (6, 6, 6))
        assert dice(a, b) == dice(b, a)


class TestSurfaceExtract:
    def test_solid_cube(self):
        m = np.zeros((5, 5, 5), dtype=bool)
        m[1:4, 1:4, 1:4] = True
        surf = surface_extract(m)
        assert len(surf) == 26  # all but the centre voxel

    def test_single_voxel(self):
        m = np.zeros((3, 3, 3), dtype=bool)
        m[1, 1, 1] = True
        assert [tuple(r) for r in surface_extract(m)] == [(1, 1, 1)]

    def test_empty(self):
        assert surface_extract(np.zeros((3, 3, 3), dtype=bool)).size == 0

    def test_grid_edge_counts_as_surface(self):
        m = np.ones((3, 3, 3), dtype=bool)
        assert len(surface_extract(m)) == 26  # centre is interior

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_matches_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        m = random_mask(rng, (7, 7, 7), 0.3)
        got = {tuple(r) for r in surface_extract(m)}
        assert got == surface_oracle(m)


class TestNsd:
    def test_identical_any_tau(self):
        m = np.zeros((6, 6, 6), dtype=bool)
        m[2:4, 2:4, 2:4] = True
        for tau in (0.0, 1.0, 5.0):
            assert nsd(m, m, (1, 1, 1), tau) == 1.0

    def test_one_empty(self):
        m = np.zeros((4, 4, 4), dtype=bool)
        r = m.copy()
        r[1, 1, 1] = True
        assert nsd(m, r, (1, 1, 1), 1.0) == 0.0
        assert nsd(r, m, (1, 1, 1), 1.0) == 0.0

    def test_both_empty(self):
        e = np.zeros((4, 4, 4), dtype=bool)
        assert nsd(e, e, (1, 1, 1), 1.0) == 1.0

    def test_two_voxels_2mm_apart(self):
        a = np.zeros((5, 5, 5), dtype=bool)
        b = np.zeros((5, 5, 5), dtype=bool)
        a[1, 1, 1] = True
        b[3, 1, 1] = True  # 2 voxels * 1mm
        assert nsd(a, b, (1, 1, 1), 1.0) == 0.0
        assert nsd(a, b, (1, 1, 1), 2.0) == 1.0

    def test_against_bruteforce_anisotropic(self):
        rng = np.random.default_rng(11)
        spacing = (1.0, 1.0, 3.6)
        for _ in range(20):
            a = random_mask(rng, (8, 8, 8), 0.15)
            b = random_mask(rng, (8, 8, 8), 0.15)
            tau = float(rng.uniform(0.0, 6.0))
            assert nsd(a, b, spacing, tau) == pytest.approx(
                nsd_bruteforce(a, b, spacing, tau), abs=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_monotone_in_tau(self, seed):
        rng = np.random.default_rng(seed)
        a = random_mask(rng, (6, 6, 6), 0.2)
        b = random_mask(rng, (6, 6, 6), 0.2)
        spacing = tuple(rng.uniform(0.5, 4.0, 3))
        taus = sorted(rng.uniform(0, 8, 4))
        vals = [nsd(a, b, spacing, t) for t in taus]
        assert all(x <= y for x, y in zip(vals, vals[1:]))


class TestNauc:
    def test_constant(self):
        for v in (0.0, 0.25, 1.0):
            assert nauc([v] * 101) == pytest.approx(v, abs=1e-12)

    def test_linear_ramp_exact(self):
        s = [i / 100 for i in range(101)]
        assert nauc(s) == 0.5

    def test_early_step(self):
        s = [0.0] + [1.0] * 100
        assert nauc(s) == pytest.approx(0.995, abs=1e-12)

    def test_too_short(self):
        with pytest.raises(InsufficientSeries):
            nauc([0.5])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=2, max_size=50))
    def test_bounded_by_series(self, series):
        v = nauc(series)
        assert min(series) - 1e-12 <= v <= max(series) + 1e-12


class TestNoi:
    def test_first_crossing(self):
        s = [0.1, 0.5, 0.8, 0.9]
        assert noi(s, 0.7) == 2

    def test_converged_at_init(self):
        assert noi([0.9, 0.1], 0.7) == 0

    def test_never_reached_sentinel(self):
        assert noi([0.1] * 101, 0.7) == 100
        assert noi([0.1] * 101, 0.7, budget=100) == 100

    def test_monotone_in_target(self):
        rng = np.random.default_rng(5)
        s = np.clip(np.cumsum(rng.uniform(-0.05, 0.1, 50)), 0, 1)
        targets = np.linspace(0, 1, 11)
        vals = [noi(s, t) for t in targets]
        assert all(a <= b for a, b in zip(vals, vals[1:]))


class TestQuantile:
    def test_linear_interpolation(self):
        assert quantile([0.2, 0.4, 0.6, 0.8], 0.25) == pytest.approx(0.35)

    def test_q0_is_min(self):
        assert quantile([3.0, 1.0, 2.0], 0.0) == 1.0

    def test_single_value(self):
        for q in (0.0, 0.3, 1.0):
            assert quantile([0.7], q) == 0.7

    def test_empty(self):
        with pytest.raises(EmptyInput):
            quantile([], 0.5)


def const_series(d, s, n=10):
    return MetricSeries(dice=[d] * (n + 1), nsd=[s] * (n + 1))


class TestSummarize:
    def test_all_converge_at_init(self):
        series = [const_series(0.9, 0.9) for _ in range(3)]
        row = summarize(series, ConvergenceTarget("t", 0.8))
        assert row.nnoi == 0.0
        assert row.nof_pct == 0.0

    def test_all_fail(self):
        series = [const_series(0.1, 0.1) for _ in range(4)]
        row = summarize(series, ConvergenceTarget("t", 0.8))
        assert row.nnoi == 1.0
        assert row.nof_pct == 100.0

    def test_single_sample_reduces_to_pointwise(self):
        n = 10
        rng = np.random.default_rng(2)
        d = np.sort(rng.uniform(0, 1, n + 1))
        s = np.sort(rng.uniform(0, 1, n + 1))
        series = MetricSeries(dice=d, nsd=s)
        row = summarize([series], ConvergenceTarget("t", 0.5))
        assert row.dice_init == d[0]
        assert row.dice_final == d[-1]
        assert row.dice_nauc == nauc(d)
        assert row.nsd_nauc == nauc(s)
        assert row.nnoi == noi(d, 0.5) / n

    def test_majority_failure_pins_nnoi(self):
        ok = const_series(0.9, 0.9)
        bad = const_series(0.1, 0.1)
        row = summarize([ok, bad, bad, bad], ConvergenceTarget("t", 0.8))
        assert row.nnoi == 1.0
        assert row.nof_pct == 75.0

    def test_empty(self):
        with pytest.raises(EmptyInput):
            summarize([], ConvergenceTarget("t", 0.5))

    def test_budget_mismatch(self):
        with pytest.raises(ShapeMismatch):
            summarize([const_series(0.5, 0.5, 10), const_series(0.5, 0.5, 20)],
                      ConvergenceTarget("t", 0.5))


class TestMedianCurve:
    def test_single_sample_identity(self):
        s = const_series(0.4, 0.6)
        out = median_curve([s])
        assert np.array_equal(out.dice, s.dice)
        assert np.array_equal(out.nsd, s.nsd)

    def test_three_constants(self):
        out = median_curve([const_series(0.2, 0.2), const_series(0.5, 0.5),
                            const_series(0.9, 0.9)])
        assert np.all(out.dice == 0.5)

    def test_matches_sort_oracle(self):
        rng = np.random.default_rng(9)
        series = [MetricSeries(dice=rng.uniform(0, 1, 11), nsd=rng.uniform(0, 1, 11))
                  for _ in range(5)]
        out = median_curve(series)
        for t in range(11):
            col = sorted(s.dice[t] for s in series)
            assert out.dice[t] == col[2]  # middle of 5

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatch):
            median_curve([const_series(0.5, 0.5, 10), const_series(0.5, 0.5, 20)])


class TestConvergenceTarget:
    def test_from_baseline_lower_quartile(self):
        t = ConvergenceTarget.from_baseline("task", [0.2, 0.4, 0.6, 0.8])
        assert t.target_dice == pytest.approx(0.35)
        assert t.source == "computed-from-baseline"

    def test_bounds(self):
        with pytest.raises(ValueError):
            ConvergenceTarget("t", 1.5)
