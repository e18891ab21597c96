import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bimoment.csp import (
    CSPAccumulator,
    CSPHistogram,
    compute_csp,
    load_csp,
    mc_csp_oracle,
    peel_all,
    peel_csp,
    rasterize_footprint,
    tet_footprint,
    write_csp,
)
from bimoment.grids import Atom, AtomList, GridSpec, RangeWindow
from bimoment.segmentation import BOUNDARY_SEGMENT, label_power_diagram
from bimoment.synthetic import gen_rotation_field, gen_scaling_field
from conftest import xy_field

WIN = RangeWindow(0.0, 1.0, 0.0, 1.0)


def mc_footprint_hist(range_values, volume, window, res, n=1_000_000, seed=0):
    """Monte-Carlo oracle for one tet's range-space mass distribution.

    Samples the reference tetrahedron uniformly, maps samples by the affine
    map that sends the 4 tet vertices to the 4 range points, and histograms
    the images. Independent of the tent-density construction under test.
    """
    rng = np.random.default_rng(seed)
    # uniform barycentric sampling via sorted-uniform spacings
    e = rng.random((n, 3))
    e.sort(axis=1)
    lam = np.column_stack([e[:, 0], e[:, 1] - e[:, 0], e[:, 2] - e[:, 1], 1 - e[:, 2]])
    pts = lam @ np.asarray(range_values, dtype=np.float64)
    R1, R2 = res
    u = (pts[:, 0] - window.min1) / window.width1
    v = (pts[:, 1] - window.min2) / window.width2
    inside = (u >= 0) & (u <= 1) & (v >= 0) & (v <= 1)
    bi = np.clip(np.floor(u[inside] * R1).astype(np.int64), 0, R1 - 1)
    bj = np.clip(np.floor(v[inside] * R2).astype(np.int64), 0, R2 - 1)
    h = np.bincount(bj * R1 + bi, minlength=R1 * R2).astype(np.float64)
    return (h * (volume / n)).reshape(R2, R1)


class TestTetFootprint:
    def test_square_quad(self):
        fp = tet_footprint([(0, 0), (1, 0), (0, 1), (1, 1)], 1.0)
        assert fp.kind == "quad"
        assert fp.hull.shape == (4, 2)
        assert np.allclose(fp.apex, [0.5, 0.5])
        assert fp.peak == pytest.approx(3.0)
        assert fp.volume == 1.0

    def test_triangle_with_interior_point(self):
        fp = tet_footprint([(0, 0), (2, 0), (0, 2), (0.5, 0.5)], 1.0)
        assert fp.kind == "triangle"
        assert fp.hull.shape == (3, 2)
        assert np.allclose(fp.apex, [0.5, 0.5])
        assert fp.peak == pytest.approx(1.5)  # 3 * volume / hull area 2

    def test_constant_tet_is_point(self):
        fp = tet_footprint([(0.3, 0.7)] * 4, 0.25)
        assert fp.kind == "point"
        assert fp.volume == 0.25
        assert np.allclose(fp.apex, [0.3, 0.7])

    def test_collinear_tet_is_segment(self):
        fp = tet_footprint([(0, 0), (0.25, 0.25), (0.5, 0.5), (1, 1)], 0.5)
        assert fp.kind == "segment"
        ends = {tuple(fp.hull[0]), tuple(fp.hull[1])}
        assert ends == {(0.0, 0.0), (1.0, 1.0)}

    def test_negative_volume_rejected(self):
        with pytest.raises(ValueError):
            tet_footprint([(0, 0), (1, 0), (0, 1), (1, 1)], -1.0)

    def test_vertex_order_does_not_change_classification(self):
        pts = [(0.1, 0.2), (0.9, 0.1), (0.4, 0.8), (0.5, 0.4)]
        base = tet_footprint(pts, 1.0)
        for perm in [(1, 0, 2, 3), (3, 2, 1, 0), (2, 3, 0, 1)]:
            fp = tet_footprint([pts[i] for i in perm], 1.0)
            assert fp.kind == base.kind
            assert np.allclose(fp.apex, base.apex)
            assert fp.peak == pytest.approx(base.peak)

    def test_tent_matches_tet_sampling_oracle_triangle(self):
        pts = [(0, 0), (2, 0), (0, 2), (0.5, 0.5)]
        win = RangeWindow(0.0, 2.0, 0.0, 2.0)
        acc = CSPAccumulator(win, (24, 24))
        rasterize_footprint(tet_footprint(pts, 1.0), acc)
        want = mc_footprint_hist(pts, 1.0, win, (24, 24))
        l1 = np.abs(acc.density - want).sum()
        assert l1 < 0.05  # 5% of unit mass against the Monte-Carlo oracle

    def test_tent_matches_tet_sampling_oracle_quad(self):
        pts = [(0.1, 0.3), (1.7, 0.2), (0.3, 1.8), (1.9, 1.6)]
        win = RangeWindow(0.0, 2.0, 0.0, 2.0)
        acc = CSPAccumulator(win, (24, 24))
        rasterize_footprint(tet_footprint(pts, 2.0), acc)
        want = mc_footprint_hist(pts, 2.0, win, (24, 24))
        l1 = np.abs(acc.density - want).sum()
        assert l1 < 0.05 * 2.0


class TestRasterize:
    def test_point_mass_lands_in_its_bin(self):
        acc = CSPAccumulator(WIN, (16, 16))
        fp = tet_footprint([((3 + 0.5) / 16, (7 + 0.5) / 16)] * 4, 0.25)
        rasterize_footprint(fp, acc)
        assert acc.density[7, 3] == pytest.approx(0.25)
        assert acc.density.sum() == pytest.approx(0.25)

    def test_interior_quad_deposits_exact_volume(self):
        acc = CSPAccumulator(WIN, (32, 32))
        fp = tet_footprint([(0.2, 0.2), (0.8, 0.25), (0.25, 0.8), (0.75, 0.75)], 1.0)
        rasterize_footprint(fp, acc)
        assert abs(acc.density.sum() - 1.0) < 1e-12
        assert acc.out_of_window == 0.0

    def test_straddling_quad_splits_mass_exactly(self):
        acc = CSPAccumulator(WIN, (32, 32))
        fp = tet_footprint([(-0.2, 0.4), (0.2, 0.3), (-0.1, 0.7), (0.3, 0.6)], 0.8)
        rasterize_footprint(fp, acc)
        assert acc.out_of_window > 0.0
        assert abs(acc.density.sum() + acc.out_of_window - 0.8) < 1e-12

    def test_subbin_quad_lands_in_containing_bin(self):
        # footprint much smaller than one bin: every sample pools into the
        # bin that contains it, so the full volume arrives there
        acc = CSPAccumulator(WIN, (8, 8))
        c = np.array([0.3203125, 0.5703125])  # strictly inside bin (2, 4)
        d = 1e-4
        fp = tet_footprint(
            [c + (-d, -d), c + (d, -d), c + (-d, d), c + (d, d)], 0.5
        )
        rasterize_footprint(fp, acc)
        assert acc.density[4, 2] == pytest.approx(0.5)
        assert acc.density.sum() == pytest.approx(0.5)

    def test_segment_mass_splits_by_arc_length(self):
        # diagonal segment across [0,1]^2 at res 2: each half carries half
        acc = CSPAccumulator(WIN, (2, 2))
        fp = tet_footprint([(0, 0), (1, 1), (0.5, 0.5), (0.25, 0.25)], 1.0)
        assert fp.kind == "segment"
        rasterize_footprint(fp, acc)
        assert acc.density[0, 0] == pytest.approx(0.5)
        assert acc.density[1, 1] == pytest.approx(0.5)

    def test_window_boundary_point_is_kept(self):
        acc = CSPAccumulator(WIN, (4, 4))
        rasterize_footprint(tet_footprint([(1.0, 1.0)] * 4, 0.125), acc)
        assert acc.density[3, 3] == pytest.approx(0.125)
        assert acc.out_of_window == 0.0


class TestComputeCSP:
    def test_identity_field_is_uniform(self, identity_field_64):
        hist = compute_csp(identity_field_64, WIN, (64, 64))
        target = 1.0 / (64 * 64)
        dev = np.abs(hist.density / target - 1.0)
        assert dev.max() < 0.10
        assert abs(hist.total_mass - 1.0) < 1e-9
        assert hist.out_of_window == 0.0

    def test_equal_fields_stay_on_diagonal(self):
        field = xy_field(16, lambda x, y, z: x, lambda x, y, z: x)
        hist = compute_csp(field, WIN, (32, 32))
        jj, ii = np.nonzero(hist.density)
        assert np.all(np.abs(ii - jj) <= 1)
        assert abs(hist.total_mass - 1.0) < 1e-12

    def test_constant_field_single_bin(self):
        field = xy_field(8, lambda x, y, z: 0.3, lambda x, y, z: 0.7)
        hist = compute_csp(field, WIN, (16, 16))
        assert hist.nonzero_bins() == 1
        assert hist.density.max() == pytest.approx(1.0)

    def test_mass_conservation_tight(self):
        field = gen_rotation_field(7, GridSpec((17, 17, 17), spacing=(1 / 16,) * 3))
        hist = compute_csp(field, WIN, (64, 64))
        total = hist.total_mass + hist.out_of_window
        assert abs(total - field.spec.domain_volume) < 1e-12

    def test_total_mass_invariant_under_res_doubling(self):
        field = gen_rotation_field(5, GridSpec((9, 9, 9), spacing=(0.125,) * 3))
        lo = compute_csp(field, WIN, (32, 32))
        hi = compute_csp(field, WIN, (64, 64))
        assert lo.total_mass + lo.out_of_window == pytest.approx(
            hi.total_mass + hi.out_of_window, abs=1e-14
        )

    def test_thread_count_does_not_change_bins(self):
        # 40^3 cells give 384k tets, crossing the fixed chunk size so the
        # merge-in-chunk-order path is actually exercised
        field = gen_rotation_field(11, GridSpec((41, 41, 41), spacing=(1 / 40,) * 3))
        one = compute_csp(field, WIN, (48, 48), threads=1)
        four = compute_csp(field, WIN, (48, 48), threads=4)
        assert np.array_equal(one.density, four.density)
        assert one.out_of_window == four.out_of_window

    def test_tet_mask_filters_contributions(self):
        field = xy_field(8, lambda x, y, z: x, lambda x, y, z: y)
        full = compute_csp(field, WIN, (16, 16))
        none = compute_csp(field, WIN, (16, 16), tet_mask=lambda idx: np.zeros(idx.shape[0], bool))
        assert none.total_mass == 0.0
        assert full.total_mass > 0.0


class TestPeel:
    def _three_atom_setup(self, n=32):
        h = 1.0 / (n - 1)
        spec = GridSpec((n, n, n), spacing=(h, h, h))
        field = gen_rotation_field(9, spec)
        seeds = AtomList(
            (
                Atom(0, "H", (0.2, 0.3, 0.5), 0.01),
                Atom(3, "C", (0.7, 0.6, 0.4), 0.05),
                Atom(5, "O", (0.5, 0.9, 0.8), 0.02),
            )
        )
        labels = label_power_diagram(spec, seeds)
        return field, labels

    def test_single_atom_peel_equals_full(self):
        field = xy_field(12, lambda x, y, z: x, lambda x, y, z: y)
        labels = label_power_diagram(
            field.spec, AtomList((Atom(2, "H", (0.5, 0.5, 0.5), 0.0),))
        )
        full = compute_csp(field, WIN, (24, 24))
        peel = peel_csp(field, labels, 2, WIN, (24, 24))
        assert np.array_equal(full.density, peel.density)

    def test_peels_plus_boundary_reconstruct_full(self):
        field, labels = self._three_atom_setup()
        full = compute_csp(field, WIN, (48, 48))
        parts = peel_all(field, labels, WIN, (48, 48))
        assert set(parts) == {0, 3, 5, BOUNDARY_SEGMENT}
        stacked = sum(p.density for p in parts.values())
        assert np.abs(stacked - full.density).max() < 1e-9
        assert parts[BOUNDARY_SEGMENT].total_mass > 0.0

    def test_peel_all_matches_individual_peels(self):
        field, labels = self._three_atom_setup(16)
        parts = peel_all(field, labels, WIN, (24, 24))
        for sid in (0, 3, 5, BOUNDARY_SEGMENT):
            single = peel_csp(field, labels, sid, WIN, (24, 24))
            assert np.array_equal(parts[sid].density, single.density)

    def test_unknown_segment_rejected(self):
        field, labels = self._three_atom_setup(8)
        with pytest.raises(ValueError):
            peel_csp(field, labels, 99, WIN, (8, 8))

    def test_segment_with_no_interior_tets_is_empty(self):
        field = xy_field(8, lambda x, y, z: x, lambda x, y, z: y)
        # second seed is power-dominated everywhere: captures no vertices
        seeds = AtomList(
            (Atom(0, "H", (0.5, 0.5, 0.5), 100.0), Atom(1, "H", (0.5, 0.5, 0.5), 0.0))
        )
        labels = label_power_diagram(field.spec, seeds)
        peel = peel_csp(field, labels, 1, WIN, (8, 8))
        assert peel.total_mass == 0.0


class TestOracle:
    def test_constant_field_single_bin(self):
        # constants chosen interior to a bin so interpolation round-off
        # cannot flip samples across a bin boundary
        field = xy_field(8, lambda x, y, z: 0.3, lambda x, y, z: 0.7)
        o = mc_csp_oracle(field, WIN, (16, 16), n_samples=10_000, rng_seed=1)
        assert o.nonzero_bins() == 1
        assert o.total_mass == pytest.approx(1.0)

    def test_identity_field_close_to_uniform(self, identity_field_64):
        o = mc_csp_oracle(identity_field_64, WIN, (32, 32), n_samples=1_000_000, rng_seed=2)
        uniform = np.full((32, 32), 1.0 / 1024)
        l1 = np.abs(o.density - uniform).sum()
        # expected Monte-Carlo noise floor at 10^6 samples is about 0.026
        assert l1 < 0.05

    def test_compute_matches_oracle_rotation_midpoint(self):
        field = gen_rotation_field(24)
        w = RangeWindow(
            field.f1.min(), field.f1.max(), field.f2.min(), field.f2.max()
        )
        hist = compute_csp(field, w, (32, 32))
        o = mc_csp_oracle(field, w, (32, 32), n_samples=1_000_000, rng_seed=7)
        l1 = np.abs(hist.density - o.density).sum()
        assert l1 < 0.05 * o.total_mass

    def test_oracle_mass_bookkeeping(self):
        field = gen_scaling_field(10, -0.25, GridSpec((9, 9, 9), spacing=(0.125,) * 3))
        o = mc_csp_oracle(field, WIN, (16, 16), n_samples=50_000, rng_seed=3)
        assert o.total_mass + o.out_of_window == pytest.approx(
            field.spec.domain_volume
        )


class TestHistogramType:
    def test_negative_density_rejected(self):
        d = np.zeros((4, 4))
        d[1, 1] = -0.5
        with pytest.raises(ValueError):
            CSPHistogram(WIN, (4, 4), d)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            CSPHistogram(WIN, (4, 4), np.zeros((4, 5)))


class TestPersistence:
    def test_round_trip(self, tmp_path):
        field = xy_field(8, lambda x, y, z: x, lambda x, y, z: y)
        hist = compute_csp(field, WIN, (16, 16), state_label="S1", segment_id=3, time_index=7)
        write_csp(hist, tmp_path / "csp")
        back = load_csp(tmp_path / "csp")
        assert np.array_equal(back.density, hist.density)
        assert back.window == hist.window
        assert back.segment_id == 3
        assert back.time_index == 7
        assert back.state_label == "S1"

    def test_mass_mismatch_detected(self, tmp_path):
        field = xy_field(8, lambda x, y, z: x, lambda x, y, z: y)
        hist = compute_csp(field, WIN, (8, 8))
        bin_path, _ = write_csp(hist, tmp_path / "csp")
        data = np.fromfile(bin_path, dtype="<f8")
        data[0] += 0.5
        data.tofile(bin_path)
        with pytest.raises(ValueError, match="total_mass"):
            load_csp(tmp_path / "csp")

    def test_truncated_block_detected(self, tmp_path):
        field = xy_field(8, lambda x, y, z: x, lambda x, y, z: y)
        hist = compute_csp(field, WIN, (8, 8))
        bin_path, _ = write_csp(hist, tmp_path / "csp")
        raw = bin_path.read_bytes()
        bin_path.write_bytes(raw[:-8])
        with pytest.raises(ValueError, match="bins"):
            load_csp(tmp_path / "csp")


coords = st.floats(min_value=-0.5, max_value=1.5, allow_nan=False, width=64)
snapped = st.integers(min_value=-2, max_value=6).map(lambda k: k * 0.25)


class TestFootprintProperties:
    @given(
        pts=st.lists(st.tuples(coords, coords), min_size=4, max_size=4),
        vol=st.floats(min_value=0.0, max_value=10.0, allow_nan=False),
    )
    @settings(max_examples=200, deadline=None)
    def test_mass_always_conserved(self, pts, vol):
        acc = CSPAccumulator(WIN, (8, 8))
        rasterize_footprint(tet_footprint(pts, vol), acc)
        total = acc.density.sum() + acc.out_of_window
        assert abs(total - vol) <= 1e-12 * max(1.0, vol)
        assert np.all(acc.density >= 0.0)

    @given(
        pts=st.lists(st.tuples(snapped, snapped), min_size=4, max_size=4),
        vol=st.floats(min_value=0.0, max_value=4.0, allow_nan=False),
    )
    @settings(max_examples=200, deadline=None)
    def test_degenerate_configurations_conserve_mass(self, pts, vol):
        # snapped coordinates force frequent coincident and collinear cases
        acc = CSPAccumulator(WIN, (8, 8))
        rasterize_footprint(tet_footprint(pts, vol), acc)
        total = acc.density.sum() + acc.out_of_window
        assert abs(total - vol) <= 1e-12 * max(1.0, vol)

    @given(pts=st.lists(st.tuples(coords, coords), min_size=4, max_size=4))
    @settings(max_examples=200, deadline=None)
    def test_peak_consistent_with_hull_area(self, pts):
        fp = tet_footprint(pts, 1.0)
        if fp.kind in ("quad", "triangle"):
            hull = fp.hull
            x, y = hull[:, 0], hull[:, 1]
            area = 0.5 * abs(
                np.sum(x * np.roll(y, -1)) - np.sum(y * np.roll(x, -1))
            )
            assert fp.peak == pytest.approx(3.0 / area, rel=1e-9)
