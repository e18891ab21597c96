import json
import math

import numpy as np
import pytest

from bimoment.csp import CSPHistogram
from bimoment.grids import RangeWindow
from bimoment.moments import (
    MomentVector,
    build_moment_table,
    csp_moments,
    load_moments_json,
    normalize_moments,
    principal_axis_angle,
    raw_moments,
    write_moments_csv,
    write_moments_json,
)

def hist_of(density, **kw):
    """Histogram with unit-area bins: stored volume equals density."""
    d = np.asarray(density, dtype=np.float64)
    ny, nx = d.shape
    win = RangeWindow(0.0, float(nx), 0.0, float(ny))
    return CSPHistogram(win, (nx, ny), d, **kw)


def direct_moment_sum(density, i, j):
    """Independent oracle: plain double loop over log(1 + d) terms."""
    ny = len(density)
    nx = len(density[0])
    total = 0.0
    for r in range(ny):
        for c in range(nx):
            x = (c + 0.5) / nx
            y = (r + 0.5) / ny
            total += (x**i) * (y**j) * math.log1p(density[r][c])
    return total


class TestRawMoments:
    def test_zero_image_all_orders(self):
        img = np.zeros((5, 7))
        for i in range(3):
            for j in range(3):
                assert raw_moments(img, i, j) == 0.0

    def test_single_pixel(self):
        img = np.array([[2.0]])  # center lands at (0.5, 0.5)
        assert raw_moments(img, 0, 0) == pytest.approx(2.0)
        assert raw_moments(img, 1, 1) == pytest.approx(0.5)

    def test_two_by_two_ones_m20(self):
        img = np.ones((2, 2))  # centers at 0.25 and 0.75
        assert raw_moments(img, 2, 0) == pytest.approx(1.25, abs=1e-15)

    def test_axis_convention_x_is_column(self):
        img = np.zeros((2, 3))
        img[0, 2] = 1.0  # x = 2.5/3, y = 0.25
        assert raw_moments(img, 1, 0) == pytest.approx(2.5 / 3)
        assert raw_moments(img, 0, 1) == pytest.approx(0.25)


class TestCSPMoments:
    def test_single_bin_unit_log_term(self):
        h = hist_of([[np.e - 1.0]])
        m = csp_moments(h)
        assert m.m00 == pytest.approx(1.0, rel=1e-14)
        assert m.m20 == pytest.approx(0.25, rel=1e-14)
        assert m.m11 == pytest.approx(0.25, rel=1e-14)
        assert m.m02 == pytest.approx(0.25, rel=1e-14)
        assert not m.normalized

    def test_empty_histogram(self):
        m = csp_moments(hist_of(np.zeros((4, 4))))
        assert m.as_array().tolist() == [0.0, 0.0, 0.0, 0.0]

    def test_uniform_two_by_two(self):
        m = csp_moments(hist_of(np.ones((2, 2))))
        assert m.m00 == pytest.approx(4 * math.log(2), rel=1e-14)
        assert m.m20 == pytest.approx(1.25 * math.log(2), rel=1e-14)

    def test_log_argument_is_volume_per_bin_area(self):
        # the same uniform density 1 expressed over a [0,1]^2 window: each
        # of the four bins covers area 1/4, so it holds volume 1/4
        win = RangeWindow(0.0, 1.0, 0.0, 1.0)
        h = CSPHistogram(win, (2, 2), np.full((2, 2), 0.25))
        m = csp_moments(h)
        assert m.m00 == pytest.approx(4 * math.log(2), rel=1e-14)
        assert m.m20 == pytest.approx(1.25 * math.log(2), rel=1e-14)

    def test_matches_direct_summation_oracle(self):
        rng = np.random.default_rng(12345)
        for _ in range(10):
            ny = int(rng.integers(1, 9))
            nx = int(rng.integers(1, 9))
            d = rng.random((ny, nx)) * 5.0
            m = csp_moments(hist_of(d))
            want = [
                direct_moment_sum(d.tolist(), i, j)
                for (i, j) in ((0, 0), (2, 0), (1, 1), (0, 2))
            ]
            assert np.abs(m.as_array() - want).max() < 1e-12

    def test_not_linear_in_density(self):
        h = hist_of([[0.6, 0.0], [1.2, 3.0]])
        m1 = csp_moments(h).m00
        m2 = csp_moments(hist_of(h.density * 2.0)).m00
        assert m2 < 2.0 * m1

    def test_monotone_in_single_bin(self):
        d = np.ones((3, 3))
        base = csp_moments(hist_of(d))
        d2 = d.copy()
        d2[1, 2] += 0.5
        bumped = csp_moments(hist_of(d2))
        assert bumped.m00 > base.m00
        assert bumped.m20 >= base.m20
        assert bumped.m11 >= base.m11
        assert bumped.m02 >= base.m02

    def test_provenance_copied(self):
        h = hist_of(np.ones((2, 2)), state_label="A", segment_id=4, time_index=9)
        m = csp_moments(h)
        assert m.provenance == ("A", 4, 9)


class TestVectorType:
    def test_raw_negative_m00_rejected(self):
        with pytest.raises(ValueError):
            MomentVector(-0.1, 0.0, 0.0, 0.0)

    def test_normalized_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            MomentVector(0.5, 1.5, 0.0, 0.0, normalized=True)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            MomentVector(float("nan"), 0.0, 0.0, 0.0)


def mv(m00, m20, m11, m02, **kw):
    return MomentVector(m00, m20, m11, m02, **kw)


class TestNormalization:
    def test_order0_endpoints(self):
        out = normalize_moments([mv(2, 0, 0, 0), mv(6, 0, 0, 0)])
        assert out[0].m00 == 0.0
        assert out[1].m00 == 1.0

    def test_order2_joint_pool(self):
        # pooled min 0 and max 4 are shared by all three components
        out = normalize_moments([mv(1, 1, 0, 2), mv(1, 3, 2, 4)])
        assert (out[0].m20, out[1].m20) == (0.25, 0.75)
        assert (out[0].m11, out[1].m11) == (0.0, 0.5)
        assert (out[0].m02, out[1].m02) == (0.5, 1.0)

    def test_per_component_pooling(self):
        out = normalize_moments(
            [mv(1, 1, 0, 2), mv(1, 3, 2, 4)], pooling="per-component"
        )
        assert (out[0].m20, out[1].m20) == (0.0, 1.0)
        assert (out[0].m11, out[1].m11) == (0.0, 1.0)
        assert (out[0].m02, out[1].m02) == (0.0, 1.0)

    def test_single_vector_degenerates_to_zero(self):
        out = normalize_moments([mv(3, 1, 2, 0.5)])
        assert out[0].as_array().tolist() == [0.0, 0.0, 0.0, 0.0]
        assert out[0].normalized

    def test_mixing_normalized_inputs_rejected(self):
        ok = mv(1, 1, 1, 1)
        done = normalize_moments([ok, mv(2, 2, 2, 2)])[0]
        with pytest.raises(ValueError, match="already normalized"):
            normalize_moments([ok, done])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            normalize_moments([])

    def test_unknown_pooling_rejected(self):
        with pytest.raises(ValueError):
            normalize_moments([mv(1, 0, 0, 0)], pooling="per-row")

    def test_values_in_unit_interval_and_provenance_kept(self):
        rng = np.random.default_rng(7)
        raw = [
            mv(*rng.random(4) * 10, state_label="S", segment_id=k, time_index=k)
            for k in range(20)
        ]
        out = normalize_moments(raw)
        arr = np.array([v.as_array() for v in out])
        assert arr.min() >= 0.0 and arr.max() <= 1.0
        assert arr[:, 0].min() == 0.0 and arr[:, 0].max() == 1.0
        assert arr[:, 1:].min() == 0.0 and arr[:, 1:].max() == 1.0
        assert [v.provenance for v in out] == [v.provenance for v in raw]


class TestPrincipalAxis:
    def test_diagonal_mass_is_45_degrees(self):
        d = np.zeros((20, 20))
        np.fill_diagonal(d, 1.0)
        assert principal_axis_angle(hist_of(d)) == pytest.approx(45.0)

    def test_horizontal_mass_is_zero_degrees(self):
        d = np.zeros((10, 10))
        d[4, :] = 1.0
        assert principal_axis_angle(hist_of(d)) == pytest.approx(0.0)

    def test_vertical_mass_is_90_degrees(self):
        d = np.zeros((10, 10))
        d[:, 4] = 1.0
        assert principal_axis_angle(hist_of(d)) == pytest.approx(90.0)

    def test_known_slope(self):
        # two point masses with rise/run = 30/60 in bin units
        d = np.zeros((80, 80))
        d[10, 10] = 1.0
        d[40, 70] = 1.0
        assert principal_axis_angle(hist_of(d)) == pytest.approx(
            math.degrees(math.atan(0.5))
        )

    def test_empty_histogram_rejected(self):
        with pytest.raises(ValueError):
            principal_axis_angle(hist_of(np.zeros((4, 4))))


class TestExport:
    def _rows(self):
        raw = [
            mv(2, 1, 0, 2, state_label="B", segment_id=1, time_index=0),
            mv(6, 3, 2, 4, state_label="A", segment_id="all", time_index=1),
            mv(4, 2, 1, 3, state_label="A", segment_id=2, time_index=0),
        ]
        return raw, normalize_moments(raw)

    def test_rows_sorted_by_state_segment_time(self):
        raw, norm = self._rows()
        rows = build_moment_table(raw, norm, time_fs={("A", 0): 0.0, ("A", 1): 2.5})
        keys = [(r["state"], r["segment"], r["time_index"]) for r in rows]
        assert keys == [("A", 2, 0), ("A", "all", 1), ("B", 1, 0)]
        assert rows[1]["time_fs"] == 2.5
        assert rows[2]["time_fs"] is None

    def test_provenance_mismatch_rejected(self):
        raw, norm = self._rows()
        with pytest.raises(ValueError, match="provenance"):
            build_moment_table(raw, list(reversed(norm)))

    def test_swapped_pair_roles_rejected(self):
        raw, norm = self._rows()
        with pytest.raises(ValueError):
            build_moment_table(norm, raw)

    def test_csv_layout(self, tmp_path):
        raw, norm = self._rows()
        rows = build_moment_table(raw, norm)
        p = write_moments_csv(rows, tmp_path / "m.csv")
        lines = p.read_text().splitlines()
        assert lines[0].startswith("state,segment,time_index,time_fs,m00,")
        assert len(lines) == 4
        first = lines[1].split(",")
        assert first[0] == "A" and first[1] == "2"
        assert first[3] == ""  # no time_fs supplied
        assert float(first[4]) == 4.0

    def test_json_round_trip(self, tmp_path):
        raw, norm = self._rows()
        rows = build_moment_table(raw, norm)
        p = write_moments_json(rows, tmp_path / "m.json")
        assert load_moments_json(p) == rows
        # deterministic byte output for identical input
        text1 = p.read_text()
        write_moments_json(rows, p)
        assert p.read_text() == text1

    def test_json_is_plain_types(self, tmp_path):
        raw, norm = self._rows()
        rows = build_moment_table(raw, norm)
        # should not raise on float64 leftovers
        json.dumps(rows)
