import numpy as np
import pytest
from PIL import Image

from bimoment.csp import CSPHistogram
from bimoment.grids import RangeWindow
from bimoment.render import YELLOWS_STOPS, render_csp, render_csp_png, yellows_colormap

WIN = RangeWindow(0.0, 1.0, 0.0, 1.0)


def hist_from(density):
    density = np.asarray(density, dtype=np.float64)
    r2, r1 = density.shape
    return CSPHistogram(window=WIN, res=(r1, r2), density=density)


class TestColormap:
    def test_endpoints(self):
        assert yellows_colormap(0.0).tolist() == [255, 255, 229]
        assert yellows_colormap(1.0).tolist() == [102, 37, 6]

    def test_clipping(self):
        assert yellows_colormap(-3.0).tolist() == yellows_colormap(0.0).tolist()
        assert yellows_colormap(7.0).tolist() == yellows_colormap(1.0).tolist()

    def test_stops_hit_exactly(self):
        n = YELLOWS_STOPS.shape[0]
        for k in range(n):
            t = k / (n - 1)
            assert yellows_colormap(t).tolist() == list(YELLOWS_STOPS[k].astype(int))

    def test_luminance_monotone_decreasing(self):
        t = np.linspace(0.0, 1.0, 64)
        rgb = yellows_colormap(t).astype(np.float64)
        lum = rgb @ [0.2126, 0.7152, 0.0722]
        assert np.all(np.diff(lum) < 0)

    def test_batch_shape(self):
        out = yellows_colormap(np.zeros((5, 7)))
        assert out.shape == (5, 7, 3)


class TestRenderCSP:
    def test_empty_histogram_lightest(self):
        img = render_csp(hist_from(np.zeros((4, 4))))
        assert np.all(img == np.array([255, 255, 229], dtype=np.uint8))

    def test_image_shape(self):
        img = render_csp(hist_from(np.zeros((6, 9))))
        assert img.shape == (6, 9, 3)

    def test_orientation_low_f2_at_bottom(self):
        d = np.zeros((4, 4))
        d[0, 0] = 5.0  # f1 min, f2 min bin
        img = render_csp(hist_from(d))
        dark = np.array([102, 37, 6], dtype=np.uint8)
        assert np.array_equal(img[3, 0], dark)  # bottom-left pixel
        assert np.array_equal(img[0, 0], [255, 255, 229])

    def test_log_compression_orders_pixels(self):
        d = np.zeros((1, 3))
        d[0] = [0.0, 1.0, 100.0]
        img = render_csp(hist_from(d)).astype(np.float64)
        lum = img @ [0.2126, 0.7152, 0.0722]
        assert lum[0, 0] > lum[0, 1] > lum[0, 2]

    def test_relative_scaling_peak_is_darkest(self):
        rng = np.random.default_rng(7)
        d = rng.random((8, 8)) * 0.5
        d[2, 5] = 3.0
        img = render_csp(hist_from(d))
        assert np.array_equal(img[8 - 1 - 2, 5], [102, 37, 6])


class TestPNG:
    def test_file_round_trip(self, tmp_path):
        d = np.arange(12, dtype=np.float64).reshape(3, 4)
        p = render_csp_png(hist_from(d), tmp_path / "csp.png")
        with Image.open(p) as im:
            assert im.size == (4, 3)  # (width, height)
            back = np.asarray(im.convert("RGB"))
        assert np.array_equal(back, render_csp(hist_from(d)))

    def test_deterministic_bytes(self, tmp_path):
        d = np.linspace(0.0, 2.0, 16).reshape(4, 4)
        p1 = render_csp_png(hist_from(d), tmp_path / "a.png")
        p2 = render_csp_png(hist_from(d), tmp_path / "b.png")
        assert p1.read_bytes() == p2.read_bytes()

    def test_creates_parent_dirs(self, tmp_path):
        p = render_csp_png(hist_from(np.ones((2, 2))), tmp_path / "deep" / "n" / "c.png")
        assert p.exists()
