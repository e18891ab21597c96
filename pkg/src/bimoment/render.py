"""PNG export of scatterplot histograms.

Density is tone-mapped as log(1 + d) and pushed through a sequential
yellows colormap (light = empty, dark brown = dense). Export only: nothing
downstream ever reads pixels back.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .csp import CSPHistogram

__all__ = ["YELLOWS_STOPS", "yellows_colormap", "render_csp", "render_csp_png"]

# ColorBrewer 9-class YlOrBr, light to dark
YELLOWS_STOPS = np.array(
    [
        (255, 255, 229),
        (255, 247, 188),
        (254, 227, 145),
        (254, 196, 79),
        (254, 153, 41),
        (236, 112, 20),
        (204, 76, 2),
        (153, 52, 4),
        (102, 37, 6),
    ],
    dtype=np.float64,
)


def yellows_colormap(t) -> np.ndarray:
    """Map values in [0, 1] to RGB uint8 via piecewise-linear interpolation.

    Values outside [0, 1] are clipped. Accepts any array shape; returns
    shape + (3,).
    """
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    n = YELLOWS_STOPS.shape[0]
    pos = t * (n - 1)
    lo = np.minimum(pos.astype(np.int64), n - 2)
    frac = (pos - lo)[..., None]
    rgb = YELLOWS_STOPS[lo] * (1.0 - frac) + YELLOWS_STOPS[lo + 1] * frac
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def render_csp(hist: CSPHistogram) -> np.ndarray:
    """Tone-mapped RGB image of a histogram, shape (R2, R1, 3).

    Row 0 of the image is the top, i.e. the f2 maximum, so plots read the
    usual way up. Brightness is relative to the densest bin of this
    histogram; an all-empty histogram renders as the lightest stop.
    """
    # bins store integrated volume; tone-map the density proper so the log
    # scale stays a log scale at fine resolutions (tiny bin volumes would
    # otherwise put every pixel in log1p's linear regime)
    bin_area = hist.window.width1 * hist.window.width2 / (hist.res[0] * hist.res[1])
    v = np.log1p(hist.density / bin_area)
    vmax = v.max()
    t = v / vmax if vmax > 0.0 else np.zeros_like(v)
    return yellows_colormap(t[::-1, :])


def render_csp_png(hist: CSPHistogram, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(render_csp(hist), mode="RGB").save(path, format="PNG")
    return path
