"""Continuous scatterplot peeling and moment-track analysis.

Bivariate time-varying fields are reduced to continuous scatterplots (CSPs),
optionally peeled per power-diagram segment, summarized by log-density image
moments, and embedded with a global PCA whose per-segment time curves form
tracks. A pipeline CLI (`bimoment`) and a small HTTP service expose the
artifacts; fiber surfaces provide spatial lookup from range-space polygons.
"""

from .grids import (
    Atom,
    AtomList,
    BivariateField,
    BivariateTimeSeries,
    GridSpec,
    RangeWindow,
    ScalarGrid,
    TimeStep,
    global_range_window,
)
from .cubeio import CubeParseError, load_cube, write_cube
from .synthetic import gen_rotation_field, gen_scaling_field, gen_series
from .segmentation import (
    BOUNDARY_SEGMENT,
    LabelGrid,
    label_power_diagram,
    segment_vertex_counts,
)
from .csp import (
    CSPAccumulator,
    CSPHistogram,
    TetFootprint,
    compute_csp,
    load_csp,
    mc_csp_oracle,
    peel_all,
    peel_csp,
    rasterize_footprint,
    tet_footprint,
    write_csp,
)
from .moments import (
    MomentVector,
    csp_moments,
    normalize_moments,
    principal_axis_angle,
    raw_moments,
)
from .embedding import (
    PCAModel,
    TrackSet,
    build_tracks,
    fit_pca,
    project,
    track_metrics,
)
from .fiber import (
    ControlPolygon,
    TriangleMesh,
    export_mesh,
    extract_fiber_surface,
    polygon_signed_distance,
)
from .render import render_csp, render_csp_png
from .pipeline import AnalysisManifest, ManifestError, PipelineError, run_manifest

# bimoment.service (FastAPI app factory) is imported on demand so that the
# analysis API stays light; `bimoment serve` pulls it in via the CLI.

__version__ = "0.1.0"
