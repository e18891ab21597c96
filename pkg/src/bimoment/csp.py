"""Continuous scatterplots of bivariate fields.

A continuous scatterplot is a 2D histogram over range space where every bin
holds the spatial volume that maps into it. Each grid cell is split into six
tetrahedra; a tetrahedron's image under the locally affine field map is a
convex footprint in range space carrying an exact piecewise-linear density
(a tent that peaks at 3*volume/hull_area and falls to zero on the hull
boundary). Footprints are rasterized by sampling the tent on a lattice (bin
centers when the hull spans several bins, a finer box-fitted lattice when it
does not, and a 1D arc-length split for sliver hulls) and rescaling so each
tetrahedron deposits exactly its spatial volume, which makes mass
conservation hold to floating-point accuracy.

All rasterization happens in window-normalized coordinates: the range window
maps to [0, 1]^2 and bins are uniform there. Classification thresholds below
(AREA_EPS, LENGTH_EPS) apply in those coordinates.
"""

from __future__ import annotations

import json
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .grids import BivariateField, RangeWindow
from .segmentation import BOUNDARY_SEGMENT, LabelGrid
from .tetra import TETS_PER_CELL, cell_tets, iter_slab_chunks

__all__ = [
    "AREA_EPS",
    "LENGTH_EPS",
    "TetFootprint",
    "CSPAccumulator",
    "CSPHistogram",
    "tet_footprint",
    "rasterize_footprint",
    "compute_csp",
    "peel_csp",
    "peel_all",
    "mc_csp_oracle",
    "write_csp",
    "load_csp",
]

AREA_EPS = 1e-12  # hulls thinner than this (window-normalized) degrade
LENGTH_EPS = 1e-12  # segments shorter than this collapse to a point

_BATCH_ELEMS = 1 << 22  # bin samples per rasterization batch
_CHUNK_TETS = 200_000  # tets per accumulation chunk (fixed for determinism)
_PLAIN_BINS = 3.0  # axis span (in bins) where bin-center sampling resolves
_BOX_N = 8  # minimum lattice rows across a small footprint axis
_BOX_NMAX = 256  # lattice resolution cap per axis
_THIN_FRAC = 0.75  # hulls thinner than this fraction of the pitch go 1D


# ---------------------------------------------------------------------------
# footprint classification


def _orient(px, py, i, j, k):
    return (px[:, j] - px[:, i]) * (py[:, k] - py[:, i]) - (
        py[:, j] - py[:, i]
    ) * (px[:, k] - px[:, i])


def _shoelace2(hull):
    # twice the signed area of the (possibly degenerate) 4-gon
    x = hull[..., 0]
    y = hull[..., 1]
    xn = np.roll(x, -1, axis=-1)
    yn = np.roll(y, -1, axis=-1)
    return (x * yn - xn * y).sum(axis=-1)


def _classify(px, py):
    """Split tets into tent / segment / point footprints.

    px, py: (T, 4) range coordinates. The four signed triangle areas of the
    point quadruple form an affine dependence whose sign pattern identifies
    the hull: one lone sign means that point lies inside the others' triangle,
    two-and-two means a convex quad whose same-signed points are one diagonal.

    Returns (tent_idx, hull, apex), (seg_idx, q0, q1), (pnt_idx, q) where the
    hull is CCW with the last point duplicated for triangles.
    """
    T = px.shape[0]
    t = np.stack(
        [
            _orient(px, py, 1, 2, 3),
            -_orient(px, py, 0, 2, 3),
            _orient(px, py, 0, 1, 3),
            -_orient(px, py, 0, 1, 2),
        ],
        axis=1,
    )
    eps = 2.0 * AREA_EPS  # orient values are twice the triangle area
    sgn = np.zeros((T, 4), dtype=np.int8)
    sgn[t > eps] = 1
    sgn[t < -eps] = -1
    npos = (sgn > 0).sum(axis=1)
    nneg = (sgn < 0).sum(axis=1)
    order = np.argsort(sgn, axis=1, kind="stable")  # negatives, zeros, positives

    pts = np.stack([px, py], axis=2)
    hull = np.zeros((T, 4, 2))
    apex = np.zeros((T, 2))

    quadm = ((npos == 2) & (nneg >= 1)) | ((nneg == 2) & (npos == 1))
    trim = (npos == 3) | (nneg == 3)
    dupm = (npos == 1) & (nneg == 1)
    tentm = quadm | trim | dupm
    # any other sign pattern is numerically collinear
    degm = ~tentm

    if quadm.any():
        q = np.where(quadm)[0]
        oq = order[q]
        two_pos = (npos[q] == 2)[:, None]
        diag1 = np.where(two_pos, oq[:, 2:4], oq[:, 0:2])  # same-sign pair
        diag2 = np.where(two_pos, oq[:, 0:2], oq[:, 2:4])
        ta = np.abs(t[q, diag1[:, 0]])
        tb = np.abs(t[q, diag1[:, 1]])
        pa = pts[q, diag1[:, 0]]
        pb = pts[q, diag1[:, 1]]
        apex[q] = (ta[:, None] * pa + tb[:, None] * pb) / (ta + tb)[:, None]
        h = np.stack([pa, pts[q, diag2[:, 0]], pb, pts[q, diag2[:, 1]]], axis=1)
        flip = _shoelace2(h) < 0
        if flip.any():
            h[flip] = h[flip][:, [0, 3, 2, 1]]
        hull[q] = h

    if trim.any():
        r = np.where(trim)[0]
        ot = order[r]
        lone_neg = (nneg[r] == 1)[:, None]
        tri = np.where(lone_neg, ot[:, 1:4], ot[:, 0:3])
        m = np.where(lone_neg[:, 0], ot[:, 0], ot[:, 3])
        apex[r] = pts[r, m]
        h3 = pts[r[:, None], tri]
        flip = _orient(h3[:, :, 0], h3[:, :, 1], 0, 1, 2) < 0
        if flip.any():
            h3[flip] = h3[flip][:, [0, 2, 1]]
        hull[r, 0:3] = h3
        hull[r, 3] = h3[:, 2]  # duplicated: triangle as a degenerate 4-gon

    if dupm.any():
        r = np.where(dupm)[0]
        od = order[r]
        # positive-coefficient point coincides with the negative one
        a = od[:, 3]
        h3 = np.stack([pts[r, a], pts[r, od[:, 1]], pts[r, od[:, 2]]], axis=1)
        flip = _orient(h3[:, :, 0], h3[:, :, 1], 0, 1, 2) < 0
        if flip.any():
            h3[flip] = h3[flip][:, [0, 2, 1]]
        apex[r] = pts[r, a]
        hull[r, 0:3] = h3
        hull[r, 3] = h3[:, 2]

    if tentm.any():
        thin = np.zeros(T, dtype=bool)
        thin[tentm] = np.abs(_shoelace2(hull[tentm])) * 0.5 < AREA_EPS
        degm |= thin
        tentm &= ~thin

    tent_idx = np.where(tentm)[0]

    # collinear leftovers: dominant-axis extremes give the segment endpoints
    seg_idx = pnt_idx = np.empty(0, dtype=np.int64)
    q0 = q1 = qp = np.empty((0, 2))
    if degm.any():
        d = np.where(degm)[0]
        spx = px[d]
        spy = py[d]
        use_x = (spx.max(1) - spx.min(1)) >= (spy.max(1) - spy.min(1))
        coord = np.where(use_x[:, None], spx, spy)
        lo = np.argmin(coord, axis=1)
        hi = np.argmax(coord, axis=1)
        e0 = pts[d, lo]
        e1 = pts[d, hi]
        length = np.hypot(e1[:, 0] - e0[:, 0], e1[:, 1] - e0[:, 1])
        isseg = length >= LENGTH_EPS
        seg_idx = d[isseg]
        q0 = e0[isseg]
        q1 = e1[isseg]
        pnt_idx = d[~isseg]
        qp = pts[pnt_idx].mean(axis=1)

    return (tent_idx, hull[tent_idx], apex[tent_idx]), (seg_idx, q0, q1), (pnt_idx, qp)


# ---------------------------------------------------------------------------
# rasterization kernels (all operate on window-normalized coordinates)


def _deposit_points(qx, qy, vol, group, R1, R2, hist, oow):
    """Full volume into the containing bin; window boundary is closed."""
    inwin = (qx >= 0.0) & (qx <= 1.0) & (qy >= 0.0) & (qy <= 1.0)
    if inwin.any():
        bi = np.clip(np.floor(qx[inwin] * R1).astype(np.int64), 0, R1 - 1)
        bj = np.clip(np.floor(qy[inwin] * R2).astype(np.int64), 0, R2 - 1)
        keys = group[inwin] * (R1 * R2) + bj * R1 + bi
        hist += np.bincount(keys, weights=vol[inwin], minlength=hist.size)
    if (~inwin).any():
        oow += np.bincount(group[~inwin], weights=vol[~inwin], minlength=oow.size)


def _scatter(contrib, ii, jj, group, R1, R2, hist, oow):
    """Scatter-add pre-scaled box masses; out-of-window mass to the counter.

    contrib: (B, H, W) masses; ii/jj: (B, W)/(B, H) virtual bin indices.
    Zero entries are skipped, so callers may pass sparse splat products.
    """
    nz = contrib != 0.0
    mx = (ii >= 0) & (ii < R1)
    my = (jj >= 0) & (jj < R2)
    inwin = my[:, :, None] & mx[:, None, :]
    sel = inwin & nz
    if sel.any():
        flat = (
            (group * (R1 * R2))[:, None, None]
            + (jj * R1)[:, :, None]
            + ii[:, None, :]
        )
        hist += np.bincount(flat[sel], weights=contrib[sel], minlength=hist.size)
    sel = nz & ~inwin
    if sel.any():
        gb = np.broadcast_to(group[:, None, None], contrib.shape)[sel]
        oow += np.bincount(gb, weights=contrib[sel], minlength=oow.size)


def _deposit_box(raw, ii, jj, vol, group, R1, R2, hist, oow):
    """Rescale per-row box weights so each row deposits exactly its volume.

    Returns the mask of rows with any coverage; all-zero rows are left to
    the caller's fallback.
    """
    tot = raw.sum(axis=(1, 2))
    good = tot > 0.0
    if good.any():
        scale = vol[good] / tot[good]
        _scatter(
            raw[good] * scale[:, None, None],
            ii[good],
            jj[good],
            group[good],
            R1,
            R2,
            hist,
            oow,
        )
    return good


def _batched(order, area, budget=_BATCH_ELEMS):
    """Yield slices of the area-sorted row order.

    Every batch is padded to its largest box, so batch_size * max_area must
    stay within budget; order being sorted makes the last row the largest.
    """
    srt = area[order]
    n = order.shape[0]
    a = 0
    while a < n:
        b = min(n, a + max(1, budget // max(int(srt[a]), 1)))
        while b > a + 1 and (b - a) * int(srt[b - 1]) > budget:
            b = a + max(1, budget // max(int(srt[b - 1]), 1))
        yield order[a:b]
        a = b


def _tent_eval(Ae, Be, Ce, pxc, pyc):
    """Evaluate the clipped tent on a separable box of sample points.

    Ae/Be/Ce: (B, 4) edge coefficients; pxc: (B, W); pyc: (B, H).
    Returns (B, H, W) non-negative tent values.
    """
    B, W = pxc.shape
    H = pyc.shape[1]
    ratio = np.full((B, H, W), np.inf)
    for e in range(4):
        tx = Ae[:, e][:, None] * pxc
        ty = Be[:, e][:, None] * pyc + Ce[:, e][:, None]
        np.minimum(ratio, tx[:, None, :] + ty[:, :, None], out=ratio)
    np.maximum(ratio, 0.0, out=ratio)
    return ratio


def _splat_weights(u0, u1, R, N):
    """Linear splat of N equal subcells spanning [u0, u1] onto the bin grid.

    Each subcell covers an interval in bin units; its mass goes to the bin
    under its left end and the next one, split by overlap fraction. Returns
    (left_bin, left_weight, right_weight), each (B, N).
    """
    sw = (u1 - u0)[:, None] * (R / N)
    a = u0[:, None] * R + np.arange(N)[None, :] * sw
    b = a + sw
    left = np.floor(a).astype(np.int64)
    wr = np.clip((b - left - 1.0) / np.maximum(b - a, 1e-300), 0.0, 1.0)
    return left, 1.0 - wr, wr


def _raster_tents(hull, apex, vol, group, R1, R2, hist, oow):
    n = hull.shape[0]
    if n == 0:
        return
    ux0 = hull[:, :, 0].min(axis=1)
    ux1 = hull[:, :, 0].max(axis=1)
    uy0 = hull[:, :, 1].min(axis=1)
    uy1 = hull[:, :, 1].max(axis=1)
    extx = (ux1 - ux0) * R1
    exty = (uy1 - uy0) * R2

    # Route by how well a sample lattice can resolve the hull. Footprints
    # spanning several bins per axis keep plain bin-center sampling. Smaller
    # ones get a lattice fitted to their bounding box (alignment with the bin
    # grid no longer matters because subcell mass is splat linearly across
    # bin boundaries). Sliver hulls thinner than the lattice pitch would
    # still miss every sample row, so they collapse to their centerline and
    # take the exact 1D arc-length path; the transverse placement error is
    # bounded by the sliver width itself.
    nx = np.clip(np.ceil(2.0 * extx), _BOX_N, _BOX_NMAX).astype(np.int64)
    ny = np.clip(np.ceil(2.0 * exty), _BOX_N, _BOX_NMAX).astype(np.int64)
    width = np.abs(_shoelace2(hull)) / np.maximum(
        np.hypot(ux1 - ux0, uy1 - uy0), 1e-300
    )
    pitch = np.hypot(extx / nx, exty / ny)
    thin = width * max(R1, R2) < _THIN_FRAC * pitch
    if thin.any():
        t = np.where(thin)[0]
        usex = (ux1[t] - ux0[t]) >= (uy1[t] - uy0[t])
        coord = np.where(usex[:, None], hull[t, :, 0], hull[t, :, 1])
        ar = np.arange(t.size)
        e0 = hull[t][ar, np.argmin(coord, axis=1)]
        e1 = hull[t][ar, np.argmax(coord, axis=1)]
        _raster_segments(e0, e1, vol[t], group[t], R1, R2, hist, oow)
        if thin.all():
            return

    # per-edge affine ratio functions: 1 at the apex, 0 on the edge line.
    # The tent is min_e ratio_e clipped at 0 (concavity of the fiber-length
    # density). Hulls arrive CCW, so dA >= 0; dA == 0 marks an edge through
    # the apex (a duplicated range point puts the apex on a hull vertex) or
    # the zero-length edge of a triangle padded to a 4-gon. Such an edge must
    # still clip the outside half-plane (the density is discontinuous across
    # it) without zeroing samples that fall exactly on the edge line, so its
    # ratio becomes dist * BIG + 1: huge inside, 1 on the line, < 0 outside.
    hA = hull
    hB = np.roll(hull, -1, axis=1)
    ex = hB[:, :, 0] - hA[:, :, 0]
    ey = hB[:, :, 1] - hA[:, :, 1]
    dA = ex * (apex[:, None, 1] - hA[:, :, 1]) - ey * (apex[:, None, 0] - hA[:, :, 0])
    span = np.maximum(ux1 - ux0, uy1 - uy0)
    neutral = dA <= np.sqrt(ex * ex + ey * ey) * span[:, None] * 1e-12
    BIG = 1e9
    inv = np.where(neutral, BIG, 1.0 / np.where(neutral, 1.0, dA))
    Ae = -ey * inv
    Be = ex * inv
    Ce = (ey * hA[:, :, 0] - ex * hA[:, :, 1]) * inv
    if neutral.any():
        Ce[neutral] += 1.0

    fb_idx = []
    plain = ~thin & (extx >= _PLAIN_BINS) & (exty >= _PLAIN_BINS)
    sel = np.where(plain)[0]
    if sel.size:
        i0 = np.ceil(ux0[sel] * R1 - 0.5).astype(np.int64)
        i1 = np.floor(ux1[sel] * R1 - 0.5).astype(np.int64)
        j0 = np.ceil(uy0[sel] * R2 - 0.5).astype(np.int64)
        j1 = np.floor(uy1[sel] * R2 - 0.5).astype(np.int64)
        w = i1 - i0 + 1
        h = j1 - j0 + 1
        covered = (w > 0) & (h > 0)
        fb_idx.append(sel[~covered])
        pos_all = np.where(covered)[0]
        area = w * h
        order = pos_all[np.argsort(area[pos_all], kind="stable")]
        for pos in _batched(order, area):
            r = sel[pos]
            W = int(w[pos].max())
            H = int(h[pos].max())
            ii = i0[pos][:, None] + np.arange(W)[None, :]
            jj = j0[pos][:, None] + np.arange(H)[None, :]
            raw = _tent_eval(Ae[r], Be[r], Ce[r], (ii + 0.5) / R1, (jj + 0.5) / R2)
            good = _deposit_box(raw, ii, jj, vol[r], group[r], R1, R2, hist, oow)
            fb_idx.append(r[~good])

    boxed = ~thin & ~plain
    sel_all = np.where(boxed)[0]
    if sel_all.size:
        key = nx[sel_all] * (_BOX_NMAX + 1) + ny[sel_all]
        for k in np.unique(key):
            sel = sel_all[key == k]
            NX = int(nx[sel[0]])
            NY = int(ny[sel[0]])
            per = max(1, _BATCH_ELEMS // (NX * NY))
            for a0 in range(0, sel.size, per):
                r = sel[a0 : a0 + per]
                fx = (np.arange(NX) + 0.5) / NX
                fy = (np.arange(NY) + 0.5) / NY
                pxc = ux0[r][:, None] + fx[None, :] * (ux1 - ux0)[r][:, None]
                pyc = uy0[r][:, None] + fy[None, :] * (uy1 - uy0)[r][:, None]
                raw = _tent_eval(Ae[r], Be[r], Ce[r], pxc, pyc)
                tot = raw.sum(axis=(1, 2))
                good = tot > 0.0
                fb_idx.append(r[~good])
                if not good.any():
                    continue
                iiL, wxL, wxR = _splat_weights(ux0[r][good], ux1[r][good], R1, NX)
                jjL, wyL, wyR = _splat_weights(uy0[r][good], uy1[r][good], R2, NY)
                contrib = raw[good] * (vol[r][good] / tot[good])[:, None, None]
                g = group[r][good]
                for wx_, di in ((wxL, 0), (wxR, 1)):
                    for wy_, dj in ((wyL, 0), (wyR, 1)):
                        _scatter(
                            contrib * wy_[:, :, None] * wx_[:, None, :],
                            iiL + di,
                            jjL + dj,
                            g,
                            R1,
                            R2,
                            hist,
                            oow,
                        )

    fb = np.concatenate(fb_idx) if fb_idx else np.empty(0, dtype=np.int64)
    if fb.size:
        # footprint missed by the sample lattice: volume lands in the apex bin
        _deposit_points(apex[fb, 0], apex[fb, 1], vol[fb], group[fb], R1, R2, hist, oow)


def _raster_segments(q0, q1, vol, group, R1, R2, hist, oow):
    n = q0.shape[0]
    if n == 0:
        return
    x0 = np.minimum(q0[:, 0], q1[:, 0])
    x1 = np.maximum(q0[:, 0], q1[:, 0])
    y0 = np.minimum(q0[:, 1], q1[:, 1])
    y1 = np.maximum(q0[:, 1], q1[:, 1])
    i0 = np.floor(x0 * R1).astype(np.int64)
    i1 = np.floor(x1 * R1).astype(np.int64)
    j0 = np.floor(y0 * R2).astype(np.int64)
    j1 = np.floor(y1 * R2).astype(np.int64)
    w = i1 - i0 + 1
    h = j1 - j0 + 1
    area = w * h
    order = np.argsort(area, kind="stable")

    dx = q1[:, 0] - q0[:, 0]
    dy = q1[:, 1] - q0[:, 1]
    smallx = np.abs(dx) < 1e-300
    smally = np.abs(dy) < 1e-300
    sdx = np.where(smallx, 1.0, dx)
    sdy = np.where(smally, 1.0, dy)

    fb_idx = []
    inv_r1 = 1.0 / R1
    inv_r2 = 1.0 / R2
    for r in _batched(order, area):
        B = r.shape[0]
        W = int(w[r].max())
        H = int(h[r].max())
        ii = i0[r][:, None] + np.arange(W)[None, :]
        jj = j0[r][:, None] + np.arange(H)[None, :]
        xlo = ii * inv_r1
        xhi = (ii + 1) * inv_r1
        ylo = jj * inv_r2
        yhi = (jj + 1) * inv_r2
        # Liang-Barsky parameter interval of the segment inside each bin;
        # raw weight is the parameter length, proportional to arc length
        tx0 = (xlo - q0[r, 0][:, None]) / sdx[r][:, None]
        tx1 = (xhi - q0[r, 0][:, None]) / sdx[r][:, None]
        txlo = np.minimum(tx0, tx1)
        txhi = np.maximum(tx0, tx1)
        insx = (q0[r, 0][:, None] >= xlo) & (q0[r, 0][:, None] <= xhi)
        sx = smallx[r][:, None]
        txlo = np.where(sx, np.where(insx, -np.inf, np.inf), txlo)
        txhi = np.where(sx, np.where(insx, np.inf, -np.inf), txhi)

        ty0 = (ylo - q0[r, 1][:, None]) / sdy[r][:, None]
        ty1 = (yhi - q0[r, 1][:, None]) / sdy[r][:, None]
        tylo = np.minimum(ty0, ty1)
        tyhi = np.maximum(ty0, ty1)
        insy = (q0[r, 1][:, None] >= ylo) & (q0[r, 1][:, None] <= yhi)
        sy = smally[r][:, None]
        tylo = np.where(sy, np.where(insy, -np.inf, np.inf), tylo)
        tyhi = np.where(sy, np.where(insy, np.inf, -np.inf), tyhi)

        tlo = np.maximum(txlo[:, None, :], tylo[:, :, None])
        thi = np.minimum(txhi[:, None, :], tyhi[:, :, None])
        np.maximum(tlo, 0.0, out=tlo)
        np.minimum(thi, 1.0, out=thi)
        raw = np.clip(thi - tlo, 0.0, None)
        good = _deposit_box(raw, ii, jj, vol[r], group[r], R1, R2, hist, oow)
        fb_idx.append(r[~good])

    fb = np.concatenate(fb_idx) if fb_idx else np.empty(0, dtype=np.int64)
    if fb.size:
        mid = 0.5 * (q0[fb] + q1[fb])
        _deposit_points(mid[:, 0], mid[:, 1], vol[fb], group[fb], R1, R2, hist, oow)


def _accumulate(u, v, vol, group, R1, R2, hist, oow):
    """Rasterize one chunk of tets into a flat multi-group histogram."""
    (ti, hull, apex), (si, s0, s1), (pi, qp) = _classify(u, v)
    if ti.size:
        _raster_tents(hull, apex, vol[ti], group[ti], R1, R2, hist, oow)
    if si.size:
        _raster_segments(s0, s1, vol[si], group[si], R1, R2, hist, oow)
    if pi.size:
        _deposit_points(qp[:, 0], qp[:, 1], vol[pi], group[pi], R1, R2, hist, oow)


# ---------------------------------------------------------------------------
# public types


@dataclass(frozen=True)
class TetFootprint:
    """Range-space image of one tetrahedron.

    kind is one of quad/triangle/segment/point. For 2D hulls the apex is the
    tent maximum (diagonal intersection for quads, the interior image of the
    fourth vertex for triangles) and peak = 3*volume/hull_area; degenerate
    footprints carry the full volume with peak 0.
    """

    kind: str
    hull: np.ndarray
    apex: np.ndarray
    peak: float
    volume: float


def tet_footprint(range_values, volume: float) -> TetFootprint:
    """Classify the footprint of one tetrahedron.

    range_values: (4, 2) range-space images of the tet vertices, in whatever
    coordinates the caller works in (thresholds apply in those coordinates).
    """
    pts = np.asarray(range_values, dtype=np.float64).reshape(4, 2)
    volume = float(volume)
    if volume < 0 or not np.isfinite(volume):
        raise ValueError(f"tet volume must be finite and >= 0, got {volume}")
    (ti, hull, apex), (si, q0, q1), (pi, qp) = _classify(pts[None, :, 0], pts[None, :, 1])
    if ti.size:
        h = hull[0]
        is_tri = bool(np.all(h[3] == h[2]))
        h_out = h[:3] if is_tri else h
        area = abs(_shoelace2(h[None])[0]) * 0.5
        return TetFootprint(
            kind="triangle" if is_tri else "quad",
            hull=h_out.copy(),
            apex=apex[0].copy(),
            peak=3.0 * volume / area,
            volume=volume,
        )
    if si.size:
        return TetFootprint(
            kind="segment",
            hull=np.stack([q0[0], q1[0]]),
            apex=0.5 * (q0[0] + q1[0]),
            peak=0.0,
            volume=volume,
        )
    return TetFootprint(kind="point", hull=qp[0:1].copy(), apex=qp[0].copy(), peak=0.0, volume=volume)


@dataclass
class CSPAccumulator:
    """Mutable bin grid a caller rasterizes footprints into."""

    window: RangeWindow
    res: tuple[int, int]
    density: np.ndarray = dc_field(init=False)
    out_of_window: float = dc_field(init=False, default=0.0)

    def __post_init__(self):
        R1, R2 = (int(self.res[0]), int(self.res[1]))
        if R1 < 1 or R2 < 1:
            raise ValueError(f"resolution must be positive, got {self.res}")
        self.res = (R1, R2)
        self.density = np.zeros((R2, R1), dtype=np.float64)

    def finish(self, state_label=None, segment_id=None, time_index=None) -> "CSPHistogram":
        return CSPHistogram(
            window=self.window,
            res=self.res,
            density=self.density,
            out_of_window=self.out_of_window,
            state_label=state_label,
            segment_id=segment_id,
            time_index=time_index,
        )


@dataclass(frozen=True)
class CSPHistogram:
    """Finished continuous scatterplot: bin masses plus bookkeeping."""

    window: RangeWindow
    res: tuple[int, int]
    density: np.ndarray  # (R2, R1); flat layout is f1-fastest
    out_of_window: float = 0.0
    state_label: str | None = None
    segment_id: int | str | None = None
    time_index: int | None = None

    def __post_init__(self):
        R1, R2 = (int(self.res[0]), int(self.res[1]))
        d = np.ascontiguousarray(np.asarray(self.density, dtype=np.float64))
        if d.shape != (R2, R1):
            raise ValueError(f"density shape {d.shape} does not match res {(R1, R2)}")
        if np.any(d < 0) or not np.all(np.isfinite(d)):
            raise ValueError("density bins must be finite and non-negative")
        d.flags.writeable = False
        object.__setattr__(self, "density", d)
        object.__setattr__(self, "res", (R1, R2))

    @property
    def total_mass(self) -> float:
        return float(self.density.sum())

    def nonzero_bins(self) -> int:
        return int(np.count_nonzero(self.density))


def rasterize_footprint(fp: TetFootprint, acc: CSPAccumulator) -> None:
    """Deposit one footprint into an accumulator.

    The footprint is given in raw range coordinates; rescaling makes the
    deposited mass plus any out-of-window remainder equal fp.volume exactly.
    """
    R1, R2 = acc.res
    win = acc.window
    hist = acc.density.reshape(-1)
    oow = np.zeros(1)
    vol = np.array([fp.volume])
    grp = np.zeros(1, dtype=np.int64)
    if fp.kind in ("quad", "triangle"):
        h = fp.hull
        if h.shape[0] == 3:
            h = np.vstack([h, h[2:3]])
        hx, hy = win.normalize(h[:, 0], h[:, 1])
        ax, ay = win.normalize(fp.apex[0], fp.apex[1])
        _raster_tents(
            np.stack([hx, hy], axis=1)[None],
            np.array([[ax, ay]]),
            vol,
            grp,
            R1,
            R2,
            hist,
            oow,
        )
    elif fp.kind == "segment":
        q0x, q0y = win.normalize(fp.hull[0, 0], fp.hull[0, 1])
        q1x, q1y = win.normalize(fp.hull[1, 0], fp.hull[1, 1])
        _raster_segments(
            np.array([[q0x, q0y]]), np.array([[q1x, q1y]]), vol, grp, R1, R2, hist, oow
        )
    elif fp.kind == "point":
        qx, qy = win.normalize(fp.hull[0, 0], fp.hull[0, 1])
        _deposit_points(np.array([qx]), np.array([qy]), vol, grp, R1, R2, hist, oow)
    else:
        raise ValueError(f"unknown footprint kind {fp.kind!r}")
    acc.out_of_window += float(oow[0])


# ---------------------------------------------------------------------------
# whole-field computation


def _as_res(res) -> tuple[int, int]:
    if np.isscalar(res):
        r = int(res)
        return (r, r)
    return (int(res[0]), int(res[1]))


def _field_chunks(field: BivariateField, window: RangeWindow, tet_mask=None):
    """Yield (u, v, idx) per fixed-size tet chunk, coordinates normalized."""
    spec = field.spec
    u_all = (field.f1.values - window.min1) / window.width1
    v_all = (field.f2.values - window.min2) / window.width2
    for z0, z1 in iter_slab_chunks(spec, _CHUNK_TETS):
        idx = cell_tets(spec.dims, z0, z1)
        if tet_mask is not None:
            keep = np.asarray(tet_mask(idx), dtype=bool)
            idx = idx[keep]
        if idx.shape[0] == 0:
            continue
        yield u_all[idx], v_all[idx], idx


def _run_grouped(field, window, res, group_of_chunk, n_groups, tet_mask=None, threads=1):
    """Shared driver: rasterize all tets into n_groups histograms.

    group_of_chunk(idx) maps each chunk's tet vertex indices to group ids.
    Chunk boundaries are fixed regardless of thread count and per-chunk
    partial histograms merge in chunk order, so results are bitwise
    identical for any `threads` value.
    """
    R1, R2 = _as_res(res)
    tet_vol = field.spec.cell_volume / TETS_PER_CELL
    hist = np.zeros(n_groups * R2 * R1)
    oow = np.zeros(n_groups)

    def work(args):
        u, v, idx = args
        h = np.zeros(n_groups * R2 * R1)
        o = np.zeros(n_groups)
        _accumulate(
            u, v, np.full(idx.shape[0], tet_vol), group_of_chunk(idx), R1, R2, h, o
        )
        return h, o

    gen = _field_chunks(field, window, tet_mask)
    if threads and int(threads) > 1:
        pending = deque()
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            for ch in gen:
                pending.append(pool.submit(work, ch))
                if len(pending) >= int(threads) * 2:
                    h, o = pending.popleft().result()
                    hist += h
                    oow += o
            while pending:
                h, o = pending.popleft().result()
                hist += h
                oow += o
    else:
        for ch in gen:
            h, o = work(ch)
            hist += h
            oow += o
    return hist.reshape(n_groups, R2, R1), oow


def compute_csp(
    field: BivariateField,
    window: RangeWindow,
    res,
    tet_mask=None,
    threads: int = 1,
    state_label=None,
    segment_id=None,
    time_index=None,
) -> CSPHistogram:
    """Continuous scatterplot of a bivariate field.

    Parameters
    ----------
    field : BivariateField
    window : RangeWindow mapped to [0,1]^2; mass landing outside is tracked
        in the histogram's out_of_window counter.
    res : int or (R1, R2) bin counts along f1/f2.
    tet_mask : optional vectorized predicate; receives tet vertex index
        quadruples (n, 4) and returns a boolean keep-mask. Used for peeling.
    threads : worker threads; results are identical for any value.
    """
    hist, oow = _run_grouped(
        field, window, res, lambda idx: np.zeros(idx.shape[0], dtype=np.int64), 1,
        tet_mask=tet_mask, threads=threads,
    )
    return CSPHistogram(
        window=window,
        res=_as_res(res),
        density=hist[0],
        out_of_window=float(oow[0]),
        state_label=state_label,
        segment_id=segment_id,
        time_index=time_index,
    )


def _consensus_mask(labels: LabelGrid, segment_id: int):
    lab = labels.labels

    if segment_id == BOUNDARY_SEGMENT:

        def mask(idx):
            lv = lab[idx]
            return ~np.all(lv == lv[:, 0:1], axis=1)

    else:

        def mask(idx):
            return np.all(lab[idx] == segment_id, axis=1)

    return mask


def peel_csp(
    field: BivariateField,
    labels: LabelGrid,
    segment_id: int,
    window: RangeWindow,
    res,
    threads: int = 1,
    state_label=None,
    time_index=None,
) -> CSPHistogram:
    """CSP restricted to tets whose four vertices all carry segment_id.

    segment_id may also be BOUNDARY_SEGMENT, selecting straddling tets. The
    result equals compute_csp with the corresponding tet_mask.
    """
    if field.spec.dims != labels.spec.dims:
        raise ValueError("labels grid does not match field grid")
    if segment_id != BOUNDARY_SEGMENT and segment_id not in labels.atom_ids:
        raise ValueError(f"segment id {segment_id} not present in labeling")
    hist = compute_csp(
        field,
        window,
        res,
        tet_mask=_consensus_mask(labels, segment_id),
        threads=threads,
        state_label=state_label,
        segment_id=segment_id,
        time_index=time_index,
    )
    return hist


def peel_all(
    field: BivariateField,
    labels: LabelGrid,
    window: RangeWindow,
    res,
    threads: int = 1,
    state_label=None,
    time_index=None,
) -> dict[int, CSPHistogram]:
    """All segment peels plus the boundary pseudo-segment in one pass.

    Tets are partitioned by vertex-label consensus, so the peels sum to the
    full CSP bin-wise up to floating-point reassociation.
    """
    if field.spec.dims != labels.spec.dims:
        raise ValueError("labels grid does not match field grid")
    if len(labels.atom_ids) == 0:
        raise ValueError("labeling carries no segments to peel")
    ids = np.asarray(sorted(labels.atom_ids), dtype=np.int64)
    lab = labels.labels
    n_groups = ids.shape[0] + 1  # boundary pseudo-segment last

    def group_of(idx):
        lv = lab[idx]
        same = np.all(lv == lv[:, 0:1], axis=1)
        g = np.searchsorted(ids, lv[:, 0])
        return np.where(same, g, n_groups - 1)

    hist, oow = _run_grouped(field, window, res, group_of, n_groups, threads=threads)
    out: dict[int, CSPHistogram] = {}
    keys = [int(i) for i in ids] + [BOUNDARY_SEGMENT]
    for g, key in enumerate(keys):
        out[key] = CSPHistogram(
            window=window,
            res=_as_res(res),
            density=hist[g],
            out_of_window=float(oow[g]),
            state_label=state_label,
            segment_id=key,
            time_index=time_index,
        )
    return out


def mc_csp_oracle(
    field: BivariateField,
    window: RangeWindow,
    res,
    n_samples: int = 1_000_000,
    rng_seed: int = 0,
) -> CSPHistogram:
    """Monte-Carlo reference CSP.

    Uniform samples over the cell-covered domain, trilinear field evaluation,
    each sample carrying domain_volume / n_samples of mass. Converges to
    compute_csp as n_samples grows; used as an independent oracle in tests.
    """
    R1, R2 = _as_res(res)
    spec = field.spec
    nx, ny, nz = spec.dims
    if min(nx, ny, nz) < 2:
        raise ValueError("oracle needs a grid with cells")
    rng = np.random.default_rng(rng_seed)
    extent = np.array(
        [(nx - 1) * spec.spacing[0], (ny - 1) * spec.spacing[1], (nz - 1) * spec.spacing[2]]
    )
    origin = np.asarray(spec.origin)
    mass = spec.domain_volume / n_samples

    f1 = field.f1.values
    f2 = field.f2.values
    density = np.zeros(R2 * R1)
    oow = 0.0
    chunk = 1 << 18
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        pts = rng.random((m, 3)) * extent + origin
        rel = (pts - origin) / np.asarray(spec.spacing)
        i = np.minimum(rel.astype(np.int64), np.array([nx - 2, ny - 2, nz - 2]))
        f = rel - i
        base = i[:, 0] + nx * (i[:, 1] + ny * i[:, 2])
        u = np.zeros(m)
        v = np.zeros(m)
        for cx in (0, 1):
            wx = f[:, 0] if cx else 1.0 - f[:, 0]
            for cy in (0, 1):
                wy = f[:, 1] if cy else 1.0 - f[:, 1]
                for cz in (0, 1):
                    wz = f[:, 2] if cz else 1.0 - f[:, 2]
                    wgt = wx * wy * wz
                    at = base + cx + nx * (cy + ny * cz)
                    u += wgt * f1[at]
                    v += wgt * f2[at]
        un, vn = window.normalize(u, v)
        inwin = (un >= 0) & (un <= 1) & (vn >= 0) & (vn <= 1)
        bi = np.clip(np.floor(un[inwin] * R1).astype(np.int64), 0, R1 - 1)
        bj = np.clip(np.floor(vn[inwin] * R2).astype(np.int64), 0, R2 - 1)
        density += np.bincount(bj * R1 + bi, minlength=R2 * R1)
        oow += float(np.count_nonzero(~inwin))
        done += m
    return CSPHistogram(
        window=window,
        res=(R1, R2),
        density=(density * mass).reshape(R2, R1),
        out_of_window=oow * mass,
    )


# ---------------------------------------------------------------------------
# persistence: flat float64 block plus JSON sidecar


def write_csp(hist: CSPHistogram, path_prefix) -> tuple[Path, Path]:
    prefix = Path(path_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    bin_path = prefix.with_suffix(".bin")
    json_path = prefix.with_suffix(".json")
    hist.density.astype("<f8").tofile(bin_path)
    sidecar = {
        "window": list(hist.window.as_tuple()),
        "res": [hist.res[0], hist.res[1]],
        "total_mass": hist.total_mass,
        "out_of_window": hist.out_of_window,
        "segment_id": hist.segment_id,
        "time_index": hist.time_index,
        "state_label": hist.state_label,
        "dtype": "<f8",
        "order": "f1-fastest",
    }
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return bin_path, json_path


def load_csp(path_prefix) -> CSPHistogram:
    prefix = Path(path_prefix)
    with open(prefix.with_suffix(".json")) as fh:
        sidecar = json.load(fh)
    R1, R2 = (int(sidecar["res"][0]), int(sidecar["res"][1]))
    data = np.fromfile(prefix.with_suffix(".bin"), dtype="<f8")
    if data.shape[0] != R1 * R2:
        raise ValueError(
            f"histogram block holds {data.shape[0]} bins, sidecar says {R1 * R2}"
        )
    w = sidecar["window"]
    hist = CSPHistogram(
        window=RangeWindow(w[0], w[1], w[2], w[3]),
        res=(R1, R2),
        density=data.reshape(R2, R1),
        out_of_window=float(sidecar["out_of_window"]),
        state_label=sidecar.get("state_label"),
        segment_id=sidecar.get("segment_id"),
        time_index=sidecar.get("time_index"),
    )
    stored = float(sidecar["total_mass"])
    if not np.isclose(hist.total_mass, stored, rtol=1e-9, atol=1e-12):
        raise ValueError("sidecar total_mass disagrees with histogram contents")
    return hist
