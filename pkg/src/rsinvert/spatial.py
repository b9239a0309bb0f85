"""Displacement estimation from events and backward image warping.

The default estimator correlates two polarity-agnostic event-count images
(first vs second half of each row's window) through a coarse-to-fine patch
search with subpixel refinement; the measured half-window displacement is
scaled to the full window and signed per row. Any callable with the same
(stream, src, dst, params) -> FlowField signature can stand in for it.

Flow is backward: ``flow[y, x]`` is the offset added to target coordinates to
find where that pixel came from in the source frame, which makes warping a
gather with no holes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import (
    EventStream,
    Frame,
    GeometryError,
    TimeMap,
    check_coverage,
    map_times,
)

_CORR_EPS = 1e-12


@dataclass(frozen=True)
class FlowParams:
    """Patch-correlation estimator settings."""

    levels: int = 3
    patch: int = 16
    radius: int = 8
    refine_iters: int = 2


@dataclass(frozen=True)
class FlowField:
    """Backward displacement field, (H, W, 2) float32 as (dx, dy)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3 or data.shape[2] != 2:
            raise GeometryError(f"flow must be (H, W, 2), got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("flow contains non-finite values")
        bound = float(max(data.shape[0], data.shape[1]))
        if np.abs(data).max(initial=0.0) > bound:
            raise ValueError(f"flow magnitude exceeds sanity bound {bound}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def geometry(self) -> tuple[int, int]:
        return (self.data.shape[0], self.data.shape[1])

    @classmethod
    def zero(cls, geometry):
        return cls(np.zeros((geometry[0], geometry[1], 2), dtype=np.float32))


@dataclass(frozen=True)
class WarpResult:
    """Warped frame plus the mask of pixels sampled fully in bounds."""

    frame: Frame
    validity: np.ndarray

    def __post_init__(self):
        self.validity.setflags(write=False)


def bilinear_sample(data: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Sample a raster at float coordinates, clamping to the edge outside.

    Returns (samples, validity) where validity marks coordinates whose whole
    bilinear footprint lies inside the raster.
    """
    h, w = data.shape[:2]
    valid = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    xc = np.clip(xs, 0, w - 1)
    yc = np.clip(ys, 0, h - 1)
    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    if data.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    out = (
        data[y0, x0] * (1 - fx) * (1 - fy)
        + data[y0, x1] * fx * (1 - fy)
        + data[y1, x0] * (1 - fx) * fy
        + data[y1, x1] * fx * fy
    )
    return out, valid


def warp_backward(frame: Frame, flow: FlowField) -> WarpResult:
    """Pull the source frame through a backward flow with bilinear sampling.

    Out-of-bounds samples clamp to the nearest edge value and are flagged
    invalid; zero flow is an exact identity.
    """
    if flow.geometry != frame.geometry:
        raise GeometryError(f"flow {flow.geometry} vs frame {frame.geometry}")
    h, w = frame.geometry
    gy, gx = np.mgrid[0:h, 0:w]
    xs = gx + flow.data[:, :, 0].astype(np.float64)
    ys = gy + flow.data[:, :, 1].astype(np.float64)
    out, valid = bilinear_sample(frame.data, xs, ys)
    return WarpResult(frame=Frame(out), validity=valid)


def _box(img: np.ndarray, size: int) -> np.ndarray:
    return ndimage.uniform_filter(img, size=size, mode="nearest")


def _shift(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Integer shift with zero fill: out[y, x] = img[y + dy, x + dx]."""
    h, w = img.shape
    out = np.zeros_like(img)
    ys0, ys1 = max(dy, 0), min(h + dy, h)
    xs0, xs1 = max(dx, 0), min(w + dx, w)
    if ys0 >= ys1 or xs0 >= xs1:
        return out
    out[ys0 - dy : ys1 - dy, xs0 - dx : xs1 - dx] = img[ys0:ys1, xs0:xs1]
    return out


def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    h2, w2 = h - h % 2, w - w % 2
    v = img[:h2, :w2]
    return 0.25 * (v[0::2, 0::2] + v[1::2, 0::2] + v[0::2, 1::2] + v[1::2, 1::2])


def _parabola(lo: np.ndarray, mid: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Subpixel peak offset in [-0.5, 0.5] from three samples around a max."""
    denom = lo - 2.0 * mid + hi
    with np.errstate(divide="ignore", invalid="ignore"):
        off = 0.5 * (lo - hi) / denom
    off = np.where((denom < 0) & np.isfinite(off), off, 0.0)
    return np.clip(off, -0.5, 0.5)


def _ncc_scores(a: np.ndarray, b: np.ndarray, center, radius: int, patch: int):
    """Normalized patch correlation of ``a`` against shifts of ``b``.

    Returns a (2r+1, 2r+1, H, W) stack where entry [i, j] scores displacement
    (dy, dx) = center + (i - r, j - r), i.e. b sampled at x + d matching a at x.
    """
    k = max(3, min(patch, min(a.shape)))
    mean_a = _box(a, k)
    var_a = np.maximum(_box(a * a, k) - mean_a**2, 0.0)
    mean_b = _box(b, k)
    sq_b = _box(b * b, k)
    n = 2 * radius + 1
    scores = np.empty((n, n, a.shape[0], a.shape[1]), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            dy = center[0] + i - radius
            dx = center[1] + j - radius
            b_s = _shift(b, dy, dx)
            mb = _shift(mean_b, dy, dx)
            vb = np.maximum(_shift(sq_b, dy, dx) - mb**2, 0.0)
            cov = _box(a * b_s, k) - mean_a * mb
            scores[i, j] = cov / np.sqrt(var_a * vb + _CORR_EPS)
            # Deterministic tie-break toward the smaller displacement.
            scores[i, j] -= 1e-9 * (dy * dy + dx * dx)
    return scores


def _global_shift(a: np.ndarray, b: np.ndarray, center, radius: int):
    """Whole-image integer registration: argmax of the overlap correlation.

    Scores b sampled at x + d against a over their valid overlap; used at
    coarse pyramid levels where per-pixel patches are unreliable.
    """
    h, w = a.shape
    best = (-np.inf, 0, 0)
    for dy in range(center[0] - radius, center[0] + radius + 1):
        for dx in range(center[1] - radius, center[1] + radius + 1):
            ys0, ys1 = max(dy, 0), min(h + dy, h)
            xs0, xs1 = max(dx, 0), min(w + dx, w)
            if ys1 - ys0 < 4 or xs1 - xs0 < 4:
                continue
            av = a[ys0 - dy : ys1 - dy, xs0 - dx : xs1 - dx].ravel()
            bv = b[ys0:ys1, xs0:xs1].ravel()
            av = av - av.mean()
            bv = bv - bv.mean()
            denom = np.sqrt((av @ av) * (bv @ bv))
            if denom <= 0:
                continue
            score = float(av @ bv) / denom - 1e-9 * (dy * dy + dx * dx)
            if score > best[0]:
                best = (score, dy, dx)
    return best[1], best[2]


def _match(a: np.ndarray, b: np.ndarray, center, radius: int, patch: int):
    """Per-pixel displacement (dy, dx float) maximizing patch correlation.

    Images are edge-replicated before scoring so border patches see plausible
    content instead of zero fill.
    """
    pad = radius + max(abs(center[0]), abs(center[1])) + patch // 2 + 1
    a_p = np.pad(a, pad, mode="edge")
    b_p = np.pad(b, pad, mode="edge")
    scores = _ncc_scores(a_p, b_p, center, radius, patch)[:, :, pad:-pad, pad:-pad]
    n = 2 * radius + 1
    flat = scores.reshape(n * n, *a.shape)
    best = np.argmax(flat, axis=0)
    bi, bj = np.divmod(best, n)
    take = lambda ii, jj: flat[ii * n + jj, np.arange(a.shape[0])[:, None], np.arange(a.shape[1])[None, :]]
    s_mid = take(bi, bj)
    iy0, iy1 = np.maximum(bi - 1, 0), np.minimum(bi + 1, n - 1)
    jx0, jx1 = np.maximum(bj - 1, 0), np.minimum(bj + 1, n - 1)
    off_y = np.where(
        (bi > 0) & (bi < n - 1), _parabola(take(iy0, bj), s_mid, take(iy1, bj)), 0.0
    )
    off_x = np.where(
        (bj > 0) & (bj < n - 1), _parabola(take(bi, jx0), s_mid, take(bi, jx1)), 0.0
    )
    dy = center[0] + (bi - radius) + off_y
    dx = center[1] + (bj - radius) + off_x
    return dy, dx


def half_window_counts(stream: EventStream, src: TimeMap, dst: TimeMap):
    """Polarity-agnostic event counts over each row window's two halves."""
    rows, cols = stream.geometry
    src_times = map_times(src, rows)
    dst_times = map_times(dst, rows)
    w0 = np.minimum(src_times, dst_times)
    w1 = np.maximum(src_times, dst_times)
    c1 = np.zeros((rows, cols), dtype=np.float64)
    c2 = np.zeros((rows, cols), dtype=np.float64)
    if len(stream):
        row_of = stream.y
        inside = (stream.t >= w0[row_of]) & (stream.t < w1[row_of])
        mid = 0.5 * (w0 + w1)
        first = inside & (stream.t < mid[row_of])
        second = inside & ~first
        np.add.at(c1, (stream.y[first], stream.x[first]), 1.0)
        np.add.at(c2, (stream.y[second], stream.x[second]), 1.0)
    return c1, c2, src_times, dst_times


def estimate_flow(
    stream: EventStream,
    src: TimeMap,
    dst: TimeMap,
    params: FlowParams | None = None,
) -> FlowField:
    """Estimate the backward flow between two shutter maps from events alone.

    Rows whose window has zero length get exactly zero flow; rows with a
    window but no events inherit the nearest eventful row's flow, rescaled by
    the ratio of signed window spans. Deterministic for fixed inputs.
    """
    params = params or FlowParams()
    rows, cols = stream.geometry
    check_coverage(stream, [src, dst])
    c1, c2, src_times, dst_times = half_window_counts(stream, src, dst)
    signed_span = (dst_times - src_times).astype(np.float64)

    if not (c1.any() or c2.any()):
        return FlowField.zero((rows, cols))

    a = _box(c1, 3)
    b = _box(c2, 3)

    pyr_a, pyr_b = [a], [b]
    for _ in range(params.levels - 1):
        if min(pyr_a[-1].shape) < 8:
            break
        pyr_a.append(_downsample(pyr_a[-1]))
        pyr_b.append(_downsample(pyr_b[-1]))

    # Coarse-to-fine: coarse levels register globally to bound the search;
    # the finest level resolves per-pixel displacement around that prior.
    center = (0, 0)
    for lvl in range(len(pyr_a) - 1, 0, -1):
        gy_i, gx_i = _global_shift(pyr_a[lvl], pyr_b[lvl], center, params.radius)
        center = (gy_i * 2, gx_i * 2)
    dy, dx = _match(pyr_a[0], pyr_b[0], center, params.radius, params.patch)

    # Iterative subpixel refinement at full resolution: warp the late-half
    # counts by the current estimate and fit the residual peak.
    gy, gx = np.mgrid[0:rows, 0:cols].astype(np.float64)
    for _ in range(params.refine_iters):
        b_w, _ = bilinear_sample(b, gx + dx, gy + dy)
        r_dy, r_dx = _match(a, b_w, (0, 0), 1, params.patch)
        dy = dy + r_dy
        dx = dx + r_dx

    # Half-window displacement -> full-window backward flow, signed per row.
    sgn = np.sign(signed_span)
    flow = np.zeros((rows, cols, 2), dtype=np.float64)
    flow[:, :, 0] = -2.0 * dx * sgn[:, None]
    flow[:, :, 1] = -2.0 * dy * sgn[:, None]

    # Vertical fill of eventful flow into eventless rows (nonzero window only).
    row_events = (c1 + c2).sum(axis=1)
    donors = np.nonzero((row_events > 0) & (signed_span != 0))[0]
    if len(donors):
        needy = np.nonzero((row_events == 0) & (signed_span != 0))[0]
        if len(needy):
            pos = np.searchsorted(donors, needy)
            left = donors[np.clip(pos - 1, 0, len(donors) - 1)]
            right = donors[np.clip(pos, 0, len(donors) - 1)]
            nearest = np.where(
                np.abs(needy - left) <= np.abs(right - needy), left, right
            )
            scale = signed_span[needy] / signed_span[nearest]
            flow[needy] = flow[nearest] * scale[:, None, None]

    flow[:, :, 0] = ndimage.median_filter(flow[:, :, 0], size=3, mode="nearest")
    flow[:, :, 1] = ndimage.median_filter(flow[:, :, 1], size=3, mode="nearest")
    flow[signed_span == 0] = 0.0
    bound = float(max(rows, cols))
    return FlowField(np.clip(flow, -bound, bound).astype(np.float32))
