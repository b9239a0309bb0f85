"""Event segment selection between two shutter maps, and voxelization.

A segment gathers, per row, the events between that row's source and target
exposure instants (half-open window [min, max)). Rows whose target precedes
the source are flagged backward; `orient` normalizes them by time reflection
and polarity negation so that downstream integration always runs forward.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import EventStream, GeometryError, TimeMap, map_times

DEFAULT_BINS = 16


@dataclass(frozen=True)
class EventSegment:
    """Per-row slice of a stream between two time maps.

    Events are stored grouped by row (ascending time inside a row);
    ``row_ptr[y]:row_ptr[y+1]`` addresses row y. ``window_start``/``window_end``
    hold each row's unsigned [start, end) bounds; ``backward`` marks rows whose
    target instant precedes the source. ``oriented`` is True once backward rows
    have been reflected/negated into forward form.
    """

    geometry: tuple[int, int]
    src: TimeMap
    dst: TimeMap
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    row_ptr: np.ndarray
    window_start: np.ndarray
    window_end: np.ndarray
    backward: np.ndarray
    oriented: bool = False

    def __post_init__(self):
        for name in ("t", "x", "y", "p", "row_ptr", "window_start", "window_end", "backward"):
            getattr(self, name).setflags(write=False)

    def __len__(self) -> int:
        return len(self.t)

    def row_events(self, row: int):
        """(t, x, p) arrays of one row."""
        a, b = self.row_ptr[row], self.row_ptr[row + 1]
        return self.t[a:b], self.x[a:b], self.p[a:b]

    def durations_us(self) -> np.ndarray:
        """Unsigned window length per row, microseconds."""
        return self.window_end - self.window_start

    def polarity_counts(self) -> tuple[int, int]:
        """(positive, negative) event totals."""
        pos = int(np.count_nonzero(self.p > 0))
        return pos, len(self.p) - pos


def _group_by_row(t, x, y, p, rows):
    order = np.lexsort((p, x, t, y))
    t, x, y, p = t[order], x[order], y[order], p[order]
    row_ptr = np.zeros(rows + 1, dtype=np.int64)
    np.add.at(row_ptr, y + 1, 1)
    np.cumsum(row_ptr, out=row_ptr)
    return t, x, y, p, row_ptr


def segment(stream: EventStream, src: TimeMap, dst: TimeMap) -> EventSegment:
    """Select the events between ``src`` and ``dst`` row by row.

    Row y keeps events with t in [min(src(y), dst(y)), max(src(y), dst(y))).
    Symmetric in its map arguments up to the per-row direction flags.
    """
    rows, cols = stream.geometry
    src_times = map_times(src, rows)
    dst_times = map_times(dst, rows)
    w0 = np.minimum(src_times, dst_times)
    w1 = np.maximum(src_times, dst_times)

    row_of = stream.y
    mask = (stream.t >= w0[row_of]) & (stream.t < w1[row_of])
    t, x, y, p, row_ptr = _group_by_row(
        stream.t[mask], stream.x[mask], stream.y[mask], stream.p[mask], rows
    )
    return EventSegment(
        geometry=(rows, cols),
        src=src,
        dst=dst,
        t=t,
        x=x,
        y=y,
        p=p,
        row_ptr=row_ptr,
        window_start=w0,
        window_end=w1,
        backward=dst_times < src_times,
        oriented=False,
    )


def orient(seg: EventSegment) -> EventSegment:
    """Toggle backward rows between raw and forward-normalized form.

    Backward rows get their event times reflected inside the row window and
    their polarities negated; applying `orient` twice restores the original
    segment exactly.
    """
    if not seg.backward.any():
        return replace(seg, oriented=not seg.oriented)
    flip = seg.backward[seg.y]
    t = np.where(flip, seg.window_start[seg.y] + seg.window_end[seg.y] - seg.t, seg.t)
    p = np.where(flip, -seg.p, seg.p).astype(np.int8)
    t, x, y, p, row_ptr = _group_by_row(t, seg.x, seg.y, p, seg.geometry[0])
    return replace(seg, t=t, x=x, y=y, p=p, row_ptr=row_ptr, oriented=not seg.oriented)


@dataclass(frozen=True)
class EventVoxelGrid:
    """Row-aware temporal binning of a segment: (2N, H, W) counts.

    Channels [0, N) hold positive-polarity counts, [N, 2N) negative. Each
    row's bins split that row's own window into N equal spans.
    """

    bins: np.ndarray
    n_bins: int
    src: TimeMap
    dst: TimeMap

    def __post_init__(self):
        self.bins.setflags(write=False)

    @property
    def geometry(self) -> tuple[int, int]:
        return (self.bins.shape[1], self.bins.shape[2])

    def polarity_counts(self) -> tuple[int, int]:
        n = self.n_bins
        return int(self.bins[:n].sum()), int(self.bins[n:].sum())


def voxelize(seg: EventSegment, n_bins: int = DEFAULT_BINS) -> EventVoxelGrid:
    """Bin an oriented segment into a (2N, H, W) polarity-split count grid.

    Bin index is floor(N * (t - start) / (end - start)); an event exactly at
    the window end (possible after time reflection) lands in the last bin.
    Zero-length windows contribute all-zero rows.
    """
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    if not seg.oriented:
        raise ValueError("segment must be oriented before voxelization")
    rows, cols = seg.geometry
    grid = np.zeros((2 * n_bins, rows, cols), dtype=np.int64)
    if len(seg):
        dur = (seg.window_end - seg.window_start)[seg.y].astype(np.float64)
        rel = (seg.t - seg.window_start[seg.y]).astype(np.float64)
        idx = np.floor(n_bins * rel / dur).astype(np.int64)
        idx = np.clip(idx, 0, n_bins - 1)
        chan = np.where(seg.p > 0, idx, n_bins + idx)
        np.add.at(grid, (chan, seg.y, seg.x), 1)
    return EventVoxelGrid(bins=grid, n_bins=n_bins, src=seg.src, dst=seg.dst)
