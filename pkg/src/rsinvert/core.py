"""Shared domain types: events, shutter time maps, frames, log trajectories.

Time is integer microseconds everywhere at module boundaries; interpolation
uses float64 internally. Intensities are linear, normalized so that 1.0 is
the nominal white level, and floored at ``EPS_I`` so logs are always finite.
All types are immutable after construction and safe to share across threads.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

# Log-safe intensity floor and the ceiling used by transition clamping,
# both in normalized intensity units.
EPS_I = 1e-4
I_MAX = 1.0

# ITU-R BT.601 luma weights for RGB -> single channel.
BT601_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


class GeometryError(ValueError):
    """Shapes, geometries, or map dimensions disagree."""


class CoverageError(ValueError):
    """A requested time lies outside the available data (no extrapolation)."""


def round_half_up(values):
    """Round to the nearest integer with halves going toward +inf.

    Deterministic across platforms, unlike banker's rounding.
    """
    arr = np.floor(np.asarray(values, dtype=np.float64) + 0.5)
    if np.isscalar(values) or np.ndim(values) == 0:
        return int(arr)
    return arr.astype(np.int64)


@dataclass(frozen=True)
class GlobalMap:
    """Exposure map of a global shutter: every row samples at the same instant."""

    t: int

    def time_at_row(self, y: int) -> int:
        return int(self.t)

    def times(self, rows: int) -> np.ndarray:
        return np.full(rows, self.t, dtype=np.int64)


@dataclass(frozen=True)
class RollingMap:
    """Exposure map of a rolling shutter.

    Row ``y`` of ``rows`` total is sampled at ``t0 + round(y * span / rows)``
    (half-up rounding), i.e. the readout sweeps the full ``span`` microseconds
    top to bottom starting at ``t0``.
    """

    t0: int
    span: int
    rows: int

    def __post_init__(self):
        if self.span <= 0:
            raise ValueError(f"readout span must be positive, got {self.span}")
        if self.rows < 1:
            raise ValueError(f"rows must be >= 1, got {self.rows}")

    def time_at_row(self, y: int) -> int:
        if not 0 <= y < self.rows:
            raise IndexError(f"row {y} outside [0, {self.rows})")
        # Integer form of round_half_up(y * span / rows); exact for t >= 0.
        return int(self.t0) + (2 * y * self.span + self.rows) // (2 * self.rows)

    def times(self, rows: int) -> np.ndarray:
        if rows != self.rows:
            raise GeometryError(f"map has {self.rows} rows, raster has {rows}")
        y = np.arange(rows, dtype=np.int64)
        return self.t0 + (2 * y * self.span + self.rows) // (2 * self.rows)


TimeMap = Union[GlobalMap, RollingMap]


def scanline_time(tmap: TimeMap, y: int) -> int:
    """Exposure instant of row ``y`` under the given map, in microseconds."""
    if isinstance(tmap, RollingMap):
        return tmap.time_at_row(y)
    return tmap.time_at_row(y)


def map_times(tmap: TimeMap, rows: int) -> np.ndarray:
    """Per-row exposure instants as an int64 array of length ``rows``."""
    return tmap.times(rows)


def _as_intensity_array(image) -> np.ndarray:
    data = image.data if isinstance(image, Frame) else np.asarray(image, dtype=np.float64)
    if data.ndim not in (2, 3):
        raise GeometryError(f"expected HxW or HxWx3 raster, got shape {data.shape}")
    if data.ndim == 3 and data.shape[2] not in (1, 3):
        raise GeometryError(f"channel count must be 1 or 3, got {data.shape[2]}")
    return data


@dataclass(frozen=True)
class Frame:
    """Positive-intensity raster, gray (H, W) or RGB (H, W, 3), float64.

    Values are floored at ``EPS_I`` on construction so the log domain is
    always safe; transition operators additionally cap at ``I_MAX``.
    """

    data: np.ndarray

    def __post_init__(self):
        data = _as_intensity_array(self.data)
        if data.ndim == 3 and data.shape[2] == 1:
            data = data[:, :, 0]
        data = np.maximum(data.astype(np.float64, copy=True), EPS_I)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def geometry(self) -> tuple[int, int]:
        return (self.data.shape[0], self.data.shape[1])

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else self.data.shape[2]


def luminance(image):
    """Single-channel view of an image, BT.601-weighted for RGB.

    Accepts a Frame or a bare array and returns the same kind. Gray inputs
    are returned unchanged (Frame) or as float64 copies (array).
    """
    data = _as_intensity_array(image)
    if data.ndim == 2:
        return image if isinstance(image, Frame) else data.astype(np.float64)
    gray = data @ BT601_WEIGHTS
    gray = np.maximum(gray, EPS_I)
    return Frame(gray) if isinstance(image, Frame) else gray


def safe_log(image) -> np.ndarray:
    """Natural log of intensities, with values floored at ``EPS_I`` first."""
    data = _as_intensity_array(image)
    return np.log(np.maximum(data, EPS_I))


@dataclass(frozen=True)
class LogTrajectory:
    """Per-pixel piecewise-linear log-luminance over time.

    ``timestamps`` is a strictly increasing int64 vector of sample instants,
    ``log_frames`` the matching (S, H, W) stack of log-luminance rasters.
    Evaluation between samples interpolates linearly in the log domain.
    """

    timestamps: np.ndarray
    log_frames: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        lf = np.asarray(self.log_frames, dtype=np.float64)
        if ts.ndim != 1 or len(ts) < 2:
            raise ValueError("trajectory needs at least two samples")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if lf.ndim != 3 or lf.shape[0] != len(ts):
            raise GeometryError(f"log_frames shape {lf.shape} does not match {len(ts)} samples")
        ts.setflags(write=False)
        lf.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "log_frames", lf)

    @property
    def t_min(self) -> int:
        return int(self.timestamps[0])

    @property
    def t_max(self) -> int:
        return int(self.timestamps[-1])

    @property
    def geometry(self) -> tuple[int, int]:
        return (self.log_frames.shape[1], self.log_frames.shape[2])

    def _segment_weights(self, times: np.ndarray):
        ts = self.timestamps
        if np.any(times < ts[0]) or np.any(times > ts[-1]):
            raise CoverageError(
                f"query outside trajectory bounds [{ts[0]}, {ts[-1]}]"
            )
        idx = np.searchsorted(ts, times, side="right") - 1
        idx = np.clip(idx, 0, len(ts) - 2)
        span = (ts[idx + 1] - ts[idx]).astype(np.float64)
        w = (np.asarray(times, dtype=np.float64) - ts[idx]) / span
        return idx, w

    def value_at(self, t) -> np.ndarray:
        """Log raster at a single time within bounds."""
        idx, w = self._segment_weights(np.asarray([t], dtype=np.int64))
        i, w = int(idx[0]), float(w[0])
        if w == 0.0:
            return self.log_frames[i].copy()
        return (1.0 - w) * self.log_frames[i] + w * self.log_frames[i + 1]

    def values_at_rows(self, row_times: np.ndarray) -> np.ndarray:
        """Log raster where row ``y`` is evaluated at ``row_times[y]``."""
        rows = self.log_frames.shape[1]
        row_times = np.asarray(row_times, dtype=np.int64)
        if row_times.shape != (rows,):
            raise GeometryError(f"need {rows} row times, got shape {row_times.shape}")
        idx, w = self._segment_weights(row_times)
        r = np.arange(rows)
        lo = self.log_frames[idx, r, :]
        hi = self.log_frames[idx + 1, r, :]
        return (1.0 - w)[:, None] * lo + w[:, None] * hi


def _lex_nondecreasing(*columns) -> bool:
    """True if rows of the given parallel columns are lexicographically sorted."""
    n = len(columns[0])
    if n <= 1:
        return True
    lt = np.zeros(n - 1, dtype=bool)
    eq = np.ones(n - 1, dtype=bool)
    for col in columns:
        a, b = col[:-1], col[1:]
        lt |= eq & (a < b)
        eq &= a == b
    return bool(np.all(lt | eq))


@dataclass(frozen=True)
class EventStream:
    """Globally time-sorted polarity impulses from a fixed-geometry sensor.

    Columnar storage: ``t`` (int64 microseconds), ``x``/``y`` (int32 pixel
    coordinates), ``p`` (int8, +1 or -1). Events are sorted by (t, y, x, p).
    ``t_min``/``t_max`` bound the observation interval, which may extend
    beyond the first/last event (quiet sensor != no coverage).
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    geometry: tuple[int, int]
    t_min: int
    t_max: int

    def __post_init__(self):
        for name in ("t", "x", "y", "p"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def from_arrays(cls, t, x, y, p, geometry, t_min=None, t_max=None, validate=True):
        t = np.asarray(t, dtype=np.int64)
        x = np.asarray(x, dtype=np.int32)
        y = np.asarray(y, dtype=np.int32)
        p = np.asarray(p, dtype=np.int8)
        rows, cols = int(geometry[0]), int(geometry[1])
        if not (len(t) == len(x) == len(y) == len(p)):
            raise ValueError("event columns must have equal length")
        if t_min is None:
            t_min = int(t[0]) if len(t) else 0
        if t_max is None:
            t_max = int(t[-1]) if len(t) else 0
        if validate:
            if len(t):
                if t.min() < t_min or t.max() > t_max:
                    raise ValueError("events outside [t_min, t_max]")
                if x.min() < 0 or x.max() >= cols or y.min() < 0 or y.max() >= rows:
                    raise GeometryError(f"event coordinates outside {rows}x{cols}")
                if not np.all(np.abs(p) == 1):
                    raise ValueError("polarity must be +1 or -1")
                if not _lex_nondecreasing(t, y, x, p):
                    raise ValueError("events must be sorted by (t, y, x, p)")
            if t_max < t_min:
                raise ValueError("t_max < t_min")
        return cls(t=t, x=x, y=y, p=p, geometry=(rows, cols), t_min=int(t_min), t_max=int(t_max))

    @classmethod
    def empty(cls, geometry, t_min=0, t_max=0):
        z = np.zeros(0, dtype=np.int64)
        return cls.from_arrays(z, z, z, z, geometry, t_min=t_min, t_max=t_max)


def sort_events(t, x, y, p):
    """Return the arrays reordered into canonical (t, y, x, p) order."""
    order = np.lexsort((p, x, y, t))
    return t[order], x[order], y[order], p[order]


def check_coverage(stream: EventStream, maps, rows: int | None = None) -> None:
    """Raise CoverageError if any map requests times outside the stream bounds.

    An empty stream imposes no constraint: zero events over any interval is a
    legitimate observation of a static scene.
    """
    if len(stream) == 0:
        return
    rows = stream.geometry[0] if rows is None else rows
    for tmap in maps:
        times = map_times(tmap, rows)
        lo, hi = int(times.min()), int(times.max())
        if lo < stream.t_min or hi > stream.t_max:
            raise CoverageError(
                f"requested times [{lo}, {hi}] exceed event coverage "
                f"[{stream.t_min}, {stream.t_max}]"
            )
