"""Brightness transport between two shutter maps by event integration.

The per-pixel intensity ratio between source and target instants is
exp(eta * net signed event count) over the oriented segment; multiplying the
source frame by that ratio realizes rolling->global, global->rolling, and
rolling->rolling conversions with the same operator. The forward and reverse
transitions over the same stream cancel exactly (up to clamping).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    EPS_I,
    I_MAX,
    EventStream,
    Frame,
    GeometryError,
    TimeMap,
    check_coverage,
)
from .segmentation import EventSegment, orient, segment

# exp() guard; |net log change| beyond this is saturated anyway.
_MAX_LOG_STEP = 80.0


@dataclass(frozen=True)
class LogChangeMap:
    """Net signed log-brightness increment per pixel (eta * signed count)."""

    data: np.ndarray
    eta: float

    def __post_init__(self):
        self.data.setflags(write=False)


def integrate_log_change(seg: EventSegment, eta: float) -> LogChangeMap:
    """eta * (positive count - negative count) per pixel of an oriented segment."""
    if not seg.oriented:
        raise ValueError("segment must be oriented before integration")
    rows, cols = seg.geometry
    net = np.zeros((rows, cols), dtype=np.float64)
    if len(seg):
        np.add.at(net, (seg.y, seg.x), seg.p.astype(np.float64))
    return LogChangeMap(data=net * eta, eta=eta)


def apply_log_change(frame: Frame, change: LogChangeMap, with_mask: bool = False):
    """Multiply a frame by exp(change), clamped to [EPS_I, I_MAX].

    Color frames get the same scalar ratio on every channel (events are
    monochrome). With ``with_mask`` also returns the boolean raster of pixels
    altered by clamping.
    """
    if change.data.shape != frame.geometry:
        raise GeometryError(
            f"change map {change.data.shape} vs frame {frame.geometry}"
        )
    ratio = np.exp(np.clip(change.data, -_MAX_LOG_STEP, _MAX_LOG_STEP))
    raw = frame.data * (ratio if frame.channels == 1 else ratio[:, :, None])
    out = np.clip(raw, EPS_I, I_MAX)
    if with_mask:
        return Frame(out), raw != out
    return Frame(out)


def temporal_transition(
    frame: Frame,
    stream: EventStream,
    src: TimeMap,
    dst: TimeMap,
    eta: float,
    with_mask: bool = False,
):
    """Transport ``frame`` from exposure map ``src`` to ``dst`` via events.

    Raises CoverageError when either map requests times outside the stream
    bounds (no extrapolation); an empty stream is treated as a static scene
    and yields the input unchanged.
    """
    if frame.geometry != stream.geometry:
        raise GeometryError(f"frame {frame.geometry} vs stream {stream.geometry}")
    check_coverage(stream, [src, dst])
    seg = orient(segment(stream, src, dst))
    change = integrate_log_change(seg, eta)
    return apply_log_change(frame, change, with_mask=with_mask)
