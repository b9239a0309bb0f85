"""Two-frame reconstruction with motion/occlusion-aware blending.

Each rolling-shutter frame independently yields a target-time candidate via
the full single-frame pipeline (segmentation, event integration, flow,
residual fusion). A confidence map then mixes the two candidates: a side is
trusted less where its candidate disagrees with its own source after reverse
integration, and where its event window is long (more accumulated noise).
Regions occluded in one frame but visible in the other are the motivating
case: there the sides' errors are disjoint and the blend beats either alone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import (
    EPS_I,
    I_MAX,
    EventStream,
    Frame,
    GeometryError,
    RollingMap,
    TimeMap,
    luminance,
)
from .fusion import EPS_R, fuse_st
from .segmentation import EventSegment, orient, segment
from .spatial import FlowField, FlowParams, estimate_flow, warp_backward
from .temporal import LogChangeMap, apply_log_change, integrate_log_change

# Residual-units penalty per second of event-window duration; stands in for
# accumulated event noise when ranking the two sides.
LAMBDA_LEN = 0.05
_RESIDUAL_BOX = 5


@dataclass(frozen=True)
class SideInfo:
    """Everything one rolling-shutter frame contributes at the target time."""

    segment: EventSegment
    flow: FlowField
    log_change: LogChangeMap
    candidate: Frame
    validity: np.ndarray

    def __post_init__(self):
        self.validity.setflags(write=False)


def reconstruct_single(
    rs: Frame,
    stream: EventStream,
    rs_map: TimeMap,
    dst: TimeMap,
    eta: float,
    flow_params: FlowParams | None = None,
) -> SideInfo:
    """Full single-frame pipeline from one shutter map to another."""
    if rs.geometry != stream.geometry:
        raise GeometryError(f"frame {rs.geometry} vs stream {stream.geometry}")
    seg = orient(segment(stream, rs_map, dst))
    log_change = integrate_log_change(seg, eta)
    temporal = apply_log_change(rs, log_change)
    flow = estimate_flow(stream, rs_map, dst, flow_params)
    spatial = warp_backward(rs, flow)
    candidate = fuse_st(spatial, temporal, rs, stream, rs_map, dst, eta)
    return SideInfo(
        segment=seg,
        flow=flow,
        log_change=log_change,
        candidate=candidate,
        validity=spatial.validity,
    )


def _own_source_residual(side: SideInfo, rs: Frame) -> np.ndarray:
    # Reverse transport via the stored log change equals running the temporal
    # transition back to the side's own map.
    back = np.clip(
        np.asarray(luminance(side.candidate).data) * np.exp(-side.log_change.data),
        EPS_I,
        I_MAX,
    )
    diff = np.abs(back - np.asarray(luminance(rs).data))
    return ndimage.uniform_filter(diff, size=_RESIDUAL_BOX, mode="nearest")


def pair_confidence(
    s1: SideInfo,
    s2: SideInfo,
    rs1: Frame,
    rs2: Frame,
    lambda_len: float = LAMBDA_LEN,
) -> np.ndarray:
    """Per-pixel weight of side 1 in [0, 1].

    Combines each side's back-projection residual with its event-window
    duration (seconds) as a noise prior:
    m = (r2 + l*L2) / (r1 + r2 + l*(L1 + L2) + EPS_R). Exactly symmetric
    inputs give 0.5; invalid side-1 pixels force 0, invalid side-2 pixels
    force 1 (both invalid: 0.5).
    """
    r1 = _own_source_residual(s1, rs1)
    r2 = _own_source_residual(s2, rs2)
    rows, cols = r1.shape
    dur1 = (s1.segment.durations_us().astype(np.float64) / 1e6)[:, None]
    dur2 = (s2.segment.durations_us().astype(np.float64) / 1e6)[:, None]
    a1 = r1 + lambda_len * np.broadcast_to(dur1, (rows, cols))
    a2 = r2 + lambda_len * np.broadcast_to(dur2, (rows, cols))
    m = np.where(a1 == a2, 0.5, a2 / (a1 + a2 + EPS_R))
    m = np.where(s1.validity | ~s2.validity, m, 0.0)
    m = np.where(s2.validity | ~s1.validity, m, 1.0)
    m = np.where(~s1.validity & ~s2.validity, 0.5, m)
    return np.clip(m, 0.0, 1.0)


def reconstruct_pair(
    rs1: Frame,
    rs2: Frame,
    stream: EventStream,
    map1: TimeMap,
    map2: TimeMap,
    dst: TimeMap,
    eta: float,
    flow_params: FlowParams | None = None,
    lambda_len: float = LAMBDA_LEN,
    return_sides: bool = False,
):
    """Confidence-weighted blend of the two single-frame reconstructions.

    When both maps are rolling, frame 1 must not start after frame 2;
    identical maps degenerate to the single-frame result.
    """
    if isinstance(map1, RollingMap) and isinstance(map2, RollingMap):
        if map1.t0 > map2.t0:
            raise ValueError("map1 must not start after map2")
    s1 = reconstruct_single(rs1, stream, map1, dst, eta, flow_params)
    s2 = reconstruct_single(rs2, stream, map2, dst, eta, flow_params)
    m = pair_confidence(s1, s2, rs1, rs2, lambda_len)
    mm = m if s1.candidate.channels == 1 else m[:, :, None]
    out = Frame(mm * s1.candidate.data + (1.0 - mm) * s2.candidate.data)
    if return_sides:
        return out, s1, s2, m
    return out
