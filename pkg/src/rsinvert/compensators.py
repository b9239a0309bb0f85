"""Pluggable frame-transition operators.

A compensator is any callable ``(frame, stream, src_map, dst_map) -> Frame``
that transports a frame between two shutter maps. The consistency suite and
the CLI are written against this contract, so the analytic operators below
can be swapped for alternative estimators without touching downstream code.
"""
from __future__ import annotations

from typing import Callable, Optional

from .core import EventStream, Frame, TimeMap
from .fusion import fuse_st
from .spatial import FlowField, FlowParams, estimate_flow, warp_backward
from .temporal import temporal_transition

Compensator = Callable[[Frame, EventStream, TimeMap, TimeMap], Frame]
FlowEstimator = Callable[[EventStream, TimeMap, TimeMap, Optional[FlowParams]], FlowField]


def temporal_compensator(eta: float) -> Compensator:
    """Pure event-integration transition."""

    def run(frame, stream, src, dst):
        return temporal_transition(frame, stream, src, dst, eta)

    return run


def spatial_compensator(
    params: FlowParams | None = None,
    flow_fn: FlowEstimator | None = None,
) -> Compensator:
    """Flow-and-warp transition; ``flow_fn`` overrides the default estimator."""
    estimator = flow_fn or estimate_flow

    def run(frame, stream, src, dst):
        flow = estimator(stream, src, dst, params)
        return warp_backward(frame, flow).frame

    return run


def fused_compensator(
    eta: float,
    params: FlowParams | None = None,
    flow_fn: FlowEstimator | None = None,
) -> Compensator:
    """Residual-weighted blend of the spatial and temporal transitions."""
    estimator = flow_fn or estimate_flow

    def run(frame, stream, src, dst):
        temporal = temporal_transition(frame, stream, src, dst, eta)
        flow = estimator(stream, src, dst, params)
        spatial = warp_backward(frame, flow)
        return fuse_st(spatial, temporal, frame, stream, src, dst, eta)

    return run
