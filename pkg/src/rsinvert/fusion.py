"""Merging of the spatial and temporal reconstruction candidates.

Each candidate is projected back to the source exposure via reverse event
integration; the smoothed absolute mismatch to the observed source frame is
its residual. The candidate with the lower residual gets the higher weight,
and the output is a per-pixel convex combination of the two.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import EventStream, Frame, GeometryError, TimeMap, luminance
from .spatial import WarpResult
from .temporal import temporal_transition

# Denominator guard of the residual-ratio weights.
EPS_R = 1e-6
_RESIDUAL_BOX = 5


@dataclass(frozen=True)
class FusionWeights:
    """Spatial-candidate weight in [0, 1] plus the residuals behind it."""

    w: np.ndarray
    residual_s: np.ndarray
    residual_t: np.ndarray

    def __post_init__(self):
        for name in ("w", "residual_s", "residual_t"):
            getattr(self, name).setflags(write=False)


def back_projection_residual(
    candidate: Frame,
    source: Frame,
    stream: EventStream,
    src: TimeMap,
    dst: TimeMap,
    eta: float,
) -> np.ndarray:
    """Consistency residual of a target-time candidate against its source.

    The candidate is transported from ``dst`` back to ``src`` by event
    integration; the per-pixel absolute luminance gap to the observed source
    is smoothed with a 5x5 box to tame event quantization spikes.
    """
    if candidate.geometry != source.geometry:
        raise GeometryError(f"candidate {candidate.geometry} vs source {source.geometry}")
    back = temporal_transition(candidate, stream, dst, src, eta)
    diff = np.abs(np.asarray(luminance(back).data) - np.asarray(luminance(source).data))
    return ndimage.uniform_filter(diff, size=_RESIDUAL_BOX, mode="nearest")


def residual_weights(residual_s, residual_t, validity=None) -> FusionWeights:
    """Weight of the spatial candidate from the two residual rasters.

    w = residual_t / (residual_s + residual_t + EPS_R), exact ties map to 0.5,
    and pixels with invalid spatial samples are forced to w = 0.
    """
    r_s = np.asarray(residual_s, dtype=np.float64)
    r_t = np.asarray(residual_t, dtype=np.float64)
    w = np.where(r_s == r_t, 0.5, r_t / (r_s + r_t + EPS_R))
    if validity is not None:
        w = np.where(validity, w, 0.0)
    return FusionWeights(w=np.clip(w, 0.0, 1.0), residual_s=r_s, residual_t=r_t)


def fuse_st(
    spatial: WarpResult,
    temporal: Frame,
    source: Frame,
    stream: EventStream,
    src: TimeMap,
    dst: TimeMap,
    eta: float,
    return_weights: bool = False,
):
    """Blend the spatial and temporal candidates by back-projection residuals.

    The output is pixelwise between the two candidates; invalid-warp pixels
    take the temporal value outright.
    """
    if spatial.frame.geometry != temporal.geometry:
        raise GeometryError(
            f"spatial {spatial.frame.geometry} vs temporal {temporal.geometry}"
        )
    r_s = back_projection_residual(spatial.frame, source, stream, src, dst, eta)
    r_t = back_projection_residual(temporal, source, stream, src, dst, eta)
    weights = residual_weights(r_s, r_t, spatial.validity)
    w = weights.w if temporal.channels == 1 else weights.w[:, :, None]
    fused = Frame(w * spatial.frame.data + (1.0 - w) * temporal.data)
    if return_weights:
        return fused, weights
    return fused
