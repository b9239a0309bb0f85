"""Self-consistency losses linking rolling- and global-shutter domains.

These are evaluation operators, not training signals: they measure how well
any compensator honors the mutual constraints between two rolling-shutter
frames, their event stream, and a latent global-shutter target. All losses
are mean absolute intensity differences in normalized units, so values are
resolution-independent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compensators import Compensator
from .core import EventStream, Frame, TimeMap
from .multiframe import reconstruct_pair
from .spatial import FlowField, FlowParams

DEFAULT_WEIGHTS = (1.0, 1.0, 1.0, 0.01)


@dataclass(frozen=True)
class LossReport:
    """Consistency-loss components and their weighted total.

    ``total`` combines latent, cycle, temporal, and smoothness terms with the
    given weights; the dual-cycle term is reported alongside but not summed.
    """

    lc: float
    cc: float
    tc: float
    tv: float
    dcc: float
    total: float
    weights: tuple[float, float, float, float]

    def as_dict(self) -> dict:
        return {
            "lc": self.lc,
            "cc": self.cc,
            "tc": self.tc,
            "tv": self.tv,
            "dcc": self.dcc,
            "total": self.total,
            "lambda1": self.weights[0],
            "lambda2": self.weights[1],
            "lambda3": self.weights[2],
            "lambda4": self.weights[3],
        }


def _mad(a: Frame, b: Frame) -> float:
    return float(np.mean(np.abs(a.data - b.data)))


def latent_consistency(
    rs1: Frame,
    rs2: Frame,
    stream: EventStream,
    map1: TimeMap,
    map2: TimeMap,
    dst: TimeMap,
    eic: Compensator,
) -> float:
    """Disagreement between the two frames' reconstructions at ``dst``."""
    return _mad(eic(rs1, stream, map1, dst), eic(rs2, stream, map2, dst))


def cycle_consistency(
    rs: Frame,
    stream: EventStream,
    rs_map: TimeMap,
    dst: TimeMap,
    eic: Compensator,
) -> float:
    """Error of the round trip rs_map -> dst -> rs_map against the input."""
    there = eic(rs, stream, rs_map, dst)
    back = eic(there, stream, dst, rs_map)
    return _mad(back, rs)


def temporal_consistency(
    rs1: Frame,
    rs2: Frame,
    stream: EventStream,
    map1: TimeMap,
    map2: TimeMap,
    eic: Compensator,
) -> float:
    """Cross-prediction error between two consecutive frames, both ways."""
    fwd = _mad(eic(rs1, stream, map1, map2), rs2)
    bwd = _mad(eic(rs2, stream, map2, map1), rs1)
    return fwd + bwd


def tv_loss(flow: FlowField) -> float:
    """Mean absolute forward-difference gradient over both flow bands.

    Replicate-border convention: the trailing row/column difference is zero
    and participates in the mean.
    """
    f = np.asarray(flow.data, dtype=np.float64)
    gx = np.zeros_like(f)
    gy = np.zeros_like(f)
    gx[:, :-1, :] = f[:, 1:, :] - f[:, :-1, :]
    gy[:-1, :, :] = f[1:, :, :] - f[:-1, :, :]
    return float(np.mean(np.abs(gx) + np.abs(gy)))


def total_loss(
    lc: float,
    cc: float,
    tc: float,
    tv: float,
    dcc: float = 0.0,
    weights: tuple[float, float, float, float] = DEFAULT_WEIGHTS,
) -> LossReport:
    """Assemble the report; total = w1*lc + w2*cc + w3*tc + w4*tv."""
    w = tuple(float(v) for v in weights)
    if len(w) != 4:
        raise ValueError(f"need exactly 4 weights, got {len(w)}")
    total = w[0] * lc + w[1] * cc + w[2] * tc + w[3] * tv
    return LossReport(
        lc=float(lc), cc=float(cc), tc=float(tc), tv=float(tv),
        dcc=float(dcc), total=float(total), weights=w,
    )


def dual_cycle_consistency(
    rs1: Frame,
    rs2: Frame,
    stream: EventStream,
    map1: TimeMap,
    map2: TimeMap,
    dst: TimeMap,
    eta: float,
    flow_params: FlowParams | None = None,
) -> float:
    """Round-trip error of the two-frame pipeline.

    The pair reconstruction at ``dst`` is re-used, together with the other
    observed frame, to re-estimate each input frame at its own map; the loss
    is the summed mean absolute error of both re-estimates.
    """
    gs_hat = reconstruct_pair(rs1, rs2, stream, map1, map2, dst, eta, flow_params)
    rs1_hat = reconstruct_pair(
        gs_hat, rs2, stream, dst, map2, map1, eta, flow_params
    )
    rs2_hat = reconstruct_pair(
        gs_hat, rs1, stream, dst, map1, map2, eta, flow_params
    )
    return _mad(rs1_hat, rs1) + _mad(rs2_hat, rs2)
