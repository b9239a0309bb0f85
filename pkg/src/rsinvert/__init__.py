"""Event-assisted rolling-shutter inversion.

Reconstructs global-shutter frames at arbitrary timestamps from
rolling-shutter images and concurrent event streams, with a matching
simulator, self-consistency losses, and reference quality metrics.
"""

from .compensators import (
    Compensator,
    fused_compensator,
    spatial_compensator,
    temporal_compensator,
)
from .consistency import (
    DEFAULT_WEIGHTS,
    LossReport,
    cycle_consistency,
    dual_cycle_consistency,
    latent_consistency,
    temporal_consistency,
    total_loss,
    tv_loss,
)
from .core import (
    EPS_I,
    I_MAX,
    CoverageError,
    EventStream,
    Frame,
    GeometryError,
    GlobalMap,
    LogTrajectory,
    RollingMap,
    TimeMap,
    luminance,
    map_times,
    safe_log,
    scanline_time,
)
from .fusion import FusionWeights, back_projection_residual, fuse_st
from .metrics import MetricReport, compare, psnr, ssim
from .multiframe import SideInfo, pair_confidence, reconstruct_pair, reconstruct_single
from .segmentation import (
    EventSegment,
    EventVoxelGrid,
    orient,
    segment,
    voxelize,
)
from .simulate import SimConfig, build_trajectory, sample_frame, simulate_events
from .spatial import (
    FlowField,
    FlowParams,
    WarpResult,
    estimate_flow,
    warp_backward,
)
from .temporal import LogChangeMap, integrate_log_change, temporal_transition

__version__ = "0.1.0"
