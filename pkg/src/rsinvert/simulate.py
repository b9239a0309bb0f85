"""Synthesis of mutually consistent shutter frames and event streams.

One log-linear trajectory drives everything: global-shutter sampling,
rolling-shutter sampling, and threshold-crossing event generation. That makes
the quantization residual between integrated events and the true log change
a strict invariant (never more than one threshold per pixel) instead of an
approximation, which is what the verification suite leans on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CoverageError,
    EventStream,
    Frame,
    GeometryError,
    LogTrajectory,
    TimeMap,
    luminance,
    map_times,
    round_half_up,
    safe_log,
    sort_events,
)

# Absolute slack (log units) when testing whether a segment reaches a
# threshold level; absorbs float noise in trajectories built from exp/log
# round trips without affecting real crossings.
_CROSS_TOL = 1e-12


@dataclass(frozen=True)
class SimConfig:
    """Event generation parameters.

    eta: contrast threshold in log units (> 0).
    refractory_us: minimum gap between emitted events at one pixel; crossings
        inside the dead time are dropped and their change is lost.
    noise: std of per-crossing trigger jitter in log units (0 = ideal).
    seed: RNG seed for the jitter draws.
    """

    eta: float
    refractory_us: int = 0
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.noise < 0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")
        if self.refractory_us < 0:
            raise ValueError(f"refractory_us must be >= 0, got {self.refractory_us}")


def build_trajectory(frames, timestamps) -> LogTrajectory:
    """Stack frames into a log-luminance trajectory.

    Frames must share geometry; timestamps must be strictly increasing.
    Color frames are reduced to BT.601 luminance first, since events model a
    monochrome sensor.
    """
    frames = list(frames)
    ts = np.asarray(timestamps, dtype=np.int64)
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    if ts.shape != (len(frames),):
        raise ValueError(f"{len(frames)} frames but {ts.shape} timestamps")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    geom = None
    logs = []
    for f in frames:
        f = f if isinstance(f, Frame) else Frame(np.asarray(f))
        if geom is None:
            geom = f.geometry
        elif f.geometry != geom:
            raise GeometryError(f"frame geometry {f.geometry} != {geom}")
        logs.append(safe_log(luminance(f)))
    return LogTrajectory(timestamps=ts, log_frames=np.stack(logs))


def sample_frame(traj: LogTrajectory, tmap: TimeMap) -> Frame:
    """Expose a frame from the trajectory under the given shutter map.

    A global map yields an ordinary snapshot; a rolling map samples each row
    at its own scanline instant. Times outside the trajectory raise
    CoverageError.
    """
    rows, _ = traj.geometry
    times = map_times(tmap, rows)
    log_img = traj.values_at_rows(times)
    return Frame(np.exp(log_img))


def simulate_events(traj: LogTrajectory, cfg: SimConfig) -> EventStream:
    """Emit threshold-crossing events for every pixel of the trajectory.

    Each pixel tracks a reference level starting at its first sample; an
    event fires whenever the trajectory reaches reference +/- eta, with the
    timestamp interpolated to the crossing and rounded half-up to whole
    microseconds. The reference then steps by exactly +/- eta, so residual
    state carries across segments. Output is globally sorted by (t, y, x, p)
    and byte-stable for identical inputs and seed.
    """
    ts = traj.timestamps
    logs = traj.log_frames
    n_samples, rows, cols = logs.shape
    eta = cfg.eta

    base = logs[0].ravel()
    level = np.zeros(rows * cols, dtype=np.int64)  # signed steps from base
    flat_y, flat_x = np.divmod(np.arange(rows * cols, dtype=np.int64), cols)

    if cfg.noise > 0.0:
        rng = np.random.default_rng(cfg.seed)
        jitter = rng.normal(0.0, cfg.noise, size=rows * cols)
    else:
        rng = None
        jitter = None

    chunks_t, chunks_x, chunks_y, chunks_p = [], [], [], []

    def emit(pix_idx, m_levels, a, b, ta, tb, polarity):
        frac = (base[pix_idx] + m_levels * eta - a) / (b - a)
        t_cross = round_half_up(ta + frac * (tb - ta))
        t_cross = np.clip(t_cross, ta, tb)
        chunks_t.append(t_cross)
        chunks_x.append(flat_x[pix_idx])
        chunks_y.append(flat_y[pix_idx])
        chunks_p.append(np.full(len(pix_idx), polarity, dtype=np.int8))

    for i in range(n_samples - 1):
        a = logs[i].ravel()
        b = logs[i + 1].ravel()
        ta, tb = int(ts[i]), int(ts[i + 1])

        if rng is None:
            # Closed form: within a linear segment all remaining crossings of
            # the fixed level ladder can be enumerated at once.
            rising = b > a
            m_hi = np.floor((b - base + _CROSS_TOL) / eta).astype(np.int64)
            k_up = np.where(rising, np.maximum(0, m_hi - level), 0)
            if k_up.any():
                idx = np.nonzero(k_up)[0]
                counts = k_up[idx]
                pix = np.repeat(idx, counts)
                step = np.arange(len(pix)) - np.repeat(
                    np.concatenate(([0], np.cumsum(counts)[:-1])), counts
                )
                m = level[pix] + step + 1
                emit(pix, m, a[pix], b[pix], ta, tb, 1)
                level[idx] += counts

            falling = b < a
            m_lo = np.ceil((b - base - _CROSS_TOL) / eta).astype(np.int64)
            k_dn = np.where(falling, np.maximum(0, level - m_lo), 0)
            if k_dn.any():
                idx = np.nonzero(k_dn)[0]
                counts = k_dn[idx]
                pix = np.repeat(idx, counts)
                step = np.arange(len(pix)) - np.repeat(
                    np.concatenate(([0], np.cumsum(counts)[:-1])), counts
                )
                m = level[pix] - step - 1
                emit(pix, m, a[pix], b[pix], ta, tb, -1)
                level[idx] -= counts
        else:
            # Jittered triggers: one crossing per round, fresh jitter after
            # each emitted event. The reference still steps by exactly eta.
            while True:
                up_trig = base + (level + 1) * eta + jitter
                dn_trig = base + (level - 1) * eta - jitter
                # Triggers already below (above) the segment start fire at ta,
                # via the [ta, tb] clip on the interpolated crossing time.
                up = (b > a) & (b + _CROSS_TOL >= up_trig)
                dn = (b < a) & (b - _CROSS_TOL <= dn_trig)
                if not (up.any() or dn.any()):
                    break
                if up.any():
                    idx = np.nonzero(up)[0]
                    frac = (up_trig[idx] - a[idx]) / (b[idx] - a[idx])
                    t_cross = np.clip(round_half_up(ta + frac * (tb - ta)), ta, tb)
                    chunks_t.append(t_cross)
                    chunks_x.append(flat_x[idx])
                    chunks_y.append(flat_y[idx])
                    chunks_p.append(np.ones(len(idx), dtype=np.int8))
                    level[idx] += 1
                    jitter[idx] = rng.normal(0.0, cfg.noise, size=len(idx))
                if dn.any():
                    idx = np.nonzero(dn)[0]
                    frac = (dn_trig[idx] - a[idx]) / (b[idx] - a[idx])
                    t_cross = np.clip(round_half_up(ta + frac * (tb - ta)), ta, tb)
                    chunks_t.append(t_cross)
                    chunks_x.append(flat_x[idx])
                    chunks_y.append(flat_y[idx])
                    chunks_p.append(np.full(len(idx), -1, dtype=np.int8))
                    level[idx] -= 1
                    jitter[idx] = rng.normal(0.0, cfg.noise, size=len(idx))

    if chunks_t:
        t = np.concatenate(chunks_t)
        x = np.concatenate(chunks_x).astype(np.int32)
        y = np.concatenate(chunks_y).astype(np.int32)
        p = np.concatenate(chunks_p)
    else:
        t = np.zeros(0, dtype=np.int64)
        x = np.zeros(0, dtype=np.int32)
        y = np.zeros(0, dtype=np.int32)
        p = np.zeros(0, dtype=np.int8)

    if cfg.refractory_us > 0 and len(t):
        t, x, y, p = _apply_refractory(t, x, y, p, cols, cfg.refractory_us)

    t, x, y, p = sort_events(t, x, y, p)
    return EventStream.from_arrays(
        t, x, y, p, traj.geometry, t_min=traj.t_min, t_max=traj.t_max
    )


def _apply_refractory(t, x, y, p, cols, refractory_us):
    """Drop events closer than the dead time to the previous kept event."""
    order = np.lexsort((p, x, t, y * cols + x))
    pix = (y[order].astype(np.int64) * cols + x[order]).astype(np.int64)
    tt = t[order]
    keep = np.ones(len(tt), dtype=bool)
    last_pix = -1
    last_t = 0
    for i in range(len(tt)):
        if pix[i] != last_pix:
            last_pix = pix[i]
            last_t = tt[i]
            continue
        if tt[i] - last_t < refractory_us:
            keep[i] = False
        else:
            last_t = tt[i]
    sel = order[keep]
    return t[sel], x[sel], y[sel], p[sel]


def signed_crossing_count(traj: LogTrajectory, eta: float) -> np.ndarray:
    """Reference oracle: net threshold steps of each pixel over the whole
    trajectory, computed by a direct per-segment walk of the level ladder.

    Independent of the event list layout; used to cross-check simulators.
    """
    logs = traj.log_frames
    base = logs[0]
    level = np.zeros_like(base, dtype=np.int64)
    for i in range(1, logs.shape[0]):
        b = logs[i]
        m_hi = np.floor((b - base + _CROSS_TOL) / eta).astype(np.int64)
        m_lo = np.ceil((b - base - _CROSS_TOL) / eta).astype(np.int64)
        level = np.where(m_hi > level, m_hi, level)
        level = np.where(m_lo < level, m_lo, level)
    return level
