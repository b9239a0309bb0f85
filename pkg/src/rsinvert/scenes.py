"""Deterministic synthetic scenes for verification and demos.

Each builder returns a bundle holding the log trajectory, the simulated event
stream, and the shutter maps involved, so tests and scripts can pull ground
truth at any instant from the same source that generated the events.

The gradient scene is the workhorse: every pixel's log brightness rises at
the same constant rate, so threshold crossings happen simultaneously across
the frame at exact microsecond multiples, and per-pixel trajectories are
monotone. Under those conditions the event-integration error is strictly
bounded by one threshold, which is what the tightest checks rely on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EventStream, Frame, GlobalMap, LogTrajectory, RollingMap, TimeMap
from .simulate import SimConfig, build_trajectory, sample_frame, simulate_events


@dataclass(frozen=True)
class SceneBundle:
    """A trajectory, its event stream, and the shutter maps of interest."""

    trajectory: LogTrajectory
    stream: EventStream
    sim: SimConfig
    rs_map: RollingMap
    rs_map2: RollingMap | None = None

    @property
    def eta(self) -> float:
        return self.sim.eta

    @property
    def geometry(self) -> tuple[int, int]:
        return self.trajectory.geometry

    def frame_at(self, tmap: TimeMap) -> Frame:
        return sample_frame(self.trajectory, tmap)

    def gs_frame(self, t: int) -> Frame:
        return sample_frame(self.trajectory, GlobalMap(t=int(t)))


def gradient_scene(
    height: int = 64,
    width: int = 64,
    samples: int = 241,
    dt_us: int = 50,
    px_per_sample: float = 0.25,
    log_per_px: float = 0.05,
    eta: float = 0.2,
    top: float = 0.9,
    t0_us: int = 2000,
    readout_us: int = 8000,
) -> SceneBundle:
    """Horizontal log-linear gradient translating rigidly along +x.

    Brightness at (t, x) is top * exp(-log_per_px * (x - v t - u_min)), so
    every pixel's log trajectory rises at rate log_per_px * v. With the
    defaults that rate is 2.5e-4 log/us and crossings land exactly on 800 us
    multiples.
    """
    times = np.arange(samples, dtype=np.int64) * dt_us
    v = px_per_sample / dt_us  # px per microsecond
    x = np.arange(width, dtype=np.float64)
    u_min = -v * float(times[-1])
    frames = []
    for t in times:
        log_row = np.log(top) - log_per_px * (x - v * float(t) - u_min)
        frames.append(Frame(np.tile(np.exp(log_row), (height, 1))))
    traj = build_trajectory(frames, times)
    sim = SimConfig(eta=eta)
    stream = simulate_events(traj, sim)
    rs_map = RollingMap(t0=t0_us, span=readout_us, rows=height)
    return SceneBundle(trajectory=traj, stream=stream, sim=sim, rs_map=rs_map)


def _periodic_texture(height: int, width: int, amplitude: float, seed: int):
    """Smooth random texture, periodic along x, as a log-space callable."""
    rng = np.random.default_rng(seed)
    n_waves = 8
    freq_x = rng.integers(2, 8, size=n_waves)  # cycles per width: x-periodic
    freq_y = rng.integers(0, 5, size=n_waves)
    phase = rng.uniform(0, 2 * np.pi, size=n_waves)
    weight = rng.uniform(0.5, 1.0, size=n_waves)
    weight *= amplitude / np.sum(weight)
    ys = np.arange(height, dtype=np.float64)[:, None]

    def tex(x_coords: np.ndarray) -> np.ndarray:
        out = np.zeros((height, width), dtype=np.float64)
        for fx, fy, ph, wgt in zip(freq_x, freq_y, phase, weight):
            arg = 2 * np.pi * (fx * x_coords[None, :] / width + fy * ys / height) + ph
            out += wgt * np.sin(arg)
        return out

    return tex


def texture_scene(
    height: int = 64,
    width: int = 64,
    samples: int = 41,
    dt_us: int = 100,
    shift_px: float = -3.0,
    base: float = 0.22,
    amplitude: float = 1.2,
    eta: float = 0.12,
    seed: int = 7,
) -> SceneBundle:
    """Smooth random texture translating rigidly by ``shift_px`` along x over
    the whole trajectory. Periodic in x, so the motion never uncovers new
    content. The rolling map spans the full trajectory.
    """
    times = np.arange(samples, dtype=np.int64) * dt_us
    span = float(times[-1])
    tex = _periodic_texture(height, width, amplitude, seed)
    x = np.arange(width, dtype=np.float64)
    frames = []
    for t in times:
        offset = shift_px * float(t) / span
        frames.append(Frame(np.exp(np.log(base) + tex(x - offset))))
    traj = build_trajectory(frames, times)
    sim = SimConfig(eta=eta)
    stream = simulate_events(traj, sim)
    rs_map = RollingMap(t0=0, span=int(span), rows=height)
    return SceneBundle(trajectory=traj, stream=stream, sim=sim, rs_map=rs_map)


@dataclass(frozen=True)
class OcclusionScene:
    """Bundle plus the disjoint strips each frame fails to observe."""

    bundle: SceneBundle
    dst: GlobalMap
    hidden_in_first: np.ndarray  # bar-covered at map1 times, background at dst
    hidden_in_second: np.ndarray  # background at dst, bar-covered at map2 times

    def __getattr__(self, name):
        return getattr(self.bundle, name)


def occlusion_scene(
    height: int = 64,
    width: int = 64,
    samples: int = 101,
    dt_us: int = 100,
    bar_width: int = 12,
    bar_start_px: float = 8.0,
    bar_speed_px_per_us: float = 0.0028,
    bar_value: float = 0.08,
    base: float = 0.3,
    amplitude: float = 0.6,
    eta: float = 0.2,
    t0_us: int = 1000,
    readout_us: int = 4000,
    gap_us: int = 1000,
    seed: int = 11,
) -> OcclusionScene:
    """Static textured background with a dark bar sweeping left to right.

    Two consecutive rolling exposures straddle a global target in the
    inter-frame gap. The strips revealed between frame 1 and the target are
    observed only by frame 2 and vice versa, giving the two reconstructions
    complementary blind spots.
    """
    times = np.arange(samples, dtype=np.int64) * dt_us
    tex = _periodic_texture(height, width, amplitude, seed)
    x = np.arange(width, dtype=np.float64)
    bg_log = np.log(base) + tex(x)
    bar_log = np.log(bar_value)

    def bar_interval(t: float) -> tuple[float, float]:
        left = bar_start_px + bar_speed_px_per_us * t
        return left, left + bar_width

    frames = []
    for t in times:
        left, right = bar_interval(float(t))
        covered = (x >= left) & (x < right)
        log_img = np.where(covered[None, :], bar_log, bg_log)
        frames.append(Frame(np.exp(log_img)))
    traj = build_trajectory(frames, times)
    sim = SimConfig(eta=eta)
    stream = simulate_events(traj, sim)

    map1 = RollingMap(t0=t0_us, span=readout_us, rows=height)
    map2 = RollingMap(t0=t0_us + readout_us + gap_us, span=readout_us, rows=height)
    t_dst = (map1.time_at_row(height // 2) + map2.time_at_row(height // 2)) // 2
    dst = GlobalMap(t=int(t_dst))

    # Strip masks from the analytic bar position, eroded 2 px horizontally to
    # stay clear of edge interpolation.
    margin = 2.0
    hidden1 = np.zeros((height, width), dtype=bool)
    hidden2 = np.zeros((height, width), dtype=bool)
    for yy in range(height):
        l1, r1 = bar_interval(float(map1.time_at_row(yy)))
        l2, r2 = bar_interval(float(map2.time_at_row(yy)))
        ld, rd = bar_interval(float(t_dst))
        covered1 = (x >= l1 + margin) & (x < r1 - margin)
        covered2 = (x >= l2 + margin) & (x < r2 - margin)
        free_dst = (x < ld - margin) | (x >= rd + margin)
        hidden1[yy] = covered1 & free_dst
        hidden2[yy] = covered2 & free_dst
    bundle = SceneBundle(
        trajectory=traj, stream=stream, sim=sim, rs_map=map1, rs_map2=map2
    )
    return OcclusionScene(
        bundle=bundle, dst=dst, hidden_in_first=hidden1, hidden_in_second=hidden2
    )


def smooth_random_trajectory(
    height: int,
    width: int,
    samples: int,
    dt_us: int,
    seed: int,
    low: float = 0.05,
    high: float = 0.6,
    max_step: float = 0.12,
) -> LogTrajectory:
    """Bounded random-walk log scene for randomized round-trip checks.

    Intensities stay inside [low, high] so downstream transitions never hit
    the clamp rails.
    """
    rng = np.random.default_rng(seed)
    times = np.arange(samples, dtype=np.int64) * dt_us
    lo, hi = np.log(low), np.log(high)
    cur = rng.uniform(lo + 0.2, hi - 0.2, size=(height, width))
    logs = [cur.copy()]
    for _ in range(samples - 1):
        cur = np.clip(cur + rng.uniform(-max_step, max_step, size=cur.shape), lo, hi)
        logs.append(cur.copy())
    return LogTrajectory(timestamps=times, log_frames=np.stack(logs))
