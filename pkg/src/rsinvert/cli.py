"""Command-line surface: simulate, unroll, consistency, evaluate, voxelize.

All failures end with a single machine-readable line on stderr of the form
``error: <code>: <message>`` and a nonzero exit status. Outputs are
deterministic for identical inputs and flags.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import consistency as cons
from .compensators import fused_compensator, spatial_compensator, temporal_compensator
from .core import (
    CoverageError,
    EventStream,
    Frame,
    GeometryError,
    GlobalMap,
    RollingMap,
    TimeMap,
    round_half_up,
)
from .formats import (
    FormatError,
    TimingConfig,
    UnsortedEventsError,
    format_report,
    read_config,
    read_events,
    read_image,
    write_events,
    write_image,
    write_report,
    write_voxel_grid,
)
from .fusion import fuse_st
from .metrics import psnr, ssim
from .multiframe import reconstruct_pair
from .segmentation import orient, segment, voxelize
from .simulate import SimConfig, build_trajectory, sample_frame, simulate_events
from .spatial import FlowParams, estimate_flow, warp_backward
from .temporal import temporal_transition


class UsageError(ValueError):
    """Bad invocation: missing arguments, mismatched inputs."""


_ERROR_CODES = [
    (UsageError, "usage", 2),
    (CoverageError, "coverage", 1),
    (UnsortedEventsError, "unsorted", 1),
    (GeometryError, "geometry", 1),
    (FormatError, "format", 1),
    (OSError, "io", 1),
    (ValueError, "invalid", 1),
]


def _parse_time(text: str, cfg: TimingConfig) -> int:
    """Absolute microseconds, or a readout-relative form like '0.5T'."""
    text = text.strip()
    if text.endswith(("T", "t")):
        frac = float(text[:-1])
        return cfg.t0_us + round_half_up(frac * cfg.readout_T_us)
    return int(text)


def _parse_map(spec: str, cfg: TimingConfig) -> TimeMap:
    """Map spec: 'rs', 'rs2', 'global:<t>', or 'rolling:<t0>:<span>'."""
    spec = spec.strip()
    if spec == "rs":
        return cfg.rs_map(0)
    if spec == "rs2":
        return cfg.rs_map(1)
    kind, _, rest = spec.partition(":")
    if kind == "global":
        return GlobalMap(t=_parse_time(rest, cfg))
    if kind == "rolling":
        parts = rest.split(":")
        if len(parts) != 2:
            raise UsageError(f"rolling map spec needs 'rolling:<t0>:<span>', got '{spec}'")
        return RollingMap(t0=_parse_time(parts[0], cfg), span=int(parts[1]), rows=cfg.H)
    raise UsageError(f"unknown map spec '{spec}'")


def _flow_params(cfg: TimingConfig) -> FlowParams:
    return FlowParams(levels=cfg.flow_levels, patch=cfg.flow_patch, radius=cfg.flow_radius)


def _check_geometry(frame: Frame, cfg: TimingConfig, label: str) -> None:
    if frame.geometry != cfg.geometry:
        raise GeometryError(f"{label} is {frame.geometry}, config says {cfg.geometry}")


def _load_stream(path, cfg: TimingConfig) -> EventStream:
    stream = read_events(path)
    if stream.geometry != cfg.geometry:
        raise GeometryError(
            f"event geometry {stream.geometry} does not match config {cfg.geometry}"
        )
    return stream


# ---------------------------------------------------------------- simulate

def _cmd_simulate(args) -> None:
    cfg = read_config(args.config)
    frame_dir = Path(args.frames)
    paths = sorted(frame_dir.glob("*.png"))
    if not paths:
        raise UsageError(f"no PNG frames in {frame_dir}")
    times = [int(line) for line in Path(args.times).read_text().split()]
    if len(times) != len(paths):
        raise UsageError(f"{len(paths)} frames but {len(times)} timestamps")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise UsageError("timestamps must be strictly increasing")

    frames = [read_image(p) for p in paths]
    for p, f in zip(paths, frames):
        _check_geometry(f, cfg, p.name)
    traj = build_trajectory(frames, times)
    stream = simulate_events(
        traj, SimConfig(eta=cfg.eta, refractory_us=args.refractory_us,
                        noise=args.noise, seed=args.seed)
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_events(stream, out / "events.evt1")

    manifest = {
        "geometry": {"H": cfg.H, "W": cfg.W},
        "eta": cfg.eta,
        "events": "events.evt1",
        "rs_frames": [],
        "gs_frames": [],
    }

    index = 0
    while True:
        rs_map = cfg.rs_map(index)
        if rs_map.time_at_row(cfg.H - 1) > traj.t_max or rs_map.t0 < traj.t_min:
            break
        frame = sample_frame(traj, rs_map)
        name = f"rs_{index:04d}.png"
        write_image(frame, out / name, bit_depth=args.bit_depth)
        manifest["rs_frames"].append(
            {"file": name, "t0_us": rs_map.t0, "readout_T_us": rs_map.span,
             "map": f"rolling:{rs_map.t0}:{rs_map.span}"}
        )
        index += 1

    gt_dir = out / "gt"
    gt_dir.mkdir(exist_ok=True)
    gs_times = []
    if args.gs_times:
        gs_times = [_parse_time(tok, cfg) for tok in args.gs_times.split(",")]
    for t in gs_times:
        frame = sample_frame(traj, GlobalMap(t=t))
        name = f"gs_{t:012d}.png"
        write_image(frame, gt_dir / name, bit_depth=args.bit_depth)
        manifest["gs_frames"].append({"file": f"gt/{name}", "t_us": t, "map": f"global:{t}"})

    with open(out / "manifest.json", "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    print(f"events={len(stream)}")
    print(f"rs_frames={len(manifest['rs_frames'])}")
    print(f"gs_frames={len(manifest['gs_frames'])}")


# ---------------------------------------------------------------- unroll

def _cmd_unroll(args) -> None:
    cfg = read_config(args.config)
    rs = read_image(args.rs)
    _check_geometry(rs, cfg, "--rs frame")
    stream = _load_stream(args.events, cfg)
    if args.mode == "moa" and not args.rs2:
        raise UsageError("--mode moa requires --rs2")

    map1 = cfg.rs_map(0)
    targets = [_parse_time(tok, cfg) for tok in args.t.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    flow_params = _flow_params(cfg)
    rs2 = None
    if args.rs2:
        rs2 = read_image(args.rs2)
        _check_geometry(rs2, cfg, "--rs2 frame")

    for t in targets:
        if t < 0:
            raise UsageError(f"negative target time {t} not representable in filenames")
        dst = GlobalMap(t=t)
        if args.mode == "temporal":
            result = temporal_transition(rs, stream, map1, dst, cfg.eta)
        elif args.mode == "spatial":
            flow = estimate_flow(stream, map1, dst, flow_params)
            result = warp_backward(rs, flow).frame
        elif args.mode == "fused":
            temporal = temporal_transition(rs, stream, map1, dst, cfg.eta)
            flow = estimate_flow(stream, map1, dst, flow_params)
            spatial = warp_backward(rs, flow)
            result = fuse_st(spatial, temporal, rs, stream, map1, dst, cfg.eta)
        else:  # moa
            result = reconstruct_pair(
                rs, rs2, stream, map1, cfg.rs_map(1), dst, cfg.eta,
                flow_params, cfg.lambda_len,
            )
        name = f"gs_{t:012d}.png"
        write_image(result, out / name, bit_depth=args.bit_depth)
        print(f"wrote={name}")


# ---------------------------------------------------------------- consistency

def _cmd_consistency(args) -> None:
    cfg = read_config(args.config)
    rs1 = read_image(args.rs1)
    rs2 = read_image(args.rs2)
    _check_geometry(rs1, cfg, "--rs1 frame")
    _check_geometry(rs2, cfg, "--rs2 frame")
    stream = _load_stream(args.events, cfg)
    map1, map2 = cfg.rs_map(0), cfg.rs_map(1)
    dst = GlobalMap(t=_parse_time(args.t, cfg))
    flow_params = _flow_params(cfg)

    if args.mode == "temporal":
        eic = temporal_compensator(cfg.eta)
    elif args.mode == "spatial":
        eic = spatial_compensator(flow_params)
    else:
        eic = fused_compensator(cfg.eta, flow_params)

    weights = cons.DEFAULT_WEIGHTS
    if args.weights:
        parts = [float(v) for v in args.weights.split(",")]
        if len(parts) != 4:
            raise UsageError("--weights needs 4 comma-separated values")
        weights = tuple(parts)

    lc = cons.latent_consistency(rs1, rs2, stream, map1, map2, dst, eic)
    cc = cons.cycle_consistency(rs1, stream, map1, dst, eic)
    tc = cons.temporal_consistency(rs1, rs2, stream, map1, map2, eic)
    tv = cons.tv_loss(estimate_flow(stream, map1, dst, flow_params))
    dcc = cons.dual_cycle_consistency(
        rs1, rs2, stream, map1, map2, dst, cfg.eta, flow_params
    )
    report = cons.total_loss(lc, cc, tc, tv, dcc=dcc, weights=weights)
    text = format_report(report.as_dict())
    sys.stdout.write(text)
    if args.out:
        write_report(report.as_dict(), args.out)


# ---------------------------------------------------------------- evaluate

def _cmd_evaluate(args) -> None:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    pred_names = sorted(p.name for p in pred_dir.glob("*.png"))
    gt_names = sorted(p.name for p in gt_dir.glob("*.png"))
    if not pred_names or not gt_names:
        raise UsageError("prediction and ground-truth directories must hold PNG files")
    if pred_names != gt_names:
        raise UsageError(
            f"filename sets differ: {sorted(set(pred_names) ^ set(gt_names))}"
        )
    values: dict = {}
    psnrs, ssims = [], []
    for name in pred_names:
        a = read_image(pred_dir / name)
        b = read_image(gt_dir / name)
        p_v = psnr(a, b, peak=args.peak)
        s_v = ssim(a, b, peak=args.peak)
        stem = Path(name).stem
        values[f"frame_{stem}_psnr"] = p_v
        values[f"frame_{stem}_ssim"] = s_v
        psnrs.append(p_v)
        ssims.append(s_v)
    values["psnr_mean"] = (
        math.inf if all(math.isinf(v) for v in psnrs)
        else float(np.mean([v for v in psnrs if not math.isinf(v)]))
    )
    values["ssim_mean"] = float(np.mean(ssims))
    values["frames"] = len(psnrs)
    text = format_report(values)
    sys.stdout.write(text)
    if args.out:
        write_report(values, args.out)


# ---------------------------------------------------------------- voxelize

def _cmd_voxelize(args) -> None:
    cfg = read_config(args.config)
    stream = _load_stream(args.events, cfg)
    src = _parse_map(args.src, cfg)
    dst = _parse_map(args.dst, cfg)
    n_bins = args.n if args.n else cfg.bins_N
    grid = voxelize(orient(segment(stream, src, dst)), n_bins)
    write_voxel_grid(grid, args.out)
    pos, neg = grid.polarity_counts()
    print(f"positive_count={pos}")
    print(f"negative_count={neg}")
    print(f"bins={n_bins}")


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsinvert",
        description="Invert rolling-shutter images into global-shutter frames "
        "using concurrent event streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize shutter frames and events from a frame stack")
    p.add_argument("--frames", required=True, help="directory of source PNG frames")
    p.add_argument("--times", required=True, help="file with one timestamp (us) per frame")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gs-times", default="", help="comma list of target snapshot times")
    p.add_argument("--bit-depth", type=int, default=8, choices=(8, 16))
    p.add_argument("--refractory-us", type=int, default=0, dest="refractory_us")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("unroll", help="reconstruct snapshots at the requested times")
    p.add_argument("--rs", required=True, help="rolling-shutter PNG")
    p.add_argument("--rs2", default=None, help="next rolling-shutter PNG (moa mode)")
    p.add_argument("--events", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--t", required=True, help="comma list: absolute us or readout-relative like 0.5T")
    p.add_argument("--mode", default="fused", choices=("temporal", "spatial", "fused", "moa"))
    p.add_argument("--out", required=True)
    p.add_argument("--bit-depth", type=int, default=8, choices=(8, 16))
    p.set_defaults(func=_cmd_unroll)

    p = sub.add_parser("consistency", help="evaluate the self-consistency losses")
    p.add_argument("--rs1", required=True)
    p.add_argument("--rs2", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--t", default="0.5T")
    p.add_argument("--mode", default="fused", choices=("temporal", "spatial", "fused"))
    p.add_argument("--weights", default="", help="four comma-separated loss weights")
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_consistency)

    p = sub.add_parser("evaluate", help="PSNR/SSIM of a prediction directory against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--peak", type=float, default=1.0)
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("voxelize", help="bin an event segment into a voxel grid file")
    p.add_argument("--events", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--src", required=True, help="map spec: rs | rs2 | global:<t> | rolling:<t0>:<span>")
    p.add_argument("--dst", required=True)
    p.add_argument("--n", type=int, default=0, help="bin count (default: config bins_N)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_voxelize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except SystemExit as exc:
        # argparse already printed its message; normalize the trailer.
        if exc.code not in (0, None):
            print("error: usage: invalid arguments", file=sys.stderr)
            return 2
        return 0
    except Exception as exc:  # noqa: BLE001 - single mapping point to exit codes
        for etype, code, status in _ERROR_CODES:
            if isinstance(exc, etype):
                print(f"error: {code}: {exc}", file=sys.stderr)
                return status
        print(f"error: internal: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
