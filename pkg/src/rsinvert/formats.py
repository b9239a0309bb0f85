"""On-disk interchange formats and the runtime configuration file.

Everything here is bit-exact and dependency-light by design:

* events: "EVT1" binary container (20-byte header: magic, u16 version, u16 H,
  u16 W, u16 reserved, u32 count-low, u32 count-high; then packed 14-byte
  little-endian records of u64 t, u16 x, u16 y, i8 p, u8 pad), plus a plain
  "t x y p" text fallback;
* flow: the de-facto two-band float raster ("PIEH" magic, i32 width/height,
  row-major float32 dx,dy pairs);
* voxel grids: 8-field header (magic, version, N, H, W, reserved, source and
  target map descriptors) followed by channel-major u32 counts;
* images: 8- or 16-bit PNG with intensities normalized to the bit peak;
* config and reports: flat ``key = value`` text with ``#`` comments.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, fields

import cv2
import numpy as np

from .core import (
    EventStream,
    Frame,
    GeometryError,
    GlobalMap,
    RollingMap,
    TimeMap,
    _lex_nondecreasing,
)
from .segmentation import EventVoxelGrid
from .spatial import FlowField


class FormatError(ValueError):
    """Malformed or truncated container data."""


class UnsortedEventsError(FormatError):
    """Event records violate the required (t, y, x, p) order."""


# ---------------------------------------------------------------- events

EVT1_MAGIC = b"EVT1"
_EVT1_HEADER = struct.Struct("<4sHHHHII")
_EVT1_RECORD = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "<i1"), ("pad", "<u1")]
)


def write_events(stream: EventStream, path) -> None:
    """Serialize a stream to the binary event container."""
    if len(stream) and stream.t.min() < 0:
        raise ValueError("binary container stores unsigned timestamps only")
    rows, cols = stream.geometry
    n = len(stream)
    header = _EVT1_HEADER.pack(
        EVT1_MAGIC, 1, rows, cols, 0, n & 0xFFFFFFFF, n >> 32
    )
    records = np.zeros(n, dtype=_EVT1_RECORD)
    records["t"] = stream.t
    records["x"] = stream.x
    records["y"] = stream.y
    records["p"] = stream.p
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(records.tobytes())


def read_events(path) -> EventStream:
    """Parse the binary event container, enforcing geometry and sort order.

    The container carries no observation bounds, so the stream bounds are the
    first/last record times (0/0 for an empty file).
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _EVT1_HEADER.size:
        raise FormatError(f"file too short for header: {len(raw)} bytes")
    magic, version, rows, cols, _, lo, hi = _EVT1_HEADER.unpack_from(raw)
    if magic != EVT1_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != 1:
        raise FormatError(f"unsupported version {version}")
    n = (hi << 32) | lo
    payload = raw[_EVT1_HEADER.size :]
    if len(payload) != n * _EVT1_RECORD.itemsize:
        raise FormatError(
            f"expected {n} records ({n * _EVT1_RECORD.itemsize} bytes), "
            f"got {len(payload)} bytes"
        )
    records = np.frombuffer(payload, dtype=_EVT1_RECORD)
    t = records["t"].astype(np.int64)
    x = records["x"].astype(np.int32)
    y = records["y"].astype(np.int32)
    p = records["p"].astype(np.int8)
    if n:
        if x.max() >= cols or y.max() >= rows:
            raise GeometryError(f"event outside {rows}x{cols} geometry")
        if not np.all(np.abs(p) == 1):
            raise FormatError("polarity must be +1 or -1")
        if not _lex_nondecreasing(t, y, x, p):
            raise UnsortedEventsError("records are not sorted by (t, y, x, p)")
    return EventStream.from_arrays(t, x, y, p, (rows, cols), validate=False)


def write_events_text(stream: EventStream, path) -> None:
    """Plain-text fallback: one "t x y p" line per event."""
    with open(path, "w", encoding="ascii") as fh:
        for t, x, y, p in zip(stream.t, stream.x, stream.y, stream.p):
            fh.write(f"{t} {x} {y} {p}\n")


def read_events_text(path, geometry) -> EventStream:
    """Parse the text fallback; geometry is not stored, so it must be given."""
    ts, xs, ys, ps = [], [], [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise FormatError(f"line {lineno}: expected 't x y p'")
            ts.append(int(parts[0]))
            xs.append(int(parts[1]))
            ys.append(int(parts[2]))
            ps.append(int(parts[3]))
    t = np.asarray(ts, dtype=np.int64)
    x = np.asarray(xs, dtype=np.int32)
    y = np.asarray(ys, dtype=np.int32)
    p = np.asarray(ps, dtype=np.int8)
    if len(t) and not _lex_nondecreasing(t, y, x, p):
        raise UnsortedEventsError("records are not sorted by (t, y, x, p)")
    return EventStream.from_arrays(t, x, y, p, geometry)


# ---------------------------------------------------------------- flow

FLOW_MAGIC = 202021.25  # float32 whose bytes read "PIEH"


def write_flow(flow: FlowField, path) -> None:
    h, w = flow.geometry
    with open(path, "wb") as fh:
        fh.write(np.float32(FLOW_MAGIC).tobytes())
        fh.write(struct.pack("<ii", w, h))
        fh.write(flow.data.astype("<f4").tobytes())


def read_flow(path) -> FlowField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise FormatError("flow file too short")
    magic = np.frombuffer(raw[:4], dtype="<f4")[0]
    if raw[:4] != b"PIEH" or magic != np.float32(FLOW_MAGIC):
        raise FormatError(f"bad flow magic {raw[:4]!r}")
    w, h = struct.unpack_from("<ii", raw, 4)
    expected = 12 + 8 * h * w
    if len(raw) != expected:
        raise FormatError(f"expected {expected} bytes, got {len(raw)}")
    data = np.frombuffer(raw[12:], dtype="<f4").reshape(h, w, 2)
    return FlowField(data.copy())


# ---------------------------------------------------------------- voxel grids

VOXEL_MAGIC = b"EVXG"
_VOXEL_HEADER = struct.Struct("<4sIIIII")
_MAP_DESC = struct.Struct("<Iqqq")  # kind, then (t,-,-) or (t0, span, rows)


def _pack_map(tmap: TimeMap) -> bytes:
    if isinstance(tmap, GlobalMap):
        return _MAP_DESC.pack(0, tmap.t, 0, 0)
    return _MAP_DESC.pack(1, tmap.t0, tmap.span, tmap.rows)


def _unpack_map(raw: bytes, offset: int) -> TimeMap:
    kind, a, b, c = _MAP_DESC.unpack_from(raw, offset)
    if kind == 0:
        return GlobalMap(t=a)
    if kind == 1:
        return RollingMap(t0=a, span=b, rows=c)
    raise FormatError(f"unknown map kind {kind}")


def write_voxel_grid(grid: EventVoxelGrid, path) -> None:
    bins = grid.bins
    if bins.min(initial=0) < 0 or bins.max(initial=0) > 0xFFFFFFFF:
        raise ValueError("bin counts do not fit unsigned 32-bit storage")
    rows, cols = grid.geometry
    with open(path, "wb") as fh:
        fh.write(_VOXEL_HEADER.pack(VOXEL_MAGIC, 1, grid.n_bins, rows, cols, 0))
        fh.write(_pack_map(grid.src))
        fh.write(_pack_map(grid.dst))
        fh.write(bins.astype("<u4").tobytes())


def read_voxel_grid(path) -> EventVoxelGrid:
    with open(path, "rb") as fh:
        raw = fh.read()
    head = _VOXEL_HEADER.size
    if len(raw) < head + 2 * _MAP_DESC.size:
        raise FormatError("voxel file too short")
    magic, version, n_bins, rows, cols, _ = _VOXEL_HEADER.unpack_from(raw)
    if magic != VOXEL_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != 1:
        raise FormatError(f"unsupported version {version}")
    src = _unpack_map(raw, head)
    dst = _unpack_map(raw, head + _MAP_DESC.size)
    payload = raw[head + 2 * _MAP_DESC.size :]
    expected = 2 * n_bins * rows * cols * 4
    if len(payload) != expected:
        raise FormatError(f"expected {expected} payload bytes, got {len(payload)}")
    bins = (
        np.frombuffer(payload, dtype="<u4")
        .reshape(2 * n_bins, rows, cols)
        .astype(np.int64)
    )
    return EventVoxelGrid(bins=bins, n_bins=n_bins, src=src, dst=dst)


# ---------------------------------------------------------------- images

def write_image(frame: Frame, path, bit_depth: int = 8) -> None:
    """Write a normalized frame as PNG; encoder settings are left at the
    library defaults, which are deterministic for fixed input."""
    if bit_depth not in (8, 16):
        raise ValueError(f"bit depth must be 8 or 16, got {bit_depth}")
    peak = 255 if bit_depth == 8 else 65535
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    data = np.clip(np.rint(frame.data * peak), 0, peak).astype(dtype)
    if data.ndim == 3:
        data = cv2.cvtColor(data, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), data):
        raise OSError(f"failed to write image {path}")


def read_image(path) -> Frame:
    """Read a PNG into a normalized frame (peak maps to 1.0)."""
    data = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if data is None:
        raise OSError(f"failed to read image {path}")
    if data.ndim == 3:
        if data.shape[2] == 4:
            data = data[:, :, :3]
        data = cv2.cvtColor(data, cv2.COLOR_BGR2RGB)
    peak = 65535.0 if data.dtype == np.uint16 else 255.0
    return Frame(data.astype(np.float64) / peak)


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class TimingConfig:
    """Runtime parameters shared by the command-line tools.

    ``t0_us``/``readout_T_us`` place the first rolling exposure;
    ``interframe_gap_us`` is the idle time before the next frame starts.
    """

    H: int
    W: int
    eta: float
    t0_us: int
    readout_T_us: int
    interframe_gap_us: int = 0
    bins_N: int = 16
    flow_levels: int = 3
    flow_patch: int = 16
    flow_radius: int = 8
    lambda_len: float = 0.05

    def __post_init__(self):
        if self.readout_T_us <= 0:
            raise ValueError("readout_T_us must be positive")
        if self.bins_N < 1:
            raise ValueError("bins_N must be >= 1")
        if self.eta <= 0:
            raise ValueError("eta must be positive")

    def rs_map(self, index: int = 0) -> RollingMap:
        start = self.t0_us + index * (self.readout_T_us + self.interframe_gap_us)
        return RollingMap(t0=start, span=self.readout_T_us, rows=self.H)

    @property
    def geometry(self) -> tuple[int, int]:
        return (self.H, self.W)


_REQUIRED_KEYS = ("H", "W", "eta", "t0_us", "readout_T_us")


def parse_config(text: str) -> TimingConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    float_keys = {"eta", "lambda_len"}
    known = {f.name for f in fields(TimingConfig)}
    kwargs = {}
    for key, value in values.items():
        if key not in known:
            raise FormatError(f"unknown config key '{key}'")
        caster = float if key in float_keys else int
        try:
            kwargs[key] = caster(value)
        except ValueError as exc:
            raise FormatError(f"config key '{key}': {exc}") from exc
    missing = [k for k in _REQUIRED_KEYS if k not in kwargs]
    if missing:
        raise FormatError(f"config missing required keys: {', '.join(missing)}")
    return TimingConfig(**kwargs)


def read_config(path) -> TimingConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def write_config(cfg: TimingConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in fields(TimingConfig):
            fh.write(f"{f.name} = {getattr(cfg, f.name)}\n")


# ---------------------------------------------------------------- reports

def format_value(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def format_report(values: dict) -> str:
    return "".join(f"{k}={format_value(v)}\n" for k, v in values.items())


def write_report(values: dict, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_report(values))


def read_report(path) -> dict:
    out = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            out[key] = float(value)
    return out
