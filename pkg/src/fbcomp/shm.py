"""Byte-exact layout of the client/server shared-memory region.

All multi-byte fields are little-endian regardless of host, so client
and server may run on different architectures. Only offsets appear in
the region, never addresses; the mapping base may differ per process.

Region layout (offsets from region start):

  0   ready           u32  (0 = not ready, 1 = ready; written last by server)
  4   magic           u32  (0x4A464243, "JFBC")
  8   parameters      width u32, height u32, pitch u32, framerate u32,
                      timeout u64 (microseconds)  -> 24 bytes
  32  formatCount     u32
  36  formatOffset    u32  -> array of formatCount u32 format tags
  40  frameCount      u32  (= queue depth)
  44  frameOffset     u32  -> frameCount records of {status u32, seq u64},
                             16 bytes each, 16-byte aligned
  48  framePadding    u32  (alignment of each frame's pixel block)
  52  frameDataOffset u32  -> first frame's pixels; frame i starts at
                             frameDataOffset + i * frameStride where
                             frameStride = round_up(pitch * height, framePadding)
  56  privateOffset   u32  -> 256-byte opaque implementation area

Private area contents (implementation-defined, zero-initialized):
  +0  negotiated format tag u32, written by the client during attach
  +8  heartbeat counter u64, incremented by the client on every
      submitted frame (single writer: client)
  +16 detach flag u32, set by the server when it disconnects the
      client (single writer: server)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Optional

from .clock import Clock, WallClock
from .errors import (CorruptRegion, IncompatibleProtocol, RegionTooSmall,
                     ServerUnavailable)
from .frame_queue import STATUS_RECORD_SIZE, FrameQueue
from .pixel import BYTES_PER_PIXEL, FramebufferContext, PixelFormat, SurfaceGeometry

MAGIC = 0x4A464243  # "JFBC"
HEADER_SIZE = 60
FORMAT_TABLE_OFFSET = 64
PRIVATE_AREA_SIZE = 256
DEFAULT_FRAME_PADDING = 4096

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_PARAMS = struct.Struct("<IIIIQ")  # width, height, pitch, framerate, timeout

OFF_READY = 0
OFF_MAGIC = 4
OFF_PARAMS = 8
OFF_FORMAT_COUNT = 32
OFF_FORMAT_OFFSET = 36
OFF_FRAME_COUNT = 40
OFF_FRAME_OFFSET = 44
OFF_FRAME_PADDING = 48
OFF_FRAME_DATA_OFFSET = 52
OFF_PRIVATE_OFFSET = 56

PRIV_FORMAT = 0
PRIV_HEARTBEAT = 8
PRIV_DETACH = 16


def _round_up(value: int, align: int) -> int:
    return (value + align - 1) & ~(align - 1)


@dataclass(frozen=True)
class RegionConfig:
    """Server-side surface and queue configuration for one client region."""

    geometry: SurfaceGeometry
    formats: tuple
    framerate: int
    timeout_us: int
    queue_depth: int
    frame_padding: int = DEFAULT_FRAME_PADDING

    def __post_init__(self):
        if not self.formats:
            raise ValueError("at least one pixel format is required")
        if self.frame_padding <= 0 or self.frame_padding & (self.frame_padding - 1):
            raise ValueError("framePadding must be a power of two")
        if not 1 <= self.queue_depth <= 8:
            raise ValueError("queue depth must be in 1..8")
        if self.framerate <= 0 or self.timeout_us <= 0:
            raise ValueError("framerate and timeout must be positive")
        if self.timeout_us < 2 * (1_000_000 // self.framerate):
            raise ValueError("timeout must cover at least two frame periods")


@dataclass(frozen=True)
class RegionLayout:
    format_offset: int
    format_count: int
    frame_offset: int
    frame_count: int
    frame_padding: int
    frame_data_offset: int
    frame_stride: int
    private_offset: int
    required_size: int


def layout_for(config: RegionConfig) -> RegionLayout:
    format_offset = FORMAT_TABLE_OFFSET
    frame_offset = _round_up(format_offset + 4 * len(config.formats), STATUS_RECORD_SIZE)
    private_offset = frame_offset + STATUS_RECORD_SIZE * config.queue_depth
    frame_data_offset = _round_up(private_offset + PRIVATE_AREA_SIZE, config.frame_padding)
    frame_stride = _round_up(config.geometry.frame_bytes, config.frame_padding)
    required = frame_data_offset + config.queue_depth * frame_stride
    return RegionLayout(
        format_offset=format_offset,
        format_count=len(config.formats),
        frame_offset=frame_offset,
        frame_count=config.queue_depth,
        frame_padding=config.frame_padding,
        frame_data_offset=frame_data_offset,
        frame_stride=frame_stride,
        private_offset=private_offset,
        required_size=required,
    )


def required_region_size(config: RegionConfig) -> int:
    return layout_for(config).required_size


def encode_header(config: RegionConfig, region) -> RegionLayout:
    """Lay out the whole region with ready = 0.

    Publication is a separate step (`publish`) so every other field is
    in place before any client can observe ready = 1.
    """
    buf = memoryview(region)
    lay = layout_for(config)
    if len(buf) < lay.required_size:
        raise RegionTooSmall(lay.required_size, len(buf))
    g = config.geometry
    _U32.pack_into(buf, OFF_READY, 0)
    _U32.pack_into(buf, OFF_MAGIC, MAGIC)
    _PARAMS.pack_into(buf, OFF_PARAMS, g.width, g.height, g.pitch,
                      config.framerate, config.timeout_us)
    _U32.pack_into(buf, OFF_FORMAT_COUNT, lay.format_count)
    _U32.pack_into(buf, OFF_FORMAT_OFFSET, lay.format_offset)
    _U32.pack_into(buf, OFF_FRAME_COUNT, lay.frame_count)
    _U32.pack_into(buf, OFF_FRAME_OFFSET, lay.frame_offset)
    _U32.pack_into(buf, OFF_FRAME_PADDING, lay.frame_padding)
    _U32.pack_into(buf, OFF_FRAME_DATA_OFFSET, lay.frame_data_offset)
    _U32.pack_into(buf, OFF_PRIVATE_OFFSET, lay.private_offset)
    for i, fmt in enumerate(config.formats):
        _U32.pack_into(buf, lay.format_offset + 4 * i, int(PixelFormat(fmt)))
    buf[lay.frame_offset:lay.frame_offset + STATUS_RECORD_SIZE * lay.frame_count] = \
        bytes(STATUS_RECORD_SIZE * lay.frame_count)
    buf[lay.private_offset:lay.private_offset + PRIVATE_AREA_SIZE] = bytes(PRIVATE_AREA_SIZE)
    return lay


def publish(region) -> None:
    """Flip ready to 1. Must be the last write before clients attach."""
    _U32.pack_into(memoryview(region), OFF_READY, 1)


def is_published(region) -> bool:
    buf = memoryview(region)
    return len(buf) >= 4 and _U32.unpack_from(buf, OFF_READY)[0] == 1


@dataclass
class HeaderFields:
    ready: int
    magic: int
    width: int
    height: int
    pitch: int
    framerate: int
    timeout_us: int
    format_count: int
    format_offset: int
    frame_count: int
    frame_offset: int
    frame_padding: int
    frame_data_offset: int
    private_offset: int
    formats: List[int] = field(default_factory=list)


def read_header(region) -> HeaderFields:
    """Parse raw header fields with bounds checking only; no validation."""
    buf = memoryview(region)
    if len(buf) < HEADER_SIZE:
        raise CorruptRegion(f"region of {len(buf)} bytes cannot hold a {HEADER_SIZE}-byte header")
    width, height, pitch, framerate, timeout = _PARAMS.unpack_from(buf, OFF_PARAMS)
    h = HeaderFields(
        ready=_U32.unpack_from(buf, OFF_READY)[0],
        magic=_U32.unpack_from(buf, OFF_MAGIC)[0],
        width=width, height=height, pitch=pitch,
        framerate=framerate, timeout_us=timeout,
        format_count=_U32.unpack_from(buf, OFF_FORMAT_COUNT)[0],
        format_offset=_U32.unpack_from(buf, OFF_FORMAT_OFFSET)[0],
        frame_count=_U32.unpack_from(buf, OFF_FRAME_COUNT)[0],
        frame_offset=_U32.unpack_from(buf, OFF_FRAME_OFFSET)[0],
        frame_padding=_U32.unpack_from(buf, OFF_FRAME_PADDING)[0],
        frame_data_offset=_U32.unpack_from(buf, OFF_FRAME_DATA_OFFSET)[0],
        private_offset=_U32.unpack_from(buf, OFF_PRIVATE_OFFSET)[0],
    )
    end = h.format_offset + 4 * h.format_count
    if h.format_offset >= HEADER_SIZE and end <= len(buf) and h.format_count <= 64:
        h.formats = [_U32.unpack_from(buf, h.format_offset + 4 * i)[0]
                     for i in range(h.format_count)]
    return h


def _frame_stride(h: HeaderFields) -> int:
    if h.frame_padding <= 0 or h.frame_padding & (h.frame_padding - 1):
        return 0
    return _round_up(h.pitch * h.height, h.frame_padding)


def validate_region(region) -> List[str]:
    """Return every structural violation; an empty list means well-formed.

    Never reads pixel data and never reads outside the region, whatever
    the header claims.
    """
    buf = memoryview(region)
    size = len(buf)
    violations: List[str] = []
    if size < HEADER_SIZE:
        return [f"region size {size} below header size {HEADER_SIZE}"]
    h = read_header(buf)
    if h.magic != MAGIC:
        violations.append(f"magic 0x{h.magic:08x} != 0x{MAGIC:08x}")
    if h.ready not in (0, 1):
        violations.append(f"ready flag {h.ready} is neither 0 nor 1")
    if h.width <= 0 or h.height <= 0:
        violations.append(f"dimensions {h.width}x{h.height} not positive")
    if h.pitch < h.width * BYTES_PER_PIXEL:
        violations.append(f"pitch {h.pitch} below row size {h.width * BYTES_PER_PIXEL}")
    if h.framerate <= 0:
        violations.append("framerate is zero")
    if h.timeout_us <= 0:
        violations.append("timeout is zero")
    elif h.framerate > 0 and h.timeout_us < 2 * (1_000_000 // h.framerate):
        violations.append(
            f"timeout {h.timeout_us}us below two frame periods at "
            f"{h.framerate} fps")
    if h.format_count < 1:
        violations.append("formatCount below 1")
    if h.frame_padding <= 0 or h.frame_padding & (h.frame_padding - 1):
        violations.append(f"framePadding {h.frame_padding} not a power of two")

    spans = []  # (start, end, name) of non-pixel tables

    fmt_end = h.format_offset + 4 * h.format_count
    if h.format_offset < HEADER_SIZE or fmt_end > size or fmt_end < h.format_offset:
        violations.append(f"format table [{h.format_offset}, {fmt_end}) outside region")
    else:
        spans.append((h.format_offset, fmt_end, "format table"))
        for i, tag in enumerate(h.formats):
            if tag not in tuple(PixelFormat):
                violations.append(f"format table entry {i} has unknown tag {tag}")

    frame_end = h.frame_offset + STATUS_RECORD_SIZE * h.frame_count
    if h.frame_count < 1 or h.frame_count > 8:
        violations.append(f"frameCount {h.frame_count} outside 1..8")
    elif h.frame_offset < HEADER_SIZE or frame_end > size or frame_end < h.frame_offset:
        violations.append(f"frame status array [{h.frame_offset}, {frame_end}) outside region")
    else:
        if h.frame_offset % STATUS_RECORD_SIZE:
            violations.append(f"frame status array at {h.frame_offset} not 16-byte aligned")
        spans.append((h.frame_offset, frame_end, "frame status array"))

    priv_end = h.private_offset + PRIVATE_AREA_SIZE
    if h.private_offset < HEADER_SIZE or priv_end > size or priv_end < h.private_offset:
        violations.append(f"private area [{h.private_offset}, {priv_end}) outside region")
    else:
        spans.append((h.private_offset, priv_end, "private area"))

    stride = _frame_stride(h)
    if stride and 1 <= h.frame_count <= 8:
        data_end = h.frame_data_offset + h.frame_count * stride
        if (h.frame_data_offset < HEADER_SIZE or data_end > size
                or data_end < h.frame_data_offset):
            violations.append(
                f"frame data [{h.frame_data_offset}, {data_end}) outside region")
        else:
            if h.frame_data_offset % h.frame_padding:
                violations.append(
                    f"frameDataOffset {h.frame_data_offset} not aligned to "
                    f"framePadding {h.frame_padding}")
            spans.append((h.frame_data_offset, data_end, "frame data"))

    spans.sort()
    for (s0, e0, n0), (s1, e1, n1) in zip(spans, spans[1:]):
        if s1 < e0:
            violations.append(f"{n0} [{s0}, {e0}) overlaps {n1} [{s1}, {e1})")
    return violations


def producer_queue(region, h: HeaderFields, fmt: PixelFormat) -> FrameQueue:
    geometry = SurfaceGeometry(h.width, h.height, h.pitch)
    return FrameQueue(region, status_offset=h.frame_offset,
                      data_offset=h.frame_data_offset,
                      frame_stride=_frame_stride(h),
                      depth=h.frame_count, geometry=geometry, fmt=fmt)


def consumer_queue(region, h: HeaderFields, fmt: PixelFormat,
                   pixel_buf=None) -> FrameQueue:
    geometry = SurfaceGeometry(h.width, h.height, h.pitch)
    return FrameQueue(region, status_offset=h.frame_offset,
                      data_offset=h.frame_data_offset,
                      frame_stride=_frame_stride(h),
                      depth=h.frame_count, geometry=geometry, fmt=fmt,
                      pixel_buf=pixel_buf)


def client_attach(region, *, clock: Optional[Clock] = None,
                  attach_timeout_us: int = 1_000_000,
                  poll_interval_us: int = 1_000,
                  preferred_format: Optional[PixelFormat] = None):
    """Client-side attach: poll ready, validate, negotiate a format.

    Returns (FramebufferContext, producer FrameQueue, HeaderFields).
    """
    clock = clock or WallClock()
    buf = memoryview(region)
    deadline = clock.now_us() + attach_timeout_us
    while not is_published(buf):
        if clock.now_us() >= deadline:
            raise ServerUnavailable(
                f"region not published within {attach_timeout_us}us")
        clock.sleep_us(poll_interval_us)

    h = read_header(buf)
    if h.magic != MAGIC:
        raise IncompatibleProtocol(f"magic 0x{h.magic:08x} != 0x{MAGIC:08x}")
    violations = validate_region(buf)
    if violations:
        raise CorruptRegion("; ".join(violations))

    supported = [PixelFormat(t) for t in h.formats]
    if preferred_format is not None:
        if preferred_format not in supported:
            raise IncompatibleProtocol(
                f"format {PixelFormat(preferred_format).name} not offered by server")
        fmt = PixelFormat(preferred_format)
    else:
        fmt = supported[0]
    _U32.pack_into(buf, h.private_offset + PRIV_FORMAT, int(fmt))

    context = FramebufferContext(
        geometry=SurfaceGeometry(h.width, h.height, h.pitch),
        format=fmt, framerate=h.framerate, timeout_us=h.timeout_us,
        queue_depth=h.frame_count,
    )
    return context, producer_queue(buf, h, fmt), h


# -- private-area accessors -----------------------------------------------

def read_heartbeat(region, h: HeaderFields) -> int:
    return _U64.unpack_from(memoryview(region), h.private_offset + PRIV_HEARTBEAT)[0]

def write_heartbeat(region, h: HeaderFields, value: int) -> None:
    _U64.pack_into(memoryview(region), h.private_offset + PRIV_HEARTBEAT, value)

def negotiated_format(region, h: HeaderFields) -> PixelFormat:
    return PixelFormat(_U32.unpack_from(memoryview(region),
                                        h.private_offset + PRIV_FORMAT)[0])

def read_detach_flag(region, h: HeaderFields) -> int:
    return _U32.unpack_from(memoryview(region), h.private_offset + PRIV_DETACH)[0]

def write_detach_flag(region, h: HeaderFields, value: int) -> None:
    _U32.pack_into(memoryview(region), h.private_offset + PRIV_DETACH, value)


def create_region(config: RegionConfig) -> tuple:
    """Convenience: allocate an in-memory region, encode, return (buf, layout)."""
    lay = layout_for(config)
    buf = bytearray(lay.required_size)
    encode_header(config, buf)
    return buf, lay
