"""The compositing server.

Registers clients, composes their newest frames onto the target at fixed
non-overlapping placements, enforces watchdog and minimum-framerate
policies, paints a visible indicator over disconnected clients, and
presents the target through an output sink.

The client table is mutated only by register/reconnect/disconnect calls
and read by compose; a harness running a concurrent watchdog thread must
serialize those through `lock`.
"""

from __future__ import annotations

import enum
import threading
from struct import error as struct_error
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import shm
from .clock import Clock, WallClock
from .errors import (AlreadyConnected, ClientNotFound, PlacementConflict,
                     PresentFailure)
from .frame_queue import FrameHandle, FrameQueue, QueueMode
from .pixel import (PixelFormat, Rect, Surface, SurfaceGeometry, blit,
                    pack_channels)

DEFAULT_FPS_WINDOW_US = 2_000_000
DEFAULT_BACKGROUND = 0x000000FF          # opaque black in R8G8B8A8 terms
INDICATOR_COLOR = (255, 176, 0, 255)     # warning amber
INDICATOR_FILL = (48, 16, 16, 255)
_INDICATOR_SPACING = 16
_INDICATOR_THICKNESS = 2


class ClientState(enum.Enum):
    ACTIVE = "active"
    DISCONNECTED = "disconnected"


@dataclass
class DisconnectEvent:
    t_us: int
    client_id: int
    reason: str  # "watchdog" | "low-fps" | "fault" | "corrupt-header"


@dataclass
class ClientDescriptor:
    """Server-side record of one connected application."""

    id: int
    region: memoryview            # control area (status records), writable
    header: shm.HeaderFields
    queue: FrameQueue
    placement: Rect
    format: PixelFormat
    min_fps: float
    timeout_us: int
    state: ClientState = ClientState.ACTIVE
    last_frame_seq: int = 0
    deadline_us: int = 0
    last_heartbeat: int = 0
    connected_at_us: int = 0
    # (timestamp, frames submitted since previous observation)
    fps_window: deque = field(default_factory=deque)
    held: Optional[FrameHandle] = None


@dataclass
class ClientReport:
    client_id: int
    outcome: str                  # "new" | "held" | "empty" | "disconnected"
    sequence: Optional[int] = None


@dataclass
class ComposeReport:
    t_us: int
    clients: List[ClientReport]
    presented: bool = True


class CompositionTarget:
    """The server's output surface plus background and indicator policy."""

    def __init__(self, geometry: SurfaceGeometry, fmt: PixelFormat,
                 background: int = DEFAULT_BACKGROUND):
        self.surface = Surface.allocate(geometry, fmt)
        self.geometry = geometry
        self.format = PixelFormat(fmt)
        self.background = background
        self._bg_native = pack_channels(fmt, *self._bg_rgba())

    def _bg_rgba(self):
        v = self.background & 0xFFFFFFFF
        return ((v >> 24) & 0xFF, (v >> 16) & 0xFF, (v >> 8) & 0xFF, v & 0xFF)

    def clear(self) -> None:
        self.surface.fill(self._bg_native)


class CompositorServer:
    def __init__(self, target: CompositionTarget, sink,
                 clock: Optional[Clock] = None,
                 fps_window_us: int = DEFAULT_FPS_WINDOW_US):
        self.target = target
        self.sink = sink
        self.clock = clock or WallClock()
        self.fps_window_us = fps_window_us
        self.clients: Dict[int, ClientDescriptor] = {}
        self.events: List[DisconnectEvent] = []
        self.frames_presented = 0
        self.lock = threading.Lock()
        self._next_id = 1

    # -- registration ------------------------------------------------------

    def register_client(self, region, placement: Rect, min_fps: float,
                        client_id: Optional[int] = None,
                        pixel_buf=None) -> ClientDescriptor:
        """Admit a published region at a fixed placement.

        `pixel_buf` optionally supplies a read-only mapping used for all
        pixel reads; status records are still driven through `region`.
        """
        if not placement.fits_inside(self.target.geometry):
            raise ValueError(f"placement {placement} outside target "
                             f"{self.target.geometry.width}x{self.target.geometry.height}")
        violations = shm.validate_region(region)
        if violations:
            raise ValueError("region rejected: " + "; ".join(violations))
        header = shm.read_header(region)
        if placement.width != header.width or placement.height != header.height:
            raise ValueError(
                f"placement {placement.width}x{placement.height} does not match "
                f"client surface {header.width}x{header.height}")
        with self.lock:
            for other in self.clients.values():
                if other.state is ClientState.ACTIVE and placement.overlaps(other.placement):
                    raise PlacementConflict(
                        f"placement {placement} overlaps client {other.id}")
            if client_id is None:
                client_id = self._next_id
                self._next_id += 1
            elif client_id in self.clients:
                raise AlreadyConnected(f"client {client_id} already registered")
            else:
                self._next_id = max(self._next_id, client_id + 1)
            now = self.clock.now_us()
            desc = ClientDescriptor(
                id=client_id, region=memoryview(region), header=header,
                queue=shm.consumer_queue(region, header,
                                         self._client_format(region, header),
                                         pixel_buf=pixel_buf),
                placement=placement, format=self._client_format(region, header),
                min_fps=min_fps, timeout_us=header.timeout_us,
                deadline_us=now + header.timeout_us,
                last_heartbeat=shm.read_heartbeat(region, header),
                connected_at_us=now,
            )
            self.clients[client_id] = desc
            return desc

    def reconnect_client(self, client_id: int, region,
                         pixel_buf=None) -> ClientDescriptor:
        """Fresh descriptor at the same placement after a disconnect."""
        with self.lock:
            old = self.clients.get(client_id)
            if old is None:
                raise ClientNotFound(f"client {client_id} was never registered")
            if old.state is ClientState.ACTIVE:
                raise AlreadyConnected(f"client {client_id} is still connected")
            placement = old.placement
            min_fps = old.min_fps
            del self.clients[client_id]
        try:
            return self.register_client(region, placement, min_fps,
                                        client_id=client_id, pixel_buf=pixel_buf)
        except Exception:
            with self.lock:
                self.clients[client_id] = old
            raise

    def _client_format(self, region, header) -> PixelFormat:
        try:
            fmt = shm.negotiated_format(region, header)
        except ValueError:
            fmt = None
        if fmt is None or int(fmt) not in header.formats:
            fmt = PixelFormat(header.formats[0])
        return fmt

    # -- fault policies ----------------------------------------------------

    def disconnect(self, desc: ClientDescriptor, reason: str,
                   now_us: Optional[int] = None) -> DisconnectEvent:
        """Forcibly detach: stop reading the region, make it visible."""
        desc.state = ClientState.DISCONNECTED
        desc.held = None
        try:
            shm.write_detach_flag(desc.region, desc.header, 1)
        except (ValueError, struct_error, IndexError, TypeError):
            pass  # region may be gone or corrupt; the indicator still shows
        event = DisconnectEvent(self.clock.now_us() if now_us is None else now_us,
                                desc.id, reason)
        self.events.append(event)
        return event

    def check_watchdogs(self, now_us: Optional[int] = None) -> List[DisconnectEvent]:
        """Disconnect every active client whose deadline has passed.

        A heartbeat observed since the last check pushes the deadline to
        observation time + timeout.
        """
        now = self.clock.now_us() if now_us is None else now_us
        fired = []
        with self.lock:
            active = [d for d in self.clients.values()
                      if d.state is ClientState.ACTIVE]
        for desc in active:
            try:
                hb = shm.read_heartbeat(desc.region, desc.header)
            except (ValueError, IndexError):
                fired.append(self.disconnect(desc, "corrupt-header", now))
                continue
            if hb != desc.last_heartbeat:
                desc.last_heartbeat = hb
                desc.deadline_us = now + desc.timeout_us
            elif now > desc.deadline_us:
                fired.append(self.disconnect(desc, "watchdog", now))
        return fired

    def check_framerate(self, desc: ClientDescriptor,
                        now_us: Optional[int] = None) -> str:
        """'keep' or 'disconnect' based on fps over the sliding window.

        Only judged once a full window has elapsed since connection, and
        the threshold is strict: exactly min_fps keeps the client.
        """
        now = self.clock.now_us() if now_us is None else now_us
        if desc.state is not ClientState.ACTIVE:
            return "disconnect"
        window = self.fps_window_us
        while desc.fps_window and desc.fps_window[0][0] <= now - window:
            desc.fps_window.popleft()
        if now - desc.connected_at_us < window:
            return "keep"
        frames = sum(n for _, n in desc.fps_window)
        fps = frames * 1e6 / window
        if fps < desc.min_fps:
            self.disconnect(desc, "low-fps", now)
            return "disconnect"
        return "keep"

    def check_framerates(self, now_us: Optional[int] = None) -> List[DisconnectEvent]:
        now = self.clock.now_us() if now_us is None else now_us
        before = len(self.events)
        with self.lock:
            active = [d for d in self.clients.values()
                      if d.state is ClientState.ACTIVE]
        for desc in active:
            self.check_framerate(desc, now)
        return self.events[before:]

    # -- composition -------------------------------------------------------

    def compose_once(self, now_us: Optional[int] = None) -> ComposeReport:
        """Build one output frame and present it.

        A faulty client is disconnected and composition continues; only
        an output-sink failure propagates.
        """
        now = self.clock.now_us() if now_us is None else now_us
        self.target.clear()
        reports = []
        with self.lock:
            table = sorted(self.clients.values(), key=lambda d: d.id)
        for desc in table:
            if desc.state is ClientState.DISCONNECTED:
                self._paint_indicator(desc.placement)
                reports.append(ClientReport(desc.id, "disconnected"))
                continue
            try:
                reports.append(self._compose_client(desc, now))
            except Exception:
                self.disconnect(desc, "fault", now)
                self._paint_indicator(desc.placement)
                reports.append(ClientReport(desc.id, "disconnected"))
        try:
            self.sink.present(self.target.surface, now)
        except Exception as exc:
            raise PresentFailure(str(exc)) from exc
        self.frames_presented += 1
        return ComposeReport(now, reports)

    def _compose_client(self, desc: ClientDescriptor, now: int) -> ClientReport:
        # A client scribbling over its own header must not survive as a
        # normal picture source.
        if shm.read_header(desc.region).magic != shm.MAGIC:
            raise ValueError("client header lost its magic")
        handle = desc.queue.take_for_display(QueueMode.FLUSH)
        if handle is not None:
            submitted = handle.sequence - desc.last_frame_seq
            desc.fps_window.append((now, submitted))
            desc.last_frame_seq = handle.sequence
            if desc.held is not None:
                desc.queue.release_frame(desc.held)
            desc.held = handle
            blit(handle.surface, self.target.surface, desc.placement)
            return ClientReport(desc.id, "new", handle.sequence)
        if desc.held is not None:
            blit(desc.held.surface, self.target.surface, desc.placement)
            return ClientReport(desc.id, "held", desc.held.sequence)
        return ClientReport(desc.id, "empty")

    def _paint_indicator(self, placement: Rect) -> None:
        """Diagonal crosshatch in a warning color over the placement."""
        fmt = self.target.format
        px = self.target.surface.pixels()[
            placement.y:placement.y + placement.height,
            placement.x:placement.x + placement.width, :]
        fill = np.frombuffer(pack_channels(fmt, *INDICATOR_FILL).to_bytes(4, "little"),
                             np.uint8)
        line = np.frombuffer(pack_channels(fmt, *INDICATOR_COLOR).to_bytes(4, "little"),
                             np.uint8)
        px[:] = fill
        yy, xx = np.mgrid[0:placement.height, 0:placement.width]
        mask = (((xx + yy) % _INDICATOR_SPACING) < _INDICATOR_THICKNESS) | \
               (((xx - yy) % _INDICATOR_SPACING) < _INDICATOR_THICKNESS)
        px[mask] = line
