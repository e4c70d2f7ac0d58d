"""Application-side runtime: frame lifecycle, watchdog, direct presentation.

A session is confined to one task. The watchdog poller may run
concurrently in the same process; it synchronizes with end_frame only
through the deadline field (end_frame writes, the poller reads).
"""

from __future__ import annotations

from typing import Callable, Optional

from . import shm
from .clock import Clock, WallClock
from .errors import SessionLost, UsageError
from .frame_queue import FrameHandle, FrameQueue, QueueMode
from .pixel import FramebufferContext, PixelFormat, Surface

HealthMonitor = Callable[[int], None]  # receives the expiry time in us


class WatchdogTimer:
    """Countdown reset on every completed frame; fires once per episode."""

    def __init__(self, budget_us: int, now_us: int):
        if budget_us <= 0:
            raise ValueError("watchdog budget must be positive")
        self.budget_us = budget_us
        self.deadline_us = now_us + budget_us
        self.fired = False

    def reset(self, now_us: int) -> None:
        self.deadline_us = now_us + self.budget_us
        self.fired = False

    def expired(self, now_us: int) -> bool:
        return now_us >= self.deadline_us


class ClientSession:
    """One output surface, one producer. Direct and composited sessions
    expose the same surface-filling API; only presentation differs."""

    def __init__(self, context: FramebufferContext, queue: FrameQueue,
                 clock: Optional[Clock] = None, *,
                 health_monitor: Optional[HealthMonitor] = None,
                 region=None, header: Optional[shm.HeaderFields] = None,
                 sink=None):
        self.context = context
        self.queue = queue
        self.clock = clock or WallClock()
        self.health_monitor = health_monitor
        self.mode = "direct" if sink is not None else "composited"
        self.sink = sink
        self._region = region
        self._header = header
        self._open: Optional[FrameHandle] = None
        self._held: Optional[FrameHandle] = None
        self._heartbeat = 0
        self.frames_submitted = 0
        self.watchdog = WatchdogTimer(context.timeout_us, self.clock.now_us())

    # -- frame lifecycle ---------------------------------------------------

    def begin_frame(self) -> Optional[Surface]:
        """Acquire a writable frame, waiting up to one frame period.

        Returns None when no slot freed up within the period (the caller
        skips this frame). Polls at a quarter of the frame period.
        """
        if self._open is not None:
            raise UsageError("begin_frame while a frame is already open")
        self._check_connected()
        period = self.context.frame_period_us
        deadline = self.clock.now_us() + period
        poll = max(1, period // 4)
        while True:
            handle = self.queue.acquire_frame()
            if handle is not None:
                self._open = handle
                return handle.surface
            remaining = deadline - self.clock.now_us()
            if remaining <= 0:
                return None
            self.clock.sleep_us(min(poll, remaining))

    def try_begin_frame(self) -> Optional[Surface]:
        """Non-blocking begin_frame: None immediately when no slot is FREE."""
        if self._open is not None:
            raise UsageError("begin_frame while a frame is already open")
        self._check_connected()
        handle = self.queue.acquire_frame()
        if handle is None:
            return None
        self._open = handle
        return handle.surface

    def end_frame(self) -> None:
        """Submit the open frame, reset the watchdog, bump the heartbeat."""
        if self._open is None:
            raise UsageError("end_frame without an open frame")
        handle, self._open = self._open, None
        self.queue.submit_frame(handle)
        self.frames_submitted += 1
        self.watchdog.reset(self.clock.now_us())
        self.heartbeat()

    def heartbeat(self) -> None:
        """Advance the liveness counter the server's watchdog observes."""
        self._heartbeat += 1
        if self._region is not None and self._header is not None:
            shm.write_heartbeat(self._region, self._header, self._heartbeat)

    def poll_watchdog(self, now_us: Optional[int] = None) -> str:
        """'ok' before the deadline; 'expired' after, with the health
        monitor invoked exactly once per expiry episode."""
        now = self.clock.now_us() if now_us is None else now_us
        if not self.watchdog.expired(now):
            return "ok"
        if not self.watchdog.fired:
            self.watchdog.fired = True
            if self.health_monitor is not None:
                self.health_monitor(now)
        return "expired"

    # -- direct-to-display -------------------------------------------------

    def present_direct(self, mode: QueueMode = QueueMode.ORDERED) -> Optional[int]:
        """Push the next displayable frame to the sink.

        With nothing READY the previously displayed frame is presented
        again (last-frame preservation). Returns the presented sequence,
        or None when nothing has ever been displayed.
        """
        if self.mode != "direct":
            raise UsageError("present_direct on a composited session")
        handle = self.queue.take_for_display(mode)
        if handle is None:
            if self._held is None:
                return None
            self.sink.present(self._held.surface, self.clock.now_us())
            return self._held.sequence
        if self._held is not None:
            self.queue.release_frame(self._held)
        self._held = handle
        self.sink.present(handle.surface, self.clock.now_us())
        return handle.sequence

    # -- internals ---------------------------------------------------------

    def _check_connected(self) -> None:
        if (self.mode == "composited" and self._region is not None
                and self._header is not None
                and shm.read_detach_flag(self._region, self._header)):
            raise SessionLost("server has disconnected this session")


def open_direct_session(context: FramebufferContext, sink,
                        clock: Optional[Clock] = None,
                        health_monitor: Optional[HealthMonitor] = None) -> ClientSession:
    """Direct mode: the session owns both queue ends and an output sink."""
    config = shm.RegionConfig(
        geometry=context.geometry, formats=(context.format,),
        framerate=context.framerate, timeout_us=context.timeout_us,
        queue_depth=context.queue_depth,
    )
    region, _ = shm.create_region(config)
    shm.publish(region)
    header = shm.read_header(region)
    queue = shm.producer_queue(memoryview(region), header, context.format)
    return ClientSession(context, queue, clock, health_monitor=health_monitor,
                         region=memoryview(region), header=header, sink=sink)


def connect_session(region, clock: Optional[Clock] = None, *,
                    preferred_format: Optional[PixelFormat] = None,
                    health_monitor: Optional[HealthMonitor] = None,
                    attach_timeout_us: int = 1_000_000) -> ClientSession:
    """Composited mode: attach to a server-published shared region."""
    context, queue, header = shm.client_attach(
        region, clock=clock, attach_timeout_us=attach_timeout_us,
        preferred_format=preferred_format)
    return ClientSession(context, queue, clock, health_monitor=health_monitor,
                         region=memoryview(region), header=header)
