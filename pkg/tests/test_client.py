import random

import pytest

from fbcomp import shm
from fbcomp.client import (ClientSession, WatchdogTimer, connect_session,
                           open_direct_session)
from fbcomp.clock import SimClock
from fbcomp.errors import SessionLost, UsageError
from fbcomp.frame_queue import FrameState, QueueMode
from fbcomp.pixel import (FramebufferContext, PixelFormat, SurfaceGeometry,
                          compute_pitch)
from fbcomp.sinks import ChecksumSink
from fbcomp.widgets import render_pattern


def direct_session(clock, depth=3, framerate=60, timeout_us=50_000, side=32):
    geometry = SurfaceGeometry(side, side, compute_pitch(side, PixelFormat.R8G8B8A8))
    context = FramebufferContext(geometry, PixelFormat.R8G8B8A8,
                                 framerate, timeout_us, depth)
    sink = ChecksumSink()
    return open_direct_session(context, sink, clock), sink


class TestBeginEnd:
    def test_depth3_idle_consumer_fourth_begin_skips(self):
        clock = SimClock()
        session, _ = direct_session(clock)
        for i in range(3):
            surface = session.begin_frame()
            assert surface is not None
            session.end_frame()
        start = clock.now_us()
        assert session.begin_frame() is None
        waited = clock.now_us() - start
        assert waited <= session.context.frame_period_us

    def test_nested_begin_rejected(self):
        session, _ = direct_session(SimClock())
        session.begin_frame()
        with pytest.raises(UsageError):
            session.begin_frame()

    def test_end_without_begin_rejected(self):
        session, _ = direct_session(SimClock())
        with pytest.raises(UsageError):
            session.end_frame()

    def test_begin_on_detached_session_raises(self):
        clock = SimClock()
        config = shm.RegionConfig(
            geometry=SurfaceGeometry.for_width(32, 32),
            formats=(PixelFormat.R8G8B8A8,), framerate=30,
            timeout_us=100_000, queue_depth=2)
        buf, _ = shm.create_region(config)
        shm.publish(buf)
        session = connect_session(buf, clock)
        header = shm.read_header(buf)
        shm.write_detach_flag(buf, header, 1)
        with pytest.raises(SessionLost):
            session.begin_frame()

    def test_no_slot_leak_after_full_drain(self):
        clock = SimClock()
        session, _ = direct_session(clock)
        for i in range(10):
            surface = session.begin_frame()
            if surface is None:
                session.present_direct(QueueMode.ORDERED)
                continue
            session.end_frame()
            session.present_direct(QueueMode.ORDERED)
        # drain: present everything, then release the held frame
        while True:
            before = session.queue.statuses().count(FrameState.READY)
            session.present_direct(QueueMode.ORDERED)
            if session.queue.statuses().count(FrameState.READY) == before:
                break
        session.queue.release_frame(session._held)
        session._held = None
        assert all(s == FrameState.FREE for s in session.queue.statuses())


class TestWatchdog:
    def test_end_frame_resets_deadline(self):
        clock = SimClock()
        session, _ = direct_session(clock, timeout_us=50_000)
        clock.advance_to(12_345)
        session.begin_frame()
        session.end_frame()
        assert session.watchdog.deadline_us == 12_345 + 50_000

    def test_steady_60fps_never_fires(self):
        clock = SimClock()
        fired = []
        session, _ = direct_session(clock, timeout_us=50_000)
        session.health_monitor = fired.append
        for _ in range(100):
            clock.sleep_us(16_667)
            session.begin_frame()
            session.end_frame()
            session.present_direct(QueueMode.FLUSH)
            assert session.poll_watchdog() == "ok"
        assert fired == []

    def test_fires_at_last_reset_plus_timeout(self):
        # Sawtooth: value resets on each rendered frame, fires exactly
        # at last reset + budget under an arbitrary schedule.
        rng = random.Random(11)
        clock = SimClock()
        timeout = 50_000
        session, _ = direct_session(clock, timeout_us=timeout)
        fired = []
        session.health_monitor = fired.append
        last_reset = 0
        for _ in range(30):
            step = rng.randint(1000, 20_000)
            clock.sleep_us(step)
            session.begin_frame()
            session.end_frame()
            session.present_direct(QueueMode.FLUSH)
            last_reset = clock.now_us()
            assert session.poll_watchdog() == "ok"
        tick = 500
        while session.poll_watchdog() == "ok":
            clock.sleep_us(tick)
        assert fired == [clock.now_us()]
        assert last_reset + timeout <= clock.now_us() < last_reset + timeout + tick

    def test_health_monitor_once_per_episode(self):
        clock = SimClock()
        fired = []
        session, _ = direct_session(clock, timeout_us=50_000)
        session.health_monitor = fired.append
        clock.advance_to(60_000)
        assert session.poll_watchdog() == "expired"
        assert session.poll_watchdog() == "expired"
        assert session.poll_watchdog() == "expired"
        assert len(fired) == 1
        # a rendered frame starts a fresh episode
        session.begin_frame()
        session.end_frame()
        clock.advance_to(clock.now_us() + 60_000)
        assert session.poll_watchdog() == "expired"
        assert len(fired) == 2

    def test_watchdog_timer_invariant(self):
        timer = WatchdogTimer(10_000, now_us=500)
        assert timer.deadline_us == 10_500
        timer.reset(2_000)
        assert timer.deadline_us == 12_000
        assert not timer.expired(11_999)
        assert timer.expired(12_000)


class TestPresentDirect:
    def test_ordered_presents_in_turn(self):
        clock = SimClock()
        session, sink = direct_session(clock)
        for i in range(3):
            render_pattern(session.begin_frame(), i)
            session.end_frame()
        seqs = [session.present_direct(QueueMode.ORDERED) for _ in range(3)]
        assert seqs == [1, 2, 3]
        assert sink.count == 3

    def test_flush_presents_newest_only(self):
        clock = SimClock()
        session, sink = direct_session(clock)
        for i in range(3):
            render_pattern(session.begin_frame(), i)
            session.end_frame()
        assert session.present_direct(QueueMode.FLUSH) == 3
        assert sink.count == 1
        # the two stale frames went back to FREE
        assert session.queue.statuses().count(FrameState.FREE) == 2

    def test_empty_queue_represents_previous(self):
        clock = SimClock()
        session, sink = direct_session(clock)
        render_pattern(session.begin_frame(), 42)
        session.end_frame()
        assert session.present_direct(QueueMode.ORDERED) == 1
        checksum = sink.checksums()[-1]
        assert session.present_direct(QueueMode.ORDERED) == 1
        assert sink.checksums()[-1] == checksum

    def test_present_before_any_frame(self):
        session, sink = direct_session(SimClock())
        assert session.present_direct(QueueMode.ORDERED) is None
        assert sink.count == 0

    def test_composited_session_rejects_present_direct(self):
        clock = SimClock()
        config = shm.RegionConfig(
            geometry=SurfaceGeometry.for_width(32, 32),
            formats=(PixelFormat.R8G8B8A8,), framerate=30,
            timeout_us=100_000, queue_depth=2)
        buf, _ = shm.create_region(config)
        shm.publish(buf)
        session = connect_session(buf, clock)
        with pytest.raises(UsageError):
            session.present_direct(QueueMode.ORDERED)


class TestModePortability:
    def _drive(self, session):
        """The same application loop must run unchanged in both modes."""
        for i in range(5):
            surface = session.try_begin_frame()
            if surface is None:
                continue
            render_pattern(surface, i)
            session.end_frame()
        return session.frames_submitted

    def test_same_loop_both_modes(self):
        clock = SimClock()
        direct, _ = direct_session(clock)
        config = shm.RegionConfig(
            geometry=SurfaceGeometry.for_width(32, 32),
            formats=(PixelFormat.R8G8B8A8,), framerate=60,
            timeout_us=50_000, queue_depth=3)
        buf, _ = shm.create_region(config)
        shm.publish(buf)
        composited = connect_session(buf, clock)
        # depth 3, no consumer: both submit exactly 3 of the 5 attempts
        assert self._drive(direct) == 3
        assert self._drive(composited) == 3
