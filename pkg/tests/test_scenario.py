import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbcomp import regions, shm
from fbcomp.pixel import PixelFormat
from fbcomp.scenario import (ClientSpec, FaultAction, RunSpec, ScenarioConfig,
                             TargetSpec, parse_scenario, run_scenario)


def two_client_config(duration_s=1.0, clock="sim", sink="checksum", **kw):
    base = dict(width=128, height=128, y=16, fps=48, timeout_s=0.2)
    a = ClientSpec("alpha", **{**base, "x": 16, **kw.pop("a", {})})
    b = ClientSpec("beta", **{**base, "x": 256, **kw.pop("b", {})})
    return ScenarioConfig(
        target=TargetSpec(width=512, height=256, rate=30),
        run=RunSpec(duration_s=duration_s, clock=clock, sink=sink, **kw),
        clients=(a, b),
    )


class TestConfigFormat:
    def test_round_trip_equality(self):
        config = two_client_config(
            a={"faults": (FaultAction("stall", 0.5, duration_s=0.25),
                          FaultAction("crash", 2.0))},
            b={"faults": (FaultAction("slow-to", 1.0, fps=5.0),
                          FaultAction("garbage-header", 3.0)),
               "widget": "counters", "complexity": 3,
               "format": PixelFormat.B8G8R8A8},
        )
        assert parse_scenario(config.serialize()) == config

    def test_defaults_from_empty_sections(self):
        config = parse_scenario("[target]\n[run]\n")
        assert config.target == TargetSpec()
        assert config.run == RunSpec()
        assert config.clients == ()

    @given(st.sampled_from(["stall", "crash", "garbage-header", "slow-to"]),
           st.floats(0, 100, allow_nan=False),
           st.one_of(st.none(), st.floats(0.001, 50)),
           st.floats(0.1, 240))
    @settings(max_examples=100, deadline=None)
    def test_fault_action_round_trip(self, kind, at, dur, fps):
        action = FaultAction(kind, at,
                             duration_s=dur if kind == "stall" else None,
                             fps=fps if kind == "slow-to" else None)
        assert FaultAction.parse(action.serialize()) == action

    def test_stall_forever(self):
        assert FaultAction.parse("stall@1.5") == FaultAction("stall", 1.5)
        assert FaultAction.parse("stall@1.5:inf") == FaultAction("stall", 1.5)

    def test_unknown_fault_kind_rejected(self):
        with pytest.raises(ValueError):
            FaultAction("explode", 1.0)

    def test_unknown_engine_rejected(self):
        config = two_client_config(clock="lunar")
        with pytest.raises(ValueError):
            run_scenario(config)


class TestSimEngine:
    def test_baseline_counts(self):
        report = run_scenario(two_client_config())
        assert report.ok
        # 30 Hz target over one second
        assert report.server_frames == 30
        for result in report.clients.values():
            assert result.exit_status == "ok"
            assert result.disconnect is None
            # 48 fps producers into a depth-3 queue: a fresh frame for
            # nearly every compose
            assert 28 <= result.presented <= 30
            assert result.submitted >= 40

    def test_deterministic_replay(self):
        first = run_scenario(two_client_config(a={"widget": "counters"}))
        second = run_scenario(two_client_config(a={"widget": "counters"}))
        assert first.checksums == second.checksums
        assert first.to_json() == second.to_json()

    def test_stall_fault_trips_watchdog(self):
        config = two_client_config(
            duration_s=1.5,
            a={"faults": (FaultAction("stall", 0.4),)})
        report = run_scenario(config)
        alpha = report.clients["alpha"]
        assert alpha.disconnect is not None
        t_us, reason = alpha.disconnect
        assert reason == "watchdog"
        # deadline = last observed heartbeat + timeout, within one poll tick
        assert 600_000 <= t_us <= 650_000
        beta = report.clients["beta"]
        assert beta.disconnect is None and beta.presented >= 40

    def test_crash_fault(self):
        config = two_client_config(
            duration_s=1.5,
            a={"faults": (FaultAction("crash", 0.3),)})
        report = run_scenario(config)
        alpha = report.clients["alpha"]
        assert alpha.exit_status == "crashed"
        assert alpha.disconnect is not None and alpha.disconnect[1] == "watchdog"
        assert report.clients["beta"].disconnect is None

    def test_garbage_header_fault(self):
        config = two_client_config(
            duration_s=1.0,
            a={"faults": (FaultAction("garbage-header", 0.3),)})
        report = run_scenario(config)
        alpha = report.clients["alpha"]
        assert alpha.disconnect is not None
        assert alpha.disconnect[1] in ("fault", "corrupt-header")
        assert report.server_frames == 30  # server kept composing
        assert report.clients["beta"].disconnect is None

    def test_slow_to_fault_trips_fps_policy(self):
        config = two_client_config(
            duration_s=4.0,
            a={"min_fps": 20.0, "timeout_s": 2.0,
               "faults": (FaultAction("slow-to", 0.5, fps=5.0),)},
            b={"min_fps": 20.0})
        report = run_scenario(config)
        alpha = report.clients["alpha"]
        assert alpha.disconnect is not None and alpha.disconnect[1] == "low-fps"
        assert report.clients["beta"].disconnect is None

    def test_image_sink_produces_replayable_index(self, tmp_path):
        config = two_client_config(duration_s=0.2, sink="images",
                                   sink_dir=str(tmp_path))
        report = run_scenario(config)
        assert report.index_path is not None
        from fbcomp.sinks import replay_index
        assert replay_index(report.index_path) == []


class TestWallEngine:
    def test_smoke(self):
        config = two_client_config(duration_s=0.6, clock="wall", sink="null")
        report = run_scenario(config)
        assert report.ok, report.violations
        assert report.server_frames >= 10
        for result in report.clients.values():
            assert result.exit_status == "ok"
            assert result.submitted > 0
            assert result.presented > 0
            assert result.disconnect is None

    def test_crashed_client_contained(self):
        # One partition dies mid-run; the server notices via the watchdog
        # and the surviving partition is unaffected.
        config = two_client_config(
            duration_s=1.2, clock="wall", sink="null",
            a={"faults": (FaultAction("crash", 0.2),)})
        report = run_scenario(config)
        assert report.ok, report.violations
        alpha = report.clients["alpha"]
        assert alpha.exit_status == "crashed"
        assert alpha.disconnect is not None and alpha.disconnect[1] == "watchdog"
        beta = report.clients["beta"]
        assert beta.exit_status == "ok" and beta.disconnect is None
        assert beta.submitted > 0


class TestSharedRegions:
    def test_readonly_mapping_rejects_writes(self):
        name = regions.region_name("test-ro", "x")
        region = regions.create_region(name, 8192)
        try:
            view = memoryview(region.readonly_buf)
            assert view.readonly
            with pytest.raises(TypeError):
                region.readonly_buf[0] = 1
        finally:
            region.close()
            region.unlink()

    def test_writes_visible_through_readonly_mapping(self):
        name = regions.region_name("test-vis", "x")
        region = regions.create_region(name, 8192)
        try:
            region.buf[100:104] = b"\x01\x02\x03\x04"
            assert bytes(region.readonly_buf[100:104]) == b"\x01\x02\x03\x04"
        finally:
            region.close()
            region.unlink()

    def test_open_missing_region(self):
        with pytest.raises(FileNotFoundError):
            regions.open_region(regions.region_name("test-none", "y"))
