"""Scenario configuration and the partition-simulation harness.

A scenario describes a compositing target plus a set of demo clients
with optional fault scripts, and runs in one of two engines:

- "sim": single process, discrete simulated clock. Fully deterministic;
  used by all correctness and fault-containment tests.
- "wall": one operating-system process per partition (server plus one
  per client), shared-memory regions in /dev/shm, wall clock. Used for
  process-isolation checks and benchmarks.

The text format is INI: a [target] section, a [run] section, and one
[client:<name>] section per client. Fault scripts are comma-separated
actions: stall@<start>:<duration>, crash@<t>, garbage-header@<t>,
slow-to:<fps>@<t> (times in seconds).
"""

from __future__ import annotations

import configparser
import io
import json
import math
import multiprocessing
import os
import platform
import tempfile
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import regions, shm, sinks, widgets
from .client import ClientSession, connect_session
from .clock import SimClock, WallClock
from .compositor import CompositionTarget, CompositorServer
from .errors import FramebufferError
from .pixel import PixelFormat, Rect, SurfaceGeometry, compute_pitch

_FAULT_KINDS = ("stall", "crash", "garbage-header", "slow-to")


# -- configuration ---------------------------------------------------------

@dataclass(frozen=True)
class FaultAction:
    kind: str
    at_s: float
    duration_s: Optional[float] = None   # stall only; None = forever
    fps: Optional[float] = None          # slow-to only

    def __post_init__(self):
        if self.kind not in _FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")

    def serialize(self) -> str:
        if self.kind == "stall":
            dur = "inf" if self.duration_s is None else _fmt(self.duration_s)
            return f"stall@{_fmt(self.at_s)}:{dur}"
        if self.kind == "slow-to":
            return f"slow-to:{_fmt(self.fps)}@{_fmt(self.at_s)}"
        return f"{self.kind}@{_fmt(self.at_s)}"

    @classmethod
    def parse(cls, text: str) -> "FaultAction":
        text = text.strip()
        if text.startswith("slow-to:"):
            rest = text[len("slow-to:"):]
            fps_s, _, at = rest.partition("@")
            return cls("slow-to", float(at), fps=float(fps_s))
        kind, _, when = text.partition("@")
        if kind == "stall":
            at, _, dur = when.partition(":")
            duration = None if dur in ("", "inf") else float(dur)
            return cls("stall", float(at), duration_s=duration)
        return cls(kind, float(when))


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class ClientSpec:
    name: str
    width: int = 768
    height: int = 768
    x: int = 0
    y: int = 0
    fps: float = 48.0
    queue_depth: int = 3
    min_fps: float = 1.0
    timeout_s: float = 0.5
    widget: str = "pattern"          # "pattern" | "counters"
    complexity: int = 1
    format: PixelFormat = PixelFormat.R8G8B8A8
    faults: Tuple[FaultAction, ...] = ()

    @property
    def placement(self) -> Rect:
        return Rect(self.x, self.y, self.width, self.height)

    def region_config(self) -> shm.RegionConfig:
        geometry = SurfaceGeometry(self.width, self.height,
                                   compute_pitch(self.width, self.format))
        return shm.RegionConfig(
            geometry=geometry, formats=(self.format,),
            framerate=max(1, int(self.fps)),
            timeout_us=int(self.timeout_s * 1e6),
            queue_depth=self.queue_depth,
        )


@dataclass(frozen=True)
class TargetSpec:
    width: int = 1600
    height: int = 900
    format: PixelFormat = PixelFormat.R8G8B8A8
    rate: float = 30.0
    background: int = 0x000000FF

    @property
    def geometry(self) -> SurfaceGeometry:
        return SurfaceGeometry(self.width, self.height,
                               compute_pitch(self.width, self.format))


@dataclass(frozen=True)
class RunSpec:
    duration_s: float = 5.0
    clock: str = "sim"               # "sim" | "wall"
    sink: str = "checksum"           # "null" | "checksum" | "images"
    sink_dir: Optional[str] = None
    session: Optional[str] = None
    watchdog_poll_s: float = 0.01


@dataclass(frozen=True)
class ScenarioConfig:
    target: TargetSpec = TargetSpec()
    run: RunSpec = RunSpec()
    clients: Tuple[ClientSpec, ...] = ()

    def serialize(self) -> str:
        cp = configparser.ConfigParser()
        cp["target"] = {
            "width": str(self.target.width),
            "height": str(self.target.height),
            "format": self.target.format.name,
            "rate": _fmt(self.target.rate),
            "background": f"0x{self.target.background:08x}",
        }
        run = {
            "duration": _fmt(self.run.duration_s),
            "clock": self.run.clock,
            "sink": self.run.sink,
            "watchdog_poll": _fmt(self.run.watchdog_poll_s),
        }
        if self.run.sink_dir:
            run["sink_dir"] = self.run.sink_dir
        if self.run.session:
            run["session"] = self.run.session
        cp["run"] = run
        for c in self.clients:
            sec = {
                "width": str(c.width), "height": str(c.height),
                "x": str(c.x), "y": str(c.y),
                "fps": _fmt(c.fps), "queue_depth": str(c.queue_depth),
                "min_fps": _fmt(c.min_fps), "timeout": _fmt(c.timeout_s),
                "widget": c.widget, "complexity": str(c.complexity),
                "format": c.format.name,
            }
            if c.faults:
                sec["faults"] = ", ".join(a.serialize() for a in c.faults)
            cp[f"client:{c.name}"] = sec
        out = io.StringIO()
        cp.write(out)
        return out.getvalue()


def parse_scenario(text: str) -> ScenarioConfig:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    t = cp["target"] if cp.has_section("target") else {}
    target = TargetSpec(
        width=int(t.get("width", 1600)),
        height=int(t.get("height", 900)),
        format=PixelFormat[t.get("format", "R8G8B8A8")],
        rate=float(t.get("rate", 30.0)),
        background=int(t.get("background", "0x000000ff"), 0),
    )
    r = cp["run"] if cp.has_section("run") else {}
    run = RunSpec(
        duration_s=float(r.get("duration", 5.0)),
        clock=r.get("clock", "sim"),
        sink=r.get("sink", "checksum"),
        sink_dir=r.get("sink_dir") or None,
        session=r.get("session") or None,
        watchdog_poll_s=float(r.get("watchdog_poll", 0.01)),
    )
    clients = []
    for section in cp.sections():
        if not section.startswith("client:"):
            continue
        c = cp[section]
        faults = tuple(FaultAction.parse(p)
                       for p in c.get("faults", "").split(",") if p.strip())
        clients.append(ClientSpec(
            name=section.split(":", 1)[1],
            width=int(c.get("width", 768)), height=int(c.get("height", 768)),
            x=int(c.get("x", 0)), y=int(c.get("y", 0)),
            fps=float(c.get("fps", 48.0)),
            queue_depth=int(c.get("queue_depth", 3)),
            min_fps=float(c.get("min_fps", 1.0)),
            timeout_s=float(c.get("timeout", 0.5)),
            widget=c.get("widget", "pattern"),
            complexity=int(c.get("complexity", 1)),
            format=PixelFormat[c.get("format", "R8G8B8A8")],
            faults=faults,
        ))
    return ScenarioConfig(target=target, run=run, clients=tuple(clients))


def load_scenario(path) -> ScenarioConfig:
    return parse_scenario(Path(path).read_text())


# -- reports ---------------------------------------------------------------

@dataclass
class ClientResult:
    name: str
    submitted: int = 0
    presented: int = 0
    skipped: int = 0
    disconnect: Optional[Tuple[int, str]] = None  # (t_us, reason)
    exit_status: str = "ok"                       # "ok" | "crashed" | "lost"


@dataclass
class ScenarioReport:
    duration_us: int
    clock: str
    server_frames: int = 0
    clients: Dict[str, ClientResult] = field(default_factory=dict)
    violations: List[str] = field(default_factory=list)
    sink: str = "checksum"
    sink_dir: Optional[str] = None
    index_path: Optional[str] = None
    checksums: List[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        return json.dumps({
            "duration_us": self.duration_us,
            "clock": self.clock,
            "server_frames": self.server_frames,
            "clients": {
                name: {
                    "submitted": c.submitted, "presented": c.presented,
                    "skipped": c.skipped,
                    "disconnect": list(c.disconnect) if c.disconnect else None,
                    "exit_status": c.exit_status,
                } for name, c in self.clients.items()
            },
            "violations": self.violations,
            "sink": self.sink,
            "sink_dir": self.sink_dir,
            "index_path": self.index_path,
        }, indent=2)


# -- fault interpretation --------------------------------------------------

class _FaultState:
    """Per-client interpreter over a time-ordered fault script."""

    def __init__(self, spec: ClientSpec):
        self.actions = sorted(spec.faults, key=lambda a: a.at_s)
        self.crashed_at: Optional[float] = None
        self.garbage_at: Optional[float] = None
        self.garbage_done = False
        self.stalls: List[Tuple[float, float]] = []
        self.rate_changes: List[Tuple[float, float]] = []
        for a in self.actions:
            if a.kind == "crash":
                self.crashed_at = a.at_s if self.crashed_at is None else \
                    min(self.crashed_at, a.at_s)
            elif a.kind == "garbage-header":
                self.garbage_at = a.at_s if self.garbage_at is None else \
                    min(self.garbage_at, a.at_s)
            elif a.kind == "stall":
                end = math.inf if a.duration_s is None else a.at_s + a.duration_s
                self.stalls.append((a.at_s, end))
            elif a.kind == "slow-to":
                self.rate_changes.append((a.at_s, a.fps))
        self.rate_changes.sort()

    def crashed(self, t_s: float) -> bool:
        return self.crashed_at is not None and t_s >= self.crashed_at

    def stalled(self, t_s: float) -> bool:
        return any(s <= t_s < e for s, e in self.stalls)

    def garbage_due(self, t_s: float) -> bool:
        if self.garbage_done or self.garbage_at is None or t_s < self.garbage_at:
            return False
        self.garbage_done = True
        return True

    def fps_at(self, t_s: float, base: float) -> float:
        fps = base
        for at, new_fps in self.rate_changes:
            if t_s >= at:
                fps = new_fps
        return fps


def _scribble_header(region) -> None:
    buf = memoryview(region)
    buf[:shm.HEADER_SIZE] = (b"\xde\xad\xbe\xef" * 15)[:shm.HEADER_SIZE]


def _render(session: ClientSession, spec: ClientSpec, t_s: float,
            frame_index: int) -> bool:
    """One non-blocking produce attempt; True if a frame was submitted."""
    surface = session.try_begin_frame()
    if surface is None:
        return False
    if spec.widget == "counters":
        widgets.render_counters(surface, t_s, spec.complexity)
    else:
        widgets.render_pattern(surface, frame_index)
    session.end_frame()
    return True


# -- simulated engine ------------------------------------------------------

def _run_sim(config: ScenarioConfig) -> ScenarioReport:
    clock = SimClock()
    duration_us = int(config.run.duration_s * 1e6)
    sink = sinks.make_sink(config.run.sink, config.run.sink_dir)
    target = CompositionTarget(config.target.geometry, config.target.format,
                               config.target.background)
    server = CompositorServer(target, sink, clock)

    sessions: Dict[str, ClientSession] = {}
    faults: Dict[str, _FaultState] = {}
    results: Dict[str, ClientResult] = {}
    ids: Dict[int, str] = {}
    buffers: Dict[str, bytearray] = {}
    for spec in config.clients:
        buf, _ = shm.create_region(spec.region_config())
        shm.publish(buf)
        session = connect_session(buf, clock)
        desc = server.register_client(buf, spec.placement, spec.min_fps)
        sessions[spec.name] = session
        faults[spec.name] = _FaultState(spec)
        results[spec.name] = ClientResult(spec.name)
        ids[desc.id] = spec.name
        buffers[spec.name] = buf

    compose_period = int(1e6 / config.target.rate)
    watchdog_period = max(1, int(config.run.watchdog_poll_s * 1e6))
    next_compose = compose_period
    next_watchdog = watchdog_period
    next_client = {spec.name: 0 for spec in config.clients}
    frame_index = {spec.name: 0 for spec in config.clients}
    report = ScenarioReport(duration_us=duration_us, clock="sim",
                            sink=config.run.sink, sink_dir=config.run.sink_dir)

    while True:
        pending = [(t, 2, name) for name, t in next_client.items()
                   if t is not None]
        pending.append((next_watchdog, 1, "@watchdog"))
        pending.append((next_compose, 3, "@compose"))
        pending.sort()
        t, _, who = pending[0]
        if t > duration_us:
            break
        clock.advance_to(t)
        t_s = t / 1e6

        if who == "@watchdog":
            server.check_watchdogs(t)
            next_watchdog += watchdog_period
        elif who == "@compose":
            try:
                rep = server.compose_once(t)
                for cr in rep.clients:
                    if cr.outcome == "new":
                        results[ids[cr.client_id]].presented += 1
            except FramebufferError as exc:
                report.violations.append(f"compose at {t}us failed: {exc}")
            server.check_framerates(t)
            next_compose += compose_period
        else:
            spec = next(c for c in config.clients if c.name == who)
            fstate = faults[who]
            if fstate.crashed(t_s):
                results[who].exit_status = "crashed"
                next_client[who] = None
                continue
            if fstate.garbage_due(t_s):
                _scribble_header(buffers[who])
            fps = fstate.fps_at(t_s, spec.fps)
            next_client[who] = t + max(1, int(1e6 / fps))
            if fstate.stalled(t_s):
                continue
            try:
                if _render(sessions[who], spec, t_s, frame_index[who]):
                    results[who].submitted += 1
                    frame_index[who] += 1
                else:
                    results[who].skipped += 1
            except FramebufferError:
                results[who].exit_status = "lost"
                next_client[who] = None

    for event in server.events:
        name = ids.get(event.client_id)
        if name is not None and results[name].disconnect is None:
            results[name].disconnect = (event.t_us, event.reason)
    report.server_frames = server.frames_presented
    report.clients = results
    if isinstance(sink, sinks.ChecksumSink):
        report.checksums = sink.checksums()
    if isinstance(sink, sinks.ImageSequenceSink):
        report.index_path = str(sink.close())
    return report


# -- multi-process engine --------------------------------------------------

def _server_main(config_text: str, session_name: str, result_dir: str) -> None:
    config = parse_scenario(config_text)
    duration_us = int(config.run.duration_s * 1e6)
    clock = WallClock()
    sink = sinks.make_sink(config.run.sink, config.run.sink_dir)
    target = CompositionTarget(config.target.geometry, config.target.format,
                               config.target.background)
    server = CompositorServer(target, sink, clock)

    shared: Dict[str, regions.SharedRegion] = {}
    ids: Dict[int, str] = {}
    try:
        for spec in config.clients:
            rc = spec.region_config()
            region = regions.create_region(
                regions.region_name(session_name, spec.name),
                shm.required_region_size(rc))
            shm.encode_header(rc, region.buf)
            shm.publish(region.buf)
            shared[spec.name] = region
            desc = server.register_client(region.buf, spec.placement,
                                          spec.min_fps,
                                          pixel_buf=region.readonly_buf)
            ids[desc.id] = spec.name

        violations: List[str] = []
        start = clock.now_us()
        end = start + duration_us
        compose_period = int(1e6 / config.target.rate)
        presented: Dict[str, int] = {s.name: 0 for s in config.clients}
        next_tick = start + compose_period
        while next_tick <= end:
            clock.sleep_us(max(0, next_tick - clock.now_us()))
            now = clock.now_us()
            server.check_watchdogs(now)
            try:
                rep = server.compose_once(now)
                for cr in rep.clients:
                    if cr.outcome == "new":
                        presented[ids[cr.client_id]] += 1
            except FramebufferError as exc:
                violations.append(f"compose failed: {exc}")
            server.check_framerates(now)
            # Missed ticks are dropped, not replayed: a slow compose must
            # never build a backlog that outlives the run.
            next_tick += compose_period
            behind = clock.now_us()
            if next_tick < behind:
                next_tick = behind

        index_path = None
        if isinstance(sink, sinks.ImageSequenceSink):
            index_path = str(sink.close())
        out = {
            "server_frames": server.frames_presented,
            "presented": presented,
            "events": [{"t_us": e.t_us - start, "client": ids.get(e.client_id),
                        "reason": e.reason} for e in server.events],
            "violations": violations,
            "index_path": index_path,
            "checksums": sink.checksums() if isinstance(sink, sinks.ChecksumSink) else [],
        }
        Path(result_dir, "server.json").write_text(json.dumps(out))
    finally:
        for region in shared.values():
            region.close()
            region.unlink()


def _request_batch_slice(slice_ns: int = 25_000_000) -> None:
    """Ask the scheduler for batch policy with a long timeslice.

    Render partitions are throughput-oriented: on a busy host, long
    slices keep each client's working set in cache instead of thrashing
    it on every preemption. Best effort — silently skipped where the
    sched_setattr syscall or the slice request is unavailable.
    """
    if platform.system() != "Linux":
        return
    try:
        import ctypes

        class _SchedAttr(ctypes.Structure):
            _fields_ = [
                ("size", ctypes.c_uint32), ("sched_policy", ctypes.c_uint32),
                ("sched_flags", ctypes.c_uint64), ("sched_nice", ctypes.c_int32),
                ("sched_priority", ctypes.c_uint32),
                ("sched_runtime", ctypes.c_uint64),
                ("sched_deadline", ctypes.c_uint64),
                ("sched_period", ctypes.c_uint64),
            ]

        nr_sched_setattr = {"x86_64": 314, "aarch64": 274}.get(platform.machine())
        if nr_sched_setattr is None:
            return
        batch = 3  # SCHED_BATCH
        attr = _SchedAttr(ctypes.sizeof(_SchedAttr), batch, 0, 0, 0,
                          slice_ns, 0, 0)
        ctypes.CDLL(None, use_errno=True).syscall(
            nr_sched_setattr, 0, ctypes.byref(attr), 0)
    except OSError:
        pass


def _client_main(config_text: str, name: str, session_name: str,
                 result_dir: str) -> None:
    config = parse_scenario(config_text)
    spec = next(c for c in config.clients if c.name == name)
    _request_batch_slice()
    clock = WallClock()
    attach_deadline = clock.now_us() + 5_000_000
    while not regions.region_exists(regions.region_name(session_name, name)):
        if clock.now_us() > attach_deadline:
            os._exit(3)
        clock.sleep_us(1000)
    region = regions.open_region(regions.region_name(session_name, name))
    session = connect_session(region.buf, clock, attach_timeout_us=5_000_000)

    fstate = _FaultState(spec)
    submitted = skipped = 0
    frame_index = 0
    start = clock.now_us()
    end = start + int(config.run.duration_s * 1e6)
    next_frame = start
    while clock.now_us() < end:
        clock.sleep_us(max(0, next_frame - clock.now_us()))
        now = clock.now_us()
        t_s = (now - start) / 1e6
        if fstate.crashed(t_s):
            os._exit(17)  # simulated hard crash: no result file
        if fstate.garbage_due(t_s):
            _scribble_header(region.buf)
        fps = fstate.fps_at(t_s, spec.fps)
        next_frame = now + max(1, int(1e6 / fps))
        if fstate.stalled(t_s):
            continue
        try:
            if _render(session, spec, t_s, frame_index):
                submitted += 1
                frame_index += 1
            else:
                skipped += 1
        except FramebufferError:
            break
    Path(result_dir, f"client-{name}.json").write_text(
        json.dumps({"submitted": submitted, "skipped": skipped}))


def _run_wall(config: ScenarioConfig) -> ScenarioReport:
    session_name = config.run.session or uuid.uuid4().hex[:12]
    config = replace(config, run=replace(config.run, session=session_name))
    text = config.serialize()
    duration_us = int(config.run.duration_s * 1e6)
    report = ScenarioReport(duration_us=duration_us, clock="wall",
                            sink=config.run.sink, sink_dir=config.run.sink_dir)
    ctx = multiprocessing.get_context("fork")
    with tempfile.TemporaryDirectory(prefix="fbcomp-run-") as result_dir:
        server = ctx.Process(target=_server_main,
                             args=(text, session_name, result_dir))
        server.start()
        clients = {}
        for spec in config.clients:
            p = ctx.Process(target=_client_main,
                            args=(text, spec.name, session_name, result_dir))
            p.start()
            clients[spec.name] = p

        timeout = config.run.duration_s + 15
        server.join(timeout)
        if server.is_alive():
            server.terminate()
            server.join()
            report.violations.append("server did not finish in time")
        for name, p in clients.items():
            p.join(5)
            if p.is_alive():
                p.terminate()
                p.join()

        server_json = Path(result_dir, "server.json")
        if server_json.exists():
            data = json.loads(server_json.read_text())
            report.server_frames = data["server_frames"]
            report.violations.extend(data["violations"])
            report.index_path = data.get("index_path")
            report.checksums = data.get("checksums", [])
            for spec in config.clients:
                res = ClientResult(spec.name)
                res.presented = data["presented"].get(spec.name, 0)
                for e in data["events"]:
                    if e["client"] == spec.name and res.disconnect is None:
                        res.disconnect = (e["t_us"], e["reason"])
                report.clients[spec.name] = res
        else:
            report.violations.append("server produced no report")
            for spec in config.clients:
                report.clients[spec.name] = ClientResult(spec.name)

        for spec in config.clients:
            cj = Path(result_dir, f"client-{spec.name}.json")
            res = report.clients[spec.name]
            if cj.exists():
                data = json.loads(cj.read_text())
                res.submitted = data["submitted"]
                res.skipped = data["skipped"]
            else:
                res.exit_status = "crashed"
    for spec in config.clients:
        regions.unlink_region(regions.region_name(session_name, spec.name))
    return report


def run_scenario(config: ScenarioConfig) -> ScenarioReport:
    if config.run.clock == "sim":
        return _run_sim(config)
    if config.run.clock == "wall":
        return _run_wall(config)
    raise ValueError(f"unknown clock mode {config.run.clock!r}")
