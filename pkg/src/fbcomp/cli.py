"""Command-line entry point.

Subcommands:
  run <scenario.cfg>     execute a scenario (sim or multi-process)
  bench [suite.cfg]      run the overhead benchmark suite
  validate <region-dump> structurally validate a region dump file
  replay <index-file>    re-verify an emitted frame sequence

Exit code 0 only when no invariant violations were recorded.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import bench, scenario, shm, sinks


def _cmd_run(args) -> int:
    config = scenario.load_scenario(args.scenario)
    run = config.run
    if args.sink:
        run = replace(run, sink=args.sink)
    if args.sink_dir:
        run = replace(run, sink_dir=args.sink_dir)
    if args.duration is not None:
        run = replace(run, duration_s=args.duration)
    if args.clock:
        run = replace(run, clock=args.clock)
    config = replace(config, run=run)

    report = scenario.run_scenario(config)
    if args.report:
        Path(args.report).write_text(report.to_json())
    print(f"clock={report.clock} duration={report.duration_us / 1e6:.3f}s "
          f"server_frames={report.server_frames}")
    for name, c in sorted(report.clients.items()):
        line = (f"  client {name}: submitted={c.submitted} "
                f"presented={c.presented} skipped={c.skipped}")
        if c.disconnect:
            line += f" disconnected@{c.disconnect[0] / 1e6:.3f}s ({c.disconnect[1]})"
        if c.exit_status != "ok":
            line += f" [{c.exit_status}]"
        print(line)
    for v in report.violations:
        print(f"  VIOLATION: {v}")
    return 0 if report.ok else 1


def _cmd_bench(args) -> int:
    config = bench.load_bench_config(args.suite) if args.suite else bench.BenchConfig()
    if args.duration is not None:
        config = replace(config, phase_duration_s=args.duration)
    if args.sink:
        config = replace(config, sink=args.sink)
    report = bench.run_benchmark(config)
    print(report.to_text())
    if args.report:
        Path(args.report).write_text(report.to_json())
    return 0


def _cmd_validate(args) -> int:
    data = Path(args.region_dump).read_bytes()
    violations = shm.validate_region(data)
    if not violations:
        print("region well-formed")
        return 0
    for v in violations:
        print(f"VIOLATION: {v}")
    return 1


def _cmd_replay(args) -> int:
    problems = sinks.replay_index(args.index_file)
    if not problems:
        print("all frames match the index")
        return 0
    for p in problems:
        print(f"MISMATCH: {p}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbcomp", description="framebuffer compositing harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("scenario", help="scenario config file")
    p_run.add_argument("--sink", choices=["null", "checksum", "images"])
    p_run.add_argument("--sink-dir", dest="sink_dir")
    p_run.add_argument("--duration", type=float, help="seconds")
    p_run.add_argument("--clock", choices=["wall", "sim"])
    p_run.add_argument("--report", help="write a JSON report here")
    p_run.set_defaults(func=_cmd_run)

    p_bench = sub.add_parser("bench", help="run the benchmark suite")
    p_bench.add_argument("suite", nargs="?", help="suite config file")
    p_bench.add_argument("--duration", type=float, help="seconds per phase")
    p_bench.add_argument("--sink", choices=["null", "checksum"])
    p_bench.add_argument("--report", help="write a JSON report here")
    p_bench.set_defaults(func=_cmd_bench)

    p_val = sub.add_parser("validate", help="validate a region dump")
    p_val.add_argument("region_dump")
    p_val.set_defaults(func=_cmd_validate)

    p_rep = sub.add_parser("replay", help="verify an emitted frame index")
    p_rep.add_argument("index_file")
    p_rep.set_defaults(func=_cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
