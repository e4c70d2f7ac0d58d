import json

import pytest

from fbcomp import shm
from fbcomp.cli import main
from fbcomp.pixel import PixelFormat, SurfaceGeometry
from fbcomp.scenario import (ClientSpec, FaultAction, RunSpec, ScenarioConfig,
                             TargetSpec)

SCENARIO = ScenarioConfig(
    target=TargetSpec(width=512, height=256, rate=30),
    run=RunSpec(duration_s=0.5, clock="sim", sink="checksum"),
    clients=(
        ClientSpec("alpha", width=128, height=128, x=16, y=16, fps=48,
                   timeout_s=0.2),
        ClientSpec("beta", width=128, height=128, x=256, y=16, fps=48,
                   timeout_s=0.2),
    ),
)


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.cfg"
    path.write_text(SCENARIO.serialize())
    return path


class TestRun:
    def test_exit_zero_and_report(self, scenario_file, tmp_path, capsys):
        report = tmp_path / "report.json"
        assert main(["run", str(scenario_file), "--report", str(report)]) == 0
        out = capsys.readouterr().out
        assert "server_frames=15" in out
        assert "client alpha:" in out and "client beta:" in out
        data = json.loads(report.read_text())
        assert data["server_frames"] == 15
        assert set(data["clients"]) == {"alpha", "beta"}

    def test_duration_override(self, scenario_file, capsys):
        assert main(["run", str(scenario_file), "--duration", "0.2"]) == 0
        assert "server_frames=6" in capsys.readouterr().out

    def test_disconnect_reported(self, tmp_path, capsys):
        config = ScenarioConfig(
            target=SCENARIO.target,
            run=RunSpec(duration_s=1.0, clock="sim", sink="null"),
            clients=SCENARIO.clients[:1] + (
                ClientSpec("beta", width=128, height=128, x=256, y=16,
                           fps=48, timeout_s=0.2,
                           faults=(FaultAction("stall", 0.2),)),),
        )
        path = tmp_path / "s.cfg"
        path.write_text(config.serialize())
        assert main(["run", str(path)]) == 0
        assert "(watchdog)" in capsys.readouterr().out

    def test_images_sink(self, scenario_file, tmp_path, capsys):
        out_dir = tmp_path / "frames"
        out_dir.mkdir()
        assert main(["run", str(scenario_file), "--sink", "images",
                     "--sink-dir", str(out_dir), "--duration", "0.2"]) == 0
        ppms = list(out_dir.glob("frame_*.ppm"))
        assert len(ppms) == 6
        assert main(["replay", str(out_dir / "index.txt")]) == 0


class TestValidate:
    def test_well_formed_dump(self, tmp_path, capsys):
        config = shm.RegionConfig(
            geometry=SurfaceGeometry.for_width(64, 64),
            formats=(PixelFormat.R8G8B8A8,), framerate=30,
            timeout_us=100_000, queue_depth=2)
        buf, _ = shm.create_region(config)
        shm.publish(buf)
        dump = tmp_path / "region.bin"
        dump.write_bytes(bytes(buf))
        assert main(["validate", str(dump)]) == 0
        assert "well-formed" in capsys.readouterr().out

    def test_corrupt_dump(self, tmp_path, capsys):
        dump = tmp_path / "junk.bin"
        dump.write_bytes(b"\x00" * 4096)
        assert main(["validate", str(dump)]) == 1
        assert "VIOLATION" in capsys.readouterr().out


class TestReplay:
    def test_tampered_sequence(self, scenario_file, tmp_path, capsys):
        out_dir = tmp_path / "frames"
        out_dir.mkdir()
        main(["run", str(scenario_file), "--sink", "images",
              "--sink-dir", str(out_dir), "--duration", "0.1"])
        victim = next(out_dir.glob("frame_*.ppm"))
        data = bytearray(victim.read_bytes())
        data[-1] ^= 0xFF
        victim.write_bytes(bytes(data))
        assert main(["replay", str(out_dir / "index.txt")]) == 1
        assert "MISMATCH" in capsys.readouterr().out


class TestParser:
    def test_missing_subcommand(self):
        with pytest.raises(SystemExit):
            main([])

    def test_unknown_sink_rejected(self, scenario_file):
        with pytest.raises(SystemExit):
            main(["run", str(scenario_file), "--sink", "laserprinter"])
