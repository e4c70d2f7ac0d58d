import zlib

import pytest

from fbcomp.pixel import PixelFormat, Surface, SurfaceGeometry, pack_channels
from fbcomp.sinks import (ChecksumSink, ImageSequenceSink, NullSink,
                          frame_checksum, make_sink, replay_index, write_ppm)
from fbcomp.widgets import render_pattern


def surface_with(index, side=16, fmt=PixelFormat.R8G8B8A8):
    s = Surface.allocate(SurfaceGeometry(side, side, side * 4 + 16), fmt)
    render_pattern(s, index)
    return s


class TestChecksums:
    def test_checksum_ignores_pitch_padding(self):
        a = Surface.allocate(SurfaceGeometry(16, 16, 64), PixelFormat.R8G8B8A8)
        b = Surface.allocate(SurfaceGeometry(16, 16, 128), PixelFormat.R8G8B8A8)
        render_pattern(a, 5)
        render_pattern(b, 5)
        b._raw[64:128] = 0xAA  # scribble into padding only
        assert frame_checksum(a) == frame_checksum(b)

    def test_checksum_normalizes_format(self):
        # Same named-channel content in two byte orders hashes the same.
        a = Surface.allocate(SurfaceGeometry.for_width(16, 16), PixelFormat.R8G8B8A8)
        b = Surface.allocate(SurfaceGeometry.for_width(16, 16), PixelFormat.B8G8R8A8)
        a.fill(pack_channels(PixelFormat.R8G8B8A8, 10, 20, 30, 255))
        b.fill(pack_channels(PixelFormat.B8G8R8A8, 10, 20, 30, 255))
        assert frame_checksum(a) == frame_checksum(b)


class TestImageSequence:
    def test_three_presents_three_files_plus_index(self, tmp_path):
        sink = ImageSequenceSink(tmp_path)
        for i in range(3):
            sink.present(surface_with(i), now_us=i * 1000)
        index = sink.close()
        names = sorted(p.name for p in tmp_path.glob("frame_*.ppm"))
        assert names == ["frame_000001.ppm", "frame_000002.ppm", "frame_000003.ppm"]
        lines = index.read_text().splitlines()
        assert len(lines) == 3
        assert replay_index(index) == []

    def test_identical_run_identical_checksums(self, tmp_path):
        def run(d):
            sink = ImageSequenceSink(d)
            for i in range(4):
                sink.present(surface_with(i * 3), now_us=i)
            return sink.close().read_text()

        assert run(tmp_path / "a") == run(tmp_path / "b")

    def test_replay_detects_tampering(self, tmp_path):
        sink = ImageSequenceSink(tmp_path)
        sink.present(surface_with(1), 0)
        index = sink.close()
        target = tmp_path / "frame_000001.ppm"
        data = bytearray(target.read_bytes())
        data[-1] ^= 0xFF
        target.write_bytes(data)
        problems = replay_index(index)
        assert len(problems) == 1 and "checksum" in problems[0]

    def test_replay_detects_missing_file(self, tmp_path):
        sink = ImageSequenceSink(tmp_path)
        sink.present(surface_with(1), 0)
        index = sink.close()
        (tmp_path / "frame_000001.ppm").unlink()
        assert any("missing" in p for p in replay_index(index))

    def test_ppm_header_and_size(self, tmp_path):
        s = surface_with(2, side=16)
        write_ppm(tmp_path / "x.ppm", s)
        data = (tmp_path / "x.ppm").read_bytes()
        assert data.startswith(b"P6\n16 16\n255\n")
        assert len(data) == len(b"P6\n16 16\n255\n") + 16 * 16 * 3


class TestFactory:
    def test_kinds(self, tmp_path):
        assert isinstance(make_sink("null"), NullSink)
        assert isinstance(make_sink("checksum"), ChecksumSink)
        assert isinstance(make_sink("images", str(tmp_path)), ImageSequenceSink)
        with pytest.raises(ValueError):
            make_sink("bogus")
        with pytest.raises(ValueError):
            make_sink("images")
