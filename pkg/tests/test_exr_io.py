import struct
import zlib

import numpy as np
import pytest

import svbake as sv
from svbake import exr
from svbake.errors import CorruptImageError, RangeError, UnsupportedFormatError


@pytest.fixture
def hdr(rng):
    data = (rng.standard_normal((9, 7, 3)) * 20).astype(np.float32)
    data[0, 0, 0] = np.inf
    data[2, 3, 1] = np.nan
    return sv.ImageF.from_array(data, sv.LINEAR_RGB)


class TestExrRoundTrip:
    def test_bit_exact(self, hdr, tmp_path):
        p = tmp_path / "t.exr"
        sv.save_image(hdr, p)
        back = sv.load_image(p)
        assert back.colorspace == sv.LINEAR_RGB
        assert np.array_equal(hdr.data, back.data, equal_nan=True)

    def test_single_channel_scalar(self, tmp_path):
        depth = np.full((5, 4), np.inf, np.float32)
        depth[2, 2] = 3.5
        sv.save_depth(depth, tmp_path / "d.exr")
        back = sv.load_depth(tmp_path / "d.exr")
        assert np.array_equal(depth, back)
        img = sv.load_image(tmp_path / "d.exr")
        assert img.colorspace == sv.SCALAR
        assert img.data[2, 2, 0] == 3.5

    def test_bundle_channel_names(self, hdr, tmp_path):
        rough = sv.ImageF.from_array(np.full((9, 7), 0.25, np.float32), sv.SCALAR)
        sv.save_bundle({"basecolor": hdr, "roughness": rough}, tmp_path / "b.exr")
        raw = exr.read_exr(tmp_path / "b.exr")
        assert set(raw) == {
            "basecolor.R", "basecolor.G", "basecolor.B", "roughness.Y",
        }
        bundle = sv.load_bundle(tmp_path / "b.exr")
        assert np.array_equal(bundle["basecolor"].data, hdr.data, equal_nan=True)
        assert np.array_equal(bundle["roughness"].data[:, :, 0], rough.data[:, :, 0])

    def test_header_structure(self, hdr, tmp_path):
        p = tmp_path / "t.exr"
        sv.save_image(hdr, p)
        blob = p.read_bytes()
        assert blob[:4] == b"\x76\x2f\x31\x01"
        assert struct.unpack("<I", blob[4:8])[0] == 2

    def test_zip_compressed_read(self, tmp_path):
        # hand-built single-scanline ZIPS file exercises the inflate path
        data = np.arange(8, dtype=np.float32)[None, :]
        p = tmp_path / "z.exr"
        sv.save_depth(data, p)
        raw = bytearray(p.read_bytes())
        # flip compression byte (attribute order: channels, compression)
        idx = raw.find(b"compression\x00compression\x00")
        size_at = idx + len(b"compression\x00compression\x00")
        assert raw[size_at + 4] == 0
        payload = data.astype("<f4").tobytes()
        n = len(payload)
        half = (n + 1) // 2
        reordered = bytes(payload[0::2]) + bytes(payload[1::2])
        arr = np.frombuffer(reordered, dtype=np.uint8).astype(np.int64)
        delta = np.empty_like(arr)
        delta[0] = arr[0]
        delta[1:] = arr[1:] - arr[:-1] + 128
        compressed = zlib.compress(delta.astype(np.uint8).tobytes())
        raw[size_at + 4] = 2  # ZIPS
        header_end = raw.find(payload)
        chunk_start = header_end - 8
        table_start = chunk_start - 8
        new = bytes(raw[:size_at + 5])
        new += bytes(raw[size_at + 5 : table_start])
        new += struct.pack("<Q", chunk_start)
        new += struct.pack("<ii", 0, len(compressed)) + compressed
        p.write_bytes(new)
        back = sv.load_depth(p)
        assert np.array_equal(back, data)


class TestPng:
    def test_quantization_bound(self, rng, tmp_path):
        data = rng.random((6, 6, 3), dtype=np.float32)
        img = sv.ImageF.from_array(data, sv.SRGB)
        p = tmp_path / "t.png"
        sv.save_image(img, p)
        back = sv.load_image(p)
        assert back.colorspace == sv.SRGB
        assert np.abs(back.data - data).max() <= 1 / 510 + 1e-7

    def test_pure_white_identity(self, tmp_path):
        img = sv.ImageF.from_array(np.ones((2, 2, 3), np.float32), sv.SRGB)
        p = tmp_path / "w.png"
        sv.save_image(img, p)
        assert np.array_equal(sv.load_image(p).data, img.data)

    def test_grayscale_is_scalar(self, tmp_path):
        img = sv.ImageF.from_array(np.full((3, 3), 0.5, np.float32), sv.SCALAR)
        sv.save_image(img, tmp_path / "g.png")
        back = sv.load_image(tmp_path / "g.png")
        assert back.colorspace == sv.SCALAR
        assert abs(back.data[0, 0, 0] - 0.5) <= 1 / 510 + 1e-7

    def test_out_of_range_rejected(self, tmp_path):
        img = sv.ImageF.from_array(np.full((2, 2), 2.0, np.float32), sv.SCALAR)
        with pytest.raises(RangeError):
            sv.save_image(img, tmp_path / "bad.png")

    def test_linear_rgb_png_rejected(self, tmp_path):
        img = sv.ImageF.from_array(np.full((2, 2, 3), 0.5, np.float32), sv.LINEAR_RGB)
        with pytest.raises(RangeError):
            sv.save_image(img, tmp_path / "lin.png")

    def test_mask_roundtrip(self, rng, tmp_path):
        mask = rng.random((8, 8)) > 0.5
        sv.save_mask(mask, tmp_path / "m.png")
        assert np.array_equal(sv.load_mask(tmp_path / "m.png"), mask)


class TestLoadErrors:
    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            sv.load_image(tmp_path / "nope.png")

    def test_unsupported_extension(self, tmp_path):
        p = tmp_path / "t.webp"
        p.write_bytes(b"abc")
        with pytest.raises(UnsupportedFormatError):
            sv.load_image(p)

    def test_truncated_exr(self, hdr, tmp_path):
        p = tmp_path / "t.exr"
        sv.save_image(hdr, p)
        blob = p.read_bytes()
        p.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CorruptImageError):
            sv.load_image(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "t.exr"
        p.write_bytes(b"\x00" * 64)
        with pytest.raises(CorruptImageError):
            sv.load_image(p)

    def test_truncated_png(self, rng, tmp_path):
        img = sv.ImageF.from_array(rng.random((6, 6, 3), dtype=np.float32), sv.SRGB)
        p = tmp_path / "t.png"
        sv.save_image(img, p)
        p.write_bytes(p.read_bytes()[:20])
        with pytest.raises(CorruptImageError):
            sv.load_image(p)
