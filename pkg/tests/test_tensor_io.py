import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepboundary import tensor_io


def roundtrip(arr):
    buf = io.BytesIO()
    tensor_io.write_tensor(arr, buf)
    buf.seek(0)
    return tensor_io.read_tensor(buf)


class TestHflt:
    def test_zero_payload_encoding(self):
        buf = io.BytesIO()
        tensor_io.write_tensor(np.zeros(1, dtype=np.float32), buf)
        raw = buf.getvalue()
        assert len(raw) == 24
        assert raw[-4:] == b"\x00\x00\x00\x00"

    def test_header_fields(self):
        buf = io.BytesIO()
        tensor_io.write_tensor(np.arange(6, dtype=np.float32).reshape(2, 3), buf)
        raw = buf.getvalue()
        magic, version, ndim = struct.unpack_from("<4sII", raw, 0)
        assert magic == b"HFLT"
        assert version == 1
        assert ndim == 2
        dims = struct.unpack_from("<II", raw, 12)
        assert dims == (2, 3)
        (dtype_code,) = struct.unpack_from("<I", raw, 20)
        assert dtype_code == 1
        assert len(raw) == 16 + 4 * 2 + 4 * 6

    def test_seeded_roundtrip_bit_exact(self):
        rng = np.random.default_rng(42)
        arr = rng.standard_normal((4, 5, 6)).astype(np.float32)
        back = roundtrip(arr)
        assert back.shape == (4, 5, 6)
        assert np.array_equal(
            back.view(np.uint32), arr.view(np.uint32))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(1, 5), min_size=1, max_size=4),
           st.integers(0, 2**31 - 1))
    def test_roundtrip_property(self, dims, seed):
        rng = np.random.default_rng(seed)
        arr = rng.standard_normal(dims).astype(np.float32)
        back = roundtrip(arr)
        assert back.shape == arr.shape
        assert np.array_equal(back, arr)

    def test_bad_magic(self):
        buf = io.BytesIO()
        tensor_io.write_tensor(np.ones(3, dtype=np.float32), buf)
        raw = bytearray(buf.getvalue())
        raw[:4] = b"XXXX"
        with pytest.raises(tensor_io.BadMagicError):
            tensor_io.read_tensor(io.BytesIO(bytes(raw)))

    def test_unknown_version(self):
        buf = io.BytesIO()
        tensor_io.write_tensor(np.ones(3, dtype=np.float32), buf)
        raw = bytearray(buf.getvalue())
        struct.pack_into("<I", raw, 4, 9)
        with pytest.raises(tensor_io.UnsupportedVersionError):
            tensor_io.read_tensor(io.BytesIO(bytes(raw)))

    def test_unknown_dtype(self):
        buf = io.BytesIO()
        tensor_io.write_tensor(np.ones(3, dtype=np.float32), buf)
        raw = bytearray(buf.getvalue())
        struct.pack_into("<I", raw, 16, 7)
        with pytest.raises(tensor_io.UnsupportedDtypeError):
            tensor_io.read_tensor(io.BytesIO(bytes(raw)))

    def test_truncated_payload(self):
        buf = io.BytesIO()
        tensor_io.write_tensor(np.ones(10, dtype=np.float32), buf)
        raw = buf.getvalue()[:-4]  # header says 10 scalars, stream has 9
        with pytest.raises(tensor_io.TruncatedStreamError):
            tensor_io.read_tensor(io.BytesIO(raw))

    def test_rejects_scalar_and_nonfinite(self):
        with pytest.raises(ValueError):
            tensor_io.write_tensor(np.float32(1.0), io.BytesIO())
        with pytest.raises(ValueError):
            tensor_io.write_tensor(np.array([np.nan], dtype=np.float32),
                                   io.BytesIO())


class TestPgm:
    def test_forced_scaling(self):
        raw = b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64])
        arr = tensor_io.read_raster_pgm(io.BytesIO(raw))
        expected = np.array([[0.0, 1.0], [128 / 255, 64 / 255]],
                            dtype=np.float32)
        assert np.allclose(arr, expected, atol=0)

    def test_write_then_read_zeros(self):
        buf = io.BytesIO()
        tensor_io.write_raster_pgm(np.zeros((3, 3), dtype=np.float32), buf)
        buf.seek(0)
        assert np.array_equal(tensor_io.read_raster_pgm(buf), np.zeros((3, 3)))

    def test_roundtrip_pixel_identical(self):
        # write(read(file)) reproduces any valid maxval-255 P5 byte for byte
        rng = np.random.default_rng(7)
        pixels = rng.integers(0, 256, size=(9, 7), dtype=np.uint8)
        src = b"P5\n7 9\n255\n" + pixels.tobytes()
        arr = tensor_io.read_raster_pgm(io.BytesIO(src))
        buf = io.BytesIO()
        tensor_io.write_raster_pgm(arr, buf)
        assert buf.getvalue() == src

    def test_header_comments(self):
        raw = b"P5\n# a comment\n2 1\n255\n" + bytes([10, 20])
        arr = tensor_io.read_raster_pgm(io.BytesIO(raw))
        assert arr.shape == (1, 2)

    def test_rejects_non_p5(self):
        with pytest.raises(tensor_io.PgmFormatError):
            tensor_io.read_raster_pgm(io.BytesIO(b"P2\n1 1\n255\n0"))

    def test_rejects_bad_maxval(self):
        with pytest.raises(tensor_io.PgmFormatError):
            tensor_io.read_raster_pgm(io.BytesIO(b"P5\n1 1\n0\n\x00"))
        with pytest.raises(tensor_io.PgmFormatError):
            tensor_io.read_raster_pgm(io.BytesIO(b"P5\n1 1\n999\n\x00"))
        with pytest.raises(tensor_io.PgmFormatError):
            tensor_io.write_raster_pgm(np.zeros((2, 2)), io.BytesIO(), maxval=0)


class TestStack:
    def _sample_stack(self):
        rng = np.random.default_rng(3)
        layers = [("a", rng.random((2, 8, 8), dtype=np.float32)),
                  ("b", rng.random((3, 4, 4), dtype=np.float32))]
        return tensor_io.stack_from_arrays((8, 8), layers)

    def test_write_read_cycle(self, tmp_path):
        stack = self._sample_stack()
        manifest = tensor_io.write_stack(stack, tmp_path / "stack")
        back = tensor_io.read_stack_manifest(manifest)
        assert back.input_dims == (8, 8)
        assert back.total_channels == 5
        for i in range(2):
            assert np.array_equal(back.layer_array(i), stack.layer_array(i))

    def test_mismatched_layer_rejected(self, tmp_path):
        stack = self._sample_stack()
        manifest = tensor_io.write_stack(stack, tmp_path / "stack")
        # corrupt: shrink one layer file, keep the manifest record
        tensor_io.save_tensor(np.zeros((3, 4, 3), dtype=np.float32),
                              tmp_path / "stack" / "b.hflt")
        back = tensor_io.read_stack_manifest(manifest)
        with pytest.raises(tensor_io.TensorIOError):
            back.layer_array(1)

    def test_channel_total_validation(self):
        stack = self._sample_stack()
        stack.require_channels(5)
        with pytest.raises(ValueError):
            stack.require_channels(6)

    def test_layer_larger_than_input_rejected(self):
        with pytest.raises(ValueError):
            tensor_io.stack_from_arrays(
                (4, 4), [("a", np.zeros((1, 8, 8), dtype=np.float32))])
