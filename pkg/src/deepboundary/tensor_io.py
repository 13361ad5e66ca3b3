"""Serialization shared by every stage: HFLT tensors, PGM rasters, stacks.

HFLT is a dumb little-endian container for float32 arrays::

    magic   'HFLT'          4 bytes
    version u32 = 1
    ndim    u32
    dims    u32 * ndim      row-major, outermost first
    dtype   u32 = 1         float32 little-endian
    data    f32 * prod(dims)

Feature stacks live in a directory: a UTF-8 manifest whose first line is
``input <height> <width>`` followed by one ``name channels height width``
record per layer, with each layer stored as ``<name>.hflt`` beside it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

MAGIC = b"HFLT"
VERSION = 1
DTYPE_F32 = 1


class TensorIOError(Exception):
    """Base class for serialization failures."""


class BadMagicError(TensorIOError):
    pass


class UnsupportedVersionError(TensorIOError):
    pass


class UnsupportedDtypeError(TensorIOError):
    pass


class TruncatedStreamError(TensorIOError):
    pass


class PgmFormatError(TensorIOError):
    pass


def as_tensor(array) -> np.ndarray:
    """Validate and coerce to a contiguous float32 array with ndim >= 1."""
    if np.asarray(array).ndim == 0:
        raise ValueError("tensors must have at least one dimension")
    arr = np.ascontiguousarray(array, dtype="<f4")
    if any(d < 1 for d in arr.shape):
        raise ValueError(f"all dims must be >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


def write_tensor(array, sink: BinaryIO) -> None:
    arr = as_tensor(array)
    header = struct.pack("<4sII", MAGIC, VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    header += struct.pack("<I", DTYPE_F32)
    payload = arr.tobytes(order="C")
    written = 0
    try:
        sink.write(header)
        written += len(header)
        sink.write(payload)
        written += len(payload)
    except OSError as exc:
        raise TensorIOError(f"write failed at byte offset {written}: {exc}") from exc


def _read_exact(source: BinaryIO, count: int, what: str) -> bytes:
    data = source.read(count)
    if len(data) != count:
        raise TruncatedStreamError(
            f"truncated stream: expected {count} bytes for {what}, got {len(data)}")
    return data


def read_tensor(source: BinaryIO) -> np.ndarray:
    magic = _read_exact(source, 4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, ndim = struct.unpack("<II", _read_exact(source, 8, "header"))
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")
    if ndim < 1:
        raise TensorIOError("ndim must be >= 1")
    dims = struct.unpack(f"<{ndim}I", _read_exact(source, 4 * ndim, "dims"))
    if any(d < 1 for d in dims):
        raise TensorIOError(f"all dims must be >= 1, got {dims}")
    (dtype_code,) = struct.unpack("<I", _read_exact(source, 4, "dtype"))
    if dtype_code != DTYPE_F32:
        raise UnsupportedDtypeError(f"unsupported dtype code {dtype_code}")
    count = int(np.prod(dims, dtype=np.int64))
    payload = _read_exact(source, 4 * count, "payload")
    arr = np.frombuffer(payload, dtype="<f4", count=count).reshape(dims)
    return arr.copy()


def save_tensor(array, path) -> None:
    with open(path, "wb") as f:
        write_tensor(array, f)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_tensor(f)


def read_raster_pgm(source: BinaryIO) -> np.ndarray:
    """Binary PGM (P5, maxval <= 255) -> float32 [h, w] scaled to [0, 1]."""

    def next_token() -> bytes:
        tok = b""
        while True:
            ch = source.read(1)
            if ch == b"":
                raise TruncatedStreamError("truncated PGM header")
            if ch == b"#":
                while ch not in (b"\n", b""):
                    ch = source.read(1)
                continue
            if ch.isspace():
                if tok:
                    return tok
                continue
            tok += ch

    magic = next_token()
    if magic != b"P5":
        raise PgmFormatError(f"not a binary PGM (P5) stream, got {magic!r}")
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError as exc:
        raise PgmFormatError(f"malformed PGM header: {exc}") from exc
    if width < 1 or height < 1:
        raise PgmFormatError(f"bad PGM dims {height}x{width}")
    if maxval < 1 or maxval > 255:
        raise PgmFormatError(f"maxval must be in [1, 255], got {maxval}")
    data = _read_exact(source, width * height, "PGM pixels")
    pixels = np.frombuffer(data, dtype=np.uint8).reshape(height, width)
    return (pixels.astype(np.float32) / np.float32(maxval)).astype(np.float32)


def write_raster_pgm(array, sink: BinaryIO, maxval: int = 255) -> None:
    """float32 [h, w] in [0, 1] -> binary PGM with the given maxval."""
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"PGM rasters must be 2-D, got shape {arr.shape}")
    if maxval < 1 or maxval > 255:
        raise PgmFormatError(f"maxval must be in [1, 255], got {maxval}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("raster values must lie in [0, 1]")
    pixels = np.clip(np.rint(arr * maxval), 0, maxval).astype(np.uint8)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    try:
        sink.write(header)
        sink.write(pixels.tobytes(order="C"))
    except OSError as exc:
        raise TensorIOError(f"write failed: {exc}") from exc


def load_raster(path) -> np.ndarray:
    """Read a 2-D raster from either PGM or HFLT, by file suffix."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        with open(path, "rb") as f:
            return read_raster_pgm(f)
    arr = load_tensor(path)
    if arr.ndim != 2:
        raise TensorIOError(f"{path}: expected a 2-D raster, got shape {arr.shape}")
    return arr


def save_raster(array, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        with open(path, "wb") as f:
            write_raster_pgm(array, f)
    else:
        save_tensor(array, path)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    channels: int
    height: int
    width: int


class FeatureStack:
    """Ordered per-layer feature maps plus the working-image dims.

    Layers are either held in memory or loaded lazily from a stack
    directory, one at a time, so peak memory stays at a single layer.
    """

    def __init__(self, input_dims: tuple[int, int], layers: Sequence[LayerSpec],
                 arrays: Sequence[np.ndarray] | None = None,
                 directory: Path | None = None):
        if arrays is None and directory is None:
            raise ValueError("stack needs in-memory arrays or a directory")
        self.input_dims = (int(input_dims[0]), int(input_dims[1]))
        self.layers = list(layers)
        self._arrays = list(arrays) if arrays is not None else None
        self._directory = Path(directory) if directory is not None else None
        self._validate_specs()

    def _validate_specs(self) -> None:
        h, w = self.input_dims
        if h < 1 or w < 1:
            raise ValueError(f"bad input dims {self.input_dims}")
        if not self.layers:
            raise ValueError("stack has no layers")
        for spec in self.layers:
            if spec.channels < 1 or spec.height < 1 or spec.width < 1:
                raise ValueError(f"bad layer record {spec}")
            if spec.height > h or spec.width > w:
                raise ValueError(
                    f"layer {spec.name} is {spec.height}x{spec.width}, larger "
                    f"than the input dims {h}x{w}")

    @property
    def total_channels(self) -> int:
        return sum(spec.channels for spec in self.layers)

    def require_channels(self, expected: int) -> None:
        if self.total_channels != expected:
            raise ValueError(
                f"stack carries {self.total_channels} channels, expected {expected}")

    def layer_array(self, index: int) -> np.ndarray:
        spec = self.layers[index]
        if self._arrays is not None:
            arr = np.ascontiguousarray(self._arrays[index], dtype=np.float32)
        else:
            arr = load_tensor(self._directory / f"{spec.name}.hflt")
        if arr.shape != (spec.channels, spec.height, spec.width):
            raise TensorIOError(
                f"layer {spec.name}: file shape {arr.shape} does not match the "
                f"manifest record {(spec.channels, spec.height, spec.width)}")
        return arr


def stack_from_arrays(input_dims, named_arrays) -> FeatureStack:
    """Build an in-memory stack from (name, [C,h,w] array) pairs."""
    specs, arrays = [], []
    for name, arr in named_arrays:
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"layer {name} must be [channels, h, w]")
        specs.append(LayerSpec(name, arr.shape[0], arr.shape[1], arr.shape[2]))
        arrays.append(arr)
    return FeatureStack(input_dims, specs, arrays=arrays)


def read_stack_manifest(path) -> FeatureStack:
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()
             if ln.strip()]
    if not lines:
        raise TensorIOError(f"{path}: empty stack manifest")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "input":
        raise TensorIOError(
            f"{path}: first manifest line must be 'input <height> <width>'")
    input_dims = (int(head[1]), int(head[2]))
    specs = []
    for ln in lines[1:]:
        fields = ln.split()
        if len(fields) != 4:
            raise TensorIOError(f"{path}: bad layer record {ln!r}")
        specs.append(LayerSpec(fields[0], int(fields[1]), int(fields[2]),
                               int(fields[3])))
    return FeatureStack(input_dims, specs, directory=path.parent)


def write_stack(stack: FeatureStack, directory, manifest_name="manifest.txt") -> Path:
    """Materialize a stack (manifest + per-layer HFLT files) into a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"input {stack.input_dims[0]} {stack.input_dims[1]}"]
    for i, spec in enumerate(stack.layers):
        save_tensor(stack.layer_array(i), directory / f"{spec.name}.hflt")
        lines.append(f"{spec.name} {spec.channels} {spec.height} {spec.width}")
    manifest = directory / manifest_name
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest
