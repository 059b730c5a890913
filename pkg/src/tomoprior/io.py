"""Binary artifact format and portable graymap export.

Layout (little-endian)::

    b"TPRI"  u32 version  u32 kind  u32 ndim  u32 shape[ndim]
    [sinogram only] u32 num_views  u32 num_bins  f64 bin_spacing  f64 angles[num_views]
    f64 payload[prod(shape)]            (row-major)

kind is 1 for images, 2 for sinograms and 3 for weights maps.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import FormatError, Geometry, Sinogram, as_image

MAGIC = b"TPRI"
VERSION = 1
KIND_IMAGE, KIND_SINOGRAM, KIND_WEIGHTS = 1, 2, 3
_KIND_NAMES = {KIND_IMAGE: "image", KIND_SINOGRAM: "sinogram", KIND_WEIGHTS: "weights"}


def _header(kind: int, shape) -> bytes:
    return MAGIC + struct.pack("<III", VERSION, kind, len(shape)) + struct.pack(
        f"<{len(shape)}I", *shape)


def _write(path, blob: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)
    return path


def save_image(path, img, kind: int = KIND_IMAGE) -> Path:
    img = as_image(img)
    payload = img.astype("<f8").tobytes(order="C")
    return _write(path, _header(kind, img.shape) + payload)


def save_weights(path, weights) -> Path:
    return save_image(path, weights, KIND_WEIGHTS)


def save_sinogram(path, sino: Sinogram) -> Path:
    g = sino.geometry
    geom = struct.pack("<IId", g.num_views, g.num_bins, g.bin_spacing)
    geom += np.asarray(g.angles, dtype="<f8").tobytes()
    payload = sino.data.astype("<f8").tobytes(order="C")
    return _write(path, _header(KIND_SINOGRAM, sino.data.shape) + geom + payload)


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(
                f"{self.path}: truncated at byte {self.pos} reading {what}: expected "
                f"{n} bytes, {len(self.blob) - self.pos} available "
                f"(file length {len(self.blob)}, expected at least {self.pos + n})")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _read(path, kinds):
    r = _Reader(Path(path).read_bytes(), path)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0")
    version, kind, ndim = r.unpack("<III", "header")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte 4")
    if kind not in kinds:
        raise FormatError(f"{path}: kind {kind} at byte 8, expected one of "
                          f"{[_KIND_NAMES[k] for k in kinds]}")
    if ndim != 2:
        raise FormatError(f"{path}: {ndim} dimensions at byte 12, expected 2")
    shape = r.unpack("<2I", "shape")
    return r, kind, shape


def _payload(r: _Reader, shape) -> np.ndarray:
    n = int(np.prod(shape))
    data = np.frombuffer(r.take(8 * n, "payload"), dtype="<f8").astype(np.float64)
    if r.pos != len(r.blob):
        raise FormatError(f"{r.path}: {len(r.blob) - r.pos} trailing bytes at byte {r.pos}")
    return data.reshape(shape)


def load_image(path) -> np.ndarray:
    r, _, shape = _read(path, (KIND_IMAGE, KIND_WEIGHTS))
    return _payload(r, shape)


def load_sinogram(path) -> Sinogram:
    r, _, shape = _read(path, (KIND_SINOGRAM,))
    num_views, num_bins, spacing = r.unpack("<IId", "geometry block")
    if (num_views, num_bins) != tuple(shape):
        raise FormatError(f"{path}: geometry {num_views}x{num_bins} disagrees with shape {shape}")
    angles = np.frombuffer(r.take(8 * num_views, "angles"), dtype="<f8")
    geom = Geometry(tuple(float(a) for a in angles), num_bins, spacing)
    return Sinogram(geom, _payload(r, shape))


def save_pgm(path, img, lo: float | None = None, hi: float | None = None) -> Path:
    """8-bit binary graymap; values are clamped to [lo, hi] for display only."""
    img = as_image(img)
    lo = float(img.min()) if lo is None else lo
    hi = float(img.max()) if hi is None else hi
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    px = np.clip(np.rint((np.clip(img, lo, hi) - lo) * scale), 0, 255).astype(np.uint8)
    head = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    return _write(path, head + px.tobytes())
