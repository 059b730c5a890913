"""Shared domain types and the 2D parallel-beam projection operator.

Images are plain ``numpy`` arrays of shape ``(height, width)``; row ``i`` sits
at ``y = i - (height - 1) / 2`` and column ``j`` at ``x = j - (width - 1) / 2``
in pixel units. A ray at angle ``theta`` and detector offset ``s`` is the line
``s * (cos, sin) + t * (-sin, cos)``.

The forward operator samples each ray every half pixel and bilinearly
interpolates the image at each sample. It is stored as a sparse matrix, so
back projection is its exact transpose.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

SAMPLE_STEP = 0.5


class TomoPriorError(Exception):
    """Base class for all package errors."""


class ConfigError(TomoPriorError, ValueError):
    """Invalid parameters, shapes or geometry."""


class BoundsError(ConfigError, IndexError):
    """Region outside the image."""


class SolverError(TomoPriorError, RuntimeError):
    """An iterative solver failed (divergence, non-convergence, singular system)."""


class FormatError(TomoPriorError, ValueError):
    """Malformed serialized artifact."""


@dataclass(frozen=True)
class Geometry:
    """Parallel-beam acquisition: view angles and a flat detector."""

    angles: tuple[float, ...]
    num_bins: int
    bin_spacing: float = 1.0

    def __post_init__(self):
        angles = tuple(float(a) for a in self.angles)
        object.__setattr__(self, "angles", angles)
        if not angles:
            raise ConfigError("geometry needs at least one view")
        if any(not math.isfinite(a) or a < 0.0 or a >= math.pi for a in angles):
            raise ConfigError("angles must lie in [0, pi)")
        if any(b <= a for a, b in zip(angles, angles[1:])):
            raise ConfigError("angles must be strictly increasing")
        if int(self.num_bins) < 1:
            raise ConfigError("num_bins must be positive")
        object.__setattr__(self, "num_bins", int(self.num_bins))
        if not self.bin_spacing > 0:
            raise ConfigError("bin_spacing must be positive")
        object.__setattr__(self, "bin_spacing", float(self.bin_spacing))

    @property
    def num_views(self) -> int:
        return len(self.angles)

    @classmethod
    def equispaced(cls, num_views: int, width: int, height: int | None = None,
                   bin_spacing: float = 1.0) -> "Geometry":
        """Equispaced views over [0, pi) with a detector covering the image diagonal."""
        if num_views < 1:
            raise ConfigError("num_views must be positive")
        height = width if height is None else height
        angles = np.arange(num_views) * (math.pi / num_views)
        return cls(tuple(angles), min_bins(width, height, bin_spacing), bin_spacing)

    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.num_bins) - (self.num_bins - 1) / 2.0) * self.bin_spacing

    def covers(self, width: int, height: int) -> bool:
        return self.num_bins * self.bin_spacing >= math.hypot(width, height) - 1e-9


def min_bins(width: int, height: int, bin_spacing: float = 1.0) -> int:
    """Smallest odd bin count whose detector spans the image diagonal."""
    n = math.ceil(math.hypot(width, height) / bin_spacing - 1e-9)
    return n if n % 2 else n + 1


@dataclass(frozen=True)
class Sinogram:
    geometry: Geometry
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        expected = (self.geometry.num_views, self.geometry.num_bins)
        if data.shape != expected:
            raise ConfigError(f"sinogram data shape {data.shape} != {expected}")
        object.__setattr__(self, "data", data)


@dataclass(frozen=True)
class RoI:
    """Rectangle with inclusive pixel bounds; x indexes columns, y rows."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0 or self.x1 < self.x0 or self.y1 < self.y0:
            raise BoundsError(f"malformed roi {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1

    def check(self, width: int, height: int) -> None:
        if self.x1 >= width or self.y1 >= height:
            raise BoundsError(f"{self} outside a {width}x{height} image")

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y0, self.y1 + 1), slice(self.x0, self.x1 + 1)

    def mask(self, width: int, height: int) -> np.ndarray:
        self.check(width, height)
        m = np.zeros((height, width), dtype=bool)
        m[self.slices()] = True
        return m

    @classmethod
    def full(cls, width: int, height: int) -> "RoI":
        return cls(0, 0, width - 1, height - 1)


def as_image(img, name: str = "image") -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ConfigError(f"{name} must be a non-empty 2D array, got shape {arr.shape}")
    return arr


def roi_extract(img, roi: RoI) -> np.ndarray:
    img = as_image(img)
    roi.check(img.shape[1], img.shape[0])
    return img[roi.slices()].copy()


class Projector:
    """Linear map between images of a fixed shape and sinograms.

    Wraps a sparse system matrix with rows ordered (view, bin) and columns
    ordered row-major over pixels.
    """

    def __init__(self, matrix, image_shape: tuple[int, int], sino_shape: tuple[int, int]):
        self.matrix = sp.csr_matrix(matrix, dtype=np.float64)
        self.image_shape = tuple(image_shape)
        self.sino_shape = tuple(sino_shape)
        if self.matrix.shape != (sino_shape[0] * sino_shape[1],
                                 image_shape[0] * image_shape[1]):
            raise ConfigError("matrix shape inconsistent with image/sinogram shapes")
        self._rmatrix = self.matrix.T.tocsr()

    @classmethod
    def from_matrix(cls, matrix) -> "Projector":
        """Treat an arbitrary matrix as a single-view projector on a 1 x n image."""
        m = sp.csr_matrix(matrix, dtype=np.float64)
        return cls(m, (1, m.shape[1]), (1, m.shape[0]))

    def scaled(self, factor: float) -> "Projector":
        return Projector(self.matrix * factor, self.image_shape, self.sino_shape)

    def forward(self, img: np.ndarray) -> np.ndarray:
        img = np.asarray(img, dtype=np.float64)
        if img.shape != self.image_shape:
            raise ConfigError(f"image shape {img.shape} != {self.image_shape}")
        return (self.matrix @ img.ravel()).reshape(self.sino_shape)

    def adjoint(self, sino: np.ndarray) -> np.ndarray:
        sino = np.asarray(sino, dtype=np.float64)
        if sino.shape != self.sino_shape:
            raise ConfigError(f"sinogram shape {sino.shape} != {self.sino_shape}")
        return (self._rmatrix @ sino.ravel()).reshape(self.image_shape)

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel().reshape(self.sino_shape)

    def col_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel().reshape(self.image_shape)


def _view_matrix(theta: float, geom: Geometry, width: int, height: int) -> sp.csr_matrix:
    s = geom.bin_centers()
    reach = math.hypot(width, height) / 2.0 + 1.0
    k = math.ceil(reach / SAMPLE_STEP)
    t = np.arange(-k, k + 1) * SAMPLE_STEP
    c, sn = math.cos(theta), math.sin(theta)
    # fractional (column, row) coordinates of every sample, shape (bins, samples)
    col = s[:, None] * c - t[None, :] * sn + (width - 1) / 2.0
    row = s[:, None] * sn + t[None, :] * c + (height - 1) / 2.0
    c0 = np.floor(col)
    r0 = np.floor(row)
    fc = col - c0
    fr = row - r0
    c0 = c0.astype(np.int64)
    r0 = r0.astype(np.int64)
    ray = np.broadcast_to(np.arange(geom.num_bins)[:, None], col.shape)

    rows, cols, vals = [], [], []
    for dr, dc, w in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                      (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        rr = r0 + dr
        cc = c0 + dc
        ok = (rr >= 0) & (rr < height) & (cc >= 0) & (cc < width) & (w > 0)
        rows.append(ray[ok])
        cols.append(rr[ok] * width + cc[ok])
        vals.append(w[ok] * SAMPLE_STEP)
    m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(geom.num_bins, width * height))
    return m.tocsr()


@lru_cache(maxsize=32)
def get_projector(geom: Geometry, width: int, height: int) -> Projector:
    """Build (and cache) the system matrix for ``geom`` on a ``height x width`` grid."""
    if width < 1 or height < 1:
        raise ConfigError("image dimensions must be positive")
    if not geom.covers(width, height):
        raise ConfigError(
            f"detector of {geom.num_bins} bins x {geom.bin_spacing} does not cover "
            f"a {width}x{height} image (diagonal {math.hypot(width, height):.2f})")
    blocks = [_view_matrix(a, geom, width, height) for a in geom.angles]
    return Projector(sp.vstack(blocks, format="csr"), (height, width),
                     (geom.num_views, geom.num_bins))


def forward_project(img, geom: Geometry) -> Sinogram:
    img = as_image(img)
    proj = get_projector(geom, img.shape[1], img.shape[0])
    return Sinogram(geom, proj.forward(img))


def back_project(sino: Sinogram, width: int, height: int) -> np.ndarray:
    proj = get_projector(sino.geometry, width, height)
    return proj.adjoint(sino.data)
