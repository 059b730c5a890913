"""Orthonormal sparsifying bases: 2D DCT-II and full-depth 2D Haar.

``analyze`` maps an image to coefficients (the transpose of the basis) and
``synthesize`` maps coefficients back. Haar works on square power-of-two
grids; other shapes are zero-padded around the image to the next power of two
and the padding is part of the operator, so coefficient arrays are then larger
than the image.
"""
from __future__ import annotations

import enum

import numpy as np
from scipy.fft import dctn, idctn

from .core import ConfigError, as_image

_SQRT_HALF = np.sqrt(0.5)


class BasisKind(enum.Enum):
    DCT2 = "dct2"
    HAAR2 = "haar2"
    PIXEL = "pixel"


def coeff_shape(basis: BasisKind, width: int, height: int) -> tuple[int, int]:
    if basis is BasisKind.HAAR2:
        n = _next_pow2(max(width, height))
        return n, n
    return height, width


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def _pad_offsets(width: int, height: int) -> tuple[int, int, int]:
    n = _next_pow2(max(width, height))
    return n, (n - height) // 2, (n - width) // 2


def _haar_fwd(a: np.ndarray) -> np.ndarray:
    out = a.copy()
    n = out.shape[0]
    while n > 1:
        h = n // 2
        blk = out[:n, :n]
        ev, od = blk[:, 0::2], blk[:, 1::2]
        blk = np.concatenate([(ev + od) * _SQRT_HALF, (ev - od) * _SQRT_HALF], axis=1)
        ev, od = blk[0::2, :], blk[1::2, :]
        out[:n, :n] = np.concatenate([(ev + od) * _SQRT_HALF, (ev - od) * _SQRT_HALF], axis=0)
        n = h
    return out


def _haar_inv(c: np.ndarray) -> np.ndarray:
    out = c.copy()
    total = out.shape[0]
    n = 2
    while n <= total:
        h = n // 2
        blk = out[:n, :n]
        lo, hi = blk[:h, :], blk[h:, :]
        tmp = np.empty_like(blk)
        tmp[0::2, :] = (lo + hi) * _SQRT_HALF
        tmp[1::2, :] = (lo - hi) * _SQRT_HALF
        lo, hi = tmp[:, :h], tmp[:, h:]
        blk = np.empty_like(tmp)
        blk[:, 0::2] = (lo + hi) * _SQRT_HALF
        blk[:, 1::2] = (lo - hi) * _SQRT_HALF
        out[:n, :n] = blk
        n *= 2
    return out


def analyze(img, basis: BasisKind) -> np.ndarray:
    """Coefficients of ``img`` in ``basis``; preserves the L2 norm."""
    img = as_image(img)
    if basis is BasisKind.DCT2:
        return dctn(img, type=2, norm="ortho")
    if basis is BasisKind.HAAR2:
        height, width = img.shape
        n, oy, ox = _pad_offsets(width, height)
        padded = np.zeros((n, n))
        padded[oy:oy + height, ox:ox + width] = img
        return _haar_fwd(padded)
    if basis is BasisKind.PIXEL:
        return img.copy()
    raise ConfigError(f"unknown basis {basis!r}")


def synthesize(coeffs, basis: BasisKind, width: int, height: int) -> np.ndarray:
    """Image with the given coefficients; inverse of :func:`analyze`."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != coeff_shape(basis, width, height):
        raise ConfigError(f"coefficient shape {coeffs.shape} does not fit "
                          f"{basis.name} on a {width}x{height} image")
    if basis is BasisKind.DCT2:
        return idctn(coeffs, type=2, norm="ortho")
    if basis is BasisKind.HAAR2:
        _, oy, ox = _pad_offsets(width, height)
        return _haar_inv(coeffs)[oy:oy + height, ox:ox + width].copy()
    return coeffs.copy()
