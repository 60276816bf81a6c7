"""Fixed linear latent codec: 8x8 block DCT truncated to the four lowest frequencies.

A BEV of shape ``(H, W)`` maps to a latent of shape ``(4, H/8, W/8)``.
Channel order is ``(0,0), (0,1), (1,0), (1,1)`` as (vertical, horizontal)
frequency pairs. The codec works on any leading batch dimensions.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from radarbev.errors import BadShape, FormatError, NonFiniteInput

BLOCK = 8
CHANNELS = 4
RETAINED = ((0, 0), (0, 1), (1, 0), (1, 1))
LATENT_MAGIC = b"RSLT"


def dct_matrix(n: int = BLOCK) -> np.ndarray:
    """Orthonormal DCT-II matrix ``D`` (rows are basis vectors): ``X = D @ x``."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    d = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    d[0] /= np.sqrt(2.0)
    return d


_D2 = dct_matrix()[:2]  # low-frequency rows only


def _blocks(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[-2:]
    if h % BLOCK or w % BLOCK or h == 0 or w == 0:
        raise BadShape(f"image dims must be positive multiples of {BLOCK}, got {(h, w)}")
    return x.reshape(*x.shape[:-2], h // BLOCK, BLOCK, w // BLOCK, BLOCK)


def encode_array(x: np.ndarray) -> np.ndarray:
    """``(..., H, W)`` -> ``(..., 4, H/8, W/8)``. Linear."""
    x = np.asarray(x)
    b = _blocks(x)
    # coeff[u, v] = sum_ij D[u, i] x[i, j] D[v, j]
    c = np.einsum("ui,...aibj,vj->...uvab", _D2, b, _D2, optimize=True)
    return c.reshape(*c.shape[:-4], CHANNELS, *c.shape[-2:])


def decode_array(z: np.ndarray) -> np.ndarray:
    """``(..., 4, h, w)`` -> ``(..., 8h, 8w)``, unclamped. Adjoint of :func:`encode_array`."""
    z = np.asarray(z)
    if z.ndim < 3 or z.shape[-3] != CHANNELS:
        raise BadShape(f"latent must have {CHANNELS} channels, got shape {z.shape}")
    h, w = z.shape[-2:]
    c = z.reshape(*z.shape[:-3], 2, 2, h, w)
    x = np.einsum("ui,...uvab,vj->...aibj", _D2, c, _D2, optimize=True)
    return x.reshape(*x.shape[:-4], h * BLOCK, w * BLOCK)


def encode(bev) -> np.ndarray:
    """Encode a :class:`PolarBev` (or a bare 2-D array) into a ``(4, H/8, W/8)`` latent."""
    values = getattr(bev, "values", bev)
    return encode_array(np.asarray(values, dtype=np.float64))


def decode(z: np.ndarray, range_res: float | None = None, fov: float | None = None):
    """Decode to a clamped ``[0, 1]`` image; returns a PolarBev when geometry is given."""
    from radarbev.iqproc import PolarBev

    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NonFiniteInput("latent contains NaN/Inf")
    img = np.clip(decode_array(z), 0.0, 1.0)
    if range_res is None:
        return img
    return PolarBev(img, range_res, fov if fov is not None else np.pi)


def write_latent(z: np.ndarray, path) -> None:
    z = np.asarray(z)
    if z.ndim != 3:
        raise BadShape(f"latent must be (c, h, w), got {z.shape}")
    c, h, w = z.shape
    blob = LATENT_MAGIC + struct.pack("<3I", c, h, w) + z.astype("<f4").tobytes()
    Path(path).write_bytes(blob)


def read_latent(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:4] != LATENT_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header")
    c, h, w = struct.unpack("<3I", blob[4:16])
    n = c * h * w
    if len(blob) != 16 + 4 * n:
        raise FormatError(f"{path}: expected {n} values")
    return np.frombuffer(blob, dtype="<f4", offset=16).reshape(c, h, w).astype(np.float64)
