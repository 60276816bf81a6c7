"""2-D CFAR detectors (CA / SO / GO / OS) on polar BEVs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import correlate

from radarbev.bevgrid import cells_to_points
from radarbev.errors import BadShape, RadarBevError, ShapeMismatch, WindowTooLarge
from radarbev.iqproc import PolarBev

VARIANTS = ("CA", "SO", "GO", "OS")


@dataclass(frozen=True)
class CfarConfig:
    """Square training ring around a square guard region, per side counts.

    ``square_law=True`` squares the cell values before thresholding, i.e. a
    square-law detector on a magnitude image. The offset is always a power
    ratio: the multiplier on the noise estimate is ``10**(offset_db/10)``.
    """

    guard: int = 2
    train: int = 8
    offset_db: float = 5.0
    variant: str = "CA"
    os_rank: float = 0.75
    square_law: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise RadarBevError(f"unknown CFAR variant {self.variant!r}")
        if self.guard < 0 or self.train < 1:
            raise RadarBevError("need guard >= 0 and train >= 1")
        if not math.isfinite(self.offset_db):
            raise RadarBevError("offset_db must be finite")
        if not (0 < self.os_rank <= 1):
            raise RadarBevError("os_rank must lie in (0, 1]")

    @property
    def half_window(self) -> int:
        return self.guard + self.train

    @property
    def n_train(self) -> int:
        return (2 * self.half_window + 1) ** 2 - (2 * self.guard + 1) ** 2

    @property
    def factor(self) -> float:
        return 10.0 ** (self.offset_db / 10.0)

    @classmethod
    def from_dict(cls, d: dict) -> "CfarConfig":
        keys = {"guard", "train", "offset_db", "variant", "os_rank", "square_law"}
        return cls(**{k: v for k, v in d.items() if k in keys})


def _ring_mask(cfg: CfarConfig) -> np.ndarray:
    n = 2 * cfg.half_window + 1
    mask = np.ones((n, n), dtype=bool)
    g0, g1 = cfg.train, cfg.train + 2 * cfg.guard + 1
    mask[g0:g1, g0:g1] = False
    return mask


def _half_ring_masks(cfg: CfarConfig):
    """Leading (nearer range, then left) and trailing halves of the ring."""
    ring = _ring_mask(cfg)
    n = ring.shape[0]
    c = cfg.half_window
    dr, da = np.meshgrid(np.arange(n) - c, np.arange(n) - c, indexing="ij")
    leading = ring & ((dr < 0) | ((dr == 0) & (da < 0)))
    trailing = ring & ((dr > 0) | ((dr == 0) & (da > 0)))
    return leading, trailing


def noise_estimate(x: np.ndarray, cfg: CfarConfig) -> np.ndarray:
    """Noise level for every interior cell (shape shrinks by the window)."""
    # direct sums (no running-sum differences): a zero neighbourhood must give exactly 0
    if cfg.variant == "CA":
        ring = _ring_mask(cfg)
        return correlate(x, ring / ring.sum(), mode="valid", method="direct")

    if cfg.variant in ("SO", "GO"):
        lead, trail = _half_ring_masks(cfg)
        m_lead = correlate(x, lead / lead.sum(), mode="valid", method="direct")
        m_trail = correlate(x, trail / trail.sum(), mode="valid", method="direct")
        return np.minimum(m_lead, m_trail) if cfg.variant == "SO" else np.maximum(m_lead, m_trail)

    # OS: k-th smallest training cell, chunked over rows to bound memory
    h = cfg.half_window
    windows = sliding_window_view(x, (2 * h + 1, 2 * h + 1))
    ring = _ring_mask(cfg).ravel()
    k = max(1, math.ceil(cfg.os_rank * cfg.n_train)) - 1
    out = np.empty(windows.shape[:2])
    step = max(1, 2_000_000 // (windows.shape[1] * cfg.n_train))
    for r0 in range(0, windows.shape[0], step):
        block = windows[r0 : r0 + step].reshape(-1, windows.shape[1], ring.size)[..., ring]
        out[r0 : r0 + step] = np.partition(block, k, axis=-1)[..., k]
    return out


def cfar_detect(bev: PolarBev, cfg: CfarConfig = CfarConfig()) -> np.ndarray:
    """Boolean detection mask with the same shape as ``bev``.

    A cell fires when it exceeds ``noise * 10**(offset_db/10)``. Cells whose
    window overruns the image border are never detected.
    """
    x = bev.values
    h = cfg.half_window
    if 2 * h + 1 > min(x.shape):
        raise WindowTooLarge(
            f"CFAR window {2 * h + 1} does not fit BEV of shape {x.shape}"
        )
    if cfg.square_law:
        x = x * x
    noise = noise_estimate(x, cfg)
    mask = np.zeros(x.shape, dtype=bool)
    interior = x[h : x.shape[0] - h, h : x.shape[1] - h]
    mask[h : x.shape[0] - h, h : x.shape[1] - h] = interior > noise * cfg.factor
    return mask


def mask_to_points(mask: np.ndarray, bev: PolarBev) -> np.ndarray:
    if mask.shape != bev.shape:
        raise ShapeMismatch(f"mask {mask.shape} vs BEV {bev.shape}")
    rows, cols = np.nonzero(mask)
    return cells_to_points(rows, cols, bev)


def ca_cfar_pfa(factor: float, n_train: int) -> float:
    """Closed-form CA-CFAR false-alarm rate for exponential (square-law) noise."""
    if n_train < 1:
        raise BadShape("n_train must be >= 1")
    return (1.0 + factor / n_train) ** (-n_train)
