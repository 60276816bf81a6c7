"""Raw I/Q frames to lightly thresholded polar range-azimuth BEV heatmaps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from radarbev.errors import BadAzimuthSize, BadFraction, BadShape, NonFiniteInput

DEFAULT_N_RANGE = 256
DEFAULT_N_AZIMUTH = 512
DEFAULT_RANGE_RES = 0.04
DEFAULT_FOV = np.pi
DEFAULT_THRESHOLD = 0.05


@dataclass(frozen=True)
class IqFrame:
    """One radar capture, complex samples indexed ``[chirp, rx, sample]``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise BadShape(f"I/Q data must be 3-D [chirp, rx, sample], got {data.shape}")
        n_chirps, n_rx, n_samples = data.shape
        if n_chirps < 1 or n_rx < 2 or n_samples < 16:
            raise BadShape(
                f"need n_chirps>=1, n_rx>=2, n_samples>=16; got {data.shape}"
            )
        object.__setattr__(self, "data", data.astype(np.complex128, copy=False))

    @property
    def n_chirps(self) -> int:
        return self.data.shape[0]

    @property
    def n_rx(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class PolarBev:
    """Range x azimuth magnitude image with values in [0, 1].

    Row ``i`` covers ranges ``[i, i+1) * range_res``; column ``j`` covers
    azimuths ``-fov/2 + [j, j+1) * fov / n_azimuth`` (sensor at origin,
    boresight along +y).
    """

    values: np.ndarray
    range_res: float = DEFAULT_RANGE_RES
    fov: float = DEFAULT_FOV

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise BadShape(f"BEV values must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteInput("BEV contains NaN/Inf")
        if not (self.range_res > 0):
            raise BadShape(f"range_res must be positive, got {self.range_res}")
        if not (0 < self.fov <= np.pi + 1e-6):  # f32 headers round pi up
            raise BadShape(f"fov must lie in (0, pi], got {self.fov}")
        object.__setattr__(self, "values", v)

    @property
    def n_range(self) -> int:
        return self.values.shape[0]

    @property
    def n_azimuth(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def with_values(self, values: np.ndarray) -> "PolarBev":
        return PolarBev(values, self.range_res, self.fov)


def range_fft(frame: IqFrame, window: bool = True) -> np.ndarray:
    """Coherent chirp average followed by a per-channel range DFT.

    Returns a complex ``[rx, range_bin]`` matrix with ``n_samples`` bins.
    ``window=False`` swaps the Hann taper for a rectangular one.
    """
    data = frame.data
    if not np.all(np.isfinite(data)):
        raise NonFiniteInput("I/Q frame contains NaN/Inf samples")
    avg = data.mean(axis=0)
    if window:
        avg = avg * np.hanning(frame.n_samples)
    return np.fft.fft(avg, axis=-1)


def azimuth_fft(range_spectrum: np.ndarray, n_azimuth: int) -> np.ndarray:
    """Zero-padded DFT across receive channels, FFT-shifted.

    Input is ``[rx, range_bin]``; output is ``[range_bin, azimuth_bin]`` with
    bin 0 at the negative edge of the field of view. Bins are uniform in
    ``sin(theta)`` for half-wavelength element spacing.
    """
    rs = np.asarray(range_spectrum)
    n_rx = rs.shape[0]
    if n_azimuth < n_rx:
        raise BadAzimuthSize(f"n_azimuth={n_azimuth} smaller than n_rx={n_rx}")
    if n_azimuth & (n_azimuth - 1):
        raise BadAzimuthSize(f"n_azimuth={n_azimuth} is not a power of two")
    if not np.all(np.isfinite(rs)):
        raise NonFiniteInput("range spectrum contains NaN/Inf")
    spec = np.fft.fft(rs, n=n_azimuth, axis=0)
    return np.fft.fftshift(spec, axes=0).T


def to_polar_bev(
    az_spectrum: np.ndarray,
    range_res: float = DEFAULT_RANGE_RES,
    fov: float = DEFAULT_FOV,
    n_range: int | None = None,
) -> PolarBev:
    """Magnitude image normalised by its own maximum (all-zero stays zero)."""
    spec = np.asarray(az_spectrum)
    if not np.all(np.isfinite(spec)):
        raise NonFiniteInput("azimuth spectrum contains NaN/Inf")
    if n_range is not None:
        spec = spec[:n_range]
    mag = np.abs(spec).astype(np.float64)
    peak = mag.max() if mag.size else 0.0
    if peak > 0:
        mag = mag / peak
    return PolarBev(mag, range_res, fov)


def light_threshold(bev: PolarBev, fraction: float = DEFAULT_THRESHOLD) -> PolarBev:
    """Zero every cell below ``fraction * max``; everything else is untouched."""
    if not (0.0 <= fraction < 1.0):
        raise BadFraction(f"fraction must lie in [0, 1), got {fraction}")
    if fraction == 0.0:
        return bev
    v = bev.values
    cut = fraction * v.max()
    return bev.with_values(np.where(v < cut, 0.0, v))


def process_frame(
    frame: IqFrame,
    n_range: int = DEFAULT_N_RANGE,
    n_azimuth: int = DEFAULT_N_AZIMUTH,
    range_res: float = DEFAULT_RANGE_RES,
    fov: float = DEFAULT_FOV,
    threshold: float = DEFAULT_THRESHOLD,
) -> PolarBev:
    """Full chain: range FFT, azimuth FFT, normalised magnitude, light threshold."""
    if n_range > frame.n_samples:
        raise BadShape(f"n_range={n_range} exceeds n_samples={frame.n_samples}")
    rs = range_fft(frame)[:, :n_range]
    bev = to_polar_bev(azimuth_fft(rs, n_azimuth), range_res, fov)
    return light_threshold(bev, threshold)
