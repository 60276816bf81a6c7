"""Polar BEV / point cloud / Cartesian raster conversions.

Project-wide convention: sensor at the origin, boresight along +y,
azimuth measured from +y towards +x. A point cloud is an ``(N, 2)`` float
array of ``(x, y)`` in meters.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from radarbev.errors import BadFraction, BadShape, NonFiniteInput
from radarbev.iqproc import PolarBev


@dataclass(frozen=True)
class CartesianRaster:
    """Top-down raster; row 0 is the far edge, the sensor sits at bottom-center."""

    values: np.ndarray
    cell_size: float


def as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return np.zeros((0, 2))
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise BadShape(f"point cloud must be (N, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise NonFiniteInput("point cloud has non-finite coordinates")
    return pts


def bin_centers(n_range: int, n_azimuth: int, range_res: float, fov: float):
    """Range (m) and azimuth (rad) of every bin center."""
    rho = (np.arange(n_range) + 0.5) * range_res
    theta = -fov / 2 + (np.arange(n_azimuth) + 0.5) * fov / n_azimuth
    return rho, theta


def polar_to_xy(rho, theta) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    return np.stack([rho * np.sin(theta), rho * np.cos(theta)], axis=-1)


def cells_to_points(rows, cols, bev: PolarBev) -> np.ndarray:
    rho, theta = bin_centers(bev.n_range, bev.n_azimuth, bev.range_res, bev.fov)
    return polar_to_xy(rho[rows], theta[cols]).reshape(-1, 2)


def bev_to_points(bev: PolarBev, binarize_at: float = 0.5) -> np.ndarray:
    """Cells with value >= ``binarize_at`` become points at their bin centers."""
    if not (0.0 < binarize_at < 1.0):
        raise BadFraction(f"binarize_at must lie in (0, 1), got {binarize_at}")
    rows, cols = np.nonzero(bev.values >= binarize_at)
    return cells_to_points(rows, cols, bev)


def points_to_bev(
    points, n_range: int, n_azimuth: int, range_res: float, fov: float
) -> PolarBev:
    """Paint points into the polar bins that contain them (value 1.0).

    Points outside the range/azimuth span are dropped.
    """
    pts = as_points(points)
    values = np.zeros((n_range, n_azimuth))
    if len(pts):
        rho = np.hypot(pts[:, 0], pts[:, 1])
        theta = np.arctan2(pts[:, 0], pts[:, 1])
        r = np.floor(rho / range_res).astype(int)
        a = np.floor((theta + fov / 2) / (fov / n_azimuth)).astype(int)
        ok = (r >= 0) & (r < n_range) & (a >= 0) & (a < n_azimuth)
        values[r[ok], a[ok]] = 1.0
    return PolarBev(values, range_res, fov)


def points_to_cartesian(points, cell_size: float, width: int, height: int) -> CartesianRaster:
    """Nearest-cell splat of points into a ``height x width`` raster."""
    if not (cell_size > 0):
        raise BadShape(f"cell_size must be positive, got {cell_size}")
    pts = as_points(points)
    raster = np.zeros((height, width))
    if len(pts):
        col = np.floor(pts[:, 0] / cell_size + width / 2).astype(int)
        row_up = np.floor(pts[:, 1] / cell_size).astype(int)
        ok = (col >= 0) & (col < width) & (row_up >= 0) & (row_up < height)
        raster[height - 1 - row_up[ok], col[ok]] = 1.0
    return CartesianRaster(raster, cell_size)


def bev_to_cartesian(bev: PolarBev, cell_size: float, width: int, height: int) -> CartesianRaster:
    """Resample a polar BEV onto a Cartesian grid (nearest polar bin per cell)."""
    xs = (np.arange(width) - width / 2 + 0.5) * cell_size
    ys = (np.arange(height)[::-1] + 0.5) * cell_size
    gx, gy = np.meshgrid(xs, ys)
    rho = np.hypot(gx, gy)
    theta = np.arctan2(gx, gy)
    r = np.floor(rho / bev.range_res).astype(int)
    a = np.floor((theta + bev.fov / 2) / (bev.fov / bev.n_azimuth)).astype(int)
    ok = (r < bev.n_range) & (a >= 0) & (a < bev.n_azimuth)
    out = np.zeros((height, width))
    out[ok] = bev.values[r[ok], a[ok]]
    return CartesianRaster(out, cell_size)


def write_points_csv(points, path) -> None:
    pts = as_points(points)
    lines = ["x_m,y_m"] + [f"{x:.6f},{y:.6f}" for x, y in pts]
    Path(path).write_text("\n".join(lines) + "\n")


def read_points_csv(path) -> np.ndarray:
    rows = Path(path).read_text().strip().splitlines()[1:]
    if not rows:
        return np.zeros((0, 2))
    return as_points([[float(v) for v in r.split(",")] for r in rows])


def write_points_ply(points, path) -> None:
    pts = as_points(points)
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(pts)}",
        "property float x",
        "property float y",
        "end_header",
    ]
    body = [f"{x:.6f} {y:.6f}" for x, y in pts]
    Path(path).write_text("\n".join(header + body) + "\n")
