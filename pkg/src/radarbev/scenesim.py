"""Procedural indoor scenes, ray-cast LiDAR BEVs and a simple radar forward model.

Used to build paired (radar-like, LiDAR-like) training data. The sensor is
at the origin looking along +y; walls are 2-D line segments.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import convolve1d

from radarbev import formats
from radarbev.bevgrid import bin_centers
from radarbev.errors import RadarBevError
from radarbev.iqproc import PolarBev, light_threshold

GAP_MIN, GAP_MAX = 0.7, 1.2


@dataclass(frozen=True)
class Geometry:
    n_range: int = 64
    n_azimuth: int = 64
    range_res: float = 0.16
    fov: float = float(np.pi)

    @property
    def max_range(self) -> float:
        return self.n_range * self.range_res

    @property
    def bin_width(self) -> float:
        return self.fov / self.n_azimuth

    @classmethod
    def for_size(cls, size: int) -> "Geometry":
        """Desk preset for 64, full resolution (256 x 512, 4 cm) for 256.

        Other sizes keep the 10.24 m range span with ``size`` range bins and
        ``size`` azimuth bins.
        """
        if size == 256:
            return cls(256, 512, 0.04, float(np.pi))
        if size < 8 or size % 8:
            raise RadarBevError(f"size must be a positive multiple of 8, got {size}")
        return cls(size, size, 10.24 / size, float(np.pi))


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    extents: tuple  # (xmin, xmax, ymin, ymax)
    walls: tuple  # ((x0, y0, x1, y1), ...) after doorway cuts
    gaps: tuple  # doorway openings as segments lying on a wall
    obstacles: tuple  # convex polygons, each a tuple of (x, y) vertices
    sensor: tuple = (0.0, 0.0)

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    def segments(self) -> np.ndarray:
        segs = list(self.walls)
        for poly in self.obstacles:
            for i in range(len(poly)):
                (x0, y0), (x1, y1) = poly[i], poly[(i + 1) % len(poly)]
                segs.append((x0, y0, x1, y1))
        return np.array(segs, dtype=np.float64).reshape(-1, 4)


def _cut_gap(seg, width, rng):
    x0, y0, x1, y1 = seg
    length = np.hypot(x1 - x0, y1 - y0)
    start = rng.uniform(0.3, length - 0.3 - width)
    ux, uy = (x1 - x0) / length, (y1 - y0) / length
    a = (x0 + ux * start, y0 + uy * start)
    b = (x0 + ux * (start + width), y0 + uy * (start + width))
    return [(x0, y0, *a), (*b, x1, y1)], (*a, *b)


def generate_scene(seed: int) -> SceneSpec:
    """Rectangular room, 1-3 internal walls, 1-2 doorways, 0-4 box obstacles."""
    rng = np.random.default_rng(seed)
    width = rng.uniform(4.0, 9.0)
    xmin = -rng.uniform(0.25, 0.75) * width
    xmax = xmin + width
    ymin = -rng.uniform(0.3, 1.5)
    ymax = rng.uniform(3.0, 9.0)

    walls = [
        (xmin, ymax, xmax, ymax),
        (xmin, ymin, xmin, ymax),
        (xmax, ymin, xmax, ymax),
        (xmin, ymin, xmax, ymin),
    ]
    for _ in range(rng.integers(1, 4)):
        if rng.random() < 0.5:
            y = rng.uniform(1.2, ymax - 0.6)
            length = rng.uniform(1.5, 0.8 * width)
            x0 = xmin if rng.random() < 0.5 else xmax - length
            walls.append((x0, y, x0 + length, y))
        else:
            x = rng.uniform(xmin + 0.6, xmax - 0.6)
            if abs(x) < 0.6:
                x = 0.6 * np.sign(x) if x != 0 else 0.6
            length = rng.uniform(1.5, 0.8 * (ymax - max(ymin, 0.5)))
            y0 = ymax - length if rng.random() < 0.6 else max(ymin, 0.5)
            walls.append((x, y0, x, y0 + length))

    gaps = []
    for _ in range(rng.integers(1, 3)):
        w = rng.uniform(GAP_MIN, GAP_MAX)
        # doorways go on visible walls (not the one behind the sensor) long enough to host them
        cand = [i for i, s in enumerate(walls)
                if np.hypot(s[2] - s[0], s[3] - s[1]) > w + 0.8 and not (s[1] == ymin and s[3] == ymin)]
        if not cand:
            break
        i = cand[rng.integers(len(cand))]
        pieces, gap = _cut_gap(walls[i], w, rng)
        walls[i:i + 1] = pieces
        gaps.append(gap)

    obstacles = []
    for _ in range(rng.integers(0, 5)):
        sx, sy = rng.uniform(0.3, 0.9, size=2)
        cx = rng.uniform(xmin + sx, xmax - sx)
        cy = rng.uniform(max(1.0, ymin + sy), ymax - sy)
        if np.hypot(cx, cy) < 1.2:
            continue
        ang = rng.uniform(0, np.pi / 2)
        c, s = np.cos(ang), np.sin(ang)
        corners = [(-sx / 2, -sy / 2), (sx / 2, -sy / 2), (sx / 2, sy / 2), (-sx / 2, sy / 2)]
        poly = [(cx + c * u - s * v, cy + s * u + c * v) for u, v in corners]
        poly = [(min(max(x, xmin), xmax), min(max(y, ymin), ymax)) for x, y in poly]
        obstacles.append(tuple(poly))

    rnd = lambda seq: tuple(tuple(float(v) for v in item) for item in seq)  # noqa: E731
    return SceneSpec(
        seed=int(seed),
        extents=(float(xmin), float(xmax), float(ymin), float(ymax)),
        walls=rnd(walls),
        gaps=rnd(gaps),
        obstacles=tuple(rnd(p) for p in obstacles),
    )


def ray_hits(segments: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """First-hit range along each ray from the origin (``inf`` on a miss)."""
    d = np.stack([np.sin(theta), np.cos(theta)], axis=1)[:, None, :]  # R,1,2
    p0 = segments[None, :, :2]
    e = segments[None, :, 2:] - segments[None, :, :2]
    # solve s*d = p0 + u*e for s >= 0, u in [0, 1]
    den = d[..., 0] * e[..., 1] - d[..., 1] * e[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (p0[..., 0] * e[..., 1] - p0[..., 1] * e[..., 0]) / den
        u = (p0[..., 0] * d[..., 1] - p0[..., 1] * d[..., 0]) / den
    ok = (np.abs(den) > 1e-12) & (s > 1e-9) & (u >= 0.0) & (u <= 1.0)
    return np.where(ok, s, np.inf).min(axis=1) if segments.size else np.full(len(theta), np.inf)


def lidar_bev(spec: SceneSpec, geom: Geometry = Geometry()) -> PolarBev:
    """One ray per azimuth bin; the first hit marks its range bin with 1.0."""
    values = np.zeros((geom.n_range, geom.n_azimuth))
    segs = spec.segments()
    if len(segs):
        _, theta = bin_centers(geom.n_range, geom.n_azimuth, geom.range_res, geom.fov)
        rho = ray_hits(segs, theta)
        row = np.floor(rho / geom.range_res)
        ok = np.isfinite(rho) & (row < geom.n_range)
        values[row[ok].astype(int), np.nonzero(ok)[0]] = 1.0
    return PolarBev(values, geom.range_res, geom.fov)


@dataclass(frozen=True)
class DegradationConfig:
    """Radar forward-model knobs.

    ``azimuth_psf_width`` is the offset of the first null of the sinc^2 beam
    (radians; 0 disables blurring). ``sidelobe_gain_db`` is an amplitude gain
    in dB (``None`` disables replicas). ``speckle_scale`` in [0, 1] mixes
    unit-mean Rayleigh speckle into a multiplicative factor.
    ``noise_floor`` is the mean of an additive Rayleigh noise floor relative
    to a unit-amplitude return.
    """

    azimuth_psf_width: float = 0.25
    speckle_scale: float = 0.5
    sidelobe_gain_db: float | None = -12.0
    dropout_prob: float = 0.05
    ghost_prob: float = 0.3
    noise_floor: float = 0.03

    def __post_init__(self):
        if self.azimuth_psf_width < 0 or not 0 <= self.speckle_scale <= 1:
            raise RadarBevError("psf width must be >= 0 and speckle_scale in [0, 1]")
        if not (0 <= self.dropout_prob < 1 and 0 <= self.ghost_prob <= 1):
            raise RadarBevError("dropout_prob must lie in [0, 1) and ghost_prob in [0, 1]")
        if self.noise_floor < 0:
            raise RadarBevError("noise_floor must be >= 0")

    @classmethod
    def off(cls) -> "DegradationConfig":
        return cls(0.0, 0.0, None, 0.0, 0.0, 0.0)


def psf_kernel(psf_width: float, bin_width: float, n_azimuth: int) -> np.ndarray:
    """Unit-sum sinc^2 kernel sampled at bin offsets ``-(n-1) .. n-1``."""
    if psf_width == 0:
        return np.array([1.0])
    offs = np.arange(-(n_azimuth - 1), n_azimuth) * bin_width
    k = np.sinc(offs / psf_width) ** 2
    return k / k.sum()


def _runs(cols_rows: dict) -> list:
    """Group occupied columns into surfaces: adjacent columns whose hit rows are close."""
    runs, cur = [], []
    for col in sorted(cols_rows):
        if cur and col == cur[-1] + 1 and abs(cols_rows[col] - cols_rows[cur[-1]]) <= 2:
            cur.append(col)
        else:
            if cur:
                runs.append(cur)
            cur = [col]
    if cur:
        runs.append(cur)
    return runs


def radar_degrade(gt: PolarBev, cfg: DegradationConfig = DegradationConfig(), seed: int = 0,
                  threshold: float = 0.05) -> PolarBev:
    """Turn a LiDAR-like BEV into a radar-like one.

    Ghost copies, azimuth beam blur, sidelobe replicas, speckle, noise
    floor, dropout, max renormalisation, then the light threshold.
    """
    rng = np.random.default_rng(seed)
    x = gt.values.copy()
    n_r, n_a = x.shape
    bw = gt.fov / n_a

    if cfg.ghost_prob > 0:
        occupied = {int(c): int(np.argmax(x[:, c])) for c in np.nonzero(x.max(axis=0) > 0)[0]}
        ghosts = np.zeros_like(x)
        for run in _runs(occupied):
            if rng.random() >= cfg.ghost_prob:
                continue
            stretch = rng.uniform(1.3, 1.8)
            gain = rng.uniform(0.3, 0.6)
            for c in run:
                r = int((occupied[c] + 0.5) * stretch)
                if r < n_r:
                    ghosts[r, c] = max(ghosts[r, c], gain * x[occupied[c], c])
        x = x + ghosts

    if cfg.azimuth_psf_width > 0:
        k = psf_kernel(cfg.azimuth_psf_width, bw, n_a)
        x = convolve1d(x, k, axis=1, mode="constant", cval=0.0)
        if cfg.sidelobe_gain_db is not None:
            shift = int(round(cfg.azimuth_psf_width / bw))
            g = 10.0 ** (cfg.sidelobe_gain_db / 20.0)
            rep = np.zeros_like(x)
            if 0 < shift < n_a:
                rep[:, shift:] += x[:, :-shift]
                rep[:, :-shift] += x[:, shift:]
            x = x + g * rep

    if cfg.speckle_scale > 0:
        speckle = rng.rayleigh(scale=np.sqrt(2.0 / np.pi), size=x.shape)  # unit mean
        x = x * ((1.0 - cfg.speckle_scale) + cfg.speckle_scale * speckle)
    if cfg.noise_floor > 0:
        x = x + rng.rayleigh(scale=cfg.noise_floor * np.sqrt(2.0 / np.pi), size=x.shape)
    if cfg.dropout_prob > 0:
        x = np.where(rng.random(x.shape) < cfg.dropout_prob, 0.0, x)

    peak = x.max()
    if peak > 0:
        x = x / peak
    return light_threshold(PolarBev(x, gt.range_res, gt.fov), threshold)


# ---------------------------------------------------------------- datasets


def pair_seeds(seed: int, index: int) -> tuple[int, int]:
    """Independent (scene, degradation) seeds for dataset entry ``index``."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    a, b = ss.generate_state(2, dtype=np.uint32)
    return int(a), int(b)


def make_pair(seed: int, index: int, geom: Geometry, cfg: DegradationConfig,
              threshold: float = 0.05) -> tuple[PolarBev, PolarBev]:
    s_scene, s_deg = pair_seeds(seed, index)
    gt = lidar_bev(generate_scene(s_scene), geom)
    return radar_degrade(gt, cfg, s_deg, threshold), gt


@dataclass
class Manifest:
    seed: int
    n: int
    geometry: dict
    degradation: dict
    threshold: float
    entries: list = field(default_factory=list)
    schema: int = 1


def write_dataset(outdir, n: int, size: int = 64, seed: int = 0,
                  cfg: DegradationConfig = DegradationConfig(), threshold: float = 0.05) -> Manifest:
    """Write ``pairs/NNNNN_{radar,gt}.rsbev`` and ``manifest.json`` under ``outdir``."""
    out = Path(outdir)
    (out / "pairs").mkdir(parents=True, exist_ok=True)
    geom = Geometry.for_size(size)
    man = Manifest(seed, n, asdict(geom), asdict(cfg), threshold)
    for i in range(n):
        radar, gt = make_pair(seed, i, geom, cfg, threshold)
        stem = f"{i:05d}"
        formats.write_bev(radar, out / "pairs" / f"{stem}_radar.rsbev")
        formats.write_bev(gt, out / "pairs" / f"{stem}_gt.rsbev")
        s_scene, s_deg = pair_seeds(seed, i)
        man.entries.append({"id": stem, "scene_seed": s_scene, "degrade_seed": s_deg})
    (out / "manifest.json").write_text(json.dumps(asdict(man), indent=1, sort_keys=True) + "\n")
    return man


def load_dataset(root):
    """Returns ``(manifest_dict, radar_stack, gt_stack, ids, geometry)``."""
    root = Path(root)
    man = json.loads((root / "manifest.json").read_text())
    ids = [e["id"] for e in man["entries"]]
    radar = np.stack([formats.read_bev(root / "pairs" / f"{i}_radar.rsbev").values for i in ids])
    gt = np.stack([formats.read_bev(root / "pairs" / f"{i}_gt.rsbev").values for i in ids])
    return man, radar, gt, ids, Geometry(**man["geometry"])
