import time

import numpy as np
import pytest

from radarbev import scenesim as S
from radarbev.bevgrid import bev_to_points
from radarbev.iqproc import PolarBev
from radarbev.metrics import chamfer


def test_scene_determinism():
    assert S.generate_scene(11) == S.generate_scene(11)
    assert S.generate_scene(11) != S.generate_scene(12)


def test_walls_inside_extents_and_gap_widths():
    for seed in range(1000):
        spec = S.generate_scene(seed)
        xmin, xmax, ymin, ymax = spec.extents
        w = np.array(spec.walls)
        assert np.all((w[:, [0, 2]] >= xmin - 1e-9) & (w[:, [0, 2]] <= xmax + 1e-9))
        assert np.all((w[:, [1, 3]] >= ymin - 1e-9) & (w[:, [1, 3]] <= ymax + 1e-9))
        assert 1 <= len(spec.gaps) <= 2 and spec.n_obstacles <= 4
        for g in spec.gaps:
            assert 0.7 - 1e-9 <= np.hypot(g[2] - g[0], g[3] - g[1]) <= 1.2 + 1e-9


def test_gaps_lie_on_original_walls():
    spec = S.generate_scene(3)
    for x0, y0, x1, y1 in spec.gaps:
        # the gap endpoints each touch a remaining wall piece
        ends = {(round(a, 9), round(b, 9)) for s in spec.walls for a, b in (s[:2], s[2:])}
        assert (round(x0, 9), round(y0, 9)) in ends and (round(x1, 9), round(y1, 9)) in ends


def _scene(walls):
    return S.SceneSpec(0, (-10, 10, -10, 10), tuple(walls), (), ())


def test_empty_scene_gives_zero_bev():
    bev = S.lidar_bev(_scene([]))
    assert not bev.values.any()


def test_perpendicular_wall_row():
    geom = S.Geometry(128, 64, 0.04, np.pi)
    bev = S.lidar_bev(_scene([(-3.0, 2.0, 3.0, 2.0)]), geom)
    for col in (31, 32):
        rows = np.nonzero(bev.values[:, col])[0]
        assert len(rows) == 1 and rows[0] in (49, 50)


def test_occlusion():
    geom = S.Geometry(128, 64, 0.04, np.pi)
    near = S.lidar_bev(_scene([(-1.0, 2.0, 1.0, 2.0)]), geom)
    both = S.lidar_bev(_scene([(-1.0, 2.0, 1.0, 2.0), (-0.5, 4.0, 0.5, 4.0)]), geom)
    assert np.array_equal(near.values, both.values)


def test_ray_hits_direct():
    r = S.ray_hits(np.array([[-1.0, 3.0, 1.0, 3.0]]), np.array([0.0, np.pi / 4, 1.2]))
    assert r[0] == pytest.approx(3.0)
    assert np.isinf(r[2])
    assert S.ray_hits(np.array([[-5.0, 3.0, 5.0, 3.0]]), np.array([np.pi / 4]))[0] == pytest.approx(3 * np.sqrt(2))


def test_degrade_off_is_identity(rng):
    gt = S.lidar_bev(S.generate_scene(5))
    out = S.radar_degrade(gt, S.DegradationConfig.off(), seed=1, threshold=0.05)
    assert np.array_equal(out.values, gt.values)


def test_single_point_profile_is_psf():
    geom = S.Geometry(16, 64, 0.16, np.pi)
    v = np.zeros((16, 64))
    v[5, 32] = 1.0
    cfg = S.DegradationConfig(0.25, 0.0, None, 0.0, 0.0, 0.0)
    out = S.radar_degrade(PolarBev(v, geom.range_res, geom.fov), cfg, 0, threshold=0.0)
    bw = np.pi / 64
    # direct sampling of the beam pattern at each column offset
    expect = np.array([np.sinc((c - 32) * bw / 0.25) ** 2 for c in range(64)])
    assert np.allclose(out.values[5], expect / expect.max(), atol=1e-9)
    assert not np.delete(out.values, 5, axis=0).any()


def test_degrade_determinism():
    gt = S.lidar_bev(S.generate_scene(9))
    a = S.radar_degrade(gt, seed=4)
    assert np.array_equal(a.values, S.radar_degrade(gt, seed=4).values)
    assert not np.array_equal(a.values, S.radar_degrade(gt, seed=5).values)


def test_degradation_lossy_and_learnable():
    geom = S.Geometry()
    for i in range(40):
        radar, gt = S.make_pair(0, i, geom, S.DegradationConfig())
        assert chamfer(bev_to_points(radar), bev_to_points(gt)) > 0
        cols_gt = gt.values.max(axis=0) > 0
        kept = (radar.values.max(axis=0) > 0) & cols_gt
        assert kept.sum() >= 0.5 * cols_gt.sum()


def test_config_validation():
    with pytest.raises(ValueError):
        S.DegradationConfig(speckle_scale=1.5)
    with pytest.raises(ValueError):
        S.DegradationConfig(dropout_prob=1.0)
    with pytest.raises(ValueError):
        S.Geometry.for_size(60)
    assert S.Geometry.for_size(256) == S.Geometry(256, 512, 0.04, float(np.pi))


def test_dataset_round_trip(tmp_path):
    man = S.write_dataset(tmp_path / "d", 6, 64, seed=3)
    loaded, radar, gt, ids, geom = S.load_dataset(tmp_path / "d")
    assert ids == [f"{i:05d}" for i in range(6)] and radar.shape == (6, 64, 64)
    assert loaded["entries"] == man.entries
    r0, g0 = S.make_pair(3, 0, geom, S.DegradationConfig())
    assert np.array_equal(gt[0], g0.values.astype(np.float32))
    assert np.allclose(radar[0], r0.values, atol=1e-7)


@pytest.mark.slow
def test_dataset_generation_speed(tmp_path):
    t0 = time.perf_counter()
    S.write_dataset(tmp_path / "big", 2000, 64, seed=0)
    assert time.perf_counter() - t0 < 60
