import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radarbev.errors import EmptyPointCloud, NoResults
from radarbev.metrics import (
    MetricResult, cdf_report, chamfer, directed_mean_nn, directed_mean_nn_brute,
    empirical_cdf, evaluate_pair, modified_hausdorff,
)


def test_identical_clouds_zero(rng):
    a = rng.random((20, 2))
    assert chamfer(a, a) == 0.0
    assert modified_hausdorff(a, a) == 0.0


def test_hand_examples():
    a = [[0.0, 0.0]]
    b = [[3.0, 4.0]]
    assert chamfer(a, b) == pytest.approx(5.0)
    assert chamfer(a, b, reduction="sum") == pytest.approx(10.0)
    # A = {(0,0)}, B = {(0,0), (2,0)}: d(A,B)=0, d(B,A)=1
    b = [[0.0, 0.0], [2.0, 0.0]]
    assert chamfer(a, b) == pytest.approx(0.5)
    assert modified_hausdorff(a, b) == pytest.approx(1.0)
    assert modified_hausdorff(a, b, reduction="mean") == pytest.approx(0.5)


def test_empty_cloud_raises():
    with pytest.raises(EmptyPointCloud):
        chamfer(np.zeros((0, 2)), [[1.0, 1.0]])
    with pytest.raises(EmptyPointCloud):
        evaluate_pair([[1.0, 1.0]], np.zeros((0, 2)))


def test_tree_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        a = rng.normal(size=(rng.integers(1, 40), 2)) * rng.uniform(0.1, 5)
        b = rng.normal(size=(rng.integers(1, 40), 2)) * rng.uniform(0.1, 5) + rng.normal(size=2)
        assert directed_mean_nn(a, b) == pytest.approx(directed_mean_nn_brute(a, b), rel=1e-9, abs=1e-12)
        r = evaluate_pair(a, b)
        assert r.cd == pytest.approx(chamfer(a, b, brute=True), rel=1e-9, abs=1e-12)
        assert r.mhd == pytest.approx(modified_hausdorff(a, b, brute=True), rel=1e-9, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_symmetry_and_invariances(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(15, 2)), rng.normal(size=(9, 2))
    cd, mhd = chamfer(a, b), modified_hausdorff(a, b)
    assert chamfer(b, a) == pytest.approx(cd, rel=1e-12)
    assert modified_hausdorff(b, a) == pytest.approx(mhd, rel=1e-12)
    ang = rng.uniform(0, 2 * np.pi)
    rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    shift = rng.normal(size=2) * 3
    assert chamfer(a @ rot.T + shift, b @ rot.T + shift) == pytest.approx(cd, rel=1e-9)
    assert chamfer(2.5 * a, 2.5 * b) == pytest.approx(2.5 * cd, rel=1e-9)
    # permutation and duplication leave the directed means unchanged
    assert chamfer(a[::-1], np.concatenate([b, b])) == pytest.approx(cd, rel=1e-12)
    assert mhd >= cd - 1e-12


def test_empirical_cdf():
    x, y = empirical_cdf([3.0, 1.0, 2.0])
    assert list(x) == [1.0, 2.0, 3.0]
    assert list(y) == pytest.approx([1 / 3, 2 / 3, 1.0])


def test_cdf_report(tmp_path):
    with pytest.raises(NoResults):
        cdf_report([], tmp_path)
    res = [MetricResult(0.1 * i, 0.2 * i, 10, 12, f"{i:05d}") for i in range(1, 6)]
    summary = cdf_report(res, tmp_path, paper_refs=True)
    assert summary["mean_cd_m"] == pytest.approx(0.3)
    rows = (tmp_path / "metrics.csv").read_text().splitlines()
    assert rows[0] == "frame_id,cd_m,mhd_m,n_pred,n_gt"
    assert rows[-1].startswith("mean,0.300000,0.600000")
    assert len((tmp_path / "cdf.csv").read_text().splitlines()) == 11
    svg = (tmp_path / "cd_cdf.svg").read_text()
    assert svg.startswith("<svg") and "published reference" in svg and "error [m]" in svg
    assert "published_reference_not_reproduced" in json.loads((tmp_path / "summary.json").read_text())
    cdf_report(res, tmp_path / "plain")
    assert "published reference" not in (tmp_path / "plain" / "cd_cdf.svg").read_text()
