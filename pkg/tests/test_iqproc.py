import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import naive_dft
from radarbev.errors import BadAzimuthSize, BadFraction, BadShape, NonFiniteInput
from radarbev.iqproc import (
    IqFrame, PolarBev, azimuth_fft, light_threshold, process_frame, range_fft, to_polar_bev,
)


def random_frame(rng, n_chirps=3, n_rx=4, n_samples=32):
    shape = (n_chirps, n_rx, n_samples)
    return IqFrame(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


def test_zero_frame_gives_zero_spectrum():
    spec = range_fft(IqFrame(np.zeros((2, 4, 64), complex)))
    assert spec.shape == (4, 64)
    assert np.all(spec == 0)


def test_single_tone_peaks_at_its_bin():
    n = 64
    tone = np.exp(2j * np.pi * 8 * np.arange(n) / n)
    frame = IqFrame(np.tile(tone, (1, 2, 1)))
    spec = range_fft(frame, window=False)
    assert np.argmax(np.abs(spec[0])) == 8
    assert np.sum(np.abs(spec[0]) > 1e-9) == 1


def test_range_fft_matches_naive_dft(rng):
    frame = random_frame(rng)
    expected = naive_dft(frame.data.mean(axis=0) * np.hanning(32), axis=-1)
    assert rel_err(range_fft(frame), expected) < 1e-6


def test_azimuth_fft_matches_naive_dft(rng):
    rs = rng.standard_normal((4, 10)) + 1j * rng.standard_normal((4, 10))
    padded = np.zeros((16, 10), complex)
    padded[:4] = rs
    expected = np.fft.fftshift(naive_dft(padded, axis=0), axes=0).T
    assert rel_err(azimuth_fft(rs, 16), expected) < 1e-6


def test_broadside_target_peaks_at_center():
    rs = np.ones((8, 5), complex)
    az = azimuth_fft(rs, 64)
    assert np.all(np.argmax(np.abs(az), axis=1) == 32)


def test_steered_target_peaks_at_sine_bin():
    n_rx, n_az = 8, 256
    theta = np.deg2rad(30.0)
    rs = np.exp(1j * np.pi * np.arange(n_rx) * np.sin(theta))[:, None]
    az = np.abs(azimuth_fft(rs, n_az))[0]
    # evaluate the steering-vector response on the shifted bin grid numerically
    freqs = (np.arange(n_az) - n_az // 2) / n_az
    resp = np.abs(np.exp(1j * np.pi * np.arange(n_rx)[None] * np.sin(theta)
                         - 2j * np.pi * freqs[:, None] * np.arange(n_rx)[None]).sum(1))
    assert np.argmax(az) == np.argmax(resp)
    assert abs(np.argmax(az) - (n_az // 2 + n_az * np.sin(theta) / 2)) <= 1


def test_azimuth_size_checks():
    rs = np.ones((8, 4), complex)
    with pytest.raises(BadAzimuthSize):
        azimuth_fft(rs, 4)
    with pytest.raises(BadAzimuthSize):
        azimuth_fft(rs, 24)


def test_nonfinite_input_rejected():
    data = np.ones((1, 2, 16), complex)
    data[0, 1, 3] = np.nan
    with pytest.raises(NonFiniteInput):
        range_fft(IqFrame(data))


def test_frame_invariants():
    with pytest.raises(BadShape):
        IqFrame(np.ones((1, 1, 16), complex))
    with pytest.raises(BadShape):
        IqFrame(np.ones((1, 2, 8), complex))


def test_polar_bev_zero_and_normalisation(rng):
    assert np.all(to_polar_bev(np.zeros((4, 8))).values == 0)
    spec = rng.standard_normal((6, 8)) + 1j * rng.standard_normal((6, 8))
    bev = to_polar_bev(spec)
    assert bev.values.max() == 1.0
    assert np.argmax(bev.values) == np.argmax(np.abs(spec))


def test_light_threshold_examples():
    bev = PolarBev(np.array([[1.0, 0.04, 0.06]]))
    assert np.array_equal(light_threshold(bev, 0.05).values, [[1.0, 0.0, 0.06]])
    assert light_threshold(bev, 0.0).values is bev.values
    with pytest.raises(BadFraction):
        light_threshold(bev, 1.0)
    with pytest.raises(BadFraction):
        light_threshold(bev, -0.1)


def test_light_threshold_count_matches_scan(rng):
    v = rng.random((20, 30))
    out = light_threshold(PolarBev(v), 0.05).values
    cut = 0.05 * v.max()
    n_below = sum(1 for x in v.ravel() if x < cut)
    assert np.sum((out == 0) & (v != 0)) == n_below


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 7), elements=st.floats(0, 1)), st.floats(0, 0.99))
def test_light_threshold_idempotent(v, frac):
    bev = PolarBev(v)
    once = light_threshold(bev, frac)
    assert np.array_equal(light_threshold(once, frac).values, once.values)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_pipeline_scale_invariant(s, seed):
    frame = random_frame(np.random.default_rng(seed), n_rx=4, n_samples=32)
    a = process_frame(frame, n_range=16, n_azimuth=8).values
    b = process_frame(IqFrame(frame.data * s), n_range=16, n_azimuth=8).values
    assert np.max(np.abs(a - b)) <= 1e-12


def test_pipeline_deterministic(rng):
    frame = random_frame(rng, n_rx=4, n_samples=64)
    a = process_frame(frame, n_range=32, n_azimuth=16)
    b = process_frame(frame, n_range=32, n_azimuth=16)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.shape == (32, 16)
