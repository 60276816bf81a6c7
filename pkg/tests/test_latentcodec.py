import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radarbev.errors import BadShape, FormatError
from radarbev.iqproc import PolarBev
from radarbev.latentcodec import (
    decode, decode_array, dct_matrix, encode, encode_array, read_latent, write_latent,
)


def naive_encode(x):
    """Textbook 2-D DCT-II per 8x8 block, keeping the four low-frequency terms."""
    h, w = x.shape
    out = np.zeros((4, h // 8, w // 8))
    for a in range(h // 8):
        for b in range(w // 8):
            blk = x[8 * a : 8 * a + 8, 8 * b : 8 * b + 8]
            for ch, (u, v) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
                cu = np.sqrt(1 / 8) if u == 0 else np.sqrt(2 / 8)
                cv = np.sqrt(1 / 8) if v == 0 else np.sqrt(2 / 8)
                s = 0.0
                for i in range(8):
                    for j in range(8):
                        s += blk[i, j] * np.cos(np.pi * (2 * i + 1) * u / 16) * np.cos(np.pi * (2 * j + 1) * v / 16)
                out[ch, a, b] = cu * cv * s
    return out


def test_dct_orthonormal():
    d = dct_matrix()
    assert np.allclose(d @ d.T, np.eye(8), atol=1e-14)


def test_matches_naive_dct(rng):
    x = rng.random((16, 24))
    assert np.allclose(encode_array(x), naive_encode(x), atol=1e-12)


def test_shapes_and_constants():
    assert encode_array(np.zeros((256, 512))).shape == (4, 32, 64)
    assert not encode_array(np.zeros((16, 16))).any()
    z = encode_array(np.full((8, 8), 0.7))
    assert z[0, 0, 0] == pytest.approx(8 * 0.7)
    assert np.allclose(z[1:], 0, atol=1e-14)
    with pytest.raises(BadShape):
        encode_array(np.zeros((12, 16)))
    with pytest.raises(BadShape):
        decode_array(np.zeros((3, 2, 2)))


def test_batched_encode_matches_single(rng):
    x = rng.random((3, 16, 16))
    z = encode_array(x)
    for i in range(3):
        assert np.allclose(z[i], encode_array(x[i]))


def test_round_trip_on_representable_latents(rng):
    z = rng.normal(size=(4, 5, 7))
    assert np.allclose(encode_array(decode_array(z)), z, atol=1e-12)


def test_decode_is_least_squares_projection(rng):
    """decode(encode(x)) equals the orthogonal projection onto the low-frequency span."""
    x = rng.random((8, 8))
    d = dct_matrix()
    basis = np.array([np.outer(d[u], d[v]).ravel() for u, v in [(0, 0), (0, 1), (1, 0), (1, 1)]]).T
    coef, *_ = np.linalg.lstsq(basis, x.ravel(), rcond=None)
    assert np.allclose(decode_array(encode_array(x)).ravel(), basis @ coef, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity_and_adjoint(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y = rng.random((16, 16)), rng.random((16, 16))
    assert np.allclose(encode_array(a * x + b * y), a * encode_array(x) + b * encode_array(y), atol=1e-10)
    z = rng.normal(size=(4, 2, 2))
    assert np.sum(encode_array(x) * z) == pytest.approx(np.sum(x * decode_array(z)), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_projection_idempotent_and_contractive(seed):
    x = np.random.default_rng(seed).random((16, 32))
    p = decode_array(encode_array(x))
    assert np.allclose(decode_array(encode_array(p)), p, atol=1e-12)
    assert np.sum(p**2) <= np.sum(x**2) + 1e-12


def test_decode_clamps_and_wraps(rng):
    z = rng.normal(size=(4, 2, 3)) * 5
    img = decode(z)
    assert img.min() >= 0.0 and img.max() <= 1.0
    bev = decode(z, range_res=0.1, fov=2.0)
    assert isinstance(bev, PolarBev) and bev.shape == (16, 24)
    assert np.allclose(encode(PolarBev(np.ones((8, 8)))), encode_array(np.ones((8, 8))))


def test_latent_file(tmp_path, rng):
    z = rng.normal(size=(4, 3, 5)).astype(np.float32)
    write_latent(z, tmp_path / "z.rslat")
    assert np.array_equal(read_latent(tmp_path / "z.rslat"), z.astype(np.float64))
    (tmp_path / "bad.rslat").write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(FormatError):
        read_latent(tmp_path / "bad.rslat")
