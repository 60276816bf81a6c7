"""Small conditional denoiser with hand-written reverse-mode gradients.

Architecture (inputs ``(B, 8, h, w)``, outputs ``(B, 4, h, w)``):

    stage 1: conv3x3 8->32, SiLU, then per-channel (1 + scale), + shift
             where [scale, shift] = affine(sinusoidal_embedding(t), dim 32)
    stage 2: 2x average pool, conv3x3 32->32, SiLU
    stage 3: nearest 2x upsample, concat stage-1 features (64 ch),
             conv3x3 64->32, SiLU
    head:    conv3x3 32->4, linear

All convolutions use reflection padding. Internally tensors are
channels-last ``(B, H, W, C)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from radarbev.errors import MissingForwardCache, ShapeMismatch

IN_CH = 8
OUT_CH = 4
WIDTH = 32
EMB_DIM = 32
ARCH_VERSION = "mini-unet-v1"

PARAM_SHAPES = {
    "conv1_w": (WIDTH, IN_CH, 3, 3),
    "conv1_b": (WIDTH,),
    "temb_w": (2 * WIDTH, EMB_DIM),
    "temb_b": (2 * WIDTH,),
    "conv2_w": (WIDTH, WIDTH, 3, 3),
    "conv2_b": (WIDTH,),
    "conv3_w": (WIDTH, 2 * WIDTH, 3, 3),
    "conv3_b": (WIDTH,),
    "head_w": (OUT_CH, WIDTH, 3, 3),
    "head_b": (OUT_CH,),
}
PARAM_NAMES = tuple(PARAM_SHAPES)


def architecture_hash() -> str:
    desc = json.dumps({"arch": ARCH_VERSION, "params": [[k, list(v)] for k, v in PARAM_SHAPES.items()]})
    return hashlib.sha256(desc.encode()).hexdigest()


def init_params(rng: np.random.Generator, dtype=np.float64, zero_head: bool = True) -> dict:
    params = {}
    for name, shape in PARAM_SHAPES.items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
        elif name == "temb_w":
            params[name] = (rng.standard_normal(shape) * 0.5 / np.sqrt(EMB_DIM)).astype(dtype)
        elif name == "head_w" and zero_head:
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = shape[1] * 9
            params[name] = (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
    return params


def timestep_embedding(t, dim: int = EMB_DIM) -> np.ndarray:
    """Sinusoidal embedding ``[sin(t f_k), cos(t f_k)]`` with geometric frequencies."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    arg = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


# ------------------------------------------------------------------ layers


def _pad_reflect(x):
    return np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)), mode="reflect")


def _unpad_reflect(gp):
    """Adjoint of one-pixel reflection padding on axes 1 and 2."""
    g = gp[:, 1:-1, 1:-1, :].copy()
    # rows: padded row 0 mirrors row 1, padded row -1 mirrors row -2
    g[:, 1, :, :] += gp[:, 0, 1:-1, :]
    g[:, -2, :, :] += gp[:, -1, 1:-1, :]
    g[:, :, 1, :] += gp[:, 1:-1, 0, :]
    g[:, :, -2, :] += gp[:, 1:-1, -1, :]
    # corners reflect in both axes
    g[:, 1, 1, :] += gp[:, 0, 0, :]
    g[:, 1, -2, :] += gp[:, 0, -1, :]
    g[:, -2, 1, :] += gp[:, -1, 0, :]
    g[:, -2, -2, :] += gp[:, -1, -1, :]
    return g


def _conv_fwd(x, w, b):
    bsz, h, wd, c = x.shape
    cols = sliding_window_view(_pad_reflect(x), (3, 3), axis=(1, 2))  # B,H,W,C,3,3
    cols = cols.reshape(bsz * h * wd, c * 9)
    out = cols @ w.reshape(w.shape[0], -1).T + b
    return out.reshape(bsz, h, wd, -1), cols


def _conv_bwd(dout, cols, w, x_shape):
    bsz, h, wd, c = x_shape
    d2 = dout.reshape(-1, dout.shape[-1])
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(w.shape[0], -1)).reshape(bsz, h, wd, c, 3, 3)
    dxp = np.zeros((bsz, h + 2, wd + 2, c), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i : i + h, j : j + wd, :] += dcols[..., i, j]
    return _unpad_reflect(dxp), dw, db


def _silu(x):
    s = expit(x)
    return x * s, s


def _silu_bwd(dy, x, s):
    return dy * s * (1.0 + x * (1.0 - s))


# ------------------------------------------------------------------ model


def forward(params: dict, x, t):
    """Forward pass. ``x`` is ``(B, 8, h, w)``, ``t`` scalar or ``(B,)``.

    Returns ``(eps_hat, cache)`` with ``eps_hat`` shaped ``(B, 4, h, w)``.
    """
    dtype = params["conv1_w"].dtype
    x = np.asarray(x, dtype=dtype)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != IN_CH:
        raise ShapeMismatch(f"denoiser input must be (B, {IN_CH}, h, w), got {x.shape}")
    bsz, _, h, w = x.shape
    if h < 4 or w < 4 or h % 2 or w % 2:
        raise ShapeMismatch(f"spatial dims must be even and >= 4, got {(h, w)}")
    t = np.broadcast_to(np.asarray(t), (bsz,))

    xin = np.ascontiguousarray(x.transpose(0, 2, 3, 1))
    emb = timestep_embedding(t).astype(dtype)
    ss = emb @ params["temb_w"].T + params["temb_b"]
    scale, shift = ss[:, :WIDTH], ss[:, WIDTH:]

    p1, cols1 = _conv_fwd(xin, params["conv1_w"], params["conv1_b"])
    a1, s1 = _silu(p1)
    f1 = a1 * (1.0 + scale[:, None, None, :]) + shift[:, None, None, :]

    pooled = f1.reshape(bsz, h // 2, 2, w // 2, 2, WIDTH).mean(axis=(2, 4))
    p2, cols2 = _conv_fwd(pooled, params["conv2_w"], params["conv2_b"])
    a2, s2 = _silu(p2)

    up = a2.repeat(2, axis=1).repeat(2, axis=2)
    cat = np.concatenate([up, f1], axis=-1)
    p3, cols3 = _conv_fwd(cat, params["conv3_w"], params["conv3_b"])
    a3, s3 = _silu(p3)

    out, cols4 = _conv_fwd(a3, params["head_w"], params["head_b"])
    cache = dict(
        emb=emb, scale=scale, p1=p1, s1=s1, a1=a1, cols1=cols1, x_shape=xin.shape,
        pooled_shape=pooled.shape, p2=p2, s2=s2, cols2=cols2, cat_shape=cat.shape,
        p3=p3, s3=s3, cols3=cols3, a3_shape=a3.shape, cols4=cols4,
    )
    return out.transpose(0, 3, 1, 2), cache


def backward(params: dict, cache: dict | None, upstream):
    """Reverse-mode gradients of ``sum(upstream * eps_hat)``.

    Returns ``(param_grads, input_grad)``; ``input_grad`` is ``(B, 8, h, w)``.
    """
    if cache is None:
        raise MissingForwardCache("backward called without a forward cache")
    dtype = params["conv1_w"].dtype
    dout = np.ascontiguousarray(np.asarray(upstream, dtype=dtype).reshape(
        (-1,) + np.shape(upstream)[-3:]).transpose(0, 2, 3, 1))
    g = {}

    da3, g["head_w"], g["head_b"] = _conv_bwd(dout, cache["cols4"], params["head_w"], cache["a3_shape"])
    dp3 = _silu_bwd(da3, cache["p3"], cache["s3"])
    dcat, g["conv3_w"], g["conv3_b"] = _conv_bwd(dp3, cache["cols3"], params["conv3_w"], cache["cat_shape"])
    dup, df1 = dcat[..., :WIDTH], dcat[..., WIDTH:].copy()

    bsz, h2, w2, _ = dup.shape
    da2 = dup.reshape(bsz, h2 // 2, 2, w2 // 2, 2, WIDTH).sum(axis=(2, 4))
    dp2 = _silu_bwd(da2, cache["p2"], cache["s2"])
    dpool, g["conv2_w"], g["conv2_b"] = _conv_bwd(dp2, cache["cols2"], params["conv2_w"], cache["pooled_shape"])
    df1 += (dpool / 4.0).repeat(2, axis=1).repeat(2, axis=2)

    a1, scale = cache["a1"], cache["scale"]
    dscale = (df1 * a1).sum(axis=(1, 2))
    dshift = df1.sum(axis=(1, 2))
    dss = np.concatenate([dscale, dshift], axis=1)
    g["temb_w"] = dss.T @ cache["emb"]
    g["temb_b"] = dss.sum(axis=0)

    da1 = df1 * (1.0 + scale[:, None, None, :])
    dp1 = _silu_bwd(da1, cache["p1"], cache["s1"])
    dx, g["conv1_w"], g["conv1_b"] = _conv_bwd(dp1, cache["cols1"], params["conv1_w"], cache["x_shape"])
    return {k: g[k] for k in PARAM_NAMES}, dx.transpose(0, 3, 1, 2)


class Denoiser:
    """Stateful wrapper holding parameters and the most recent forward cache."""

    def __init__(self, params: dict):
        self.params = params
        self._cache = None

    def denoise(self, z_concat, t):
        out, self._cache = forward(self.params, z_concat, t)
        return out

    def backward(self, upstream):
        grads, dx = backward(self.params, self._cache, upstream)
        self._cache = None
        return grads, dx


def denoise(params: dict, z_concat, t):
    """Single-call forward; drops the cache. Unbatched input gives unbatched output."""
    out, _ = forward(params, z_concat, t)
    return out[0] if np.ndim(z_concat) == 3 else out


# ------------------------------------------------------------------ optimiser


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                    {k: np.zeros_like(p) for k, p in params.items()}, 0)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam update. Arrays are updated in place and also returned."""
    if set(grads) != set(params):
        raise ShapeMismatch("gradient keys do not match parameter keys")
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for k, p in params.items():
        gk = grads[k]
        if gk.shape != p.shape:
            raise ShapeMismatch(f"{k}: grad {gk.shape} vs param {p.shape}")
        m, v = state.m[k], state.v[k]
        m *= beta1
        m += (1.0 - beta1) * gk
        v *= beta2
        v += (1.0 - beta2) * gk * gk
        p -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(p.dtype)
    return params, state
