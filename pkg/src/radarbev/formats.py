"""Binary file formats: ``.rsiq`` frames, ``.rsbev`` heatmaps, PGM previews, ``.rsckpt`` checkpoints.

All integers and floats are little-endian.

    .rsiq   b"RSIQ" u8 version=1, u32 n_chirps, n_rx, n_samples,
            then f32 (I, Q) pairs in [chirp][rx][sample] order
    .rsbev  b"RSBV" u8 version=1, u32 n_range, n_azimuth, f32 range_res, fov,
            then f32 values row-major
    .rsckpt b"RSCK" u8 version=1, 32-byte sha256 architecture hash,
            u32 metadata length, UTF-8 JSON metadata, then f32 blobs for the
            parameters, Adam first moments, Adam second moments and
            (optionally) an exponential moving average of the parameters,
            each in the parameter order listed in the metadata
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from radarbev.errors import FormatError
from radarbev.iqproc import IqFrame, PolarBev

IQ_MAGIC = b"RSIQ"
BEV_MAGIC = b"RSBV"
CKPT_MAGIC = b"RSCK"
VERSION = 1


def _check_magic(blob: bytes, magic: bytes, path) -> None:
    if len(blob) < 5 or blob[:4] != magic:
        raise FormatError(f"{path}: expected magic {magic!r}, got {blob[:4]!r}")
    if blob[4] != VERSION:
        raise FormatError(f"{path}: unsupported version {blob[4]}")


def iq_to_bytes(frame: IqFrame) -> bytes:
    d = frame.data
    pairs = np.stack([d.real, d.imag], axis=-1).astype("<f4")
    return IQ_MAGIC + struct.pack("<B3I", VERSION, *d.shape) + pairs.tobytes()


def iq_from_bytes(blob: bytes, path="<bytes>") -> IqFrame:
    _check_magic(blob, IQ_MAGIC, path)
    if len(blob) < 17:
        raise FormatError(f"{path}: truncated header")
    n_chirps, n_rx, n_samples = struct.unpack("<3I", blob[5:17])
    n = n_chirps * n_rx * n_samples
    if len(blob) != 17 + 8 * n:
        raise FormatError(f"{path}: payload size mismatch for {n} samples")
    pairs = np.frombuffer(blob, dtype="<f4", offset=17).reshape(n_chirps, n_rx, n_samples, 2)
    data = pairs[..., 0].astype(np.float64) + 1j * pairs[..., 1].astype(np.float64)
    try:
        return IqFrame(data)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_iq(frame: IqFrame, path) -> None:
    Path(path).write_bytes(iq_to_bytes(frame))


def read_iq(path) -> IqFrame:
    return iq_from_bytes(Path(path).read_bytes(), path)


def bev_to_bytes(bev: PolarBev) -> bytes:
    header = BEV_MAGIC + struct.pack(
        "<B2I2f", VERSION, bev.n_range, bev.n_azimuth, bev.range_res, bev.fov
    )
    return header + bev.values.astype("<f4").tobytes()


def bev_from_bytes(blob: bytes, path="<bytes>") -> PolarBev:
    _check_magic(blob, BEV_MAGIC, path)
    if len(blob) < 21:
        raise FormatError(f"{path}: truncated header")
    n_range, n_az, range_res, fov = struct.unpack("<2I2f", blob[5:21])
    if len(blob) != 21 + 4 * n_range * n_az:
        raise FormatError(f"{path}: payload size mismatch")
    values = np.frombuffer(blob, dtype="<f4", offset=21).reshape(n_range, n_az)
    try:
        return PolarBev(values.astype(np.float64), float(range_res), float(fov))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_bev(bev: PolarBev, path) -> None:
    Path(path).write_bytes(bev_to_bytes(bev))


def read_bev(path) -> PolarBev:
    return bev_from_bytes(Path(path).read_bytes(), path)


def write_pgm(bev: PolarBev, path) -> None:
    """8-bit binary PGM preview; ``value * 255`` rounded half-to-even."""
    pix = np.round(np.clip(bev.values, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = pix.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + pix.tobytes())


def write_checkpoint(path, arch_hash: str, meta: dict, params: dict, adam_m: dict, adam_v: dict,
                     ema: dict | None = None) -> None:
    order = list(params)
    groups = [params, adam_m, adam_v] + ([ema] if ema is not None else [])
    meta = dict(meta, param_order=order, param_shapes={k: list(params[k].shape) for k in order},
                n_groups=len(groups))
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    parts = [CKPT_MAGIC, struct.pack("<B", VERSION), bytes.fromhex(arch_hash),
             struct.pack("<I", len(meta_bytes)), meta_bytes]
    for group in groups:
        parts += [np.ascontiguousarray(group[k], dtype="<f4").tobytes() for k in order]
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path, expect_hash: str | None = None):
    """Returns ``(meta, params, adam_m, adam_v, ema)``; arrays come back as float32.

    ``ema`` is ``None`` when the checkpoint carries no moving average.
    """
    blob = Path(path).read_bytes()
    _check_magic(blob, CKPT_MAGIC, path)
    arch = blob[5:37].hex()
    if expect_hash is not None and arch != expect_hash:
        raise FormatError(f"{path}: architecture hash mismatch")
    (n_meta,) = struct.unpack("<I", blob[37:41])
    try:
        meta = json.loads(blob[41 : 41 + n_meta])
    except ValueError as exc:
        raise FormatError(f"{path}: bad metadata") from exc
    meta["arch_hash"] = arch
    offset = 41 + n_meta
    groups = []
    n_groups = meta.get("n_groups", 3)
    if n_groups not in (3, 4):
        raise FormatError(f"{path}: unexpected group count {n_groups}")
    for _ in range(n_groups):
        g = {}
        for k in meta["param_order"]:
            shape = tuple(meta["param_shapes"][k])
            n = int(np.prod(shape))
            if offset + 4 * n > len(blob):
                raise FormatError(f"{path}: truncated parameter blob")
            g[k] = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(shape).astype(np.float32)
            offset += 4 * n
        groups.append(g)
    if offset != len(blob):
        raise FormatError(f"{path}: trailing bytes")
    if n_groups == 3:
        groups.append(None)
    return (meta, *groups)
