"""Training loop, checkpointing and conditional sampling for the latent denoiser."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from radarbev import diffusion, formats, latentcodec, nnet
from radarbev.errors import FormatError, RadarBevError
from radarbev.iqproc import PolarBev
from radarbev.scenesim import load_dataset

log = logging.getLogger(__name__)

LOG_COLUMNS = ["step", "loss_total", "loss_latent", "loss_l1", "loss_ssim"]


@dataclass(frozen=True)
class TrainConfig:
    schema: int = 1
    T: int = diffusion.DEFAULT_T
    beta_start: float = diffusion.DEFAULT_BETA_START
    beta_end: float = diffusion.DEFAULT_BETA_END
    lambda_p: float = 1.0
    lambda_l1: float = 1.0
    lambda_ssim: float = 0.2
    seed: int = 0
    steps: int = 6000
    batch_size: int = 64
    lr: float = 2e-3
    lr_final: float = 1e-4
    grad_clip: float = 1.0
    checkpoint_every: int = 1000
    log_every: int = 50
    # multiplies codec latents so the diffusion operates near unit variance
    latent_scale: float = 4.0
    # moving average of the weights used for sampling (0 disables)
    ema_decay: float = 0.999
    # per-sample weight on the pixel terms: "uniform" or "alpha_bar"
    pixel_weighting: str = "uniform"

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise RadarBevError(f"unknown training config keys: {sorted(unknown)}")
        if d.get("schema", 1) != 1:
            raise RadarBevError(f"unsupported config schema {d['schema']}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def schedule(self) -> diffusion.NoiseSchedule:
        return diffusion.make_schedule(self.T, self.beta_start, self.beta_end)

    def weights(self) -> diffusion.LossWeights:
        return diffusion.LossWeights(self.lambda_p, self.lambda_l1, self.lambda_ssim,
                                      pixel_weighting=self.pixel_weighting)

    def lr_at(self, step: int) -> float:
        """Cosine decay from ``lr`` to ``lr_final`` over ``steps``."""
        frac = min(step / max(self.steps, 1), 1.0)
        return self.lr_final + 0.5 * (self.lr - self.lr_final) * (1 + np.cos(np.pi * frac))


def encode_stack(images: np.ndarray, scale: float) -> np.ndarray:
    return scale * latentcodec.encode_array(images)


def decode_output(z: np.ndarray, scale: float) -> np.ndarray:
    """Latent to emitted image: decode, clamp at zero, per-frame max normalisation.

    The four-coefficient codec cannot represent one-cell-wide structures at
    full amplitude, so emitted frames are rescaled like radar BEVs.
    """
    img = np.clip(latentcodec.decode_array(z / scale), 0.0, None)
    peak = img.max(axis=(-2, -1), keepdims=True)
    return np.where(peak > 0, img / np.where(peak > 0, peak, 1.0), 0.0)


def _global_clip(grads: dict, max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())))
    if max_norm > 0 and norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


def update_ema(ema: dict, params: dict, decay: float, step: int) -> None:
    """In-place moving average with a short warm-up, ``min(decay, (1+k)/(10+k))``."""
    d = min(decay, (1.0 + step) / (10.0 + step))
    for k, p in params.items():
        ema[k] *= d
        ema[k] += (1.0 - d) * p


def train_step(params, adam, radar_lat, gt_lat, gt_img, idx, t, eps, cfg: TrainConfig, sched, weights):
    z0 = gt_lat[idx]
    c = radar_lat[idx]
    z_t = diffusion.q_sample(z0, t, eps, sched)
    out, cache = nnet.forward(params, diffusion.condition_concat(z_t, c), t)
    eps_hat = out.astype(np.float64)
    loss = diffusion.training_loss(z0, c, t, eps, eps_hat, gt_img[idx], weights, sched,
                                   latent_scale=cfg.latent_scale)
    grad = loss.grad_eps_hat
    grads, _ = nnet.backward(params, cache, grad)
    _global_clip(grads, cfg.grad_clip)
    nnet.adam_step(params, grads, adam, lr=cfg.lr_at(adam.step))
    return loss.total, loss.latent, loss.l1, loss.ssim


def save_checkpoint(path, params, adam, cfg: TrainConfig, ema: dict | None = None,
                    extra: dict | None = None) -> None:
    meta = {"config": asdict(cfg), "step": adam.step}
    if extra:
        meta.update(extra)
    formats.write_checkpoint(path, nnet.architecture_hash(), meta, params, adam.m, adam.v, ema)


def load_checkpoint(path):
    """Returns ``(params, adam_state, config, meta, ema)`` with float32 arrays.

    ``ema`` is ``None`` for checkpoints trained without a moving average.
    """
    meta, params, m, v, ema = formats.read_checkpoint(path, nnet.architecture_hash())
    cfg = TrainConfig.from_dict(meta["config"])
    return params, nnet.AdamState(m, v, int(meta["step"])), cfg, meta, ema


def load_for_sampling(path):
    """``(weights, config)`` from a checkpoint, preferring the moving average."""
    params, _, cfg, _, ema = load_checkpoint(path)
    return (ema if ema is not None else params), cfg


def train(dataset_dir, cfg: TrainConfig, ckpt_out, resume: str | None = None,
          log_path=None, stop_at: int | None = None):
    """Train on a simulated dataset directory and write the checkpoint.

    The random draws at step ``k`` come from ``default_rng([seed, k])`` so a
    resumed run replays the exact sequence of an uninterrupted one. A log
    CSV with the four loss columns is written next to the checkpoint
    (or at ``log_path``). ``stop_at`` ends early (for resume testing).
    Returns ``(sampling_weights, adam_state)`` where the sampling weights
    are the moving average when ``ema_decay > 0``.
    """
    _, radar, gt, ids, _ = load_dataset(dataset_dir)
    sched = cfg.schedule()
    weights = cfg.weights()
    radar_lat = encode_stack(radar, cfg.latent_scale)
    gt_lat = encode_stack(gt, cfg.latent_scale)

    if resume:
        params, adam, saved_cfg, _, ema = load_checkpoint(resume)
        if saved_cfg != cfg:
            raise RadarBevError("resume checkpoint was trained with a different config")
    else:
        params = nnet.init_params(np.random.default_rng([cfg.seed, 2**31]), np.float32)
        adam = nnet.AdamState.zeros_like(params)
        ema = {k: p.copy() for k, p in params.items()} if cfg.ema_decay > 0 else None

    ckpt_out = Path(ckpt_out)
    log_path = Path(log_path) if log_path else ckpt_out.with_suffix(".log.csv")
    rows = []
    if resume and log_path.exists():
        with open(log_path) as fh:
            rows = [r for r in csv.reader(fh)][1:]
            rows = [r for r in rows if int(r[0]) <= adam.step]

    end = cfg.steps if stop_at is None else min(stop_at, cfg.steps)
    n = len(ids)
    acc = np.zeros(4)
    acc_n = 0
    while adam.step < end:
        k = adam.step
        rng = np.random.default_rng([cfg.seed, k])
        idx = rng.integers(0, n, cfg.batch_size)
        t = rng.integers(1, sched.T + 1, cfg.batch_size)
        eps = rng.standard_normal((cfg.batch_size,) + gt_lat.shape[1:])
        acc += train_step(params, adam, radar_lat, gt_lat, gt, idx, t, eps, cfg, sched, weights)
        if ema is not None:
            update_ema(ema, params, cfg.ema_decay, k)
        acc_n += 1
        if adam.step % cfg.log_every == 0 or adam.step == end:
            mean = acc / acc_n
            rows.append([str(adam.step)] + [f"{v:.6f}" for v in mean])
            log.info("step %d loss %.4f (latent %.4f l1 %.4f ssim %.4f)", adam.step, *mean)
            acc[:] = 0
            acc_n = 0
        if cfg.checkpoint_every and adam.step % cfg.checkpoint_every == 0 and adam.step < end:
            save_checkpoint(ckpt_out, params, adam, cfg, ema)

    save_checkpoint(ckpt_out, params, adam, cfg, ema)
    with open(log_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        w.writerows(rows)
    return (ema if ema is not None else params), adam


def sample_latents(params, cond_lat: np.ndarray, cfg: TrainConfig, seeds, steps: int = 50,
                   variance: str | None = None) -> np.ndarray:
    """Conditional ancestral sampling; frame ``i`` draws noise from ``seeds[i]``.

    Frames run one at a time so each result is bit-identical however the
    frames are grouped into calls or spread over processes.
    """
    sched = cfg.schedule()
    variance = variance or diffusion.default_variance(sched, steps)
    run = sched if steps == sched.T else diffusion.respace(sched, steps)
    shape = cond_lat.shape[1:]
    out = np.empty((len(cond_lat),) + shape)
    for i, (c, seed) in enumerate(zip(cond_lat, seeds)):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal(shape)[None]
        for k in range(run.T, 0, -1):
            t = int(run.timesteps[k - 1])
            eps_hat, _ = nnet.forward(params, diffusion.condition_concat(z, c[None]), np.array([t]))
            noise = rng.standard_normal(shape)[None] if k > 1 else np.zeros_like(z)
            z = diffusion.ancestral_step(z, k, eps_hat.astype(np.float64), noise, run, variance)
        out[i] = z[0]
    return out


def sample_bevs(params, radar: np.ndarray, cfg: TrainConfig, seed: int, steps: int = 50,
                offset: int = 0, variance: str | None = None) -> np.ndarray:
    """Generate LiDAR-like images for a stack of radar images ``(N, H, W)``.

    Frame ``i`` uses the noise stream ``[seed, offset + i]``.
    """
    seeds = [[seed, offset + i] for i in range(len(radar))]
    z = sample_latents(params, encode_stack(radar, cfg.latent_scale), cfg, seeds, steps, variance)
    return decode_output(z, cfg.latent_scale)


def sample_bev(params, radar: PolarBev, cfg: TrainConfig, seed: int = 0, steps: int = 50,
               variance: str | None = None) -> PolarBev:
    if radar.n_range % 8 or radar.n_azimuth % 8:
        raise FormatError(f"radar BEV shape {radar.shape} is not a multiple of 8")
    img = sample_bevs(params, radar.values[None], cfg, seed, steps, variance=variance)[0]
    return radar.with_values(img)
