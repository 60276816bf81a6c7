"""Batch command-line front end.

Subcommands: ``process``, ``cfar``, ``simgen``, ``train``, ``sample``, ``eval``.
Exit codes: 0 success, 1 I/O error, 2 file-format error, 3 bad argument.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from radarbev import formats, iqproc, metrics, pipeline, scenesim
from radarbev.bevgrid import bev_to_points, read_points_csv, write_points_csv
from radarbev.cfar import VARIANTS, CfarConfig, cfar_detect, mask_to_points
from radarbev.errors import EmptyPointCloud, FormatError, RadarBevError

EXIT_IO, EXIT_FORMAT, EXIT_ARG = 1, 2, 3

log = logging.getLogger("radarbev")

_SUFFIX = re.compile(r"_(radar|gt|pred|points)$")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARG, f"{self.prog}: error: {message}\n")


# ----------------------------------------------------------------- helpers


def frame_id(path: Path) -> str:
    """File stem with a trailing ``_radar``/``_gt``/``_pred``/``_points`` removed."""
    return _SUFFIX.sub("", path.stem)


def _listing(root: Path, kind: str) -> list[Path]:
    """Frame files under ``root`` sorted by name.

    A simulated dataset directory (one holding ``pairs/``) contributes its
    radar frames when ``kind == "pred"`` and its ground-truth frames when
    ``kind == "gt"``; any other directory contributes every ``.rsbev`` and
    ``.csv`` file.
    """
    if root.is_file():
        return [root]
    if not root.is_dir():
        raise FileNotFoundError(f"no such file or directory: {root}")
    if (root / "pairs").is_dir():
        tag = "_radar" if kind == "pred" else "_gt"
        return sorted((root / "pairs").glob(f"*{tag}.rsbev"))
    return sorted(p for p in root.iterdir() if p.suffix in (".rsbev", ".csv"))


def _load_points(path: Path, binarize_at: float) -> np.ndarray:
    if path.suffix == ".csv":
        return read_points_csv(path)
    return bev_to_points(formats.read_bev(path), binarize_at)


def _eval_one(args):
    fid, pred_path, gt_path, binarize_at = args
    pred = _load_points(pred_path, binarize_at)
    gt = _load_points(gt_path, binarize_at)
    try:
        return metrics.evaluate_pair(pred, gt, fid)
    except EmptyPointCloud:
        return fid


def _pmap(fn, items, jobs: int):
    """Ordered map; ``jobs > 1`` fans out over processes."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _cfar_config(args) -> CfarConfig:
    base = {}
    if args.config:
        blob = json.loads(Path(args.config).read_text())
        base = blob.get("cfar", blob)
    cfg = CfarConfig.from_dict(base)
    over = {k: v for k, v in dict(
        variant=args.variant, guard=args.guard, train=args.train,
        offset_db=args.offset_db, os_rank=args.os_rank,
    ).items() if v is not None}
    if args.square_law:
        over["square_law"] = True
    return replace(cfg, **over)


# ---------------------------------------------------------------- commands


def cmd_process(args) -> int:
    frame = formats.read_iq(args.input)
    bev = iqproc.process_frame(
        frame, args.n_range, args.n_azimuth, args.range_res, args.fov, args.threshold,
    )
    formats.write_bev(bev, args.output)
    if args.pgm:
        formats.write_pgm(bev, args.pgm)
    return 0


def cmd_cfar(args) -> int:
    cfg = _cfar_config(args)
    bev = formats.read_bev(args.input)
    pts = mask_to_points(cfar_detect(bev, cfg), bev)
    write_points_csv(pts, args.output)
    log.info("%d detections (%s, %.1f dB)", len(pts), cfg.variant, cfg.offset_db)
    return 0


def cmd_simgen(args) -> int:
    cfg = scenesim.DegradationConfig()
    if args.degradation:
        blob = json.loads(Path(args.degradation).read_text())
        unknown = set(blob) - set(scenesim.DegradationConfig.__dataclass_fields__)
        if unknown:
            raise RadarBevError(f"unknown degradation keys: {sorted(unknown)}")
        cfg = scenesim.DegradationConfig(**blob)
    man = scenesim.write_dataset(args.outdir, args.n, args.size, args.seed, cfg, args.threshold)
    log.info("wrote %d pairs to %s", man.n, args.outdir)
    return 0


def cmd_train(args) -> int:
    cfg = pipeline.TrainConfig.load(args.config)
    over = {k: v for k, v in dict(lambda_p=args.lambda_p, steps=args.steps, seed=args.seed).items()
            if v is not None}
    cfg = replace(cfg, **over)
    pipeline.train(args.dataset, cfg, args.ckpt, resume=args.resume, stop_at=args.stop_at)
    return 0


def cmd_sample(args) -> int:
    params, cfg = pipeline.load_for_sampling(args.ckpt)
    src = Path(args.input)
    if src.is_file():
        bev = formats.read_bev(src)
        out = pipeline.sample_bev(params, bev, cfg, args.seed, args.steps, args.variance)
        formats.write_bev(out, args.output)
        return 0

    files = _listing(src, "pred")
    if not files:
        raise FileNotFoundError(f"no .rsbev frames under {src}")
    bevs = [formats.read_bev(p) for p in files]
    geo = {(b.shape, b.range_res, b.fov) for b in bevs}
    if len(geo) != 1:
        raise FormatError("input frames do not share one geometry")
    stack = np.stack([b.values for b in bevs])
    # frame i always draws from [seed, i], so job splitting never changes results
    bounds = np.linspace(0, len(stack), max(1, min(args.jobs, len(stack))) + 1).astype(int)
    tasks = [(params, stack[a:b], cfg, args.seed, args.steps, int(a), args.variance)
             for a, b in zip(bounds[:-1], bounds[1:])]
    imgs = np.concatenate(_pmap(_sample_chunk, tasks, args.jobs))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for p, b, img in zip(files, bevs, imgs):
        formats.write_bev(b.with_values(img), out / f"{frame_id(p)}_pred.rsbev")
    log.info("sampled %d frames into %s", len(files), out)
    return 0


def _sample_chunk(task):
    params, chunk, cfg, seed, steps, offset, variance = task
    return pipeline.sample_bevs(params, chunk, cfg, seed, steps, offset=offset, variance=variance)


def cmd_eval(args) -> int:
    preds = {frame_id(p): p for p in _listing(Path(args.pred), "pred")}
    gts = {frame_id(p): p for p in _listing(Path(args.gt), "gt")}
    common = sorted(set(preds) & set(gts))
    if not common:
        raise FileNotFoundError("no frame ids shared between prediction and ground-truth inputs")
    missing = sorted(set(preds) ^ set(gts))
    if missing:
        log.warning("%d frames present on one side only; ignored", len(missing))
    outs = _pmap(_eval_one, [(f, preds[f], gts[f], args.binarize_at) for f in common], args.jobs)
    results = [r for r in outs if isinstance(r, metrics.MetricResult)]
    empty = [r for r in outs if isinstance(r, str)]
    if empty:
        log.warning("%d frames with an empty point cloud excluded from the metrics", len(empty))
    extra = {"binarize_at": args.binarize_at, "n_empty_excluded": len(empty), "empty_frames": empty}
    summary = metrics.cdf_report(results, args.report, paper_refs=args.paper_refs, extra=extra)
    print(f"frames {summary['n_frames']}  mean CD {summary['mean_cd_m']:.4f} m  "
          f"mean MHD {summary['mean_mhd_m']:.4f} m  empty {len(empty)}")
    return 0


# ------------------------------------------------------------------ parser


def _add_geometry(p):
    p.add_argument("--n-range", type=int, default=iqproc.DEFAULT_N_RANGE)
    p.add_argument("--n-azimuth", type=int, default=iqproc.DEFAULT_N_AZIMUTH)
    p.add_argument("--range-res", type=float, default=iqproc.DEFAULT_RANGE_RES, help="meters per range bin")
    p.add_argument("--fov", type=float, default=iqproc.DEFAULT_FOV, help="azimuth field of view, radians")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="radarbev", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("process", help="raw .rsiq frame -> thresholded polar BEV")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--threshold", type=float, default=iqproc.DEFAULT_THRESHOLD)
    p.add_argument("--pgm", help="also write an 8-bit PGM preview here")
    _add_geometry(p)
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("cfar", help="CFAR detections of a BEV as a point CSV")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--guard", type=int)
    p.add_argument("--train", type=int)
    p.add_argument("--offset-db", type=float)
    p.add_argument("--os-rank", type=float)
    p.add_argument("--square-law", action="store_true", help="square magnitudes before testing")
    p.add_argument("--config", help="JSON file with a 'cfar' block (or bare CFAR keys)")
    p.set_defaults(func=cmd_cfar)

    p = sub.add_parser("simgen", help="generate a paired synthetic dataset")
    p.add_argument("outdir")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=iqproc.DEFAULT_THRESHOLD)
    p.add_argument("--degradation", help="JSON file with DegradationConfig fields")
    p.set_defaults(func=cmd_simgen)

    p = sub.add_parser("train", help="train the latent denoiser")
    p.add_argument("dataset")
    p.add_argument("config")
    p.add_argument("ckpt")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--lambda-p", type=float, help="pixel-loss weight override (0 = latent only)")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--stop-at", type=int, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate LiDAR-like BEVs from radar BEVs")
    p.add_argument("ckpt")
    p.add_argument("input", help=".rsbev file, directory of .rsbev files, or dataset directory")
    p.add_argument("output", help=".rsbev file (single input) or output directory")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variance", choices=("posterior", "beta"))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="chamfer / modified Hausdorff report")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("report")
    p.add_argument("--binarize-at", type=float, default=0.5)
    p.add_argument("--paper-refs", action="store_true", help="draw published reference lines")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("radarbev: error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_ARG
    try:
        return args.func(args)
    except (FormatError, json.JSONDecodeError) as exc:
        print(f"radarbev: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"radarbev: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RadarBevError as exc:
        print(f"radarbev: error: {exc}", file=sys.stderr)
        return EXIT_ARG


if __name__ == "__main__":
    sys.exit(main())
