"""Command-line entry point: train, render, perturb-eval, sweep, selfcheck.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 numerical
failure, 4 failed self-check.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Optional

from . import data_io, plotting
from .config import ConfigError, RunConfig, load_config, parse_config
from .model import backward_mse, predict
from .perturb import NoiseSpec, perturb
from .train_eval import (
    NOISE_SEED_OFFSET,
    NumericalError,
    noisy_psnr_stats,
    reconstruction_psnr,
    sweep,
    train,
)

log = logging.getLogger("robust_inr")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_SELFCHECK = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = str(args.seed)
    if getattr(args, "out", None):
        overrides["io.out_dir"] = str(Path(args.out).resolve())
    if getattr(args, "weights", None):
        overrides["io.weights"] = str(Path(args.weights).resolve())
    if getattr(args, "noise", None):
        overrides["noise.family"] = args.noise
    if getattr(args, "strength", None) is not None:
        overrides["noise.strength"] = repr(args.strength)
    if getattr(args, "trials", None) is not None:
        overrides["noise.trials"] = str(args.trials)
    try:
        if args.config:
            return load_config(args.config, overrides)
        return parse_config("", ".", overrides)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config: {exc}") from None
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, f"config error: {exc}") from None


def _load_dataset(cfg: RunConfig):
    path = cfg.path("io.input")
    if path is None:
        raise CliError(EXIT_CONFIG, "io.input is not set")
    modality = None if cfg["io.modality"] == "auto" else cfg["io.modality"]
    if modality not in (None, "image", "audio", "video"):
        raise CliError(EXIT_CONFIG, f"io.modality must be auto, image, audio or video, got {modality!r}")
    try:
        return data_io.load_signal(path, modality if modality != "image" else None,
                                   cfg["io.audio_downsample"])
    except (OSError, data_io.DataFormatError) as exc:
        raise CliError(EXIT_IO, f"cannot load input {path}: {exc}") from None


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.path("io.out_dir")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create output directory {out}: {exc}") from None
    return out


def _load_params(cfg: RunConfig, dataset):
    path = cfg.path("io.weights")
    if path is None:
        path = cfg.path("io.out_dir") / "weights.inr"
    try:
        params = data_io.load_weights(path)
    except (OSError, data_io.DataFormatError) as exc:
        raise CliError(EXIT_IO, f"cannot load weights {path}: {exc}") from None
    c = params.config
    if (c.in_dim, c.out_dim) != (dataset.in_dim, dataset.out_dim):
        raise CliError(EXIT_CONFIG, f"weights map {c.in_dim}->{c.out_dim}, signal needs "
                                    f"{dataset.in_dim}->{dataset.out_dim}")
    return params


def cmd_train(args) -> int:
    cfg = _config(args)
    dataset = _load_dataset(cfg)
    out = _out_dir(cfg)
    try:
        model_cfg = cfg.model_config(dataset.in_dim, dataset.out_dim)
        train_cfg = cfg.train_config()
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"config error: {exc}") from None
    cfg.write_resolved(out / "config.resolved.txt")
    try:
        params, report = train(dataset, model_cfg, train_cfg)
    except NumericalError as exc:
        raise CliError(EXIT_NUMERIC, str(exc)) from None
    try:
        data_io.save_weights(params, out / "weights.inr", cfg["io.weights_dtype"])
        report.write_csv(out / "train_report.csv")
        recon = data_io.save_reconstruction(predict(params, dataset.coords), dataset, out / "reconstruction")
        if cfg["io.figures"]:
            plotting.plot_training(report.records, out / "train_loss.png")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write outputs: {exc}") from None
    print(f"trained {model_cfg.num_params} parameters for {train_cfg.epochs} epochs "
          f"({train_cfg.loss.family})")
    print(f"clean PSNR: {report.clean_psnr:.4f} dB")
    print(f"weights: {out / 'weights.inr'}")
    print(f"reconstruction: {recon}")
    return EXIT_OK


def cmd_render(args) -> int:
    cfg = _config(args)
    dataset = _load_dataset(cfg)
    params = _load_params(cfg, dataset)
    out = _out_dir(cfg)
    outputs = predict(params, dataset.coords)
    try:
        recon = data_io.save_reconstruction(outputs, dataset, out / "render")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write reconstruction: {exc}") from None
    print(f"clean PSNR: {reconstruction_psnr(outputs, dataset.targets):.4f} dB")
    print(f"reconstruction: {recon}")
    return EXIT_OK


def cmd_perturb_eval(args) -> int:
    cfg = _config(args)
    dataset = _load_dataset(cfg)
    params = _load_params(cfg, dataset)
    try:
        noise = cfg.noise_spec()
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"noise error: {exc}") from None
    noise = noise.with_seed(cfg["seed"] + NOISE_SEED_OFFSET)
    trials = cfg["noise.trials"]
    stats = noisy_psnr_stats(params, dataset, noise, trials)
    if args.save_recon:
        out = _out_dir(cfg)
        for t in range(trials):
            noisy = perturb(params, noise.with_seed(noise.seed + t))
            data_io.save_reconstruction(predict(noisy, dataset.coords), dataset,
                                        out / f"perturbed_{t:03d}")
    print(f"noise: {noise.family} strength={noise.strength:g} scope={noise.scope} trials={trials}")
    print(f"mean PSNR: {stats.mean:.4f} dB")
    print(f"std PSNR: {stats.std:.4f} dB")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    dataset = _load_dataset(cfg)
    out = _out_dir(cfg)
    try:
        job = cfg.sweep_job(dataset.in_dim, dataset.out_dim)
        job.cells()
        [job.noise_spec(nf, s) for nf in job.noise_families for s in job.strengths]
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, f"sweep config error: {exc}") from None
    cfg.write_resolved(out / "config.resolved.txt")
    result = sweep(job, dataset, out, workers=cfg["sweep.workers"])
    if cfg["io.figures"]:
        plotting.plot_sweep(result.summary, out)
    failed = [c for c in result.cells if c.error]
    for s in result.summary:
        if s["status"] == "ok":
            print(f"{s['loss_family']:<12} lambda={s['lambda']:<6g} {s['noise_family']:<14} "
                  f"strength={s['strength']:<8g} mean={s['mean_psnr_db']:.3f} dB "
                  f"std={s['std_psnr_db']:.3f}")
    for c in failed:
        print(f"FAILED cell {c.loss_family} lambda={c.lam:g}: {c.error}")
    print(f"rows: {out / 'sweep_rows.csv'}")
    print(f"summary: {out / 'sweep_summary.csv'}")
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_selfcheck(args=None, backward: Callable = backward_mse) -> int:
    from .selfcheck import run_checks

    results = run_checks(backward)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFCHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-inr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, weights=False, noise=False):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides io.out_dir)")
        if weights:
            p.add_argument("--weights", help="weight file (default: OUT/weights.inr)")
        if noise:
            p.add_argument("--noise", choices=["gaussian_mult", "gaussian_add", "binary_mask"])
            p.add_argument("--strength", type=float)
            p.add_argument("--trials", type=int)
        return p

    common(sub.add_parser("train", help="fit a network to a signal")).set_defaults(func=cmd_train)
    common(sub.add_parser("render", help="reconstruct a signal from weights"),
           weights=True).set_defaults(func=cmd_render)
    p = common(sub.add_parser("perturb-eval", help="PSNR under weight noise"), weights=True, noise=True)
    p.add_argument("--save-recon", action="store_true", help="write one reconstruction per trial")
    p.set_defaults(func=cmd_perturb_eval)
    common(sub.add_parser("sweep", help="loss x noise benchmark grid")).set_defaults(func=cmd_sweep)
    sub.add_parser("selfcheck", help="run the verification battery").set_defaults(func=cmd_selfcheck)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
