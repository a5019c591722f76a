"""Command-line entry points.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
All file outputs are written atomically, so a failing command never leaves
a partial output file behind.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import gradcheck as gradcheck_mod
from . import metrics, training
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config
from .data import (Image, NoiseSpec, PgmError, add_awgn, list_pgm_files,
                   load_image, make_dataset, save_image)
from .masking import apply_mask, compute_mask
from .network import NetworkConfig, build_network
from .optim import AdamState
from .training import (PipelineReport, run_dsd_pipeline, train_dense,
                       train_dense_retrain, train_sparse, write_phase_logs)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

VAL_NOISE_SEED_OFFSET = 1_000_003  # keeps validation noise off the training stream


def _load_run_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required for this command")
    return load_config(args.config)


def _train_dataset(cfg: RunConfig):
    if not cfg.train_dir:
        raise ConfigError("config key 'train_dir' must be set for training")
    return make_dataset(cfg.train_dir, NoiseSpec(sigma=cfg.sigma, seed=cfg.seed),
                        patch_size=cfg.patch_size, stride=cfg.stride,
                        batch_size=cfg.batch_size, shuffle_seed=cfg.seed)


def _val_pairs(cfg: RunConfig):
    if not cfg.val_dir:
        return None
    stream = make_dataset(cfg.val_dir,
                          NoiseSpec(sigma=cfg.sigma, seed=cfg.seed + VAL_NOISE_SEED_OFFSET),
                          patch_size=cfg.patch_size, stride=cfg.stride,
                          batch_size=cfg.batch_size, shuffle_seed=cfg.seed)
    return stream.epoch_pairs(0)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_logs(report, out_dir: Path):
    write_phase_logs(report, out_dir / "log.txt", out_dir / "log.csv")


def _image_from_unit(tensor: np.ndarray) -> Image:
    pixels = np.clip(np.rint(tensor * 255.0), 0, 255).astype(np.uint8)
    return Image(width=pixels.shape[1], height=pixels.shape[0], pixels=pixels)


def cmd_dsd(args) -> int:
    cfg = _load_run_config(args)
    out_dir = _out_dir(cfg)
    data = _train_dataset(cfg)
    val = _val_pairs(cfg)

    names = {"dense": "netdense.ckpt", "sparse": "netsparse.ckpt",
             "retrained": "netretrained.ckpt"}

    def on_phase(phase, net, mask):
        save_checkpoint(net, mask, out_dir / names[phase], phase=phase)
        print(f"wrote {out_dir / names[phase]}")

    _, mask, report = run_dsd_pipeline(cfg.network_config(), cfg.train_config(),
                                       data, val_pairs=val, on_phase=on_phase)
    _write_logs(report, out_dir)
    print(f"masked weights: {report.masked_count} / {report.total_kernel_weights}")
    return EXIT_OK


def cmd_train_dense(args) -> int:
    cfg = _load_run_config(args)
    out_dir = _out_dir(cfg)
    data = _train_dataset(cfg)
    net = build_network(cfg.network_config(), cfg.seed)
    opt = AdamState.fresh(net.parameters())
    reports = train_dense(net, data, cfg.epochs_dense, opt,
                          lr_initial=cfg.lr_initial, lr_drop_factor=cfg.lr_drop_factor,
                          val_pairs=_val_pairs(cfg))
    save_checkpoint(net, None, out_dir / "netdense.ckpt", phase="dense")
    _write_logs(PipelineReport(epochs=reports, sparsity=0.0), out_dir)
    print(f"wrote {out_dir / 'netdense.ckpt'}")
    return EXIT_OK


def cmd_mask(args) -> int:
    cfg = _load_run_config(args)
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required for 'mask'")
    net, _, phase = load_checkpoint(args.checkpoint)
    mask = compute_mask(net, cfg.sparsity)
    apply_mask(net, mask)
    out = Path(args.out) if args.out else _out_dir(cfg) / "netmasked.ckpt"
    save_checkpoint(net, mask, out, phase=phase)
    print(f"masked {mask.masked_count} of {mask.total_weights} kernel weights")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_train_sparse(args) -> int:
    cfg = _load_run_config(args)
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required for 'train-sparse'")
    net, mask, _ = load_checkpoint(args.checkpoint)
    if mask is None:
        raise ValueError(f"checkpoint {args.checkpoint} carries no mask; "
                         f"run 'mask' first")
    out_dir = _out_dir(cfg)
    data = _train_dataset(cfg)
    opt = AdamState.fresh(net.parameters())
    reports = train_sparse(net, mask, data, cfg.epochs_sparse, opt,
                           lr_initial=cfg.lr_initial, lr_drop_factor=cfg.lr_drop_factor,
                           epoch_offset=cfg.epochs_dense, val_pairs=_val_pairs(cfg))
    save_checkpoint(net, mask, out_dir / "netsparse.ckpt", phase="sparse")
    _write_logs(PipelineReport(epochs=reports, masked_count=mask.masked_count,
                               total_kernel_weights=mask.total_weights,
                               sparsity=mask.sparsity), out_dir)
    print(f"wrote {out_dir / 'netsparse.ckpt'}")
    return EXIT_OK


def cmd_retrain_dense(args) -> int:
    cfg = _load_run_config(args)
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required for 'retrain-dense'")
    net, _, _ = load_checkpoint(args.checkpoint)
    out_dir = _out_dir(cfg)
    data = _train_dataset(cfg)
    opt = AdamState.fresh(net.parameters())
    reports = train_dense_retrain(net, data, cfg.epochs_retrain, opt,
                                  lr_initial=cfg.lr_initial,
                                  lr_drop_factor=cfg.lr_drop_factor,
                                  epoch_offset=cfg.epochs_dense + cfg.epochs_sparse,
                                  val_pairs=_val_pairs(cfg))
    save_checkpoint(net, None, out_dir / "netretrained.ckpt", phase="retrained")
    _write_logs(PipelineReport(epochs=reports, sparsity=0.0), out_dir)
    print(f"wrote {out_dir / 'netretrained.ckpt'}")
    return EXIT_OK


def cmd_denoise(args) -> int:
    net, _, _ = load_checkpoint(args.checkpoint)
    noisy_img = load_image(args.input)
    noisy = noisy_img.normalized()[None, None]
    denoised = net.denoise(noisy)[0, 0]
    out_img = _image_from_unit(denoised)
    save_image(out_img, args.out)
    print(f"wrote {args.out}")
    if args.clean:
        clean_img = load_image(args.clean)
        before_psnr = metrics.psnr(clean_img.pixels, noisy_img.pixels)
        after_psnr = metrics.psnr(clean_img.pixels, out_img.pixels)
        before_ssim = metrics.ssim(clean_img.pixels, noisy_img.pixels)
        after_ssim = metrics.ssim(clean_img.pixels, out_img.pixels)
        print(f"PSNR: {metrics.format_db(before_psnr)} -> "
              f"{metrics.format_db(after_psnr)} dB")
        print(f"SSIM: {before_ssim:.4f} -> {after_ssim:.4f}")
    return EXIT_OK


def evaluate_rows(net, clean_dir, sigmas, seed):
    """One (image, sigma, metric, before, after) row per image, sigma, metric."""
    paths = list_pgm_files(clean_dir)
    if not paths:
        raise ValueError(f"no .pgm files found in {clean_dir}")
    rows = []
    for i, path in enumerate(paths):
        clean = load_image(path)
        for j, sigma in enumerate(sigmas):
            noisy = add_awgn(clean, NoiseSpec(sigma=sigma, seed=seed + 1000 * i + j))
            denoised = net.denoise((noisy.real / np.float32(255.0))[None, None])[0, 0]
            out = _image_from_unit(denoised)
            rows.append((path.stem, sigma, "psnr",
                         metrics.psnr(clean.pixels, noisy.clamped),
                         metrics.psnr(clean.pixels, out.pixels)))
            rows.append((path.stem, sigma, "ssim",
                         metrics.ssim(clean.pixels, noisy.clamped),
                         metrics.ssim(clean.pixels, out.pixels)))
    return rows


def _format_metric(name, value):
    return metrics.format_db(value) if name == "psnr" else f"{value:.4f}"


def cmd_evaluate(args) -> int:
    net, _, _ = load_checkpoint(args.checkpoint)
    sigmas = args.sigma if args.sigma else [15.0, 25.0, 50.0]
    rows = evaluate_rows(net, args.clean_dir, sigmas, args.seed)
    header = f"{'image':<16} {'sigma':>6} {'metric':>6} {'before':>10} {'after':>10}"
    print(header)
    print("-" * len(header))
    csv_lines = ["image,sigma,metric,before,after"]
    for name, sigma, metric, before, after in rows:
        b = _format_metric(metric, before)
        a = _format_metric(metric, after)
        print(f"{name:<16} {sigma:>6g} {metric:>6} {b:>10} {a:>10}")
        csv_lines.append(f"{name},{sigma:g},{metric},{b},{a}")
    if args.out:
        from .data import atomic_write_bytes
        atomic_write_bytes(args.out, ("\n".join(csv_lines) + "\n").encode("ascii"))
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_param_count(args) -> int:
    if args.checkpoint:
        net, _, _ = load_checkpoint(args.checkpoint)
    else:
        if args.config:
            net_cfg = load_config(args.config).network_config()
        else:
            net_cfg = NetworkConfig(depth=args.depth, filters=args.filters,
                                    kernel_size=args.kernel,
                                    input_channels=args.channels)
        net = build_network(net_cfg, seed=0)
    print(net.count_parameters())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck_mod.run_suite(args.seed, rounds=args.rounds)
    print(gradcheck_mod.format_report(results))
    failed = [r for r in results if not r.ok()]
    for r in failed:
        print(f"FAILED: {r.op} {r.slot} max rel err {r.max_rel_error:.3e}",
              file=sys.stderr)
    return EXIT_OK if not failed else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdncnn",
        description="Residual denoising CNN with dense-sparse-dense training")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    for name, func, help_text in [
            ("dsd", cmd_dsd, "run the full dense-sparse(-dense) pipeline"),
            ("train-dense", cmd_train_dense, "dense training phase only"),
            ("train-sparse", cmd_train_sparse, "sparse phase from a masked checkpoint"),
            ("retrain-dense", cmd_retrain_dense, "lift the mask and retrain"),
    ]:
        p = add(name, func, help_text)
        p.add_argument("--config", required=True, help="run configuration file")
        if name in ("train-sparse", "retrain-dense"):
            p.add_argument("--checkpoint", required=True)

    p = add("mask", cmd_mask, "compute and apply a magnitude mask")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="output checkpoint path (default out_dir/netmasked.ckpt)")

    p = add("denoise", cmd_denoise, "denoise one PGM image")
    p.add_argument("input", help="noisy input image (.pgm)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="denoised output image (.pgm)")
    p.add_argument("--clean", help="clean reference; prints PSNR/SSIM when given")

    p = add("evaluate", cmd_evaluate, "PSNR/SSIM table over a directory of clean images")
    p.add_argument("clean_dir")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--sigma", action="append", type=float,
                   help="noise level; repeatable (default: 15 25 50)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the table as CSV")

    p = add("param-count", cmd_param_count, "print the trainable parameter count")
    p.add_argument("--config")
    p.add_argument("--checkpoint")
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--filters", type=int, default=64)
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--channels", type=int, default=1)

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of all backward passes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=3)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, PgmError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
