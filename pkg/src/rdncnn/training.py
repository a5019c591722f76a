"""Dense / sparse / dense-retrain training phases and the full pipeline."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetStream
from .masking import Mask, _kernel_param_slots, apply_mask, compute_mask
from .network import Network, NetworkConfig, build_network
from .ops import residual_mse_loss
from .optim import AdamState, adam_step


@dataclass(frozen=True)
class TrainConfig:
    epochs_dense: int = 20
    epochs_sparse: int = 20
    epochs_retrain: int = 0
    sparsity: float = 0.15
    lr_initial: float = 1e-3
    lr_drop_factor: float = 0.1
    batch_size: int = 64
    seed: int = 0
    sigma: float = 25.0

    def __post_init__(self):
        if self.epochs_dense < 1:
            raise ValueError("epochs_dense must be >= 1 (masking needs a trained net)")
        if self.epochs_sparse < 0 or self.epochs_retrain < 0:
            raise ValueError("epoch counts must be >= 0")
        if not 0.0 <= self.sparsity < 1.0:
            raise ValueError(f"sparsity must be in [0, 1), got {self.sparsity}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EpochReport:
    phase: str
    epoch: int  # global epoch index across phases
    loss: float
    val_psnr: float | None = None


@dataclass
class PipelineReport:
    epochs: list = field(default_factory=list)
    masked_count: int = 0
    total_kernel_weights: int = 0
    sparsity: float = 0.0


def phase_learning_rate(lr_initial: float, drop_factor: float,
                        epoch_in_phase: int, phase_epochs: int) -> float:
    """Initial rate for the first half of a phase, dropped at the midpoint."""
    if epoch_in_phase >= math.ceil(phase_epochs / 2):
        return lr_initial * drop_factor
    return lr_initial


def validation_psnr(net: Network, clean: np.ndarray, noisy: np.ndarray,
                    batch_size: int = 64) -> float:
    """Aggregate PSNR of the denoised validation set ([0,1] domain)."""
    total_sq = 0.0
    total_n = 0
    for start in range(0, clean.shape[0], batch_size):
        c = clean[start:start + batch_size]
        d = net.denoise(noisy[start:start + batch_size])
        total_sq += float(np.sum(np.square(d.astype(np.float64) - c.astype(np.float64))))
        total_n += c.size
    mse = total_sq / total_n
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _run_phase(net: Network, data: DatasetStream, epochs: int, opt: AdamState,
               phase: str, mask: Mask | None = None, epoch_offset: int = 0,
               lr_initial: float = 1e-3, lr_drop_factor: float = 0.1,
               val_pairs=None) -> list:
    if data.num_patches == 0:
        raise ValueError("empty dataset")
    kernel_slots = _kernel_param_slots(net)
    if mask is not None and len(mask.maps) != len(kernel_slots):
        raise ValueError("mask does not match the network's conv layers")
    params = net.parameters()
    reports = []
    for e in range(epochs):
        lr = phase_learning_rate(lr_initial, lr_drop_factor, e, epochs)
        losses = []
        for clean, noisy in data.batches(epoch_offset + e):
            residual = net.forward(noisy, mode="train")
            loss, grad = residual_mse_loss(residual, noisy, clean)
            net.backward(grad)
            grads = net.gradients()
            if mask is not None:
                for slot, m in zip(kernel_slots, mask.maps):
                    grads[slot][m == 0] = np.float32(0.0)
            adam_step(params, grads, opt, lr)
            if mask is not None:
                for block, m in zip(net.blocks, mask.maps):
                    block.kernel[m == 0] = np.float32(0.0)
            losses.append(loss)
        val = None
        if val_pairs is not None:
            val = validation_psnr(net, val_pairs[0], val_pairs[1], data.batch_size)
        reports.append(EpochReport(phase=phase, epoch=epoch_offset + e,
                                   loss=float(np.mean(losses)), val_psnr=val))
    return reports


def train_dense(net, data, epochs, opt, **kwargs):
    if epochs < 1:
        raise ValueError("dense training needs epochs >= 1")
    return _run_phase(net, data, epochs, opt, phase="dense", **kwargs)


def train_sparse(net, mask, data, epochs, opt, **kwargs):
    return _run_phase(net, data, epochs, opt, phase="sparse", mask=mask, **kwargs)


def train_dense_retrain(net, data, epochs, opt, **kwargs):
    """Lift masking and retrain; optimizer moments restart from zero."""
    for m, v in zip(opt.m, opt.v):
        m[:] = 0.0
        v[:] = 0.0
    opt.t = 0
    return _run_phase(net, data, epochs, opt, phase="retrained", **kwargs)


def run_dsd_pipeline(net_config: NetworkConfig, cfg: TrainConfig,
                     data: DatasetStream, val_pairs=None, mask_scope: str = "global",
                     on_phase=None):
    """Dense training, magnitude masking, sparse training, optional retrain.

    With sparsity 0 the schedule degenerates to plain dense training over
    the combined dense+sparse epoch budget. on_phase(name, net, mask), when
    given, is invoked after each completed phase (used for checkpointing).
    Returns (network, mask, PipelineReport).
    """
    net = build_network(net_config, cfg.seed)
    opt = AdamState.fresh(net.parameters())
    report = PipelineReport(sparsity=cfg.sparsity)
    common = dict(lr_initial=cfg.lr_initial, lr_drop_factor=cfg.lr_drop_factor,
                  val_pairs=val_pairs)

    def notify(phase, mask):
        if on_phase is not None:
            on_phase(phase, net, mask)

    if cfg.sparsity == 0.0:
        epochs = cfg.epochs_dense + cfg.epochs_sparse
        report.epochs += train_dense(net, data, epochs, opt, **common)
        mask = compute_mask(net, 0.0, scope=mask_scope)
        notify("dense", mask)
    else:
        report.epochs += train_dense(net, data, cfg.epochs_dense, opt, **common)
        notify("dense", None)
        mask = compute_mask(net, cfg.sparsity, scope=mask_scope)
        apply_mask(net, mask, opt)
        report.epochs += train_sparse(net, mask, data, cfg.epochs_sparse, opt,
                                      epoch_offset=cfg.epochs_dense, **common)
        notify("sparse", mask)
    report.masked_count = mask.masked_count
    report.total_kernel_weights = mask.total_weights

    if cfg.epochs_retrain > 0:
        offset = cfg.epochs_dense + cfg.epochs_sparse
        report.epochs += train_dense_retrain(net, data, cfg.epochs_retrain, opt,
                                             epoch_offset=offset, **common)
        notify("retrained", None)
    return net, mask, report


def write_phase_logs(report: PipelineReport, text_path, csv_path) -> None:
    """Plain-text and comma-separated per-epoch logs."""
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "phase", "loss", "val_psnr"])
        for row in report.epochs:
            writer.writerow([row.epoch, row.phase, f"{row.loss:.6g}",
                             "" if row.val_psnr is None else f"{row.val_psnr:.4f}"])
    lines = [f"masked weights: {report.masked_count} / {report.total_kernel_weights} "
             f"(sparsity {report.sparsity})"]
    for row in report.epochs:
        val = "" if row.val_psnr is None else f"  val_psnr={row.val_psnr:.2f} dB"
        lines.append(f"epoch {row.epoch:3d}  [{row.phase}]  loss={row.loss:.6g}{val}")
    with open(text_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
