"""Residual denoising CNN with dense-sparse-dense training on numpy/numba."""

from .backend import current_backend, set_backend
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config
from .data import (DatasetStream, Image, NoiseSpec, PgmError, add_awgn,
                   extract_patches, load_image, make_dataset, save_image)
from .masking import Mask, apply_mask, compute_mask
from .metrics import psnr, ssim
from .network import Network, NetworkConfig, build_network
from .optim import AdamState, adam_step
from .training import TrainConfig, run_dsd_pipeline, train_dense, train_sparse

__version__ = "0.1.0"

__all__ = [
    "AdamState", "CheckpointError", "ConfigError", "DatasetStream", "Image",
    "Mask", "Network", "NetworkConfig", "NoiseSpec", "PgmError", "RunConfig",
    "TrainConfig", "adam_step", "add_awgn", "apply_mask", "build_network",
    "compute_mask", "current_backend", "extract_patches", "load_checkpoint",
    "load_config", "load_image", "make_dataset", "psnr", "run_dsd_pipeline",
    "save_checkpoint", "save_image", "set_backend", "ssim", "train_dense",
    "train_sparse",
]
