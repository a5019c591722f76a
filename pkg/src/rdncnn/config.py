"""Flat `key = value` run configuration files.

`#` starts a comment; unknown keys and out-of-range values are rejected with
the offending key and line number before any work starts.
"""

from dataclasses import dataclass, fields

from .network import NetworkConfig
from .training import TrainConfig


class ConfigError(Exception):
    def __init__(self, message: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")
        self.line = line


@dataclass
class RunConfig:
    depth: int = 12
    filters: int = 64
    kernel: int = 3
    input_channels: int = 1
    sigma: float = 25.0
    sparsity: float = 0.15
    epochs_dense: int = 20
    epochs_sparse: int = 20
    epochs_retrain: int = 0
    lr_initial: float = 1e-3
    lr_drop_factor: float = 0.1
    batch_size: int = 64
    patch_size: int = 40
    stride: int = 10
    seed: int = 0
    train_dir: str = ""
    val_dir: str = ""
    out_dir: str = "."

    def network_config(self) -> NetworkConfig:
        try:
            return NetworkConfig(depth=self.depth, filters=self.filters,
                                 kernel_size=self.kernel,
                                 input_channels=self.input_channels)
        except ValueError as exc:
            raise ConfigError(f"invalid network configuration: {exc}") from exc

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(epochs_dense=self.epochs_dense,
                               epochs_sparse=self.epochs_sparse,
                               epochs_retrain=self.epochs_retrain,
                               sparsity=self.sparsity,
                               lr_initial=self.lr_initial,
                               lr_drop_factor=self.lr_drop_factor,
                               batch_size=self.batch_size,
                               seed=self.seed,
                               sigma=self.sigma)
        except ValueError as exc:
            raise ConfigError(f"invalid training configuration: {exc}") from exc

    def validate(self) -> "RunConfig":
        self.network_config()
        self.train_config()
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.patch_size < 1:
            raise ConfigError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if not (0 <= self.lr_drop_factor <= 1):
            raise ConfigError(f"lr_drop_factor must be in [0, 1], got {self.lr_drop_factor}")
        if self.lr_initial <= 0:
            raise ConfigError(f"lr_initial must be > 0, got {self.lr_initial}")
        return self


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str, line: int):
    kind = _FIELD_TYPES[key]
    try:
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
        return raw
    except ValueError:
        name = kind if isinstance(kind, str) else kind.__name__
        raise ConfigError(f"key '{key}' expects a {name}, got {raw!r}", line)


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown key '{key}'", lineno)
        if not value:
            raise ConfigError(f"key '{key}' has no value", lineno)
        setattr(cfg, key, _convert(key, value, lineno))
    return cfg.validate()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)
