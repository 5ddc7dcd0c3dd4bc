"""Flat key=value pipeline configuration.

Defaults follow the published training recipe where one exists (GRBM
learning rate 1e-3, 50 epochs, batches of 32, init range 0.005,
fine-tuning lr 2e-3 decayed by 0.6 per epoch for 20 epochs over 10-video
batches, weight decay 0.01, sparsity weight 0.5, sparsity target 0.001,
3x3x3 blocks) and documented desk-scale choices otherwise. Every key can
be overridden by a same-named command-line flag; the flag wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .grbm import CdConfig
from .hddm import FineTuneConfig
from .numeric import derive_seed
from .scsp import BlockSpec

FEATURE_MODES = ("scsp", "raw")


@dataclass
class PipelineConfig:
    # SCSP feature extraction
    block_w: int = 3
    block_h: int = 3
    block_d: int = 3
    lasso_lambda: float = 0.1
    segment_len: int = 0  # 0 = auto: 10 * block_d frames
    sequence_len: int = 0  # 0 = auto: temporal slab count of the video
    features: str = "scsp"  # "raw" bypasses SCSP and feeds downsampled pixels
    raw_downsample: int = 4
    # GRBM pre-training
    layer_sizes: tuple = (64, 32, 16, 8)
    grbm_lr: float = 1e-3
    grbm_epochs: int = 50
    grbm_batch: int = 32
    cd_steps: int = 1
    init_range: float = 0.005
    pretrain_subset: int = 200
    # per-class fine-tuning
    finetune_lr: float = 2e-3
    finetune_decay: float = 0.6
    finetune_epochs: int = 20
    finetune_batch_videos: int = 10
    weight_decay: float = 0.01
    sparsity_weight: float = 0.5
    sparsity_target: float = 0.001
    # run control
    seed: int = 7
    threads: int = 0  # 0 = machine parallelism
    # paths
    manifest: str = ""
    feature_dir: str = ""
    model_file: str = ""
    report_out: str = ""
    dictionary_file: str = ""  # default: <feature_dir>/dictionary.scspd

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        BlockSpec(self.block_w, self.block_h, self.block_d)  # raises on bad blocks
        if self.lasso_lambda < 0:
            raise ConfigError(f"lasso_lambda must be >= 0, got {self.lasso_lambda}")
        if self.segment_len < 0 or self.sequence_len < 0:
            raise ConfigError("segment_len and sequence_len must be >= 0 (0 = auto)")
        if self.features not in FEATURE_MODES:
            raise ConfigError(
                f"features must be one of {FEATURE_MODES}, got {self.features!r}"
            )
        if self.raw_downsample < 1:
            raise ConfigError(f"raw_downsample must be >= 1, got {self.raw_downsample}")
        sizes = tuple(int(s) for s in self.layer_sizes)
        if not sizes or any(s < 1 for s in sizes):
            raise ConfigError(f"layer_sizes must be positive integers, got {sizes}")
        object.__setattr__(self, "layer_sizes", sizes)
        if self.pretrain_subset < 1:
            raise ConfigError(f"pretrain_subset must be >= 1, got {self.pretrain_subset}")
        if self.threads < 0:
            raise ConfigError(f"threads must be >= 0, got {self.threads}")
        # delegate range checks for the training blocks
        self.cd_config()
        self.finetune_config()

    # -- derived views -----------------------------------------------------

    def block_spec(self) -> BlockSpec:
        return BlockSpec(self.block_w, self.block_h, self.block_d)

    def effective_segment_len(self) -> int:
        return self.segment_len if self.segment_len else 10 * self.block_d

    def cd_config(self, seed: int | None = None) -> CdConfig:
        return CdConfig(
            lr=self.grbm_lr,
            epochs=self.grbm_epochs,
            batch_size=self.grbm_batch,
            cd_steps=self.cd_steps,
            init_range=self.init_range,
            seed=self.seed if seed is None else seed,
        )

    def finetune_config(self) -> FineTuneConfig:
        return FineTuneConfig(
            lr=self.finetune_lr,
            lr_decay=self.finetune_decay,
            epochs=self.finetune_epochs,
            batch_videos=self.finetune_batch_videos,
            weight_decay=self.weight_decay,
            sparsity_weight=self.sparsity_weight,
            sparsity_target=self.sparsity_target,
        )

    def derive(self, *path: int) -> int:
        return derive_seed(self.seed, *path)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def _parse_value(name: str, text: str, kind):
    text = text.strip()
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(int(p) for p in text.replace(" ", "").split(",") if p)
        return text
    except ValueError as exc:
        raise ConfigError(f"cannot parse {name} = {text!r}: {exc}") from exc


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}
_KIND = {
    "int": int,
    "float": float,
    "str": str,
    "tuple": tuple,
}


def field_kind(name: str):
    if name not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {name!r}")
    return _KIND[str(_FIELD_TYPES[name])]


def load_config(path) -> PipelineConfig:
    """Parse a flat `key = value` config file with `#` comments."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected 'key = value', got {line!r}")
        key, text = (part.strip() for part in line.split("=", 1))
        values[key] = _parse_value(key, text, field_kind(key))
    return PipelineConfig(**values)


def apply_overrides(cfg: PipelineConfig, overrides: dict) -> PipelineConfig:
    """Return cfg with the given key -> raw-string/typed overrides applied."""
    updates = {}
    for key, value in overrides.items():
        kind = field_kind(key)
        updates[key] = _parse_value(key, value, kind) if isinstance(value, str) else value
    return replace(cfg, **updates) if updates else cfg
