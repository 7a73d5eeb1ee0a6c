"""Run configuration: a flat ``key = value`` text file mapped onto ``RunConfig``."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path

from ..errors import ConfigError
from ..fusion import ContributionRatio

FUSION_METHODS = ("cholesky", "variance", "pca")


@dataclass
class RunConfig:
    dataset_root: str = "data"
    output_dir: str = "run"
    # segmentation
    segment_length: int = 15
    stride: int = 10
    # flow + tracker
    flow_window: int = 5
    pyramid_levels: int = 3
    eig_threshold: float = 1e-3
    grid_step: int = 3
    mag_threshold: float = 0.5
    max_trajectory_length: int = 15
    max_jump: float = 8.0
    min_displacement: float = 0.4
    # clustering
    eps: float = 8.0
    min_points: int = 10
    min_box_side: int = 8
    # descriptors
    hoof_bins: int = 100
    codebook_k: int = 1000
    codebook_sample: int = 100_000
    static_provider: str = "toy:0"
    # fusion
    fusion: str = "cholesky"
    ratio: str = "50:50"  # static:motion
    motion_norm: str = "l1"
    stream_norm: str = "zscore"  # per-dimension standardisation of S and M before fusing
    # classifiers
    lstm_hidden: int = 128
    lstm_dropout: float = 0.8
    lstm_epochs: int = 60
    lstm_lr: float = 0.1
    lstm_batch: int = 8
    lstm_clip: float = 5.0
    lstm_standardize: bool = True
    forest_trees: int = 100
    forest_max_depth: int = 16
    # evaluation / execution
    train_frac: float = 0.8
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 1 <= self.stride < self.segment_length:
            raise ConfigError("need 1 <= stride < segment_length")
        if self.flow_window < 1 or self.flow_window % 2 == 0:
            raise ConfigError("flow_window must be a positive odd number")
        if self.fusion not in FUSION_METHODS:
            raise ConfigError(f"fusion must be one of {FUSION_METHODS}")
        if self.motion_norm not in ("l1", "none"):
            raise ConfigError("motion_norm must be 'l1' or 'none'")
        if self.stream_norm not in ("zscore", "none"):
            raise ConfigError("stream_norm must be 'zscore' or 'none'")
        try:
            self.contribution_ratio
        except ValueError as exc:
            raise ConfigError(f"bad ratio {self.ratio!r}: {exc}") from None
        if not 0 < self.train_frac < 1:
            raise ConfigError("train_frac must lie in (0, 1)")
        if not 0 <= self.lstm_dropout < 1:
            raise ConfigError("lstm_dropout must lie in [0, 1)")
        for name in ("hoof_bins", "codebook_k", "codebook_sample", "min_points", "grid_step",
                     "lstm_hidden", "lstm_epochs", "lstm_batch", "forest_trees", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        kind = self.static_provider.partition(":")[0]
        if kind not in ("toy", "file"):
            raise ConfigError("static_provider must be toy:<seed> or file:<path>")

    @property
    def contribution_ratio(self):
        return ContributionRatio.from_static_motion(self.ratio)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    def to_text(self):
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.to_dict().items())

    def digest(self, keys=None):
        d = self.to_dict()
        if keys is not None:
            d = {k: d[k] for k in keys}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# config subsets that determine each cached artefact
EXTRACT_KEYS = ("segment_length", "stride", "flow_window", "pyramid_levels", "eig_threshold",
                "grid_step", "mag_threshold", "max_trajectory_length", "max_jump",
                "min_displacement", "eps", "min_points", "min_box_side", "hoof_bins",
                "codebook_k", "static_provider")
CODEBOOK_KEYS = EXTRACT_KEYS + ("codebook_sample", "seed")


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(name, kind, text):
    text = text.strip()
    try:
        if kind in (bool, "bool"):
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r} as {kind}") from None
    return text


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_overrides(pairs):
    """Typed values for ``{key: text}``; unknown keys raise ``ConfigError``."""
    out = {}
    for key, text in pairs.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _coerce(key, _FIELD_TYPES[key], str(text))
    return out


def parse_config_text(text, base=None):
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    values = parse_overrides(pairs)
    return dataclasses.replace(base or RunConfig(), **values)


def load_config(path, base=None):
    return parse_config_text(Path(path).read_text(), base)
