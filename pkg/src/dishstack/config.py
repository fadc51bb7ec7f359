"""Configuration: every tunable constant of the pipeline lives here.

The JSON config file mirrors this structure section by section; unknown
keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path


@dataclass(frozen=True)
class PipelineConfig:
    # preprocessing
    resize_limit: int = 800
    canny_sigma: float = 1.0
    canny_low: float = 0.2
    canny_high: float = 0.2
    # polyline
    rdp_tolerance: float = 2.0
    sharp_turn_deg: float = 90.0
    # fitting / consensus
    min_fit_points: int = 6
    consensus_center_tol: float = 0.15   # |p - p0| <= tol * A0
    consensus_radius_tol: float = 0.15   # |A - A0| <= tol * A0
    consensus_angle_tol_deg: float = 10.0
    consensus_max_iters: int = 50
    consensus_circular_ratio: float = 0.9  # B/A above this: orientation not compared
    dedup_gap_factor: float = 0.35       # min_gap = factor * median(B)
    # reconstruction
    gather_error: float = 0.3
    refine_range: float = 0.1            # search +-range*A around the prediction
    coverage_bins: int = 64
    accept_coverage: float = 0.10
    accept_rms: float = 0.1
    accept_max: float = 0.2
    reconstruct: bool = True


@dataclass(frozen=True)
class CnnConfig:
    learning_rate: float = 0.01
    lr_decay: float = 0.1                # multiplier applied at decay_epoch
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    noise_variance: float = 0.001
    flip_augment: bool = True
    balance_classes: bool = True
    val_fraction: float = 0.1


DEFAULT_PALETTE = [
    # 8 maximally separated hues; name, (r, g, b) in [0,1]
    ("red", (0.85, 0.10, 0.10)),
    ("orange", (0.90, 0.55, 0.10)),
    ("yellow", (0.88, 0.85, 0.12)),
    ("green", (0.12, 0.70, 0.20)),
    ("cyan", (0.10, 0.75, 0.75)),
    ("blue", (0.15, 0.25, 0.85)),
    ("purple", (0.55, 0.15, 0.80)),
    ("brown", (0.45, 0.28, 0.12)),
]

DEFAULT_PRICES = {
    # minor currency units per class
    "red": 1500,
    "orange": 1800,
    "yellow": 1200,
    "green": 1000,
    "cyan": 2000,
    "blue": 2500,
    "purple": 3000,
    "brown": 2000,
}


@dataclass(frozen=True)
class AppConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    cnn: CnnConfig = field(default_factory=CnnConfig)
    prices: dict = field(default_factory=lambda: dict(DEFAULT_PRICES))
    currency: str = "KRW"
    palette: list = field(default_factory=lambda: list(DEFAULT_PALETTE))


class ConfigError(ValueError):
    pass


def _update_section(obj, values: dict):
    valid = {f.name for f in fields(obj)}
    bad = set(values) - valid
    if bad:
        raise ConfigError(f"unknown config keys: {sorted(bad)}")
    return replace(obj, **values)


def load_config(path: str | Path | None) -> AppConfig:
    """Load an AppConfig, merging a JSON file (if given) over the defaults."""
    cfg = AppConfig()
    if path is None:
        return cfg
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    known = {"pipeline", "cnn", "prices", "currency", "palette"}
    bad = set(raw) - known
    if bad:
        raise ConfigError(f"unknown config sections: {sorted(bad)}")
    pipeline = _update_section(cfg.pipeline, raw.get("pipeline", {}))
    cnn = _update_section(cfg.cnn, raw.get("cnn", {}))
    prices = dict(cfg.prices)
    prices.update(raw.get("prices", {}))
    palette = [
        (name, tuple(rgb)) for name, rgb in raw.get("palette", cfg.palette)
    ]
    if len(palette) != 8:
        raise ConfigError("palette must define exactly 8 classes")
    for name, amount in prices.items():
        if not isinstance(amount, int) or amount < 0:
            raise ConfigError(f"price for {name!r} must be a non-negative integer")
    missing = [name for name, _ in palette if name not in prices]
    if missing:
        raise ConfigError(f"palette classes without a price: {missing}")
    return AppConfig(
        pipeline=pipeline,
        cnn=cnn,
        prices=prices,
        currency=raw.get("currency", cfg.currency),
        palette=palette,
    )
