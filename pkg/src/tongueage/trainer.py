"""Training loop, evaluation metrics, and the augmentation ablation runner.

One epoch is: seeded reshuffle of the train split, batches of
``batch_size`` (the last short batch is kept so every sample is seen exactly
once), per-frame augmentation drawn on the fly, one backward + RMSprop step
per batch, then inference-mode evaluation of both splits.  All random
streams derive from (seed, epoch, batch, purpose) tuples, so a fixed seed
reproduces the run bit for bit.  Validation is always evaluated with
dropout off and no augmentation.

Metrics go to a CSV with columns exactly
``epoch,train_mse,val_mse,train_mae,val_mae,wall_seconds``; the float
columns are written with full round-trip precision.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .augment import AugmentConfig, random_augment
from .data import Dataset, Sample
from .errors import ConfigError, NumericsError, ParseError
from .layers import Dropout
from .model import Model, build_paper_model, save_checkpoint
from .optim import RmsPropState, rmsprop_step

METRICS_COLUMNS = ("epoch", "train_mse", "val_mse", "train_mae", "val_mae",
                   "wall_seconds")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    learning_rate: float = 0.001
    dropout_rate: float = 0.5
    augment: AugmentConfig = field(
        default_factory=lambda: AugmentConfig("rotation", max_degrees=5.0)
    )
    seed: int = 0
    precision: str = "single"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.precision not in ("single", "double"):
            raise ConfigError(f"precision must be single or double, got {self.precision!r}")

    @property
    def dtype(self):
        return np.float64 if self.precision == "double" else np.float32


@dataclass
class EpochMetrics:
    epoch: int
    train_mse: float
    val_mse: float
    train_mae: float
    val_mae: float
    wall_seconds: float


class AblationRow(NamedTuple):
    strategy: str
    parameter: Optional[float]
    val_mse: float


def config_digest(config: TrainConfig) -> str:
    """Stable SHA-256 over the resolved configuration."""
    blob = json.dumps(asdict(config), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def build_model_for(config: TrainConfig) -> Model:
    """Production architecture initialized from the run's seed/precision."""
    model = build_paper_model(config.seed, config.dtype)
    return _apply_dropout_rate(model, config.dropout_rate)


def _apply_dropout_rate(model: Model, rate: float) -> Model:
    for e in model.entries:
        if isinstance(e.spec, Dropout) and e.spec.rate != rate:
            e.spec = Dropout(rate)
    return model


def _batches(order: np.ndarray, batch_size: int):
    for lo in range(0, len(order), batch_size):
        yield order[lo : lo + batch_size]


def evaluate(
    model: Model, samples: Sequence[Sample], batch_size: int = 128
) -> Tuple[float, float]:
    """Inference-mode (MSE, MAE) over all samples.

    Per-sample errors are reduced with exact summation, so the result does
    not depend on sample order or batch boundaries.
    """
    if not samples:
        raise ConfigError("evaluate needs at least one sample")
    sq, ab = [], []
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo : lo + batch_size]
        x = np.stack([s.frame for s in chunk]).astype(model.dtype)
        preds = model.forward(x, training=False)
        for s, p in zip(chunk, preds[:, 0]):
            err = float(p) - s.age_years
            sq.append(err * err)
            ab.append(abs(err))
    return math.fsum(sq) / len(sq), math.fsum(ab) / len(ab)


def train(
    model: Model,
    dataset: Dataset,
    config: TrainConfig,
    out_dir=None,
) -> Tuple[Model, List[EpochMetrics]]:
    """Train in place; returns the final model and per-epoch metrics.

    When ``out_dir`` is given, writes ``metrics.csv`` plus ``best.ckpt``
    (lowest validation MSE) and ``last.ckpt`` there.
    """
    train_samples = dataset.train
    val_samples = dataset.val
    if not train_samples or not val_samples:
        raise ConfigError(
            f"dataset must have non-empty splits, got {len(train_samples)} train / "
            f"{len(val_samples)} val"
        )
    _apply_dropout_rate(model, config.dropout_rate)
    state = RmsPropState(learning_rate=config.learning_rate)
    digest = config_digest(config)
    history: List[EpochMetrics] = []
    best_val = math.inf
    best_model: Optional[Model] = None
    best_epoch = 0

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = np.random.default_rng((config.seed, epoch)).permutation(
            len(train_samples)
        )
        for bi, idx in enumerate(_batches(order, config.batch_size)):
            rng_aug = np.random.default_rng((config.seed, epoch, bi, 0))
            rng_drop = np.random.default_rng((config.seed, epoch, bi, 1))
            batch = [train_samples[i] for i in idx]
            x = np.stack(
                [random_augment(s.frame, config.augment, rng_aug) for s in batch]
            ).astype(config.dtype)
            y = np.array([[s.age_years] for s in batch], dtype=config.dtype)
            loss, grads = model.backward(x, y, rng_drop)
            if not math.isfinite(loss):
                raise NumericsError(
                    f"non-finite training loss {loss} at epoch {epoch}, batch {bi}"
                )
            rmsprop_step(model.parameters(), grads, state)

        train_mse, train_mae = evaluate(model, train_samples, config.batch_size)
        val_mse, val_mae = evaluate(model, val_samples, config.batch_size)
        wall = time.perf_counter() - t0
        history.append(
            EpochMetrics(epoch, train_mse, val_mse, train_mae, val_mae, wall)
        )
        if val_mse < best_val:
            best_val = val_mse
            best_model = model.copy()
            best_epoch = epoch

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(history, out_dir / "metrics.csv")
        opt = {"learning_rate": state.learning_rate, "decay": state.decay,
               "epsilon": state.epsilon}
        save_checkpoint(best_model, out_dir / "best.ckpt", epoch=best_epoch,
                        train_config_digest=digest, optimizer=opt)
        save_checkpoint(model, out_dir / "last.ckpt", epoch=config.epochs,
                        train_config_digest=digest, optimizer=opt)
    return model, history


def run_ablation(
    dataset: Dataset,
    strategies: Sequence[AugmentConfig],
    base_config: TrainConfig,
    seed_mode: str = "fresh",
) -> List[AblationRow]:
    """Train one fresh model per augmentation strategy.

    ``seed_mode="shared"`` reuses the base seed for every row (isolating
    the augmentation effect); ``"fresh"`` gives each row its own seed.
    """
    if not strategies:
        raise ConfigError("ablation needs at least one strategy")
    if seed_mode not in ("shared", "fresh"):
        raise ConfigError(f"seed_mode must be shared or fresh, got {seed_mode!r}")
    rows = []
    for i, aug in enumerate(strategies):
        seed = base_config.seed if seed_mode == "shared" else base_config.seed + 1 + i
        config = replace(base_config, augment=aug, seed=seed)
        model = build_model_for(config)
        _, history = train(model, dataset, config)
        if aug.mode == "rotation":
            param: Optional[float] = aug.max_degrees
        elif aug.mode == "gaussian_noise":
            param = aug.sigma
        else:
            param = None
        rows.append(AblationRow(aug.mode, param, history[-1].val_mse))
    return rows


# ---------------------------------------------------------------------------
# Metrics CSV
# ---------------------------------------------------------------------------

def write_metrics_csv(history: Sequence[EpochMetrics], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_COLUMNS)
        for m in history:
            writer.writerow(
                [m.epoch, repr(m.train_mse), repr(m.val_mse),
                 repr(m.train_mae), repr(m.val_mae), repr(m.wall_seconds)]
            )


def read_metrics_csv(path) -> List[EpochMetrics]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != METRICS_COLUMNS:
            raise ParseError(
                f"metrics CSV columns {reader.fieldnames} != {list(METRICS_COLUMNS)}"
            )
        return [
            EpochMetrics(
                int(row["epoch"]),
                float(row["train_mse"]),
                float(row["val_mse"]),
                float(row["train_mae"]),
                float(row["val_mae"]),
                float(row["wall_seconds"]),
            )
            for row in reader
        ]


# ---------------------------------------------------------------------------
# Config files (key=value or JSON) and strategy strings
# ---------------------------------------------------------------------------

def parse_strategy(text: str) -> AugmentConfig:
    """``"none" | "rotation[:deg]" | "gaussian_noise[:sigma]"`` -> config."""
    name, _, arg = text.strip().partition(":")
    if name == "none":
        if arg:
            raise ParseError(f"strategy 'none' takes no parameter, got {text!r}")
        return AugmentConfig("none")
    if name == "rotation":
        return AugmentConfig("rotation", max_degrees=float(arg) if arg else 5.0)
    if name == "gaussian_noise":
        return AugmentConfig("gaussian_noise", sigma=float(arg) if arg else 0.1)
    raise ParseError(f"unknown augmentation strategy {text!r}")


_CONFIG_KEYS = {
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "dropout_rate": float,
    "seed": int,
    "precision": str,
    "augment": parse_strategy,
}


def load_train_config(path) -> dict:
    """Read a config file into a dict of TrainConfig field overrides.

    JSON files mirror TrainConfig (with ``augment`` as a nested object);
    key=value files use the same keys with ``augment`` as a strategy string.
    """
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        raw = json.loads(text)
        out = {}
        for key, value in raw.items():
            if key == "augment":
                out["augment"] = AugmentConfig(**value)
            elif key in _CONFIG_KEYS:
                out[key] = _CONFIG_KEYS[key](value)
            else:
                raise ParseError(f"unknown config key {key!r}")
        return out
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"config line {lineno} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise ParseError(f"unknown config key {key!r} on line {lineno}")
        out[key] = _CONFIG_KEYS[key](value)
    return out
