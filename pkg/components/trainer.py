from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from . import checkpoint, image_io, settings
from .curves import apply_curve_maps
from .logger import Logger
from .losses import LossConfig, loss_terms
from .network import DCENet, NetworkFactory, estimate_curves
from .optimizer import Adam
from .tensor import Tape, Tensor, backward

LOSS_KEYS = ["L_spa", "L_exp", "L_col", "L_tv", "total"]


class EmptyDatasetError(ValueError):
    """No image in the data directory could be decoded."""


class NonFiniteLossError(RuntimeError):
    """Training produced a NaN/Inf loss or gradient."""

    def __init__(self, iteration: int, components: Mapping[str, float], where: str = "loss"):
        self.iteration = iteration
        self.components = dict(components)
        breakdown = ", ".join(f"{key}={value}" for key, value in self.components.items())
        super().__init__(f"Non-finite {where} at iteration {iteration}: {breakdown}")


# config-file / CLI key -> (TrainConfig field or "loss.<field>", type)
CONFIG_KEYS = {
    "data": ("data_dir", str),
    "data_dir": ("data_dir", str),
    "out": ("out", str),
    "variant": ("variant", str),
    "epochs": ("epochs", int),
    "batch": ("batch", int),
    "lr": ("lr", float),
    "size": ("train_size", int),
    "train_size": ("train_size", int),
    "seed": ("seed", int),
    "val_fraction": ("val_fraction", float),
    "checkpoint_every": ("checkpoint_every", int),
    "max_iterations": ("max_iterations", int),
    "grad_clip": ("grad_clip", float),
    "downsample": ("downsample", int),
    "depth": ("depth", int),
    "features": ("features", int),
    "iterations": ("iterations", int),
    "log": ("log_path", str),
    "e": ("loss.exposure_level", float),
    "wcol": ("loss.color_weight", float),
    "wtv": ("loss.smoothness_weight", float),
    "wspa": ("loss.spatial_weight", float),
    "wexp": ("loss.exposure_weight", float),
}


@dataclass
class TrainConfig:
    """
    Training hyperparameters.

    Defaults follow the published protocol: 512x512 training images,
    batch 8, Adam at a fixed learning rate of 1e-4, E = 0.6 and loss
    weights W_col = 0.5, W_tv = 20. Training data should mix under- and
    over-exposed images; training on low-light images alone tends to
    over-enhance well-lit regions.
    """
    data_dir: Optional[str] = None
    out: str = "curvelight.zdce"
    variant: str = "plain"
    train_size: int = 512
    batch: int = 8
    lr: float = 1e-4
    epochs: int = 100
    max_iterations: Optional[int] = None
    seed: int = 0
    val_fraction: float = 0.2
    checkpoint_every: int = 0
    grad_clip: Optional[float] = None
    downsample: int = 1
    depth: int = 7
    features: int = 32
    iterations: int = 8
    loss: LossConfig = field(default_factory=LossConfig)
    log_path: Optional[str] = None

    def __post_init__(self):
        problems = []
        if self.batch < 1:
            problems.append(f"batch must be >= 1, got {self.batch}")
        if not self.lr > 0:
            problems.append(f"lr must be > 0, got {self.lr}")
        if self.epochs < 0:
            problems.append(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.val_fraction < 1.0:
            problems.append(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if self.train_size < 1:
            problems.append(f"train_size must be >= 1, got {self.train_size}")
        if self.downsample < 1:
            problems.append(f"downsample must be >= 1, got {self.downsample}")
        if self.checkpoint_every < 0:
            problems.append(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        if self.max_iterations is not None and self.max_iterations < 1:
            problems.append(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            problems.append(f"grad_clip must be > 0, got {self.grad_clip}")
        if problems:
            Logger.error(f"Invalid training config: {'; '.join(problems)}", name=__name__)
            raise ValueError(f"Invalid training config: {'; '.join(problems)}")

    @property
    def training_log(self) -> Path:
        return Path(self.log_path) if self.log_path else Path(self.out).with_suffix(".log")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], base: "TrainConfig" = None) -> "TrainConfig":
        """
        Build a config from flat `key -> value` settings (config file or CLI flags).

        Keys use the CLI spelling (`size`, `e`, `wcol`, ...); string values
        are converted to the field type. Later sources should be merged
        into `values` before calling, so precedence is decided by the caller.

        Raises:
            ValueError: Unknown key or unparsable value
        """
        base = base or cls()
        top: Dict[str, Any] = {}
        loss: Dict[str, Any] = {}
        for raw_key, raw_value in values.items():
            key = raw_key.strip().lower().replace("-", "_")
            if key not in CONFIG_KEYS:
                Logger.error(f"Unknown training setting: {raw_key}", name=__name__)
                raise ValueError(f"Unknown training setting: {raw_key}. Known: {sorted(CONFIG_KEYS)}")
            if raw_value is None:
                continue
            target, kind = CONFIG_KEYS[key]
            try:
                value = kind(raw_value)
            except (TypeError, ValueError) as e:
                Logger.error(f"Bad value for {raw_key}: {raw_value!r}", name=__name__)
                raise ValueError(f"Bad value for {raw_key}: {raw_value!r}") from e
            if target.startswith("loss."):
                loss[target[len("loss."):]] = value
            else:
                top[target] = value
        if loss:
            top["loss"] = replace(base.loss, **loss)
        return replace(base, **top)

    def to_dict(self) -> Dict[str, Any]:
        values = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "loss"}
        values.update({f"loss.{key}": value for key, value in self.loss.to_dict().items()})
        return values


@dataclass
class Dataset:
    train: np.ndarray
    validation: np.ndarray
    names: List[str]
    skipped: List[str]


@dataclass
class TrainingResult:
    model: DCENet
    history: pd.DataFrame
    validation: pd.DataFrame
    checkpoint: Path


def _decode(path: Path, size: int) -> Optional[np.ndarray]:
    try:
        return image_io.resize(image_io.load(path), size, size)
    except (image_io.ImageIOError, OSError) as e:
        Logger.warning(f"Skipping unreadable image {path.name}: {e}", name=__name__)
        return None


def split_indices(count: int, val_fraction: float, seed: int):
    """Seeded train/validation split; at least one image stays in training."""
    n_val = int(np.floor(count * val_fraction + 0.5))
    n_val = min(n_val, max(count - 1, 0))
    order = np.random.default_rng([seed, 0]).permutation(count)
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def load_dataset(directory, size: int = 512, val_fraction: float = 0.2, seed: int = 0) -> Dataset:
    """
    Decode every image of `directory`, resized to size x size.

    Files are read in sorted order; undecodable files are logged and
    skipped. With CURVELIGHT_THREADS > 0 decoding runs on a thread pool,
    which keeps the sorted order.

    Raises:
        EmptyDatasetError: If no image could be decoded
    """
    paths = image_io.list_images(directory)
    Logger.info(f"Loading {len(paths)} images from {directory} at {size}x{size}", name=__name__)

    workers = settings.worker_count()
    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            decoded = list(pool.map(lambda p: _decode(p, size), paths))
    else:
        decoded = [_decode(p, size) for p in paths]

    images = [img for img in decoded if img is not None]
    names = [p.name for p, img in zip(paths, decoded) if img is not None]
    skipped = [p.name for p, img in zip(paths, decoded) if img is None]
    if not images:
        Logger.error(f"No decodable images in {directory}", name=__name__)
        raise EmptyDatasetError(f"No decodable images in {directory}")

    stack = np.stack(images).astype(np.float32)
    train_idx, val_idx = split_indices(len(images), val_fraction, seed)
    Logger.info(
        f"Dataset: {len(train_idx)} train / {len(val_idx)} validation images, {len(skipped)} skipped",
        name=__name__,
    )
    return Dataset(stack[train_idx], stack[val_idx], names, skipped)


def _batch_terms(model: DCENet, batch: Tensor, cfg: TrainConfig):
    maps = estimate_curves(model, batch, cfg.downsample)
    enhanced = apply_curve_maps(batch, maps)
    return loss_terms(batch, enhanced, maps, cfg.loss)


def validate(model: DCENet, images: Sequence[np.ndarray], cfg: TrainConfig) -> Dict[str, float]:
    """
    Mean loss components over `images`, without touching the weights.

    Raises:
        ValueError: If `images` is empty
    """
    if len(images) == 0:
        Logger.error("validate needs at least one image", name=__name__)
        raise ValueError("validate needs at least one image")
    images = np.asarray(images, dtype=np.float32)
    totals = dict.fromkeys(LOSS_KEYS, 0.0)
    for start in range(0, len(images), cfg.batch):
        chunk = images[start:start + cfg.batch]
        values = _batch_terms(model, Tensor(chunk), cfg).as_dict()
        for key in LOSS_KEYS:
            totals[key] += values[key] * len(chunk)
    return {key: value / len(images) for key, value in totals.items()}


def _clip_by_global_norm(grads: List[np.ndarray], max_norm: float) -> List[np.ndarray]:
    norm = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads)))
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return [g * scale for g in grads]


def _periodic_path(out: Path, epoch: int) -> Path:
    return out.with_name(f"{out.stem}_epoch{epoch:04d}{out.suffix}")


def _format_line(kind: str, index: int, values: Mapping[str, float]) -> str:
    return ",".join([kind, str(index)] + [f"{key},{value:.9g}" for key, value in values.items()])


def train(cfg: TrainConfig, dataset: Dataset = None) -> TrainingResult:
    """
    Zero-reference training loop.

    Each step estimates curves for a shuffled batch, applies them, evaluates
    the total loss, backpropagates and takes one Adam step. Per-iteration
    losses and per-epoch validation totals go to the training log; the
    final model (and optional periodic checkpoints) are written to cfg.out.
    With a fixed seed and CURVELIGHT_THREADS=0 the run is deterministic.

    Raises:
        EmptyDatasetError: If the data directory holds no decodable image
        NonFiniteLossError: On a NaN/Inf loss or gradient
    """
    out = Path(cfg.out)
    model = NetworkFactory.create(
        cfg.variant, seed=cfg.seed, depth=cfg.depth, features=cfg.features, iterations=cfg.iterations
    )
    history: List[dict] = []
    validation: List[dict] = []

    if cfg.epochs == 0:
        Logger.info("epochs=0: writing the initialized model without training", name=__name__)
        checkpoint.save(model, out)
        return TrainingResult(model, pd.DataFrame(columns=["iteration", "epoch"] + LOSS_KEYS),
                              pd.DataFrame(columns=["epoch", "val_total"]), out)

    if dataset is None:
        if not cfg.data_dir:
            raise ValueError("TrainConfig.data_dir is required to train")
        dataset = load_dataset(cfg.data_dir, cfg.train_size, cfg.val_fraction, cfg.seed)
    if len(dataset.train) == 0:
        raise EmptyDatasetError("Training split is empty")

    params = model.parameters()
    optimizer = Adam(params, cfg.lr)
    rng = np.random.default_rng([cfg.seed, 1])
    log_path = cfg.training_log
    log_path.parent.mkdir(parents=True, exist_ok=True)

    Logger.info(
        f"Training {cfg.variant} for {cfg.epochs} epochs on {len(dataset.train)} images "
        f"(batch {cfg.batch}, lr {cfg.lr})",
        name=__name__,
    )
    iteration = 0
    with open(log_path, "a", encoding="utf-8") as log:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(dataset.train))
            for start in range(0, len(order), cfg.batch):
                batch = Tensor(dataset.train[order[start:start + cfg.batch]])
                with Tape() as tape:
                    terms = _batch_terms(model, batch, cfg)
                iteration += 1
                values = terms.as_dict()
                if not all(np.isfinite(v) for v in values.values()):
                    Logger.error(_format_line("iter", iteration, values), name=__name__)
                    raise NonFiniteLossError(iteration, values)

                grads = backward(tape, terms.total).for_parameters(params)
                if not all(np.all(np.isfinite(g)) for g in grads):
                    Logger.error(f"Non-finite gradient at iteration {iteration}", name=__name__)
                    raise NonFiniteLossError(iteration, values, where="gradient")
                if cfg.grad_clip is not None:
                    grads = _clip_by_global_norm(grads, cfg.grad_clip)
                optimizer.step(grads)

                history.append({"iteration": iteration, "epoch": epoch, **values})
                log.write(_format_line("iter", iteration, values) + "\n")
                Logger.debug(_format_line("iter", iteration, values), name=__name__)
                if cfg.max_iterations is not None and iteration >= cfg.max_iterations:
                    break

            if len(dataset.validation):
                val_total = validate(model, dataset.validation, cfg)["total"]
                validation.append({"epoch": epoch, "val_total": val_total})
                log.write(_format_line("epoch", epoch, {"val_total": val_total}) + "\n")
                Logger.info(f"Epoch {epoch}: validation total {val_total:.6f}", name=__name__)
            log.flush()

            if cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
                checkpoint.save(model, _periodic_path(out, epoch))
            if cfg.max_iterations is not None and iteration >= cfg.max_iterations:
                Logger.info(f"Reached max_iterations={cfg.max_iterations} in epoch {epoch}", name=__name__)
                break

    checkpoint.save(model, out)
    Logger.info(f"Training finished after {iteration} iterations", name=__name__)
    return TrainingResult(
        model,
        pd.DataFrame(history, columns=["iteration", "epoch"] + LOSS_KEYS),
        pd.DataFrame(validation, columns=["epoch", "val_total"]),
        out,
    )
