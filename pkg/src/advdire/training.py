"""Training loops: standard, adversarial (combined loss), and DIRE-space AT.

Adversarial training minimizes L1(f(x), y) + lambda * L2(f(x'), y) where x'
is regenerated by PGD against the current weights for every batch; gradients
flow through the two loss terms only, never through attack generation.
DIRE-space adversarial training follows the concatenation form instead: one
cross-entropy update over [DIRE(x); DIRE(x')] with duplicated labels.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackConfig, pgd, pgd_through_dire
from .datasets import Dataset, iter_batches
from .diffusion import dire_features
from .errors import ConfigError, DatasetError
from .models import DetectorModel
from .nn import Adam, add_grads


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings; defaults mirror the full-scale recipe."""

    epochs: int = 10
    batch_size: int = 128
    lam: float = 1.0
    learning_rate: float = 5e-6
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lam < 0.0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    clean_loss: float
    adv_loss: float
    total_loss: float
    seconds: float


@dataclass
class TrainReport:
    mode: str
    epochs: list[EpochStats] = field(default_factory=list)
    datasets_seen: tuple[str, ...] = ()
    final_train_accuracy: float | None = None
    attack_invocations: int = 0

    def to_csv(self) -> str:
        lines = ["epoch,clean_loss,adv_loss,total_loss,seconds"]
        for e in self.epochs:
            lines.append(
                f"{e.epoch},{e.clean_loss!r},{e.adv_loss!r},{e.total_loss!r},{e.seconds!r}"
            )
        return "\n".join(lines) + "\n"


def combined_loss(l_clean: float, l_adv: float, lam: float) -> float:
    """Clean/adversarial trade-off: l_clean + lambda * l_adv."""
    if lam < 0.0:
        raise ConfigError(f"lambda must be non-negative, got {lam}")
    return l_clean + lam * l_adv


def _pool(data) -> tuple[np.ndarray, np.ndarray, tuple[str, ...], tuple[str, ...]]:
    """Flatten a Dataset or list of Datasets into one training pool."""
    datasets = [data] if isinstance(data, Dataset) else list(data)
    if not datasets:
        raise DatasetError("training requires at least one dataset")
    for d in datasets:
        if len(d) == 0:
            raise DatasetError(f"dataset {d.name!r} is empty")
    images = np.concatenate([d.images for d in datasets], axis=0)
    labels = np.concatenate([d.labels for d in datasets], axis=0)
    ids = tuple(f"{d.name}/{i}" for d in datasets for i in d.ids)
    names = tuple(dict.fromkeys(d.name for d in datasets))
    return images, labels, ids, names


def _rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent streams for batch order and attack randomness."""
    data_ss, attack_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(data_ss), np.random.default_rng(attack_ss)


def train_standard(model: DetectorModel, data, cfg: TrainConfig) -> tuple[DetectorModel, TrainReport]:
    """Minimize mean cross-entropy on clean images; deterministic per seed."""
    images, labels, _, names = _pool(data)
    model = model.copy()
    opt = Adam(model.params, cfg.learning_rate, cfg.beta1, cfg.beta2)
    rng_data, _ = _rngs(cfg.seed)
    report = TrainReport(mode="standard", datasets_seen=names)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        losses = []
        for x, y, _ in iter_batches(images, labels, cfg.batch_size, rng_data, shuffle=True):
            loss, grads, _ = model.loss_and_gradients(x, y)
            opt.step(grads)
            losses.append(loss)
        mean_loss = float(np.mean(losses))
        report.epochs.append(
            EpochStats(epoch, mean_loss, 0.0, mean_loss, time.perf_counter() - t0)
        )
    report.final_train_accuracy = float((model.predict(images) == labels).mean())
    return model, report


def train_adversarial(
    model: DetectorModel, data, cfg: TrainConfig, atk: AttackConfig
) -> tuple[DetectorModel, TrainReport]:
    """Adversarial training with the combined clean/adversarial loss."""
    images, labels, _, names = _pool(data)
    model = model.copy()
    opt = Adam(model.params, cfg.learning_rate, cfg.beta1, cfg.beta2)
    rng_data, rng_attack = _rngs(cfg.seed)
    report = TrainReport(mode="at", datasets_seen=names)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        stats = []
        for x, y, _ in iter_batches(images, labels, cfg.batch_size, rng_data, shuffle=True):
            x_adv = pgd(model, x, y, atk, rng_attack)
            report.attack_invocations += 1
            l_clean, grads, _ = model.loss_and_gradients(x, y)
            if cfg.lam == 0.0:
                l_adv = model.loss(x_adv, y)
            else:
                l_adv, adv_grads, _ = model.loss_and_gradients(x_adv, y)
                add_grads(grads, adv_grads, scale=cfg.lam)
            opt.step(grads)
            stats.append((l_clean, l_adv, combined_loss(l_clean, l_adv, cfg.lam)))
        means = np.mean(stats, axis=0)
        report.epochs.append(
            EpochStats(epoch, float(means[0]), float(means[1]), float(means[2]), time.perf_counter() - t0)
        )
    report.final_train_accuracy = float((model.predict(images) == labels).mean())
    return model, report


def train_adversarial_dire(
    model: DetectorModel,
    data,
    cfg: TrainConfig,
    atk: AttackConfig,
    schedule,
    predictor,
    dire_scale: float,
    surrogate: DetectorModel | None = None,
) -> tuple[DetectorModel, TrainReport]:
    """Adversarial training on DIRE maps via one concatenated update per batch.

    Clean DIRE maps are cached per item id across epochs; adversarial maps
    depend on the current weights and are always recomputed.
    """
    if schedule is None or predictor is None:
        raise ConfigError("DIRE adversarial training requires a diffusion schedule and predictor")
    if model.input_space != "dire":
        raise ConfigError("train_adversarial_dire expects a detector with input_space='dire'")
    images, labels, ids, names = _pool(data)
    model = model.copy()
    opt = Adam(model.params, cfg.learning_rate, cfg.beta1, cfg.beta2)
    rng_data, rng_attack = _rngs(cfg.seed)
    report = TrainReport(mode="at-dire", datasets_seen=names)
    clean_cache: dict[str, np.ndarray] = {}
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        stats = []
        for x, y, idx in iter_batches(images, labels, cfg.batch_size, rng_data, shuffle=True):
            x_adv = pgd_through_dire(
                model, x, y, atk, schedule, predictor, dire_scale, surrogate=surrogate, rng=rng_attack
            )
            report.attack_invocations += 1
            missing = [j for j, i in enumerate(idx) if ids[i] not in clean_cache]
            if missing:
                fresh = dire_features(x[missing], schedule, predictor, dire_scale)
                for j, src in zip(missing, fresh):
                    clean_cache[ids[idx[j]]] = src
            d_clean = np.stack([clean_cache[ids[i]] for i in idx])
            d_adv = dire_features(x_adv, schedule, predictor, dire_scale)
            x_comb = np.concatenate([d_clean, d_adv], axis=0)
            y_comb = np.concatenate([y, y])
            loss, grads, _ = model.loss_and_gradients(x_comb, y_comb)
            l_clean = model.loss(d_clean, y)
            l_adv = model.loss(d_adv, y)
            opt.step(grads)
            stats.append((l_clean, l_adv, loss))
        means = np.mean(stats, axis=0)
        report.epochs.append(
            EpochStats(epoch, float(means[0]), float(means[1]), float(means[2]), time.perf_counter() - t0)
        )
    feats = np.stack([clean_cache[i] for i in ids])
    report.final_train_accuracy = float((model.predict(feats) == labels).mean())
    return model, report
