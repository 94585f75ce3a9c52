"""Dataset specifications, materialization, and deterministic batching.

A DatasetSpec names one split of one dataset: either a flat directory of
JPEG/PNG files or a seeded synthetic generator. Labels are implied by the
spec's role (real -> 0, fake -> 1). Train and test splits of the same
dataset must never share an item identity (file name or generator seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ContractError, DatasetError
from .images import LABEL_FAKE, LABEL_REAL, as_image_batch, as_label_vector
from .preprocess import PreprocessConfig, preprocess

ROLES = ("real", "fake")
SPLITS = ("train", "test")
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


@dataclass(frozen=True)
class DirectorySource:
    path: str

    def to_dict(self) -> dict:
        return {"kind": "directory", "path": self.path}


@dataclass(frozen=True)
class GeneratorSource:
    """Seeded synthetic source; item i uses seed ``seed_start + i``."""

    family: str  # "textured-blobs" | "smooth-blobs" | "diffusion-sampler"
    seed_start: int
    count: int
    image_size: int
    channels: int
    variant: str = "a"
    predictor_path: str | None = None  # required for "diffusion-sampler" specs loaded from disk

    def to_dict(self) -> dict:
        d = {
            "kind": "generator",
            "family": self.family,
            "seed_start": self.seed_start,
            "count": self.count,
            "image_size": self.image_size,
            "channels": self.channels,
            "variant": self.variant,
        }
        if self.predictor_path is not None:
            d["predictor_path"] = self.predictor_path
        return d


def source_from_dict(d: dict) -> DirectorySource | GeneratorSource:
    kind = d.get("kind")
    if kind == "directory":
        return DirectorySource(path=d["path"])
    if kind == "generator":
        return GeneratorSource(
            family=d["family"],
            seed_start=int(d["seed_start"]),
            count=int(d["count"]),
            image_size=int(d["image_size"]),
            channels=int(d["channels"]),
            variant=d.get("variant", "a"),
            predictor_path=d.get("predictor_path"),
        )
    raise ContractError(f"unknown dataset source kind {kind!r}")


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    role: str
    split: str
    source: DirectorySource | GeneratorSource
    preprocess: PreprocessConfig | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ContractError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.split not in SPLITS:
            raise ContractError(f"split must be one of {SPLITS}, got {self.split!r}")

    @property
    def label(self) -> int:
        return LABEL_REAL if self.role == "real" else LABEL_FAKE

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "role": self.role,
            "split": self.split,
            "source": self.source.to_dict(),
        }
        if self.preprocess is not None:
            d["preprocess"] = {
                "jpeg_quality": self.preprocess.jpeg_quality,
                "crop_size": self.preprocess.crop_size,
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSpec":
        pp = d.get("preprocess")
        return cls(
            name=d["name"],
            role=d["role"],
            split=d["split"],
            source=source_from_dict(d["source"]),
            preprocess=PreprocessConfig(**pp) if pp else None,
        )


@dataclass(frozen=True)
class Dataset:
    """A fully materialized split: images, labels, and stable item ids."""

    name: str
    role: str
    split: str
    images: np.ndarray
    labels: np.ndarray
    ids: tuple[str, ...]
    spec: DatasetSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "images", as_image_batch(self.images))
        object.__setattr__(self, "labels", as_label_vector(self.labels, self.images.shape[0]))
        if len(self.ids) != self.images.shape[0]:
            raise ContractError("ids must match the number of images")

    def __len__(self) -> int:
        return self.images.shape[0]


def check_disjoint_splits(train: Dataset | DatasetSpec, test: Dataset | DatasetSpec) -> None:
    """Raise if the two splits can share an item identity."""
    a, b = _identity_set(train), _identity_set(test)
    overlap = a & b
    if overlap:
        raise ContractError(f"train/test splits share {len(overlap)} item identities")


def _identity_set(d: Dataset | DatasetSpec) -> set[str]:
    if isinstance(d, Dataset):
        return set(d.ids)
    src = d.source
    if isinstance(src, DirectorySource):
        return {p.name for p in sorted(Path(src.path).iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}
    return {f"{src.family}-{src.variant}-{src.seed_start + i}" for i in range(src.count)}


def materialize(spec: DatasetSpec, predictor=None, schedule=None) -> Dataset:
    """Load or synthesize every item of a spec into memory."""
    src = spec.source
    if isinstance(src, DirectorySource):
        images, ids = _load_directory(src, spec.preprocess or PreprocessConfig())
    else:
        images, ids = _generate(src, predictor=predictor, schedule=schedule)
    labels = np.full(images.shape[0], spec.label, dtype=np.int64)
    return Dataset(spec.name, spec.role, spec.split, images, labels, tuple(ids), spec=spec)


def _load_directory(src: DirectorySource, cfg: PreprocessConfig):
    root = Path(src.path)
    if not root.is_dir():
        raise DatasetError(f"dataset directory does not exist: {root}")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise DatasetError(f"dataset directory contains no images: {root}")
    batches = [preprocess(p.read_bytes(), cfg) for p in files]
    return np.concatenate(batches, axis=0), [p.name for p in files]


def _generate(src: GeneratorSource, predictor=None, schedule=None):
    from . import synthetic

    ids = [f"{src.family}-{src.variant}-{src.seed_start + i}" for i in range(src.count)]
    if src.count == 0:
        raise DatasetError("generator source has count 0")
    if src.family == "diffusion-sampler":
        if predictor is None or schedule is None:
            from .checkpoint import load_noise_predictor
            from .diffusion import DiffusionSchedule

            if src.predictor_path is None:
                raise DatasetError(
                    "diffusion-sampler spec needs an in-memory predictor or a predictor_path"
                )
            predictor = load_noise_predictor(src.predictor_path)
            if "alpha_bar" in predictor.meta:
                schedule = DiffusionSchedule(alpha_bar=np.asarray(predictor.meta["alpha_bar"]))
            else:
                schedule = DiffusionSchedule.linear(predictor.num_steps)
        images = synthetic.sample_diffusion_items(src, schedule, predictor)
    else:
        images = synthetic.sample_family_items(src)
    return images, ids


def iter_batches(
    images: np.ndarray,
    labels: np.ndarray,
    batch_size: int,
    rng: np.random.Generator | None = None,
    shuffle: bool = False,
) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Yield (x, y, indices) batches; uniform size except possibly the last."""
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    n = images.shape[0]
    order = np.arange(n)
    if shuffle:
        if rng is None:
            raise ContractError("shuffle=True requires an explicit rng")
        order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        yield images[idx], labels[idx], idx


def load_dataset(
    spec: DatasetSpec,
    batch_size: int,
    seed: int = 0,
    shuffle: bool = False,
    predictor=None,
    schedule=None,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Materialize a spec and return its deterministic batch sequence."""
    ds = materialize(spec, predictor=predictor, schedule=schedule)
    rng = np.random.default_rng(seed)
    return [(x, y) for x, y, _ in iter_batches(ds.images, ds.labels, batch_size, rng, shuffle)]


def concat_datasets(datasets: list[Dataset], name: str = "combined") -> Dataset:
    """Stack several materialized splits into one training pool."""
    if not datasets:
        raise DatasetError("cannot concatenate an empty dataset list")
    images = np.concatenate([d.images for d in datasets], axis=0)
    labels = np.concatenate([d.labels for d in datasets], axis=0)
    ids = tuple(f"{d.name}/{i}" for d in datasets for i in d.ids)
    split = datasets[0].split
    return Dataset(name, "mixed", split, images, labels, ids)
