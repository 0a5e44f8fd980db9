"""Multimodal bag-of-features data model, serialization, and synthetic corpus.

Observations are per-modality feature histograms (bags of features). The
synthetic generator realizes the assumed generative process: one multinomial
parameter per (category, modality), pure categories drawn from symmetric
Dirichlets, mixed categories averaging two pure parents, and per-object
histograms drawn multinomially at a fixed token budget.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .rng import DATASET_RNG_ID


class ConfigError(ValueError):
    """Invalid configuration values."""


class DimensionError(ValueError):
    """Vector length does not match a declared modality dimension."""


class DataFormatError(ValueError):
    """A dataset or model file failed validation; message carries context."""


@dataclass(frozen=True)
class ModalitySpec:
    """One action-sensation channel: histogram dimension, token budget, weight.

    ``alpha0`` records the Dirichlet base used when the data was generated
    (or a chosen emission prior for real data); the model mirrors it as the
    default emission prior.
    """

    modality_id: int
    dimension: int
    token_count: int
    weight: float = 1.0
    alpha0: float = 0.1

    def __post_init__(self):
        if self.dimension < 1:
            raise ConfigError(f"modality {self.modality_id}: dimension must be >= 1")
        if self.token_count < 0:
            raise ConfigError(f"modality {self.modality_id}: token_count must be >= 0")
        if self.weight < 0:
            raise ConfigError(f"modality {self.modality_id}: weight must be >= 0")
        if self.alpha0 <= 0:
            raise ConfigError(f"modality {self.modality_id}: alpha0 must be > 0")


@dataclass
class ObjectRecord:
    """One object's observations: modality_id -> integer count vector."""

    object_id: int
    observations: dict[int, np.ndarray]
    truth_label: int | None = None

    def __eq__(self, other):
        if not isinstance(other, ObjectRecord):
            return NotImplemented
        return (
            self.object_id == other.object_id
            and self.truth_label == other.truth_label
            and set(self.observations) == set(other.observations)
            and all(np.array_equal(self.observations[m], other.observations[m])
                    for m in self.observations)
        )


@dataclass
class Dataset:
    modalities: list[ModalitySpec]
    objects: list[ObjectRecord]
    meta: dict = field(default_factory=dict)

    def spec(self, modality_id: int) -> ModalitySpec:
        for ms in self.modalities:
            if ms.modality_id == modality_id:
                return ms
        raise KeyError(f"modality {modality_id} not declared")

    def modality_ids(self) -> list[int]:
        return [ms.modality_id for ms in self.modalities]

    def validate(self):
        ids = self.modality_ids()
        if len(set(ids)) != len(ids):
            raise DataFormatError("duplicate modality ids")
        by_id = {ms.modality_id: ms for ms in self.modalities}
        for obj in self.objects:
            for mid, bof in obj.observations.items():
                if mid not in by_id:
                    raise DataFormatError(
                        f"object {obj.object_id}: undeclared modality {mid}")
                if len(bof) != by_id[mid].dimension:
                    raise DimensionError(
                        f"object {obj.object_id}, modality {mid}: BoF length "
                        f"{len(bof)} != declared dimension {by_id[mid].dimension}")
                if np.any(np.asarray(bof) < 0):
                    raise DataFormatError(
                        f"object {obj.object_id}, modality {mid}: negative count")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.modalities == other.modalities and self.objects == other.objects)


def default_alpha_schedule(num_modalities: int) -> list[float]:
    """Per-modality Dirichlet bases: 10 for the first modality (nearly
    uniform, uninformative), 0.4*(m-1) for the rest (1-indexed m)."""
    if num_modalities < 1:
        raise ConfigError("num_modalities must be >= 1")
    return [10.0] + [0.4 * m for m in range(1, num_modalities)]


@dataclass(frozen=True)
class SyntheticConfig:
    num_pure: int = 14
    num_mixed: int = 7
    objects_per_class: int = 3
    num_modalities: int = 20
    dimension: int = 10
    tokens_per_modality: int = 20
    dirichlet_base: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("num_pure", "objects_per_class", "num_modalities",
                     "dimension", "tokens_per_modality"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.num_mixed < 0:
            raise ConfigError("num_mixed must be >= 0")
        if self.num_mixed * 2 > self.num_pure:
            raise ConfigError("num_mixed must be <= num_pure / 2 "
                              "(each mixed category blends a disjoint pure pair)")
        if self.dirichlet_base is not None:
            if len(self.dirichlet_base) != self.num_modalities:
                raise ConfigError("dirichlet_base must list one alpha per modality")
            if any(a <= 0 for a in self.dirichlet_base):
                raise ConfigError("dirichlet_base entries must be > 0")

    def alphas(self) -> list[float]:
        if self.dirichlet_base is not None:
            return list(self.dirichlet_base)
        return default_alpha_schedule(self.num_modalities)


def mix_parameters(theta_a, theta_b) -> np.ndarray:
    """Element-wise mean of two probability vectors."""
    a = np.asarray(theta_a, dtype=float)
    b = np.asarray(theta_b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    for name, v in (("first", a), ("second", b)):
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise ConfigError(f"{name} argument is not a probability vector")
    return 0.5 * (a + b)


def resample_bof(histogram, target_count: int, seed: int) -> np.ndarray:
    """Redraw a histogram at a fixed token budget.

    target_count i.i.d. categorical draws from the normalized histogram;
    supports ingesting externally computed feature counts.
    """
    h = np.asarray(histogram, dtype=float)
    if np.any(h < 0):
        raise ConfigError("histogram entries must be >= 0")
    total = h.sum()
    if total <= 0:
        raise ConfigError("cannot resample from an all-zero histogram")
    if target_count < 0:
        raise ConfigError("target_count must be >= 0")
    rng = np.random.default_rng(seed)
    return rng.multinomial(target_count, h / total).astype(np.int64)


def _draw_parameters(rng: np.random.Generator, config: SyntheticConfig) -> np.ndarray:
    alphas = config.alphas()
    d = config.dimension
    pure = np.empty((config.num_pure, config.num_modalities, d))
    for c in range(config.num_pure):
        for mi in range(config.num_modalities):
            pure[c, mi] = rng.dirichlet(np.full(d, alphas[mi]))
    thetas = [pure[c] for c in range(config.num_pure)]
    for i in range(config.num_mixed):
        mixed = np.empty((config.num_modalities, d))
        for mi in range(config.num_modalities):
            mixed[mi] = mix_parameters(pure[2 * i, mi], pure[2 * i + 1, mi])
        thetas.append(mixed)
    return np.stack(thetas)


def synthetic_parameters(config: SyntheticConfig) -> np.ndarray:
    """The per-category multinomial parameters the generator draws,
    [category, modality, feature]; pure categories first, then mixed."""
    return _draw_parameters(np.random.default_rng(config.seed), config)


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Draw a labeled multimodal dataset from the assumed generative process.

    Pure category parameters come from symmetric Dirichlet(alpha_m); the
    i-th mixed category averages pure parents (2i, 2i+1) (0-indexed).
    Deterministic given config.seed.
    """
    rng = np.random.default_rng(config.seed)
    d = config.dimension
    alphas = config.alphas()
    thetas = _draw_parameters(rng, config)

    modalities = [
        ModalitySpec(modality_id=mi + 1, dimension=d,
                     token_count=config.tokens_per_modality,
                     weight=1.0, alpha0=alphas[mi])
        for mi in range(config.num_modalities)
    ]

    objects = []
    oid = 0
    for label, theta in enumerate(thetas):
        for _ in range(config.objects_per_class):
            obs = {}
            for mi in range(config.num_modalities):
                obs[mi + 1] = rng.multinomial(
                    config.tokens_per_modality, theta[mi]).astype(np.int64)
            objects.append(ObjectRecord(object_id=oid, observations=obs,
                                        truth_label=label))
            oid += 1

    ds = Dataset(modalities=modalities, objects=objects,
                 meta={"rng": DATASET_RNG_ID, "seed": config.seed,
                       "generator": "synthetic",
                       "num_pure": config.num_pure, "num_mixed": config.num_mixed,
                       "objects_per_class": config.objects_per_class,
                       "dimension": d,
                       "tokens_per_modality": config.tokens_per_modality,
                       "dirichlet_base": alphas})
    ds.validate()
    return ds


def dataset_to_json(dataset: Dataset) -> str:
    doc = {
        "meta": {"rng": DATASET_RNG_ID, **dataset.meta},
        "modalities": [
            {"id": ms.modality_id, "dim": ms.dimension, "tokens": ms.token_count,
             "weight": ms.weight, "alpha0": ms.alpha0}
            for ms in dataset.modalities
        ],
        "objects": [
            {"id": obj.object_id,
             **({"label": obj.truth_label} if obj.truth_label is not None else {}),
             "bof": {str(mid): [int(c) for c in bof]
                     for mid, bof in sorted(obj.observations.items())}}
            for obj in dataset.objects
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def save_dataset(dataset: Dataset, path):
    dataset.validate()
    with open(path, "w") as fh:
        fh.write(dataset_to_json(dataset))
        fh.write("\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: not valid JSON ({exc})") from exc
    try:
        modalities = [
            ModalitySpec(modality_id=int(m["id"]), dimension=int(m["dim"]),
                         token_count=int(m["tokens"]),
                         weight=float(m.get("weight", 1.0)),
                         alpha0=float(m.get("alpha0", 0.1)))
            for m in doc["modalities"]
        ]
        objects = []
        for entry in doc.get("objects", []):
            obs = {int(mid): np.asarray(counts, dtype=np.int64)
                   for mid, counts in entry["bof"].items()}
            label = entry.get("label")
            objects.append(ObjectRecord(object_id=int(entry["id"]),
                                        observations=obs,
                                        truth_label=None if label is None else int(label)))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: malformed dataset document ({exc})") from exc
    ds = Dataset(modalities=modalities, objects=objects, meta=doc.get("meta", {}))
    ds.validate()
    return ds


def observations_subset(record: ObjectRecord | Mapping[int, np.ndarray],
                        modality_ids: Sequence[int] | None = None) -> dict[int, np.ndarray]:
    """Extract a modality -> BoF map, optionally restricted to a subset."""
    obs = record.observations if isinstance(record, ObjectRecord) else dict(record)
    if modality_ids is None:
        return dict(obs)
    missing = [m for m in modality_ids if m not in obs]
    if missing:
        raise KeyError(f"object does not carry modalities {missing}")
    return {m: obs[m] for m in modality_ids}
