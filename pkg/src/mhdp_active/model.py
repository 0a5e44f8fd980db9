"""Model configuration, collapsed Gibbs training, and the frozen model.

A trained model is the frozen count summary of the final Gibbs state:
weighted per-topic per-modality feature counts plus tables-per-topic.
Token-level training assignments are internal to :func:`train`; recognition
and planning only ever condition on the counts.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .corpus import ConfigError, DataFormatError, Dataset, ModalitySpec
from .rng import SAMPLER_RNG_ID, kernel_seed

NEW_TOPIC = -1  # sentinel for the empty-topic predictive


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters: lam seats tokens at tables, gamma opens new topics,
    alpha0 is the per-modality emission prior."""

    lam: float = 1.0
    gamma: float = 1.0
    alpha0: dict[int, float] = field(default_factory=dict)
    weights: dict[int, float] = field(default_factory=dict)
    train_sweeps: int = 200
    recog_sweeps: int = 50
    recog_burnin: int = 10

    def __post_init__(self):
        if self.lam <= 0 or self.gamma <= 0:
            raise ConfigError("lam and gamma must be > 0")
        if any(a <= 0 for a in self.alpha0.values()):
            raise ConfigError("alpha0 values must be > 0")
        if any(w < 0 for w in self.weights.values()):
            raise ConfigError("weights must be >= 0")
        if self.train_sweeps < 1 or self.recog_sweeps < 1:
            raise ConfigError("sweep counts must be >= 1")
        if not 0 <= self.recog_burnin < self.recog_sweeps:
            raise ConfigError("recog_burnin must be in [0, recog_sweeps)")


def default_config(dataset: Dataset, **overrides) -> ModelConfig:
    """Config whose emission priors and weights mirror the dataset's specs."""
    base = dict(
        alpha0={ms.modality_id: ms.alpha0 for ms in dataset.modalities},
        weights={ms.modality_id: ms.weight for ms in dataset.modalities},
    )
    base.update(overrides)
    return ModelConfig(**base)


class TrainedModel:
    """Frozen franchise state: immutable after construction.

    dish_counts[k, mi, x] holds the weighted count of feature x of modality
    index mi under topic k; dish_table_counts[k] is the number of tables
    serving topic k across the training corpus.
    """

    def __init__(self, config: ModelConfig, modalities: list[ModalitySpec],
                 dish_counts: np.ndarray, dish_table_counts: np.ndarray,
                 training_posteriors: np.ndarray | None = None,
                 meta: dict | None = None):
        self.config = config
        self.modalities = sorted(modalities, key=lambda ms: ms.modality_id)
        self.dish_counts = np.ascontiguousarray(dish_counts, dtype=np.float64)
        self.dish_table_counts = np.ascontiguousarray(dish_table_counts,
                                                      dtype=np.float64)
        self.training_posteriors = training_posteriors  # in-memory only
        self.meta = dict(meta or {})
        self._index = {ms.modality_id: i for i, ms in enumerate(self.modalities)}
        self.dims = np.array([ms.dimension for ms in self.modalities], dtype=np.int64)
        self.alpha = np.array([config.alpha0.get(ms.modality_id, ms.alpha0)
                               for ms in self.modalities], dtype=np.float64)
        self.wts = np.array([config.weights.get(ms.modality_id, ms.weight)
                             for ms in self.modalities], dtype=np.float64)
        self._validate()

    def _validate(self):
        K, Msz, dmax = self.dish_counts.shape
        if Msz != len(self.modalities):
            raise DataFormatError("dish_counts modality axis mismatch")
        if dmax < int(self.dims.max(initial=1)):
            raise DataFormatError("dish_counts feature axis smaller than a modality")
        if self.dish_table_counts.shape != (K,):
            raise DataFormatError("dish_table_counts length mismatch")
        if K and np.any(self.dish_table_counts < 1):
            raise DataFormatError("every frozen topic must serve at least one table")
        if np.any(self.dish_counts < 0):
            raise DataFormatError("negative frozen count")

    @property
    def num_topics(self) -> int:
        return self.dish_counts.shape[0]

    def modality_index(self, modality_id: int) -> int:
        try:
            return self._index[modality_id]
        except KeyError:
            raise KeyError(f"modality {modality_id} not part of the model") from None

    def spec(self, modality_id: int) -> ModalitySpec:
        return self.modalities[self.modality_index(modality_id)]

    def dish_totals(self) -> np.ndarray:
        return self.dish_counts.sum(axis=2)

    def topic_size_prior(self) -> np.ndarray:
        """Normalized weighted token mass per topic, novel slot zero."""
        prior = np.zeros(self.num_topics + 1)
        masses = self.dish_counts.sum(axis=(1, 2))
        total = masses.sum()
        if total > 0:
            prior[:-1] = masses / total
        elif self.num_topics:
            prior[:-1] = 1.0 / self.num_topics
        return prior

    def __eq__(self, other):
        if not isinstance(other, TrainedModel):
            return NotImplemented
        return (self.config == other.config
                and self.modalities == other.modalities
                and np.array_equal(self.dish_counts, other.dish_counts)
                and np.array_equal(self.dish_table_counts, other.dish_table_counts))


def predictive_token_prob(model: TrainedModel, k: int, modality_id: int,
                          feature_index: int) -> float:
    """Probability that topic k emits the given feature of the modality.

    ``k == NEW_TOPIC`` evaluates the empty topic (uniform 1/d).
    """
    mi = model.modality_index(modality_id)
    d = int(model.dims[mi])
    if not 0 <= feature_index < d:
        raise IndexError(f"feature {feature_index} out of range for modality "
                         f"{modality_id} (dim {d})")
    a = model.alpha[mi]
    if k == NEW_TOPIC:
        return 1.0 / d
    if not 0 <= k < model.num_topics:
        raise IndexError(f"topic {k} out of range")
    return float((model.dish_counts[k, mi, feature_index] + a)
                 / (model.dish_counts[k, mi, :d].sum() + d * a))


def _flatten_tokens(dataset: Dataset, model_dims: np.ndarray,
                    index: dict[int, int]):
    """Expand histograms to canonical token streams (modality asc, feature asc)."""
    tok_mod, tok_feat, offsets = [], [], [0]
    for obj in dataset.objects:
        for mid in sorted(obj.observations):
            mi = index[mid]
            bof = np.asarray(obj.observations[mid], dtype=np.int64)
            for x in range(len(bof)):
                for _ in range(int(bof[x])):
                    tok_mod.append(mi)
                    tok_feat.append(x)
        offsets.append(len(tok_mod))
    return (np.asarray(tok_mod, dtype=np.int64),
            np.asarray(tok_feat, dtype=np.int64),
            np.asarray(offsets, dtype=np.int64))


def train(dataset: Dataset, config: ModelConfig | None = None,
          seed: int = 0) -> TrainedModel:
    """Run collapsed Gibbs over the corpus and freeze the final state."""
    dataset.validate()
    if not dataset.objects:
        raise ConfigError("cannot train on an empty dataset")
    if config is None:
        config = default_config(dataset)
    modalities = sorted(dataset.modalities, key=lambda ms: ms.modality_id)
    index = {ms.modality_id: i for i, ms in enumerate(modalities)}
    dims = np.array([ms.dimension for ms in modalities], dtype=np.int64)
    alpha = np.array([config.alpha0.get(ms.modality_id, ms.alpha0)
                      for ms in modalities], dtype=np.float64)
    wts = np.array([config.weights.get(ms.modality_id, ms.weight)
                    for ms in modalities], dtype=np.float64)

    tok_mod, tok_feat, obj_off = _flatten_tokens(dataset, dims, index)
    n_total = len(tok_mod)
    if n_total == 0:
        raise ConfigError("dataset holds no tokens")
    nobj = len(dataset.objects)
    dmax = int(dims.max())
    k_cap = n_total + 1

    counts = np.zeros((k_cap, len(modalities), dmax))
    totals = np.zeros((k_cap, len(modalities)))
    mtab = np.zeros(k_cap)
    gints = np.zeros(2, dtype=np.int64)
    tok_table = np.full(n_total, -1, dtype=np.int64)
    tab_dish = np.zeros(n_total, dtype=np.int64)
    tab_mass = np.zeros(n_total)
    n_tables = np.zeros(nobj, dtype=np.int64)
    obj_mass = np.zeros(nobj)

    kernel.run_training(counts, totals, mtab, gints, alpha, wts, dims,
                        config.lam, config.gamma,
                        tok_mod, tok_feat, tok_table, obj_off,
                        tab_dish, tab_mass, n_tables, obj_mass,
                        config.train_sweeps, kernel_seed(seed))

    K = int(gints[0])
    post = np.zeros((nobj, K + 1))
    for j in range(nobj):
        off = obj_off[j]
        for t in range(n_tables[j]):
            post[j, tab_dish[off + t]] += tab_mass[off + t] / obj_mass[j]

    return TrainedModel(config=config, modalities=modalities,
                        dish_counts=counts[:K].copy(),
                        dish_table_counts=mtab[:K].copy(),
                        training_posteriors=post,
                        meta={"rng": SAMPLER_RNG_ID, "seed": seed,
                              "train_sweeps": config.train_sweeps})


def model_to_json(model: TrainedModel) -> str:
    counts = {}
    for ms in model.modalities:
        mi = model.modality_index(ms.modality_id)
        counts[str(ms.modality_id)] = [
            [float(c) for c in model.dish_counts[k, mi, :ms.dimension]]
            for k in range(model.num_topics)
        ]
    doc = {
        "meta": {"rng": SAMPLER_RNG_ID, **model.meta},
        "config": {
            "lambda": model.config.lam,
            "gamma": model.config.gamma,
            "alpha0": {str(m): a for m, a in sorted(model.config.alpha0.items())},
            "weights": {str(m): w for m, w in sorted(model.config.weights.items())},
            "train_sweeps": model.config.train_sweeps,
            "recog_sweeps": model.config.recog_sweeps,
            "recog_burnin": model.config.recog_burnin,
        },
        "modalities": [
            {"id": ms.modality_id, "dim": ms.dimension, "tokens": ms.token_count,
             "weight": ms.weight, "alpha0": ms.alpha0}
            for ms in model.modalities
        ],
        "topics": {
            "count": model.num_topics,
            "tables_per_topic": [float(m) for m in model.dish_table_counts],
            "feature_counts": counts,
        },
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def save_model(model: TrainedModel, path):
    with open(path, "w") as fh:
        fh.write(model_to_json(model))
        fh.write("\n")


def load_model(path) -> TrainedModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: not valid JSON ({exc})") from exc
    try:
        cfg = doc["config"]
        config = ModelConfig(
            lam=float(cfg["lambda"]), gamma=float(cfg["gamma"]),
            alpha0={int(m): float(a) for m, a in cfg["alpha0"].items()},
            weights={int(m): float(w) for m, w in cfg["weights"].items()},
            train_sweeps=int(cfg["train_sweeps"]),
            recog_sweeps=int(cfg["recog_sweeps"]),
            recog_burnin=int(cfg["recog_burnin"]),
        )
        modalities = [
            ModalitySpec(modality_id=int(m["id"]), dimension=int(m["dim"]),
                         token_count=int(m["tokens"]),
                         weight=float(m["weight"]), alpha0=float(m["alpha0"]))
            for m in doc["modalities"]
        ]
        modalities.sort(key=lambda ms: ms.modality_id)
        K = int(doc["topics"]["count"])
        dmax = max(ms.dimension for ms in modalities)
        dish_counts = np.zeros((K, len(modalities), dmax))
        fc = doc["topics"]["feature_counts"]
        for i, ms in enumerate(modalities):
            rows = fc[str(ms.modality_id)]
            if len(rows) != K:
                raise DataFormatError(
                    f"{path}: feature_counts for modality {ms.modality_id} has "
                    f"{len(rows)} topics, expected {K}")
            for k in range(K):
                if len(rows[k]) != ms.dimension:
                    raise DataFormatError(
                        f"{path}: topic {k}, modality {ms.modality_id}: length "
                        f"{len(rows[k])} != dim {ms.dimension}")
                dish_counts[k, i, :ms.dimension] = rows[k]
        tables = np.asarray(doc["topics"]["tables_per_topic"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataFormatError):
            raise
        raise DataFormatError(f"{path}: malformed model document ({exc})") from exc
    return TrainedModel(config=config, modalities=modalities,
                        dish_counts=dish_counts, dish_table_counts=tables,
                        meta=doc.get("meta", {}))
