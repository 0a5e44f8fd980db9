import numpy as np
import pytest

from mhdp_active import (Dataset, ModalitySpec, ModelConfig, ObjectRecord,
                         SyntheticConfig, TrainedModel, default_config,
                         generate_synthetic, train)


def make_tiny_model(n_topics=2, dims=(2, 3), tokens=(2, 2), alpha=0.4,
                    counts=None, tables=None, lam=1.0, gamma=1.0,
                    recog_sweeps=30, recog_burnin=10, weights=None):
    """Hand-built frozen model for oracle-backed tests."""
    mods = [ModalitySpec(i + 1, d, t, 1.0 if weights is None else weights[i],
                         alpha)
            for i, (d, t) in enumerate(zip(dims, tokens))]
    cfg = ModelConfig(
        lam=lam, gamma=gamma,
        alpha0={i + 1: alpha for i in range(len(dims))},
        weights={i + 1: (1.0 if weights is None else weights[i])
                 for i in range(len(dims))},
        recog_sweeps=recog_sweeps, recog_burnin=recog_burnin)
    dmax = max(dims)
    if counts is None:
        rng = np.random.default_rng(0)
        counts = np.zeros((n_topics, len(dims), dmax))
        for k in range(n_topics):
            for mi, d in enumerate(dims):
                counts[k, mi, :d] = rng.integers(0, 7, d)
    if tables is None:
        tables = np.arange(1, n_topics + 1, dtype=float)
    return TrainedModel(cfg, mods, np.asarray(counts, dtype=float),
                        np.asarray(tables, dtype=float))


def random_tiny_instance(rng, n_modalities=3, max_dim=3, max_tokens=2,
                         max_topics=3, observe_first=True):
    """Random enumerable instance: (model, observations) within oracle budget."""
    K = int(rng.integers(2, max_topics + 1))
    dims = tuple(int(rng.integers(2, max_dim + 1)) for _ in range(n_modalities))
    tokens = tuple(int(rng.integers(1, max_tokens + 1)) for _ in range(n_modalities))
    dmax = max(dims)
    counts = np.zeros((K, n_modalities, dmax))
    for k in range(K):
        for mi, d in enumerate(dims):
            counts[k, mi, :d] = rng.integers(0, 7, d)
    tables = rng.integers(1, 4, K).astype(float)
    model = make_tiny_model(n_topics=K, dims=dims, tokens=tokens,
                            counts=counts, tables=tables)
    obs = {}
    if observe_first:
        d0 = dims[0]
        bof = np.zeros(d0, dtype=np.int64)
        for _ in range(tokens[0]):
            bof[int(rng.integers(0, d0))] += 1
        obs[1] = bof
    return model, obs


def make_separable_dataset(n_per=3, tokens=12):
    """Two generating categories with disjoint supports (d=4)."""
    mods = [ModalitySpec(1, 4, tokens, 1.0, 0.1)]
    objs = []
    rng = np.random.default_rng(5)
    for j in range(2 * n_per):
        bof = np.zeros(4, dtype=np.int64)
        half = rng.multinomial(tokens, [0.6, 0.4])
        if j < n_per:
            bof[:2] = half
        else:
            bof[2:] = half
        objs.append(ObjectRecord(j, {1: bof}, truth_label=j // n_per))
    return Dataset(modalities=mods, objects=objs)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic(SyntheticConfig(
        num_pure=4, num_mixed=2, objects_per_class=2, num_modalities=5,
        dimension=6, tokens_per_modality=10, seed=3))


@pytest.fixture(scope="session")
def small_model(small_dataset):
    return train(small_dataset, default_config(small_dataset, train_sweeps=60),
                 seed=4)
