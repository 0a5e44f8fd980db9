"""Recognition of new objects against a frozen model.

The target object's tokens are seated by Gibbs sweeps while the trained
counts stay fixed as the base measure. Topics created for the target (when
allowed) live above the frozen range and are pooled into a single "novel"
slot of every category posterior so posteriors from different runs align.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import gammaln

from . import kernel
from .corpus import DimensionError
from .model import TrainedModel
from .rng import derive_seed, kernel_seed


class ObservationError(ValueError):
    """Observations violate a recognition contract."""


@dataclass
class LatentSample:
    """One latent configuration for a target object.

    Tokens are in canonical order (modality id ascending, feature ascending);
    ``token_tables`` maps each token to a table, ``table_dishes`` each table
    to a topic (indices >= the model's num_topics are novel)."""

    observed_set: tuple[int, ...]
    token_modalities: np.ndarray
    token_features: np.ndarray
    token_tables: np.ndarray
    table_dishes: np.ndarray
    table_masses: np.ndarray

    @property
    def num_tables(self) -> int:
        return len(self.table_dishes)

    @property
    def total_mass(self) -> float:
        return float(self.table_masses.sum())


@dataclass
class RecognitionState:
    """Posterior over categories for one object given a modality subset."""

    category_posterior: np.ndarray  # length num_topics + 1, last = novel pool
    observed_set: tuple[int, ...]
    latent_samples: list[LatentSample] = field(default_factory=list)
    n_retained: int = 0


def _canonical_tokens(model: TrainedModel, observations: Mapping[int, np.ndarray]):
    tok_mod, tok_feat = [], []
    for mid in sorted(observations):
        mi = model.modality_index(mid)
        bof = np.asarray(observations[mid], dtype=np.int64)
        if len(bof) != model.dims[mi]:
            raise DimensionError(
                f"modality {mid}: BoF length {len(bof)} != dim {model.dims[mi]}")
        if np.any(bof < 0):
            raise ObservationError(f"modality {mid}: negative count")
        for x in range(len(bof)):
            for _ in range(int(bof[x])):
                tok_mod.append(mi)
                tok_feat.append(x)
    return (np.asarray(tok_mod, dtype=np.int64),
            np.asarray(tok_feat, dtype=np.int64))


class ChainContext:
    """Kernel array bundle for one target object over a frozen model."""

    def __init__(self, model: TrainedModel, observations: Mapping[int, np.ndarray],
                 allow_new_topics: bool = True):
        self.model = model
        self.allow_new = 1 if allow_new_topics else 0
        self.observed_set = tuple(sorted(observations))
        self.tok_mod, self.tok_feat = _canonical_tokens(model, observations)
        n = len(self.tok_mod)
        K = model.num_topics
        k_cap = K + n + 1
        Msz = len(model.modalities)
        dmax = model.dish_counts.shape[2] if K else int(model.dims.max())
        self.counts = np.zeros((k_cap, Msz, dmax))
        self.counts[:K] = model.dish_counts
        self.totals = self.counts.sum(axis=2)
        self.mtab = np.zeros(k_cap)
        self.mtab[:K] = model.dish_table_counts
        self.gints = np.array([K, int(round(model.dish_table_counts.sum()))],
                              dtype=np.int64)
        self.tok_table = np.full(n, -1, dtype=np.int64)
        self.obj_off = np.array([0, n], dtype=np.int64)
        self.tab_dish = np.zeros(max(n, 1), dtype=np.int64)
        self.tab_mass = np.zeros(max(n, 1))
        self.n_tables = np.zeros(1, dtype=np.int64)
        self.obj_mass = np.zeros(1)

    @classmethod
    def from_latent(cls, model: TrainedModel, latent: LatentSample,
                    allow_new_topics: bool = True) -> "ChainContext":
        obs = _latent_observations(model, latent)
        ctx = cls(model, obs, allow_new_topics)
        # seat tokens exactly as the latent prescribes
        T = latent.num_tables
        ctx.n_tables[0] = T
        K = model.num_topics
        novel = sorted(set(int(k) for k in latent.table_dishes if k >= K))
        remap = {k: K + i for i, k in enumerate(novel)}
        ctx.gints[0] = K + len(novel)
        for t in range(T):
            k = int(latent.table_dishes[t])
            k = remap.get(k, k)
            ctx.tab_dish[t] = k
            ctx.mtab[k] += 1.0
            ctx.gints[1] += 1
        for i in range(len(ctx.tok_mod)):
            t = int(latent.token_tables[i])
            k = ctx.tab_dish[t]
            mi = ctx.tok_mod[i]
            w = model.wts[mi]
            ctx.tok_table[i] = t
            ctx.tab_mass[t] += w
            ctx.obj_mass[0] += w
            ctx.counts[k, mi, ctx.tok_feat[i]] += w
            ctx.totals[k, mi] += w
        return ctx

    def snapshot_latent(self) -> LatentSample:
        T = int(self.n_tables[0])
        mids = np.array([self.model.modalities[mi].modality_id
                         for mi in self.tok_mod], dtype=np.int64)
        return LatentSample(
            observed_set=self.observed_set,
            token_modalities=mids,
            token_features=self.tok_feat.copy(),
            token_tables=self.tok_table.copy(),
            table_dishes=self.tab_dish[:T].copy(),
            table_masses=self.tab_mass[:T].copy(),
        )


def _latent_observations(model: TrainedModel, latent: LatentSample):
    obs = {}
    for mid in latent.observed_set:
        mi = model.modality_index(mid)
        d = int(model.dims[mi])
        bof = np.zeros(d, dtype=np.int64)
        sel = latent.token_modalities == mid
        for x in latent.token_features[sel]:
            bof[int(x)] += 1
        obs[mid] = bof
    return obs


def recognize(model: TrainedModel, observations: Mapping[int, np.ndarray],
              seed: int, *, allow_new_topics: bool = True,
              sweeps: int | None = None, burnin: int | None = None,
              keep_latents: bool = False) -> RecognitionState:
    """Gibbs recognition; posterior averages table-mass category fractions
    over the retained post-burn-in samples.

    An empty observation set returns the topic-size prior with no samples.
    """
    observations = dict(observations)
    total_tokens = int(sum(np.asarray(b).sum() for b in observations.values()))
    if not observations or total_tokens == 0:
        return RecognitionState(category_posterior=model.topic_size_prior(),
                                observed_set=tuple(sorted(observations)),
                                latent_samples=[], n_retained=0)
    sweeps = model.config.recog_sweeps if sweeps is None else sweeps
    burnin = model.config.recog_burnin if burnin is None else burnin
    if not 0 <= burnin < sweeps:
        raise ValueError("burnin must be in [0, sweeps)")

    ctx = ChainContext(model, observations, allow_new_topics)
    n = len(ctx.tok_mod)
    n_ret = sweeps - burnin
    post = np.zeros(model.num_topics + 1)
    if keep_latents:
        lt = np.zeros((n_ret, n), dtype=np.int64)
        ld = np.full((n_ret, n), -1, dtype=np.int64)
        ln = np.zeros(n_ret, dtype=np.int64)
        collect = 1
    else:
        lt = np.zeros((0, 0), dtype=np.int64)
        ld = np.zeros((0, 0), dtype=np.int64)
        ln = np.zeros(0, dtype=np.int64)
        collect = 0
    logp1 = np.zeros((0, 0))
    bof = np.zeros((0, 0), dtype=np.int64)
    kernel.run_chain(ctx.counts, ctx.totals, ctx.mtab, ctx.gints,
                     model.num_topics, ctx.allow_new,
                     model.alpha, model.wts, model.dims,
                     model.config.lam, model.config.gamma,
                     ctx.tok_mod, ctx.tok_feat, ctx.tok_table, ctx.obj_off,
                     ctx.tab_dish, ctx.tab_mass, ctx.n_tables, ctx.obj_mass,
                     sweeps, burnin, kernel_seed(seed),
                     post, -1, 0, logp1, bof,
                     collect, lt, ld, ln)
    samples = []
    if keep_latents:
        mids = np.array([model.modalities[mi].modality_id for mi in ctx.tok_mod],
                        dtype=np.int64)
        for r in range(n_ret):
            T = int(ln[r])
            samples.append(LatentSample(
                observed_set=ctx.observed_set,
                token_modalities=mids,
                token_features=ctx.tok_feat.copy(),
                token_tables=lt[r].copy(),
                table_dishes=ld[r, :T].copy(),
                table_masses=_masses_from(lt[r], ctx.tok_mod, model.wts, T),
            ))
    return RecognitionState(category_posterior=post,
                            observed_set=ctx.observed_set,
                            latent_samples=samples, n_retained=n_ret)


def _masses_from(token_tables, tok_mod, wts, T):
    masses = np.zeros(T)
    for i, t in enumerate(token_tables):
        masses[int(t)] += wts[tok_mod[i]]
    return masses


def sample_latent(model: TrainedModel, observations: Mapping[int, np.ndarray],
                  seed: int, *, allow_new_topics: bool = True,
                  burnin: int | None = None) -> LatentSample:
    """One post-burn-in latent draw for the target object."""
    observations = dict(observations)
    total_tokens = int(sum(np.asarray(b).sum() for b in observations.values()))
    if total_tokens == 0:
        return LatentSample(observed_set=tuple(sorted(observations)),
                            token_modalities=np.zeros(0, dtype=np.int64),
                            token_features=np.zeros(0, dtype=np.int64),
                            token_tables=np.zeros(0, dtype=np.int64),
                            table_dishes=np.zeros(0, dtype=np.int64),
                            table_masses=np.zeros(0))
    burnin = model.config.recog_burnin if burnin is None else burnin
    state = recognize(model, observations, seed, allow_new_topics=allow_new_topics,
                      sweeps=burnin + 1, burnin=burnin, keep_latents=True)
    return state.latent_samples[0]


def sample_latents(model: TrainedModel, observations, n: int, seed: int, *,
                   allow_new_topics: bool = True,
                   burnin: int | None = None) -> list[LatentSample]:
    """n consecutive post-burn-in latent draws from one chain."""
    burnin = model.config.recog_burnin if burnin is None else burnin
    state = recognize(model, observations, seed, allow_new_topics=allow_new_topics,
                      sweeps=burnin + n, burnin=burnin, keep_latents=True)
    return state.latent_samples


def category_posterior(model: TrainedModel, latent: LatentSample) -> np.ndarray:
    """Table-mass category fractions of one latent sample (novel pooled)."""
    post = np.zeros(model.num_topics + 1)
    total = latent.total_mass
    if total <= 0:
        return post
    for t in range(latent.num_tables):
        k = int(latent.table_dishes[t])
        slot = k if k < model.num_topics else model.num_topics
        post[slot] += latent.table_masses[t] / total
    return post


def table_posterior(model: TrainedModel, latent: LatentSample, modality_id: int,
                    feature: int, *, allow_new_topics: bool = True) -> np.ndarray:
    """Seat distribution for an incoming token: existing tables then new."""
    ctx = ChainContext.from_latent(model, latent, allow_new_topics)
    mi = model.modality_index(modality_id)
    if not 0 <= feature < model.dims[mi]:
        raise IndexError(f"feature {feature} out of range")
    out = np.zeros(int(ctx.n_tables[0]) + 1)
    kernel.probe_table_weights(mi, feature, ctx.allow_new, ctx.counts,
                               ctx.totals, ctx.mtab, ctx.gints, model.alpha,
                               model.dims, model.config.lam, model.config.gamma,
                               ctx.tab_dish, ctx.tab_mass, ctx.n_tables,
                               ctx.obj_off, out)
    return out


def dish_posterior(model: TrainedModel, latent: LatentSample, t: int, *,
                   allow_new_topics: bool = True) -> np.ndarray:
    """Dish distribution for table t: existing dishes then (optionally) new."""
    if not 0 <= t < latent.num_tables:
        raise IndexError(f"table {t} out of range")
    ctx = ChainContext.from_latent(model, latent, allow_new_topics)
    logw = np.empty(ctx.counts.shape[0] + 1)
    ncand = kernel.probe_dish_logweights(
        t, ctx.allow_new, ctx.counts, ctx.totals, ctx.mtab, ctx.gints,
        model.alpha, model.wts, model.dims, model.config.gamma,
        ctx.tok_mod, ctx.tok_feat, ctx.tok_table, ctx.obj_off, ctx.tab_dish,
        logw)
    lw = logw[:ncand]
    lw = lw - lw.max()
    p = np.exp(lw)
    return p / p.sum()


def modality_predictive(model: TrainedModel, latent: LatentSample,
                        modality_id: int, *,
                        allow_new_topics: bool = True) -> np.ndarray:
    """Snapshot one-token predictive p(x | latent) for an unobserved modality."""
    mi = model.modality_index(modality_id)
    ctx = ChainContext.from_latent(model, latent, allow_new_topics)
    out = np.zeros(int(model.dims[mi]))
    kernel.probe_p1(mi, ctx.allow_new, ctx.counts, ctx.totals, ctx.mtab,
                    ctx.gints, model.alpha, model.dims, model.config.lam,
                    model.config.gamma, ctx.tab_dish, ctx.tab_mass,
                    ctx.n_tables, ctx.obj_off, ctx.obj_mass, out)
    return out


def sample_modality(model: TrainedModel, latent: LatentSample,
                    modality_id: int, seed: int, *,
                    n_tokens: int | None = None,
                    allow_new_topics: bool = True) -> np.ndarray:
    """Cross-modal draw: a BoF for an unobserved modality given the latent."""
    if modality_id in latent.observed_set:
        raise ObservationError(f"modality {modality_id} is already observed")
    mi = model.modality_index(modality_id)
    p = modality_predictive(model, latent, modality_id,
                            allow_new_topics=allow_new_topics)
    n = model.spec(modality_id).token_count if n_tokens is None else n_tokens
    out = np.zeros(int(model.dims[mi]), dtype=np.int64)
    kernel.sample_bof_from_probs(p, int(model.dims[mi]), n,
                                 kernel_seed(derive_seed(seed, modality_id)), out)
    return out


def joint_modality_likelihood(model: TrainedModel, latent: LatentSample,
                              modality_id: int, bof, *,
                              allow_new_topics: bool = True) -> float:
    """log P(BoF | latent): multinomial under the snapshot predictive."""
    mi = model.modality_index(modality_id)
    bof = np.asarray(bof, dtype=np.int64)
    if len(bof) != model.dims[mi]:
        raise DimensionError(
            f"modality {modality_id}: BoF length {len(bof)} != dim {model.dims[mi]}")
    n = int(bof.sum())
    if n == 0:
        return 0.0
    p = modality_predictive(model, latent, modality_id,
                            allow_new_topics=allow_new_topics)
    logc = gammaln(n + 1) - gammaln(bof + 1).sum()
    return float(logc + (bof * np.log(p)).sum())


def collect_predictives(model: TrainedModel, observations, modality_id: int,
                        n_samples: int, seed: int, *,
                        allow_new_topics: bool = True,
                        burnin: int | None = None,
                        n_emit: int | None = None):
    """Chain-run helper for the MC IG estimator.

    Returns (logp1, bofs): per retained latent sample, the log snapshot
    predictive for the candidate modality and a BoF drawn iid from it.
    """
    observations = dict(observations)
    if modality_id in observations:
        raise ObservationError(f"modality {modality_id} is already observed")
    mi = model.modality_index(modality_id)
    d = int(model.dims[mi])
    n_emit = model.spec(modality_id).token_count if n_emit is None else n_emit
    burnin = model.config.recog_burnin if burnin is None else burnin

    # zero observed tokens is legal: the latent is vacuous, the predictive
    # reduces to the dish-prior mixture, and every estimate comes out 0
    ctx = ChainContext(model, observations, allow_new_topics)
    post = np.zeros(model.num_topics + 1)
    logp1 = np.zeros((n_samples, d))
    bofs = np.zeros((n_samples, d), dtype=np.int64)
    empty_i = np.zeros((0, 0), dtype=np.int64)
    kernel.run_chain(ctx.counts, ctx.totals, ctx.mtab, ctx.gints,
                     model.num_topics, ctx.allow_new,
                     model.alpha, model.wts, model.dims,
                     model.config.lam, model.config.gamma,
                     ctx.tok_mod, ctx.tok_feat, ctx.tok_table, ctx.obj_off,
                     ctx.tab_dish, ctx.tab_mass, ctx.n_tables, ctx.obj_mass,
                     burnin + n_samples, burnin, kernel_seed(seed),
                     post, mi, n_emit, logp1, bofs,
                     0, empty_i, empty_i, np.zeros(0, dtype=np.int64))
    return logp1, bofs
