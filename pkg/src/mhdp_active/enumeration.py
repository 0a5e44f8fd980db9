"""Exhaustive oracles for tiny instances.

These enumerate the full latent and observation spaces directly from the
generative factorization, independently of the Gibbs kernel, and exist to
check the sampler, the MC information-gain estimator, and the optimality /
submodularity properties. New-topic creation is disabled throughout so the
outcome space stays finite; samplers compared against these oracles must be
run with ``allow_new_topics=False``.
"""
from __future__ import annotations

import itertools
import math
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .model import TrainedModel
from .recognition import LatentSample, _canonical_tokens

BUDGET_TOKENS = 6
BUDGET_TOPICS = 3
BUDGET_DIM = 3


class EnumerationBudgetError(ValueError):
    """Instance exceeds the exhaustive-enumeration budget."""


def canonical_key(latent: LatentSample) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Relabel tables by first appearance in token order; key = (seating, dishes)."""
    relabel: dict[int, int] = {}
    seating = []
    for t in latent.token_tables:
        t = int(t)
        if t not in relabel:
            relabel[t] = len(relabel)
        seating.append(relabel[t])
    dishes = [0] * len(relabel)
    for old, new in relabel.items():
        dishes[new] = int(latent.table_dishes[old])
    return tuple(seating), tuple(dishes)


def _check_posterior_budget(model: TrainedModel, n_tokens: int):
    if n_tokens > BUDGET_TOKENS:
        raise EnumerationBudgetError(
            f"{n_tokens} observed tokens exceed the enumeration budget "
            f"({BUDGET_TOKENS})")
    if model.num_topics > BUDGET_TOPICS:
        raise EnumerationBudgetError(
            f"{model.num_topics} topics exceed the enumeration budget "
            f"({BUDGET_TOPICS})")


def exact_posterior(model: TrainedModel, observations: Mapping[int, np.ndarray]):
    """All latent seatings/dishings with exact probabilities (new topics off).

    Returns (outcomes, log_probs): outcomes are (seating, dishes) canonical
    keys aligned with :func:`canonical_key`.
    """
    tok_mi, tok_feat = _canonical_tokens(model, dict(observations))
    n = len(tok_mi)
    _check_posterior_budget(model, n)
    K = model.num_topics
    if K == 0:
        raise EnumerationBudgetError("model has no topics; nothing to enumerate")

    lam = model.config.lam
    frozen_tables = float(model.dish_table_counts.sum())
    alpha = model.alpha
    dims = model.dims
    base = model.dish_counts
    base_tot = model.dish_totals()

    # running overlay per existing dish
    over = np.zeros_like(base)
    over_tot = np.zeros_like(base_tot)
    seating: list[int] = []
    dishes: list[int] = []
    masses: list[float] = []
    outcomes = []
    logps = []

    def pred(k, mi, x):
        d = dims[mi]
        return ((base[k, mi, x] + over[k, mi, x] + alpha[mi])
                / (base_tot[k, mi] + over_tot[k, mi] + dims[mi] * alpha[mi]))

    def rec(i, logp):
        if i == n:
            outcomes.append((tuple(seating), tuple(dishes)))
            logps.append(logp)
            return
        mi = tok_mi[i]
        x = tok_feat[i]
        w = model.wts[mi]
        S = sum(masses)
        for t in range(len(dishes)):
            k = dishes[t]
            lp = (math.log(masses[t] / (lam + S)) + math.log(pred(k, mi, x)))
            seating.append(t)
            masses[t] += w
            over[k, mi, x] += w
            over_tot[k, mi] += w
            rec(i + 1, logp + lp)
            over[k, mi, x] -= w
            over_tot[k, mi] -= w
            masses[t] -= w
            seating.pop()
        m_tot = frozen_tables + len(dishes)
        for k in range(K):
            # dish prior renormalized over existing dishes (new topics off)
            mk = model.dish_table_counts[k] + sum(1 for dk in dishes if dk == k)
            lp = (math.log(lam / (lam + S)) + math.log(mk / m_tot)
                  + math.log(pred(k, mi, x)))
            seating.append(len(dishes))
            dishes.append(k)
            masses.append(w)
            over[k, mi, x] += w
            over_tot[k, mi] += w
            rec(i + 1, logp + lp)
            over[k, mi, x] -= w
            over_tot[k, mi] -= w
            masses.pop()
            dishes.pop()
            seating.pop()

    rec(0, 0.0)
    logps = np.asarray(logps)
    logps -= logsumexp(logps)
    return outcomes, logps


def _latent_predictive(model: TrainedModel, outcome, tok_mi, tok_feat,
                       target_mi: int) -> np.ndarray:
    """Snapshot one-token predictive for an enumerated latent outcome."""
    seating, dishes = outcome
    K = model.num_topics
    lam = model.config.lam
    d = int(model.dims[target_mi])
    over = np.zeros((K, d))
    over_tot = np.zeros(K)
    masses = [0.0] * len(dishes)
    for i, t in enumerate(seating):
        mi = tok_mi[i]
        w = model.wts[mi]
        masses[t] += w
        if mi == target_mi:
            over[dishes[t], tok_feat[i]] += w
            over_tot[dishes[t]] += w
    S = sum(masses)

    def pred_vec(k):
        counts = model.dish_counts[k, target_mi, :d] + over[k]
        tot = model.dish_totals()[k, target_mi] + over_tot[k]
        return (counts + model.alpha[target_mi]) / (tot + d * model.alpha[target_mi])

    p = np.zeros(d)
    for t, k in enumerate(dishes):
        p += (masses[t] / (S + lam)) * pred_vec(k)
    m_tot = float(model.dish_table_counts.sum()) + len(dishes)
    q = np.zeros(d)
    for k in range(K):
        mk = model.dish_table_counts[k] + sum(1 for dk in dishes if dk == k)
        q += (mk / m_tot) * pred_vec(k)
    p += (lam / (S + lam)) * q
    return p


def _bof_space(n: int, d: int):
    """All histograms of n tokens over d features."""
    if n == 0:
        return [tuple([0] * d)]
    out = []
    for cut in itertools.combinations(range(n + d - 1), d - 1):
        prev = -1
        counts = []
        for c in cut:
            counts.append(c - prev - 1)
            prev = c
        counts.append(n + d - 2 - prev)
        out.append(tuple(counts))
    return out


def _log_multinomial(bof, logp) -> float:
    n = sum(bof)
    acc = gammaln(n + 1)
    for c, lp in zip(bof, logp):
        acc += -gammaln(c + 1) + (c * lp if c else 0.0)
    return float(acc)


def _check_ig_budget(model: TrainedModel, target_ids: Sequence[int]):
    tot = 0
    for mid in target_ids:
        ms = model.spec(mid)
        if ms.dimension > BUDGET_DIM:
            raise EnumerationBudgetError(
                f"modality {mid} dimension {ms.dimension} exceeds {BUDGET_DIM}")
        tot += ms.token_count
    if tot > BUDGET_TOKENS:
        raise EnumerationBudgetError(
            f"{tot} target tokens exceed the enumeration budget ({BUDGET_TOKENS})")


def _joint_bof_logliks(model, outcomes, tok_mi, tok_feat, target_ids):
    """Per target modality: (bof space, loglik matrix [outcome, bof])."""
    spaces = []
    for mid in target_ids:
        mi = model.modality_index(mid)
        d = int(model.dims[mi])
        n = model.spec(mid).token_count
        bofs = _bof_space(n, d)
        ll = np.empty((len(outcomes), len(bofs)))
        for zi, outcome in enumerate(outcomes):
            logp = np.log(_latent_predictive(model, outcome, tok_mi, tok_feat, mi))
            for bi, bof in enumerate(bofs):
                ll[zi, bi] = _log_multinomial(bof, logp)
        spaces.append((bofs, ll))
    return spaces


def exact_ig(model: TrainedModel, observations: Mapping[int, np.ndarray],
             target_set: Sequence[int]) -> float:
    """IG(latent; target modalities | observations) by full enumeration."""
    target_ids = sorted(set(target_set))
    if not target_ids:
        return 0.0
    observations = dict(observations)
    for mid in target_ids:
        if mid in observations:
            raise ValueError(f"modality {mid} is already observed")
    _check_ig_budget(model, target_ids)
    tok_mi, tok_feat = _canonical_tokens(model, observations)
    outcomes, logpz = exact_posterior(model, observations)
    spaces = _joint_bof_logliks(model, outcomes, tok_mi, tok_feat, target_ids)

    ig = 0.0
    for combo in itertools.product(*(range(len(b)) for b, _ in spaces)):
        ll = np.zeros(len(outcomes))
        for (bofs, mat), bi in zip(spaces, combo):
            ll += mat[:, bi]
        joint = logpz + ll                    # log P(z, X)
        log_px = logsumexp(joint)             # log P(X)
        # sum_z P(z,X) * [log P(X|z) - log P(X)]
        ig += float(np.sum(np.exp(joint) * (ll - log_px)))
    return ig


def expected_final_kl(model: TrainedModel, observations: Mapping[int, np.ndarray],
                      candidate_set: Sequence[int]) -> float:
    """E over unobserved data of KL(latent posterior | all, latent posterior
    | observed + candidates), by full enumeration."""
    observations = dict(observations)
    all_ids = [ms.modality_id for ms in model.modalities]
    unobserved = sorted(set(all_ids) - set(observations))
    cand = sorted(set(candidate_set))
    if not set(cand) <= set(unobserved):
        raise ValueError("candidate_set must be unobserved modalities")
    if not unobserved:
        return 0.0
    _check_ig_budget(model, unobserved)
    tok_mi, tok_feat = _canonical_tokens(model, observations)
    outcomes, logpz = exact_posterior(model, observations)
    spaces = _joint_bof_logliks(model, outcomes, tok_mi, tok_feat, unobserved)
    cand_pos = [ui for ui, mid in enumerate(unobserved) if mid in cand]

    expect = 0.0
    for combo in itertools.product(*(range(len(b)) for b, _ in spaces)):
        ll_full = np.zeros(len(outcomes))
        ll_cand = np.zeros(len(outcomes))
        for ui, ((bofs, mat), bi) in enumerate(zip(spaces, combo)):
            ll_full += mat[:, bi]
            if ui in cand_pos:
                ll_cand += mat[:, bi]
        joint_full = logpz + ll_full
        log_px = logsumexp(joint_full)        # log P(X^unobs | obs)
        post_full = joint_full - log_px
        post_cand = logpz + ll_cand
        post_cand -= logsumexp(post_cand)
        kl = float(np.sum(np.exp(post_full) * (post_full - post_cand)))
        expect += math.exp(log_px) * kl
    return expect
