"""Compiled Chinese-restaurant-franchise Gibbs kernel.

One implementation serves both training and recognition: the dish count
arrays start from a frozen base (zero for training, the trained counts for
recognition) and every sweep mutates only what the swept objects added.
Dish slots below ``k_frozen`` are permanent; slots above it are created and
garbage-collected as tables come and go.

Conventions:
  * all "counts" are weight-scaled (a token of modality m contributes w_m),
  * table indices are local to their object; table slot blocks are aligned
    with the object's token block, so an object can never run out of slots,
  * randomness comes from an explicit splitmix64 stream so results are a
    pure function of the seed.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_U53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _next_uniform(rs):
    rs[0] = rs[0] + np.uint64(0x9E3779B97F4A7C15)
    z = rs[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * _U53


@njit(cache=True, inline="always")
def _pred(counts, totals, alpha, dims, k, mi, x):
    # posterior predictive of one token under dish k: (W_kx + a) / (W_k + d a)
    return (counts[k, mi, x] + alpha[mi]) / (totals[k, mi] + dims[mi] * alpha[mi])


@njit(cache=True)
def _sample_index(w, n, total, rs):
    u = _next_uniform(rs) * total
    c = 0.0
    for i in range(n):
        c += w[i]
        if u < c:
            return i
    return n - 1


@njit(cache=True)
def _sample_log_index(logw, n, rs):
    mx = -np.inf
    for i in range(n):
        if logw[i] > mx:
            mx = logw[i]
    total = 0.0
    for i in range(n):
        logw[i] = np.exp(logw[i] - mx)
        total += logw[i]
    return _sample_index(logw, n, total, rs)


@njit(cache=True)
def _remove_dish(k, counts, totals, mtab, gints, tab_dish, n_tables, obj_off):
    # dish k serves no table anywhere; recycle its slot (swap-with-last)
    lastk = gints[0] - 1
    if k != lastk:
        counts[k, :, :] = counts[lastk, :, :]
        totals[k, :] = totals[lastk, :]
        mtab[k] = mtab[lastk]
        for j in range(n_tables.shape[0]):
            off = obj_off[j]
            for t in range(n_tables[j]):
                if tab_dish[off + t] == lastk:
                    tab_dish[off + t] = k
    counts[lastk, :, :] = 0.0
    totals[lastk, :] = 0.0
    mtab[lastk] = 0.0
    gints[0] -= 1


@njit(cache=True)
def _remove_token(i, j, k_frozen, counts, totals, mtab, gints, wts,
                  tok_mod, tok_feat, tok_table, obj_off,
                  tab_dish, tab_mass, n_tables, obj_mass):
    mi = tok_mod[i]
    off = obj_off[j]
    t = tok_table[i]
    gt = off + t
    k = tab_dish[gt]
    w = wts[mi]
    tab_mass[gt] -= w
    obj_mass[j] -= w
    counts[k, mi, tok_feat[i]] -= w
    totals[k, mi] -= w
    tok_table[i] = -1
    if tab_mass[gt] < 1e-12:
        # table emptied: drop it, compacting the slot block
        mtab[k] -= 1.0
        gints[1] -= 1
        last = n_tables[j] - 1
        if t != last:
            tab_dish[gt] = tab_dish[off + last]
            tab_mass[gt] = tab_mass[off + last]
            for q in range(off, obj_off[j + 1]):
                if tok_table[q] == last:
                    tok_table[q] = t
        tab_mass[off + last] = 0.0
        n_tables[j] -= 1
        if mtab[k] < 0.5 and k >= k_frozen:
            _remove_dish(k, counts, totals, mtab, gints, tab_dish, n_tables, obj_off)


@njit(cache=True)
def _table_weights(j, mi, x, allow_new, counts, totals, mtab, gints,
                   alpha, dims, lam, gamma, tab_dish, tab_mass, n_tables,
                   obj_off, wbuf):
    """Unnormalized seat weights for one incoming token of (modality, feature).

    wbuf[0..T-1] existing tables, wbuf[T] new table (dish-prior mixture).
    The common denominator lam + object mass is dropped.
    """
    off = obj_off[j]
    ntab = n_tables[j]
    total = 0.0
    for t in range(ntab):
        w = tab_mass[off + t] * _pred(counts, totals, alpha, dims,
                                      tab_dish[off + t], mi, x)
        wbuf[t] = w
        total += w
    q = 0.0
    for k in range(gints[0]):
        if mtab[k] > 0.0:
            q += mtab[k] * _pred(counts, totals, alpha, dims, k, mi, x)
    if allow_new:
        q += gamma / dims[mi]
        q /= gamma + gints[1]
    else:
        q /= gints[1]
    wbuf[ntab] = lam * q
    return total + wbuf[ntab]


@njit(cache=True)
def _seat_token(i, j, t_choice, rs, allow_new, counts, totals, mtab, gints,
                alpha, wts, dims, gamma, tok_mod, tok_feat, tok_table,
                obj_off, tab_dish, tab_mass, n_tables, obj_mass, dbuf):
    mi = tok_mod[i]
    x = tok_feat[i]
    off = obj_off[j]
    if t_choice == n_tables[j]:
        # new table: draw its dish from the single-token dish posterior
        nd = gints[0]
        total = 0.0
        for k in range(nd):
            dbuf[k] = mtab[k] * _pred(counts, totals, alpha, dims, k, mi, x)
            total += dbuf[k]
        ncand = nd
        if allow_new:
            dbuf[nd] = gamma / dims[mi]
            total += dbuf[nd]
            ncand += 1
        kidx = _sample_index(dbuf, ncand, total, rs)
        if kidx == nd:
            gints[0] += 1  # fresh slot is pre-zeroed
        tab_dish[off + t_choice] = kidx
        tab_mass[off + t_choice] = 0.0
        n_tables[j] += 1
        mtab[kidx] += 1.0
        gints[1] += 1
    gt = off + t_choice
    k = tab_dish[gt]
    w = wts[mi]
    tab_mass[gt] += w
    obj_mass[j] += w
    counts[k, mi, x] += w
    totals[k, mi] += w
    tok_table[i] = t_choice


@njit(cache=True)
def _sweep_tokens(j, rs, k_frozen, allow_new, counts, totals, mtab, gints,
                  alpha, wts, dims, lam, gamma, tok_mod, tok_feat, tok_table,
                  obj_off, tab_dish, tab_mass, n_tables, obj_mass, wbuf, dbuf):
    for i in range(obj_off[j], obj_off[j + 1]):
        _remove_token(i, j, k_frozen, counts, totals, mtab, gints, wts,
                      tok_mod, tok_feat, tok_table, obj_off,
                      tab_dish, tab_mass, n_tables, obj_mass)
        total = _table_weights(j, tok_mod[i], tok_feat[i], allow_new, counts,
                               totals, mtab, gints, alpha, dims, lam, gamma,
                               tab_dish, tab_mass, n_tables, obj_off, wbuf)
        t = _sample_index(wbuf, n_tables[j] + 1, total, rs)
        _seat_token(i, j, t, rs, allow_new, counts, totals, mtab, gints,
                    alpha, wts, dims, gamma, tok_mod, tok_feat, tok_table,
                    obj_off, tab_dish, tab_mass, n_tables, obj_mass, dbuf)


@njit(cache=True)
def _init_object(j, rs, allow_new, counts, totals, mtab, gints,
                 alpha, wts, dims, lam, gamma, tok_mod, tok_feat, tok_table,
                 obj_off, tab_dish, tab_mass, n_tables, obj_mass, wbuf, dbuf):
    # sequential prior-predictive seating: insert without removal
    for i in range(obj_off[j], obj_off[j + 1]):
        total = _table_weights(j, tok_mod[i], tok_feat[i], allow_new, counts,
                               totals, mtab, gints, alpha, dims, lam, gamma,
                               tab_dish, tab_mass, n_tables, obj_off, wbuf)
        t = _sample_index(wbuf, n_tables[j] + 1, total, rs)
        _seat_token(i, j, t, rs, allow_new, counts, totals, mtab, gints,
                    alpha, wts, dims, gamma, tok_mod, tok_feat, tok_table,
                    obj_off, tab_dish, tab_mass, n_tables, obj_mass, dbuf)


@njit(cache=True)
def _table_loglik(j, t, k, counts, totals, mtab, alpha, wts, dims,
                  tok_mod, tok_feat, tok_table, obj_off, run, runtot):
    """log P(table t's tokens | dish k counts), sequential DM predictive.

    Caller must have excluded the table's own tokens from the dish counts.
    ``run``/``runtot`` accumulate the table's tokens and are re-zeroed here.
    """
    acc = 0.0
    for i in range(obj_off[j], obj_off[j + 1]):
        if tok_table[i] != t:
            continue
        mi = tok_mod[i]
        x = tok_feat[i]
        num = counts[k, mi, x] + run[mi, x] + alpha[mi]
        den = totals[k, mi] + runtot[mi] + dims[mi] * alpha[mi]
        acc += np.log(num / den)
        run[mi, x] += wts[mi]
        runtot[mi] += wts[mi]
    for i in range(obj_off[j], obj_off[j + 1]):
        if tok_table[i] == t:
            run[tok_mod[i], tok_feat[i]] = 0.0
            runtot[tok_mod[i]] = 0.0
    return acc


@njit(cache=True)
def _dish_logweights(j, t, allow_new, counts, totals, mtab, gints, alpha,
                     wts, dims, gamma, tok_mod, tok_feat, tok_table, obj_off,
                     logw, run, runtot):
    """Unnormalized log weights over {existing dishes, new dish} for table t.

    Expects table t's tokens and its table-count already excluded from the
    dish arrays. The zeroed slot gints[0] stands in for the empty dish.
    """
    nd = gints[0]
    for k in range(nd):
        if mtab[k] > 0.0:
            logw[k] = np.log(mtab[k]) + _table_loglik(
                j, t, k, counts, totals, mtab, alpha, wts, dims,
                tok_mod, tok_feat, tok_table, obj_off, run, runtot)
        else:
            logw[k] = -np.inf
    ncand = nd
    if allow_new:
        logw[nd] = np.log(gamma) + _table_loglik(
            j, t, nd, counts, totals, mtab, alpha, wts, dims,
            tok_mod, tok_feat, tok_table, obj_off, run, runtot)
        ncand += 1
    return ncand


@njit(cache=True)
def _exclude_table(j, t, counts, totals, mtab, gints, wts,
                   tok_mod, tok_feat, tok_table, obj_off, tab_dish):
    gt = obj_off[j] + t
    k = tab_dish[gt]
    for i in range(obj_off[j], obj_off[j + 1]):
        if tok_table[i] == t:
            counts[k, tok_mod[i], tok_feat[i]] -= wts[tok_mod[i]]
            totals[k, tok_mod[i]] -= wts[tok_mod[i]]
    mtab[k] -= 1.0
    gints[1] -= 1
    return k


@njit(cache=True)
def _include_table(j, t, k, counts, totals, mtab, gints, wts,
                   tok_mod, tok_feat, tok_table, obj_off, tab_dish):
    gt = obj_off[j] + t
    tab_dish[gt] = k
    for i in range(obj_off[j], obj_off[j + 1]):
        if tok_table[i] == t:
            counts[k, tok_mod[i], tok_feat[i]] += wts[tok_mod[i]]
            totals[k, tok_mod[i]] += wts[tok_mod[i]]
    mtab[k] += 1.0
    gints[1] += 1


@njit(cache=True)
def _sweep_dishes(j, rs, k_frozen, allow_new, counts, totals, mtab, gints,
                  alpha, wts, dims, gamma, tok_mod, tok_feat, tok_table,
                  obj_off, tab_dish, n_tables, logw, run, runtot):
    for t in range(n_tables[j]):
        k_old = _exclude_table(j, t, counts, totals, mtab, gints, wts,
                               tok_mod, tok_feat, tok_table, obj_off, tab_dish)
        nd = gints[0]
        ncand = _dish_logweights(j, t, allow_new, counts, totals, mtab, gints,
                                 alpha, wts, dims, gamma, tok_mod, tok_feat,
                                 tok_table, obj_off, logw, run, runtot)
        kidx = _sample_log_index(logw, ncand, rs)
        if kidx == nd:
            gints[0] += 1
        _include_table(j, t, kidx, counts, totals, mtab, gints, wts,
                       tok_mod, tok_feat, tok_table, obj_off, tab_dish)
        if mtab[k_old] < 0.5 and k_old >= k_frozen and k_old != kidx:
            _remove_dish(k_old, counts, totals, mtab, gints,
                         tab_dish, n_tables, obj_off)


@njit(cache=True)
def _p1_probs(j, mi, allow_new, counts, totals, mtab, gints, alpha, dims,
              lam, gamma, tab_dish, tab_mass, n_tables, obj_off, obj_mass, out):
    """Snapshot one-token predictive over modality mi's features.

    Mixture of the latent state's table predictives (by mass) and the
    new-table dish mixture (by lam); sums to 1 exactly.
    """
    d = dims[mi]
    for x in range(d):
        out[x] = 0.0
    off = obj_off[j]
    den = obj_mass[j] + lam
    for t in range(n_tables[j]):
        k = tab_dish[off + t]
        frac = tab_mass[off + t] / den
        for x in range(d):
            out[x] += frac * _pred(counts, totals, alpha, dims, k, mi, x)
    lamfrac = lam / den
    if allow_new:
        mden = gamma + gints[1]
    else:
        mden = np.float64(gints[1])
    for k in range(gints[0]):
        if mtab[k] > 0.0:
            f2 = lamfrac * mtab[k] / mden
            for x in range(d):
                out[x] += f2 * _pred(counts, totals, alpha, dims, k, mi, x)
    if allow_new:
        u = lamfrac * gamma / mden / d
        for x in range(d):
            out[x] += u


@njit(cache=True)
def _accumulate_posterior(j, k_frozen, tab_dish, tab_mass, n_tables,
                          obj_off, obj_mass, post):
    # Eq.-(3)-style category masses: table mass per dish, novel dishes pooled
    off = obj_off[j]
    for t in range(n_tables[j]):
        k = tab_dish[off + t]
        slot = k if k < k_frozen else k_frozen
        post[slot] += tab_mass[off + t] / obj_mass[j]


@njit(cache=True)
def run_chain(counts, totals, mtab, gints, k_frozen, allow_new,
              alpha, wts, dims, lam, gamma,
              tok_mod, tok_feat, tok_table, obj_off,
              tab_dish, tab_mass, n_tables, obj_mass,
              sweeps, burnin, seed,
              post_acc, collect_mi, n_emit,
              logp1_out, bof_out,
              collect_latent, latent_tables_out, latent_dishes_out,
              latent_ntab_out):
    """Recognition chain over one target object against a frozen base.

    Retains every post-burn-in sweep: accumulates the pooled category
    posterior, and optionally per-retained-sample the log one-token
    predictive for modality ``collect_mi`` plus a BoF of ``n_emit`` tokens
    drawn iid from it, and/or latent snapshots.
    """
    rs = np.empty(1, dtype=np.uint64)
    rs[0] = np.uint64(seed)
    n = obj_off[1] - obj_off[0]
    nmod = alpha.shape[0]
    dmax = counts.shape[2]
    wbuf = np.empty(n + 1, dtype=np.float64)
    dbuf = np.empty(counts.shape[0] + 1, dtype=np.float64)
    logw = np.empty(counts.shape[0] + 1, dtype=np.float64)
    run = np.zeros((nmod, dmax), dtype=np.float64)
    runtot = np.zeros(nmod, dtype=np.float64)
    pbuf = np.empty(dmax, dtype=np.float64)

    _init_object(0, rs, allow_new, counts, totals, mtab, gints, alpha, wts,
                 dims, lam, gamma, tok_mod, tok_feat, tok_table, obj_off,
                 tab_dish, tab_mass, n_tables, obj_mass, wbuf, dbuf)
    r = 0
    n_ret = sweeps - burnin
    for s in range(sweeps):
        _sweep_tokens(0, rs, k_frozen, allow_new, counts, totals, mtab, gints,
                      alpha, wts, dims, lam, gamma, tok_mod, tok_feat,
                      tok_table, obj_off, tab_dish, tab_mass, n_tables,
                      obj_mass, wbuf, dbuf)
        _sweep_dishes(0, rs, k_frozen, allow_new, counts, totals, mtab, gints,
                      alpha, wts, dims, gamma, tok_mod, tok_feat, tok_table,
                      obj_off, tab_dish, n_tables, logw, run, runtot)
        if s < burnin:
            continue
        _accumulate_posterior(0, k_frozen, tab_dish, tab_mass, n_tables,
                              obj_off, obj_mass, post_acc)
        if collect_mi >= 0:
            _p1_probs(0, collect_mi, allow_new, counts, totals, mtab, gints,
                      alpha, dims, lam, gamma, tab_dish, tab_mass, n_tables,
                      obj_off, obj_mass, pbuf)
            d = dims[collect_mi]
            for x in range(d):
                logp1_out[r, x] = np.log(pbuf[x])
            for _ in range(n_emit):
                u = _next_uniform(rs)
                c = 0.0
                feat = d - 1
                for x in range(d):
                    c += pbuf[x]
                    if u < c:
                        feat = x
                        break
                bof_out[r, feat] += 1
        if collect_latent != 0:
            for i in range(n):
                latent_tables_out[r, i] = tok_table[i]
            for t in range(n_tables[0]):
                latent_dishes_out[r, t] = tab_dish[t]
            latent_ntab_out[r] = n_tables[0]
        r += 1
    if n_ret > 0:
        for slot in range(post_acc.shape[0]):
            post_acc[slot] /= n_ret
    return 0


@njit(cache=True)
def run_training(counts, totals, mtab, gints,
                 alpha, wts, dims, lam, gamma,
                 tok_mod, tok_feat, tok_table, obj_off,
                 tab_dish, tab_mass, n_tables, obj_mass,
                 sweeps, seed):
    """Collapsed Gibbs over the whole corpus from sequential-CRF init."""
    rs = np.empty(1, dtype=np.uint64)
    rs[0] = np.uint64(seed)
    nobj = n_tables.shape[0]
    nmod = alpha.shape[0]
    dmax = counts.shape[2]
    maxtok = 0
    for j in range(nobj):
        nj = obj_off[j + 1] - obj_off[j]
        if nj > maxtok:
            maxtok = nj
    wbuf = np.empty(maxtok + 1, dtype=np.float64)
    dbuf = np.empty(counts.shape[0] + 1, dtype=np.float64)
    logw = np.empty(counts.shape[0] + 1, dtype=np.float64)
    run = np.zeros((nmod, dmax), dtype=np.float64)
    runtot = np.zeros(nmod, dtype=np.float64)

    for j in range(nobj):
        _init_object(j, rs, 1, counts, totals, mtab, gints, alpha, wts, dims,
                     lam, gamma, tok_mod, tok_feat, tok_table, obj_off,
                     tab_dish, tab_mass, n_tables, obj_mass, wbuf, dbuf)
    for _ in range(sweeps):
        for j in range(nobj):
            _sweep_tokens(j, rs, 0, 1, counts, totals, mtab, gints, alpha,
                          wts, dims, lam, gamma, tok_mod, tok_feat, tok_table,
                          obj_off, tab_dish, tab_mass, n_tables, obj_mass,
                          wbuf, dbuf)
        for j in range(nobj):
            _sweep_dishes(j, rs, 0, 1, counts, totals, mtab, gints, alpha,
                          wts, dims, gamma, tok_mod, tok_feat, tok_table,
                          obj_off, tab_dish, n_tables, logw, run, runtot)
    return 0


@njit(cache=True)
def probe_table_weights(mi, x, allow_new, counts, totals, mtab, gints, alpha,
                        dims, lam, gamma, tab_dish, tab_mass, n_tables,
                        obj_off, out):
    total = _table_weights(0, mi, x, allow_new, counts, totals, mtab, gints,
                           alpha, dims, lam, gamma, tab_dish, tab_mass,
                           n_tables, obj_off, out)
    for t in range(n_tables[0] + 1):
        out[t] /= total


@njit(cache=True)
def probe_dish_logweights(t, allow_new, counts, totals, mtab, gints, alpha,
                          wts, dims, gamma, tok_mod, tok_feat, tok_table,
                          obj_off, tab_dish, logw):
    """Dish distribution for table t with exclusion; restores state after."""
    nmod = alpha.shape[0]
    run = np.zeros((nmod, counts.shape[2]), dtype=np.float64)
    runtot = np.zeros(nmod, dtype=np.float64)
    k_old = _exclude_table(0, t, counts, totals, mtab, gints, wts,
                           tok_mod, tok_feat, tok_table, obj_off, tab_dish)
    ncand = _dish_logweights(0, t, allow_new, counts, totals, mtab, gints,
                             alpha, wts, dims, gamma, tok_mod, tok_feat,
                             tok_table, obj_off, logw, run, runtot)
    _include_table(0, t, k_old, counts, totals, mtab, gints, wts,
                   tok_mod, tok_feat, tok_table, obj_off, tab_dish)
    return ncand


@njit(cache=True)
def probe_p1(mi, allow_new, counts, totals, mtab, gints, alpha, dims,
             lam, gamma, tab_dish, tab_mass, n_tables, obj_off, obj_mass, out):
    _p1_probs(0, mi, allow_new, counts, totals, mtab, gints, alpha, dims,
              lam, gamma, tab_dish, tab_mass, n_tables, obj_off, obj_mass, out)


@njit(cache=True)
def sample_bof_from_probs(probs, d, n_tokens, seed, out):
    rs = np.empty(1, dtype=np.uint64)
    rs[0] = np.uint64(seed)
    for _ in range(n_tokens):
        u = _next_uniform(rs)
        c = 0.0
        feat = d - 1
        for x in range(d):
            c += probs[x]
            if u < c:
                feat = x
                break
        out[feat] += 1
