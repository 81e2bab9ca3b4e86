"""Numba-compiled hot kernels: batch loss/gradients and candidate scoring.

Same signatures as kernels_numpy; selected via mmkge.kernels.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _project_row(proj, feats, src, out):
    de, dm = proj.shape
    for a in range(de):
        acc = 0.0
        for b in range(dm):
            acc += proj[a, b] * feats[src, b]
        out[a] = acc


@njit(cache=True)
def _norm_and_grad(d, p, gd, want):
    # returns ||d||_p; fills gd with the subgradient of the norm at d
    n = d.shape[0]
    s = 0.0
    if p == 1:
        for l in range(n):
            v = d[l]
            s += abs(v)
            if want:
                gd[l] = 1.0 if v > 0.0 else (-1.0 if v < 0.0 else 0.0)
    else:
        for l in range(n):
            s += d[l] * d[l]
        s = np.sqrt(s)
        if want:
            if s > 0.0:
                for l in range(n):
                    gd[l] = d[l] / s
            else:
                for l in range(n):
                    gd[l] = 0.0
    return s


@njit(cache=True)
def _assembly_score(struct, rel, feats, gs, gr, gp,
                    hs, ts, r, hm, tm, hm_src, tm_src,
                    c_ss, c_mm, c_sm, c_ms, c_all,
                    p, w, want, d, gd, gmh, gmt):
    """Score one embedding assembly (hs/hm head, ts/tm tail, relation r).

    hm/tm are precomputed multimodal embedding vectors whose raw features
    live at rows hm_src/tm_src of feats (needed for the projection grad).
    With want=True, w-weighted loss gradients are accumulated into gs/gr/gp.
    """
    de = struct.shape[1]
    dm = feats.shape[1]
    score = 0.0
    if want:
        for l in range(de):
            gmh[l] = 0.0
            gmt[l] = 0.0

    if c_ss:
        for l in range(de):
            d[l] = struct[hs, l] + rel[r, l] - struct[ts, l]
        s = _norm_and_grad(d, p, gd, want)
        score -= s
        if want:
            for l in range(de):
                g = w * gd[l]
                gs[hs, l] -= g
                gr[r, l] -= g
                gs[ts, l] += g
    if c_mm:
        for l in range(de):
            d[l] = hm[l] + rel[r, l] - tm[l]
        s = _norm_and_grad(d, p, gd, want)
        score -= s
        if want:
            for l in range(de):
                g = w * gd[l]
                gmh[l] -= g
                gr[r, l] -= g
                gmt[l] += g
    if c_sm:
        for l in range(de):
            d[l] = struct[hs, l] + rel[r, l] - tm[l]
        s = _norm_and_grad(d, p, gd, want)
        score -= s
        if want:
            for l in range(de):
                g = w * gd[l]
                gs[hs, l] -= g
                gr[r, l] -= g
                gmt[l] += g
    if c_ms:
        for l in range(de):
            d[l] = hm[l] + rel[r, l] - struct[ts, l]
        s = _norm_and_grad(d, p, gd, want)
        score -= s
        if want:
            for l in range(de):
                g = w * gd[l]
                gmh[l] -= g
                gr[r, l] -= g
                gs[ts, l] += g
    if c_all:
        for l in range(de):
            d[l] = struct[hs, l] + hm[l] + rel[r, l] - struct[ts, l] - tm[l]
        s = _norm_and_grad(d, p, gd, want)
        score -= s
        if want:
            for l in range(de):
                g = w * gd[l]
                gs[hs, l] -= g
                gmh[l] -= g
                gr[r, l] -= g
                gs[ts, l] += g
                gmt[l] += g

    if want:
        # chain modal-embedding grads through the projection: gp += g (outer) feat
        if c_mm or c_ms or c_all:
            for a in range(de):
                g = gmh[a]
                if g != 0.0:
                    for b in range(dm):
                        gp[a, b] += g * feats[hm_src, b]
        if c_mm or c_sm or c_all:
            for a in range(de):
                g = gmt[a]
                if g != 0.0:
                    for b in range(dm):
                        gp[a, b] += g * feats[tm_src, b]
    return score


@njit(cache=True)
def _neg_entity_score(struct, rel, feats, gs, gr, gp,
                      h, t, r, hm, tm, e, em_j, corrupt_tail, twins,
                      c_ss, c_mm, c_sm, c_ms, c_all,
                      p, w, want, d, gd, gmh, gmt):
    """Entity-level assembly: the corrupted slot is fully replaced by e.

    Under twins only the unimodal components score this assembly; the
    multimodal ones come from _neg_modal_score instead.
    """
    e_sm = c_sm and not twins
    e_ms = c_ms and not twins
    e_all = c_all and not twins
    if corrupt_tail:
        return _assembly_score(struct, rel, feats, gs, gr, gp,
                               h, e, r, hm, em_j, h, e,
                               c_ss, c_mm, e_sm, e_ms, e_all,
                               p, w, want, d, gd, gmh, gmt)
    return _assembly_score(struct, rel, feats, gs, gr, gp,
                           e, t, r, em_j, tm, e, t,
                           c_ss, c_mm, e_sm, e_ms, e_all,
                           p, w, want, d, gd, gmh, gmt)


@njit(cache=True)
def _neg_modal_score(struct, rel, feats, gs, gr, gp,
                     h, t, r, hm, tm, e, em_j, corrupt_tail,
                     c_sm, c_ms, c_all,
                     p, w, want, d, gd, gmh, gmt):
    """Modal-level assembly (twins): only the corrupted slot's multimodal
    embedding is replaced; its structural embedding stays the original's."""
    if corrupt_tail:
        return _assembly_score(struct, rel, feats, gs, gr, gp,
                               h, t, r, hm, em_j, h, e,
                               False, False, c_sm, c_ms, c_all,
                               p, w, want, d, gd, gmh, gmt)
    return _assembly_score(struct, rel, feats, gs, gr, gp,
                           h, t, r, em_j, tm, e, t,
                           False, False, c_sm, c_ms, c_all,
                           p, w, want, d, gd, gmh, gmt)


@njit(cache=True)
def loss_and_grads(struct, rel, proj, feats,
                   ph, pr, pt, slot, nent, slot2, nent2, same_draws, twins,
                   c_ss, c_mm, c_sm, c_ms, c_all,
                   p, gamma, per_pair, want_grads,
                   gs, gr, gp):
    """Margin-rank loss of one batch; gradients accumulate into gs/gr/gp.

    slot/nent hold the entity-level draws; slot2/nent2 the modal-level ones
    (twins only; identical arrays when same_draws). Returns
    (loss, active_positive_count). With per_pair=False the hinge is taken per
    positive over the mean of its k negatives; with per_pair=True per
    (positive, negative) pair, averaged over k.
    """
    B = ph.shape[0]
    k = nent.shape[1]
    de = struct.shape[1]
    hm = np.empty(de)
    tm = np.empty(de)
    em = np.empty((k, de))
    em2 = np.empty((k, de))
    d = np.empty(de)
    gd = np.empty(de)
    gmh = np.empty(de)
    gmt = np.empty(de)
    fneg = np.empty(k)
    need_modal = c_mm or c_sm or c_ms or c_all
    need_second = twins and not same_draws

    total = 0.0
    active = 0
    for i in range(B):
        h = ph[i]
        r = pr[i]
        t = pt[i]
        if need_modal:
            _project_row(proj, feats, h, hm)
            _project_row(proj, feats, t, tm)
            for j in range(k):
                _project_row(proj, feats, nent[i, j], em[j])
                if need_second:
                    _project_row(proj, feats, nent2[i, j], em2[j])

        fpos = _assembly_score(struct, rel, feats, gs, gr, gp,
                               h, t, r, hm, tm, h, t,
                               c_ss, c_mm, c_sm, c_ms, c_all,
                               p, 0.0, False, d, gd, gmh, gmt)
        for j in range(k):
            f = _neg_entity_score(struct, rel, feats, gs, gr, gp,
                                  h, t, r, hm, tm, nent[i, j], em[j],
                                  slot[i, j] == 1, twins,
                                  c_ss, c_mm, c_sm, c_ms, c_all,
                                  p, 0.0, False, d, gd, gmh, gmt)
            if twins:
                emj = em2[j] if need_second else em[j]
                f += _neg_modal_score(struct, rel, feats, gs, gr, gp,
                                      h, t, r, hm, tm, nent2[i, j], emj,
                                      slot2[i, j] == 1,
                                      c_sm, c_ms, c_all,
                                      p, 0.0, False, d, gd, gmh, gmt)
            fneg[j] = f

        if per_pair:
            n_active = 0
            for j in range(k):
                z = gamma - fpos + fneg[j]
                if z > 0.0:
                    total += z / k
                    n_active += 1
                    if want_grads:
                        _assembly_score(struct, rel, feats, gs, gr, gp,
                                        h, t, r, hm, tm, h, t,
                                        c_ss, c_mm, c_sm, c_ms, c_all,
                                        p, -1.0 / k, True, d, gd, gmh, gmt)
                        _neg_entity_score(struct, rel, feats, gs, gr, gp,
                                          h, t, r, hm, tm, nent[i, j], em[j],
                                          slot[i, j] == 1, twins,
                                          c_ss, c_mm, c_sm, c_ms, c_all,
                                          p, 1.0 / k, True, d, gd, gmh, gmt)
                        if twins:
                            emj = em2[j] if need_second else em[j]
                            _neg_modal_score(struct, rel, feats, gs, gr, gp,
                                             h, t, r, hm, tm, nent2[i, j], emj,
                                             slot2[i, j] == 1,
                                             c_sm, c_ms, c_all,
                                             p, 1.0 / k, True, d, gd, gmh, gmt)
            if n_active > 0:
                active += 1
        else:
            mean_neg = 0.0
            for j in range(k):
                mean_neg += fneg[j]
            mean_neg /= k
            z = gamma - fpos + mean_neg
            if z > 0.0:
                total += z
                active += 1
                if want_grads:
                    _assembly_score(struct, rel, feats, gs, gr, gp,
                                    h, t, r, hm, tm, h, t,
                                    c_ss, c_mm, c_sm, c_ms, c_all,
                                    p, -1.0, True, d, gd, gmh, gmt)
                    for j in range(k):
                        _neg_entity_score(struct, rel, feats, gs, gr, gp,
                                          h, t, r, hm, tm, nent[i, j], em[j],
                                          slot[i, j] == 1, twins,
                                          c_ss, c_mm, c_sm, c_ms, c_all,
                                          p, 1.0 / k, True, d, gd, gmh, gmt)
                        if twins:
                            emj = em2[j] if need_second else em[j]
                            _neg_modal_score(struct, rel, feats, gs, gr, gp,
                                             h, t, r, hm, tm, nent2[i, j], emj,
                                             slot2[i, j] == 1,
                                             c_sm, c_ms, c_all,
                                             p, 1.0 / k, True, d, gd, gmh, gmt)
    return total, active


@njit(cache=True)
def composite_scores(S, M, xs, xm, xa, c_ss, c_mm, c_sm, c_ms, c_all, p, out):
    """Composite score of every candidate entity against fixed query vectors.

    S/M are the structural and (cached) multimodal embedding matrices; for
    tail prediction xs = h_s + r, xm = h_m + r, xa = h_s + h_m + r, and the
    component-to-query mapping is ss:(xs,S) mm:(xm,M) sm:(xs,M) ms:(xm,S)
    all:(xa,S+M). Head prediction reuses the kernel with xs = t_s - r etc.
    and the sm/ms flags swapped by the caller.
    """
    E, de = S.shape
    for e in range(E):
        acc = 0.0
        if c_ss:
            s = 0.0
            if p == 1:
                for l in range(de):
                    s += abs(xs[l] - S[e, l])
            else:
                for l in range(de):
                    v = xs[l] - S[e, l]
                    s += v * v
                s = np.sqrt(s)
            acc -= s
        if c_mm:
            s = 0.0
            if p == 1:
                for l in range(de):
                    s += abs(xm[l] - M[e, l])
            else:
                for l in range(de):
                    v = xm[l] - M[e, l]
                    s += v * v
                s = np.sqrt(s)
            acc -= s
        if c_sm:
            s = 0.0
            if p == 1:
                for l in range(de):
                    s += abs(xs[l] - M[e, l])
            else:
                for l in range(de):
                    v = xs[l] - M[e, l]
                    s += v * v
                s = np.sqrt(s)
            acc -= s
        if c_ms:
            s = 0.0
            if p == 1:
                for l in range(de):
                    s += abs(xm[l] - S[e, l])
            else:
                for l in range(de):
                    v = xm[l] - S[e, l]
                    s += v * v
                s = np.sqrt(s)
            acc -= s
        if c_all:
            s = 0.0
            if p == 1:
                for l in range(de):
                    s += abs(xa[l] - S[e, l] - M[e, l])
            else:
                for l in range(de):
                    v = xa[l] - S[e, l] - M[e, l]
                    s += v * v
                s = np.sqrt(s)
            acc -= s
        out[e] = acc
