"""Pure-numpy fallback kernels, signature-compatible with kernels_numba.

The loss kernel loops over positives/negatives in Python and vectorizes
over embedding dimensions only; it is the slow-but-simple reference path.
Candidate scoring is fully vectorized over entities.
"""

from __future__ import annotations

import numpy as np


def _norm_and_grad(d, p, want):
    if p == 1:
        s = float(np.sum(np.abs(d)))
        gd = np.sign(d) if want else None
    else:
        s = float(np.sqrt(np.sum(d * d)))
        if want:
            gd = d / s if s > 0.0 else np.zeros_like(d)
        else:
            gd = None
    return s, gd


def _assembly_score(struct, rel, feats, gs, gr, gp,
                    hs, ts, r, hm, tm, hm_src, tm_src,
                    c_ss, c_mm, c_sm, c_ms, c_all,
                    p, w, want):
    score = 0.0
    gmh = np.zeros_like(hm) if want else None
    gmt = np.zeros_like(tm) if want else None
    rv = rel[r]

    def _comp(a, b):
        s, gd = _norm_and_grad(a + rv - b, p, want)
        return -s, gd

    if c_ss:
        f, gd = _comp(struct[hs], struct[ts])
        score += f
        if want:
            gs[hs] -= w * gd
            gr[r] -= w * gd
            gs[ts] += w * gd
    if c_mm:
        f, gd = _comp(hm, tm)
        score += f
        if want:
            gmh -= w * gd
            gr[r] -= w * gd
            gmt += w * gd
    if c_sm:
        f, gd = _comp(struct[hs], tm)
        score += f
        if want:
            gs[hs] -= w * gd
            gr[r] -= w * gd
            gmt += w * gd
    if c_ms:
        f, gd = _comp(hm, struct[ts])
        score += f
        if want:
            gmh -= w * gd
            gr[r] -= w * gd
            gs[ts] += w * gd
    if c_all:
        f, gd = _comp(struct[hs] + hm, struct[ts] + tm)
        score += f
        if want:
            gs[hs] -= w * gd
            gmh -= w * gd
            gr[r] -= w * gd
            gs[ts] += w * gd
            gmt += w * gd

    if want:
        if c_mm or c_ms or c_all:
            gp += np.outer(gmh, feats[hm_src])
        if c_mm or c_sm or c_all:
            gp += np.outer(gmt, feats[tm_src])
    return score


def _neg_entity_score(struct, rel, feats, gs, gr, gp,
                      h, t, r, hm, tm, e, em_j, corrupt_tail, twins,
                      c_ss, c_mm, c_sm, c_ms, c_all, p, w, want):
    e_sm = c_sm and not twins
    e_ms = c_ms and not twins
    e_all = c_all and not twins
    if corrupt_tail:
        return _assembly_score(struct, rel, feats, gs, gr, gp,
                               h, e, r, hm, em_j, h, e,
                               c_ss, c_mm, e_sm, e_ms, e_all, p, w, want)
    return _assembly_score(struct, rel, feats, gs, gr, gp,
                           e, t, r, em_j, tm, e, t,
                           c_ss, c_mm, e_sm, e_ms, e_all, p, w, want)


def _neg_modal_score(struct, rel, feats, gs, gr, gp,
                     h, t, r, hm, tm, e, em_j, corrupt_tail,
                     c_sm, c_ms, c_all, p, w, want):
    if corrupt_tail:
        return _assembly_score(struct, rel, feats, gs, gr, gp,
                               h, t, r, hm, em_j, h, e,
                               False, False, c_sm, c_ms, c_all, p, w, want)
    return _assembly_score(struct, rel, feats, gs, gr, gp,
                           h, t, r, em_j, tm, e, t,
                           False, False, c_sm, c_ms, c_all, p, w, want)


def loss_and_grads(struct, rel, proj, feats,
                   ph, pr, pt, slot, nent, slot2, nent2, same_draws, twins,
                   c_ss, c_mm, c_sm, c_ms, c_all,
                   p, gamma, per_pair, want_grads,
                   gs, gr, gp):
    B = ph.shape[0]
    k = nent.shape[1]
    need_modal = c_mm or c_sm or c_ms or c_all
    need_second = twins and not same_draws
    zero = np.zeros(struct.shape[1])

    total = 0.0
    active = 0
    for i in range(B):
        h, r, t = int(ph[i]), int(pr[i]), int(pt[i])
        if need_modal:
            hm = proj @ feats[h].astype(np.float64)
            tm = proj @ feats[t].astype(np.float64)
            em = feats[nent[i]].astype(np.float64) @ proj.T
            em2 = feats[nent2[i]].astype(np.float64) @ proj.T if need_second else em
        else:
            hm = tm = zero
            em = em2 = np.zeros((k, struct.shape[1]))

        def neg_pair(j, w, want):
            f = _neg_entity_score(struct, rel, feats, gs, gr, gp,
                                  h, t, r, hm, tm, int(nent[i, j]), em[j],
                                  slot[i, j] == 1, twins,
                                  c_ss, c_mm, c_sm, c_ms, c_all, p, w, want)
            if twins:
                f += _neg_modal_score(struct, rel, feats, gs, gr, gp,
                                      h, t, r, hm, tm, int(nent2[i, j]), em2[j],
                                      slot2[i, j] == 1,
                                      c_sm, c_ms, c_all, p, w, want)
            return f

        fpos = _assembly_score(struct, rel, feats, gs, gr, gp,
                               h, t, r, hm, tm, h, t,
                               c_ss, c_mm, c_sm, c_ms, c_all, p, 0.0, False)
        fneg = np.array([neg_pair(j, 0.0, False) for j in range(k)])

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
                                        p, -1.0 / k, True)
                        neg_pair(j, 1.0 / k, True)
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
                                    p, -1.0, True)
                    for j in range(k):
                        neg_pair(j, 1.0 / k, True)
    return total, active


def _pnorm_rows(diff, p):
    if p == 1:
        return np.sum(np.abs(diff), axis=1)
    return np.sqrt(np.sum(diff * diff, axis=1))


def composite_scores(S, M, xs, xm, xa, c_ss, c_mm, c_sm, c_ms, c_all, p, out):
    """Vectorized counterpart of kernels_numba.composite_scores."""
    acc = np.zeros(S.shape[0])
    if c_ss:
        acc -= _pnorm_rows(xs[None, :] - S, p)
    if c_mm:
        acc -= _pnorm_rows(xm[None, :] - M, p)
    if c_sm:
        acc -= _pnorm_rows(xs[None, :] - M, p)
    if c_ms:
        acc -= _pnorm_rows(xm[None, :] - S, p)
    if c_all:
        acc -= _pnorm_rows(xa[None, :] - S - M, p)
    out[:] = acc
