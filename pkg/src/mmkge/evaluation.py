"""Filtered link-prediction evaluation (MRR, Hit@K) and inference timing.

Every test triple is ranked against all |E| candidate substitutions of its
head and of its tail. Under the filter setting, candidates forming a triple
already known from the configured splits are removed (the target itself is
never removed). The tie rule is optimistic: rank = 1 + number of remaining
candidates scoring strictly higher than the target.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import FeatureTable, KnowledgeGraph, KnownIndex, build_known_index
from .kernels import get_backend
from .model import ModelParams, ScoreMask, project_all

DIRECTIONS = ("head", "tail")


@dataclass(frozen=True)
class EvalConfig:
    ks: tuple[int, ...] = (1, 3, 10)
    filter_splits: tuple[str, ...] = ("train", "valid", "test")
    tie_rule: str = "optimistic"
    mask: ScoreMask = field(default_factory=ScoreMask)
    p: int = 1
    cache_projections: bool = True
    backend: Optional[str] = None

    def __post_init__(self):
        if not self.ks or any(k < 1 for k in self.ks):
            raise ValueError("ks must be non-empty with every K >= 1")
        if self.tie_rule != "optimistic":
            raise ValueError("only the optimistic tie rule is supported")
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")


@dataclass
class EvalReport:
    mrr: float
    hits: dict[int, float]
    head_mrr: float
    tail_mrr: float
    head_hits: dict[int, float]
    tail_hits: dict[int, float]
    n_triples: int
    seconds: float
    tie_rule: str
    filter_splits: tuple[str, ...]
    mask: tuple[str, ...]
    p: int

    def to_dict(self) -> dict:
        return {
            "mrr": self.mrr,
            "hits": {f"hit@{k}": v for k, v in self.hits.items()},
            "head": {"mrr": self.head_mrr,
                     "hits": {f"hit@{k}": v for k, v in self.head_hits.items()}},
            "tail": {"mrr": self.tail_mrr,
                     "hits": {f"hit@{k}": v for k, v in self.tail_hits.items()}},
            "n_triples": self.n_triples,
            "seconds": self.seconds,
            "tie_rule": self.tie_rule,
            "filter_splits": list(self.filter_splits),
            "mask": list(self.mask),
            "p": self.p,
        }


def _candidate_scores(backend, S, M, rv, triple, direction, mask: ScoreMask,
                      p: int, out: np.ndarray) -> None:
    h, r, t = triple
    c = mask.as_array()
    if direction == "tail":
        xs = S[h] + rv
        xm = M[h] + rv
        xa = S[h] + M[h] + rv
        backend.composite_scores(S, M, xs, xm, xa,
                                 bool(c[0]), bool(c[1]), bool(c[2]),
                                 bool(c[3]), bool(c[4]), p, out)
    elif direction == "head":
        # f(c, r, fixed) = -||c - (fixed - r)||; sm/ms swap query sides
        xs = S[t] - rv
        xm = M[t] - rv
        xa = S[t] + M[t] - rv
        backend.composite_scores(S, M, xs, xm, xa,
                                 bool(c[0]), bool(c[1]), bool(c[3]),
                                 bool(c[2]), bool(c[4]), p, out)
    else:
        raise ValueError(f"direction must be one of {DIRECTIONS}")


def _rank_from_scores(scores: np.ndarray, target: int,
                      filtered: np.ndarray) -> int:
    ts = scores[target]
    greater = int(np.count_nonzero(scores > ts))
    if len(filtered):
        keep = filtered[filtered != target]
        greater -= int(np.count_nonzero(scores[keep] > ts))
    return 1 + greater


def rank_triple(params: ModelParams, features: FeatureTable,
                graph: KnowledgeGraph, triple, direction: str,
                cfg: EvalConfig = EvalConfig(),
                known: KnownIndex | None = None,
                modal_cache: np.ndarray | None = None) -> int:
    """Filtered optimistic rank of one triple in one prediction direction."""
    h, r, t = (int(x) for x in triple)
    if known is None:
        known = build_known_index(graph, cfg.filter_splits)
    backend = get_backend(cfg.backend)
    S = params.struct_emb
    M = modal_cache if modal_cache is not None else project_all(params, features)
    rv = params.rel_emb[r]
    scores = np.empty(params.entity_count)
    _candidate_scores(backend, S, M, rv, (h, r, t), direction, cfg.mask,
                      cfg.p, scores)
    if direction == "tail":
        return _rank_from_scores(scores, t, known.known_tails(h, r))
    return _rank_from_scores(scores, h, known.known_heads(t, r))


def evaluate(params: ModelParams, features: FeatureTable,
             graph: KnowledgeGraph, cfg: EvalConfig = EvalConfig(),
             split: str = "test", limit: int | None = None) -> EvalReport:
    """Rank every triple of a split in both directions and aggregate.

    MRR averages 1/rank over both directions (2N terms); Hit@K likewise.
    With cache_projections=False the multimodal embeddings of all candidates
    are re-projected for every test triple (the slow comparison path).
    """
    triples = graph.split(split)
    if limit is not None:
        triples = triples[:limit]
    if len(triples) == 0:
        raise ValueError(f"cannot evaluate an empty {split!r} split")
    known = build_known_index(graph, cfg.filter_splits)
    backend = get_backend(cfg.backend)
    S = params.struct_emb

    start = time.perf_counter()
    M = project_all(params, features) if cfg.cache_projections else None
    scores = np.empty(params.entity_count)
    head_ranks = np.empty(len(triples), dtype=np.int64)
    tail_ranks = np.empty(len(triples), dtype=np.int64)
    for i, (h, r, t) in enumerate(triples):
        h, r, t = int(h), int(r), int(t)
        Mi = M if M is not None else project_all(params, features)
        rv = params.rel_emb[r]
        _candidate_scores(backend, S, Mi, rv, (h, r, t), "tail", cfg.mask,
                          cfg.p, scores)
        tail_ranks[i] = _rank_from_scores(scores, t, known.known_tails(h, r))
        _candidate_scores(backend, S, Mi, rv, (h, r, t), "head", cfg.mask,
                          cfg.p, scores)
        head_ranks[i] = _rank_from_scores(scores, h, known.known_heads(t, r))
    seconds = time.perf_counter() - start
    return aggregate_report(head_ranks, tail_ranks, cfg, seconds)


def aggregate_report(head_ranks, tail_ranks, cfg: EvalConfig,
                     seconds: float = 0.0) -> EvalReport:
    """MRR and Hit@K over both directions: mean of 1/rank (indicator) across
    the 2N per-direction ranks of N triples."""
    head_ranks = np.asarray(head_ranks, dtype=np.int64)
    tail_ranks = np.asarray(tail_ranks, dtype=np.int64)
    n = len(head_ranks)
    inv_h = 1.0 / head_ranks
    inv_t = 1.0 / tail_ranks
    return EvalReport(
        mrr=float((inv_h.sum() + inv_t.sum()) / (2 * n)),
        hits={k: float((np.sum(head_ranks <= k) + np.sum(tail_ranks <= k))
                       / (2 * n)) for k in cfg.ks},
        head_mrr=float(inv_h.mean()),
        tail_mrr=float(inv_t.mean()),
        head_hits={k: float(np.mean(head_ranks <= k)) for k in cfg.ks},
        tail_hits={k: float(np.mean(tail_ranks <= k)) for k in cfg.ks},
        n_triples=n,
        seconds=seconds,
        tie_rule=cfg.tie_rule,
        filter_splits=cfg.filter_splits,
        mask=cfg.mask.names(),
        p=cfg.p,
    )


def bench_inference(params: ModelParams, features: FeatureTable,
                    graph: KnowledgeGraph, cfg: EvalConfig = EvalConfig(),
                    repeats: int = 3, split: str = "test",
                    limit: int | None = None) -> dict:
    """Median/min/max wall clock of full evaluation passes.

    Metrics must be identical across repeats (scoring is deterministic).
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    reports = [evaluate(params, features, graph, cfg, split=split, limit=limit)
               for _ in range(repeats)]
    first = reports[0]
    for rep in reports[1:]:
        if rep.mrr != first.mrr or rep.hits != first.hits:
            raise RuntimeError("metrics differ across benchmark repeats")
    times = [rep.seconds for rep in reports]
    return {
        "repeats": repeats,
        "seconds": times,
        "median": float(np.median(times)),
        "min": float(np.min(times)),
        "max": float(np.max(times)),
        "report": first,
    }
