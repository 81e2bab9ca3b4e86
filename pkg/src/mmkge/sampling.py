"""Negative sampling: the normal entity-level strategy and the twins strategy.

A negative sample corrupts one slot (head or tail) of a positive triple
with a replacement entity. Entity-level samples replace both embeddings
of the slot; modal-level samples (twins only) replace just the multimodal
embedding while the structural embedding stays the original entity's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import KnowledgeGraph

SLOT_HEAD = 0
SLOT_TAIL = 1

MODE_ENTITY = "entity-level"
MODE_MODAL = "modal-level"

MAX_REJECTION_RETRIES = 100


@dataclass(frozen=True)
class NegativeBatch:
    positives: np.ndarray    # (B, 3) int64
    slot: np.ndarray         # (B, k) int64, SLOT_HEAD or SLOT_TAIL
    replacement: np.ndarray  # (B, k) int64
    mode: str                # MODE_ENTITY or MODE_MODAL

    @property
    def k(self) -> int:
        return self.slot.shape[1]

    def __len__(self) -> int:
        return self.positives.shape[0]


def _corrupted_keys(batch, slot, repl, entity_count, relation_count):
    h = np.where(slot == SLOT_HEAD, repl, batch[:, :1])
    t = np.where(slot == SLOT_TAIL, repl, batch[:, 2:3])
    return (h * relation_count + batch[:, 1:2]) * entity_count + t


def _draw_replacements(graph: KnowledgeGraph, batch: np.ndarray, slot: np.ndarray,
                       rng: np.random.Generator) -> np.ndarray:
    """Uniform replacements over E minus the original, avoiding train triples.

    Colliding draws (ones that re-create a training triple) are resampled up
    to MAX_REJECTION_RETRIES rounds, then accepted as-is.
    """
    E = graph.entity_count
    train_keys = graph.triple_keys("train")
    original = np.where(slot == SLOT_HEAD, batch[:, :1], batch[:, 2:3])

    def draw(n):
        r = rng.integers(0, E - 1, size=n, dtype=np.int64)
        return r  # shifted against the original below

    repl = draw(slot.shape)
    repl = repl + (repl >= original)
    for _ in range(MAX_REJECTION_RETRIES):
        keys = _corrupted_keys(batch, slot, repl, E, graph.relation_count)
        idx = np.searchsorted(train_keys, keys.ravel()).clip(max=len(train_keys) - 1)
        hit = (train_keys[idx] == keys.ravel()).reshape(keys.shape) if len(train_keys) else \
            np.zeros(keys.shape, dtype=bool)
        if not hit.any():
            break
        orig_hit = np.broadcast_to(original, slot.shape)[hit]
        fresh = draw(int(hit.sum()))
        fresh = fresh + (fresh >= orig_hit)
        repl = repl.copy()
        repl[hit] = fresh
    return repl


def sample_normal(graph: KnowledgeGraph, batch: np.ndarray, k: int,
                  seed) -> NegativeBatch:
    """k entity-level negatives per positive, slot chosen uniformly."""
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    if k < 1:
        raise ValueError("k must be >= 1")
    if graph.entity_count < 2:
        raise ValueError("need at least 2 entities to corrupt a triple")
    rng = np.random.default_rng(seed)
    slot = rng.integers(0, 2, size=(len(batch), k), dtype=np.int64)
    repl = _draw_replacements(graph, batch, slot, rng)
    return NegativeBatch(positives=batch, slot=slot, replacement=repl,
                         mode=MODE_ENTITY)


def sample_twins(graph: KnowledgeGraph, batch: np.ndarray, k: int, seed,
                 decoupled: bool = False) -> tuple[NegativeBatch, NegativeBatch]:
    """Paired negatives for the twins strategy.

    The entity-level batch feeds the unimodal score components, the
    modal-level batch the multimodal ones. By default both halves share the
    same (slot, replacement) draws; ``decoupled`` draws the modal half
    independently.
    """
    entity = sample_normal(graph, batch, k, seed)
    if decoupled:
        other = sample_normal(graph, batch, k, np.random.SeedSequence(seed).spawn(1)[0])
        modal = NegativeBatch(positives=entity.positives, slot=other.slot,
                              replacement=other.replacement, mode=MODE_MODAL)
    else:
        modal = NegativeBatch(positives=entity.positives, slot=entity.slot,
                              replacement=entity.replacement, mode=MODE_MODAL)
    return entity, modal


def dump_tsv(neg: NegativeBatch) -> str:
    """TSV dump: pos_h pos_r pos_t slot replacement mode, one line per sample."""
    lines = []
    slot_names = {SLOT_HEAD: "head", SLOT_TAIL: "tail"}
    for i, (h, r, t) in enumerate(neg.positives):
        for j in range(neg.k):
            lines.append(f"{h}\t{r}\t{t}\t{slot_names[int(neg.slot[i, j])]}"
                         f"\t{neg.replacement[i, j]}\t{neg.mode}")
    return "\n".join(lines) + "\n"
