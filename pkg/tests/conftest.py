"""Shared fixtures: toy graphs, dataset directories, planted-translation data."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from mmkge.data import FeatureTable, KnowledgeGraph, PROV_SYNTHETIC


def make_graph(entity_count, relation_count, train, valid=None, test=None):
    def arr(x):
        if x is None:
            return np.empty((0, 3), dtype=np.int64)
        return np.asarray(x, dtype=np.int64).reshape(-1, 3)

    return KnowledgeGraph(
        entity_count=entity_count,
        relation_count=relation_count,
        entity_names={i: f"e{i}" for i in range(entity_count)},
        relation_names={i: f"r{i}" for i in range(relation_count)},
        train=arr(train), valid=arr(valid), test=arr(test),
    )


def random_graph(rng, entity_count=12, relation_count=3, n_triples=40):
    """Random duplicate-free graph split roughly 70/15/15."""
    seen = set()
    while len(seen) < n_triples:
        seen.add((int(rng.integers(entity_count)),
                  int(rng.integers(relation_count)),
                  int(rng.integers(entity_count))))
    triples = np.array(sorted(seen), dtype=np.int64)
    rng.shuffle(triples)
    n_valid = max(1, n_triples * 15 // 100)
    n_test = max(1, n_triples * 15 // 100)
    return make_graph(entity_count, relation_count,
                      train=triples[n_valid + n_test:],
                      valid=triples[:n_valid],
                      test=triples[n_valid:n_valid + n_test])


def random_features(rng, entity_count, dim):
    vecs = rng.normal(scale=0.5, size=(entity_count, dim)).astype(np.float32)
    return FeatureTable(dim, vecs, np.full(entity_count, PROV_SYNTHETIC, np.uint8))


def write_dataset(dir_path: Path, graph: KnowledgeGraph) -> Path:
    dir_path.mkdir(parents=True, exist_ok=True)
    with (dir_path / "entities.dict").open("w") as fh:
        for i in range(graph.entity_count):
            fh.write(f"{i}\t{graph.entity_names.get(i, f'e{i}')}\n")
    with (dir_path / "relations.dict").open("w") as fh:
        for i in range(graph.relation_count):
            fh.write(f"{i}\t{graph.relation_names.get(i, f'r{i}')}\n")
    for split in ("train", "valid", "test"):
        with (dir_path / f"{split}.txt").open("w") as fh:
            for h, r, t in graph.split(split):
                fh.write(f"{h}\t{r}\t{t}\n")
    return dir_path


def planted_grid(seed=0, nx=5, ny=4, d_m=32, noise=0.02, n_test=8, n_valid=5):
    """Grid-of-translations graph: entities at lattice points, relations are
    lattice steps, so every triple satisfies t = h + r up to small noise.
    Features are a random linear image of the latent positions."""
    rng = np.random.default_rng(seed)
    ents = [(i, j) for i in range(nx) for j in range(ny)]
    idx = {e: n for n, e in enumerate(ents)}
    rels = [(1, 0), (0, 1), (1, 1)]
    pos = np.array(ents, dtype=float) + noise * rng.normal(size=(len(ents), 2))
    triples = []
    for r, (dx, dy) in enumerate(rels):
        for (i, j) in ents:
            if (i + dx, j + dy) in idx:
                triples.append((idx[(i, j)], r, idx[(i + dx, j + dy)]))
    triples = np.array(triples, dtype=np.int64)
    rng.shuffle(triples)
    graph = make_graph(len(ents), len(rels),
                       train=triples[n_test + n_valid:],
                       valid=triples[n_test:n_test + n_valid],
                       test=triples[:n_test])
    mix = rng.normal(size=(d_m, 2))
    feats = (pos @ mix.T + 0.01 * rng.normal(size=(len(ents), d_m)))
    table = FeatureTable(d_m, feats.astype(np.float32),
                         np.full(len(ents), PROV_SYNTHETIC, np.uint8))
    return graph, table


@pytest.fixture
def toy_graph():
    # 4 entities, 2 relations, 5 hand-counted train triples
    return make_graph(4, 2,
                      train=[(0, 0, 1), (1, 0, 2), (2, 1, 3), (0, 1, 3), (3, 0, 0)],
                      valid=[(1, 1, 3)],
                      test=[(2, 0, 3)])
