"""Dataset loading, multimodal feature files and training batches.

Dataset layout (all ids are dense integers starting at 0):

    entities.dict   one "<id>\\t<name>" per line
    relations.dict  one "<id>\\t<name>" per line
    train.txt / valid.txt / test.txt
                    one "<head_id>\\t<relation_id>\\t<tail_id>" per line

Feature files use the MMKF binary format (little-endian): magic ``MMKF``,
u32 version (= 1), u32 record count, u32 dim, then per record a u32
entity id followed by ``dim`` f32 values.
"""

from __future__ import annotations

import struct as _struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

MMKF_MAGIC = b"MMKF"
MMKF_VERSION = 1

SPLIT_NAMES = ("train", "valid", "test")

# provenance codes for feature vectors
PROV_EXTRACTED = 0
PROV_XAVIER_FALLBACK = 1
PROV_SYNTHETIC = 2
PROV_NAMES = {PROV_EXTRACTED: "extracted",
              PROV_XAVIER_FALLBACK: "xavier-fallback",
              PROV_SYNTHETIC: "synthetic"}

_XAVIER_FALLBACK_SALT = 0x6D6D6B66  # fixed stream salt for per-entity fallback rngs


class DatasetError(ValueError):
    """Malformed dictionary/triple files (bad ids, duplicates, parse errors)."""


class FeatureFileError(ValueError):
    """Malformed MMKF feature file (bad magic, truncation, bad records)."""


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class KnowledgeGraph:
    entity_count: int
    relation_count: int
    entity_names: dict[int, str]
    relation_names: dict[int, str]
    train: np.ndarray  # (N, 3) int64, columns head/relation/tail
    valid: np.ndarray
    test: np.ndarray
    _key_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def split(self, name: str) -> np.ndarray:
        if name not in SPLIT_NAMES:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def triples(self, name: str) -> list[Triple]:
        return [Triple(int(h), int(r), int(t)) for h, r, t in self.split(name)]

    def triple_keys(self, name: str) -> np.ndarray:
        """Sorted int64 keys of one split, for fast membership tests."""
        if name not in self._key_cache:
            self._key_cache[name] = np.sort(encode_triples(
                self.split(name), self.entity_count, self.relation_count))
        return self._key_cache[name]


def encode_triples(triples: np.ndarray, entity_count: int,
                   relation_count: int) -> np.ndarray:
    """Pack (h, r, t) rows into unique int64 keys."""
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return (t[:, 0] * relation_count + t[:, 1]) * entity_count + t[:, 2]


@dataclass(frozen=True)
class KnownIndex:
    """Filter index over (h, r, ?) and (?, r, t) for a set of splits."""

    splits: tuple[str, ...]
    tails_of: dict[tuple[int, int], np.ndarray]  # (h, r) -> tail ids
    heads_of: dict[tuple[int, int], np.ndarray]  # (t, r) -> head ids
    keys: np.ndarray  # sorted packed triple keys

    def known_tails(self, head: int, relation: int) -> np.ndarray:
        return self.tails_of.get((head, relation), _EMPTY_IDS)

    def known_heads(self, tail: int, relation: int) -> np.ndarray:
        return self.heads_of.get((tail, relation), _EMPTY_IDS)

    def __contains__(self, triple) -> bool:
        h, r, t = triple
        tails = self.tails_of.get((int(h), int(r)))
        return tails is not None and int(t) in tails


_EMPTY_IDS = np.empty(0, dtype=np.int64)


def build_known_index(graph: KnowledgeGraph,
                      splits: tuple[str, ...] = SPLIT_NAMES) -> KnownIndex:
    tails: dict[tuple[int, int], list[int]] = {}
    heads: dict[tuple[int, int], list[int]] = {}
    parts = []
    for name in splits:
        arr = graph.split(name)
        parts.append(arr)
        for h, r, t in arr:
            tails.setdefault((int(h), int(r)), []).append(int(t))
            heads.setdefault((int(t), int(r)), []).append(int(h))
    all_triples = np.concatenate(parts) if parts else np.empty((0, 3), np.int64)
    keys = np.sort(encode_triples(all_triples, graph.entity_count,
                                  graph.relation_count))
    return KnownIndex(
        splits=tuple(splits),
        tails_of={k: np.unique(np.asarray(v, dtype=np.int64)) for k, v in tails.items()},
        heads_of={k: np.unique(np.asarray(v, dtype=np.int64)) for k, v in heads.items()},
        keys=keys,
    )


@dataclass
class FeatureTable:
    """Per-entity raw multimodal feature vectors.

    ``vectors`` is an (entity_count, dim) float32 array; ``provenance`` is a
    per-entity uint8 code (see PROV_* constants).
    """

    dim: int
    vectors: np.ndarray
    provenance: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        self.provenance = np.asarray(self.provenance, dtype=np.uint8)
        if self.vectors.ndim != 2 or self.vectors.shape[1] != self.dim:
            raise FeatureFileError(
                f"feature matrix shape {self.vectors.shape} does not match dim {self.dim}")
        if self.provenance.shape[0] != self.vectors.shape[0]:
            raise FeatureFileError("provenance length does not match vector count")
        if not np.all(np.isfinite(self.vectors)):
            raise FeatureFileError("feature vectors contain non-finite values")

    @property
    def entity_count(self) -> int:
        return self.vectors.shape[0]

    def fallback_count(self) -> int:
        return int(np.sum(self.provenance == PROV_XAVIER_FALLBACK))


def _read_dict_file(path: Path) -> dict[int, str]:
    if not path.is_file():
        raise FileNotFoundError(path)
    names: dict[int, str] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DatasetError(f"{path}:{lineno}: expected '<id>\\t<name>'")
            try:
                idx = int(parts[0])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer id {parts[0]!r}") from None
            if idx in names:
                raise DatasetError(f"{path}:{lineno}: duplicate id {idx}")
            names[idx] = parts[1]
    if not names:
        raise DatasetError(f"{path}: empty dictionary")
    if sorted(names) != list(range(len(names))):
        raise DatasetError(f"{path}: ids are not dense from 0")
    return names


def _read_triple_file(path: Path, entity_count: int,
                      relation_count: int) -> np.ndarray:
    if not path.is_file():
        raise FileNotFoundError(path)
    rows: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DatasetError(f"{path}:{lineno}: expected 3 tab-separated ids")
            try:
                h, r, t = (int(p) for p in parts)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer field") from None
            if not (0 <= h < entity_count and 0 <= t < entity_count):
                raise DatasetError(f"{path}:{lineno}: entity id out of range")
            if not (0 <= r < relation_count):
                raise DatasetError(f"{path}:{lineno}: relation id out of range")
            key = (h, r, t)
            if key in seen:
                raise DatasetError(f"{path}:{lineno}: duplicate triple {key}")
            seen.add(key)
            rows.append(key)
    return np.asarray(rows, dtype=np.int64).reshape(-1, 3)


def load_graph(triples_dir: str | Path) -> KnowledgeGraph:
    """Load and validate a dataset directory."""
    d = Path(triples_dir)
    entity_names = _read_dict_file(d / "entities.dict")
    relation_names = _read_dict_file(d / "relations.dict")
    ne, nr = len(entity_names), len(relation_names)
    splits = {name: _read_triple_file(d / f"{name}.txt", ne, nr)
              for name in SPLIT_NAMES}
    return KnowledgeGraph(entity_count=ne, relation_count=nr,
                          entity_names=entity_names,
                          relation_names=relation_names,
                          **splits)


def xavier_uniform_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def xavier_fallback_vector(entity_id: int, dim: int) -> np.ndarray:
    """Deterministic per-entity fallback feature (Xavier-uniform, fan 1 x dim)."""
    bound = xavier_uniform_bound(1, dim)
    rng = np.random.default_rng([_XAVIER_FALLBACK_SALT, entity_id])
    return rng.uniform(-bound, bound, size=dim).astype(np.float32)


def write_features(path: str | Path, table: FeatureTable,
                   entity_ids: np.ndarray | None = None) -> None:
    """Write a FeatureTable as an MMKF file.

    ``entity_ids`` restricts the records written (defaults to all entities).
    """
    if entity_ids is None:
        entity_ids = np.arange(table.entity_count, dtype=np.int64)
    entity_ids = np.asarray(entity_ids, dtype=np.int64)
    with Path(path).open("wb") as fh:
        fh.write(MMKF_MAGIC)
        fh.write(_struct.pack("<III", MMKF_VERSION, len(entity_ids), table.dim))
        for eid in entity_ids:
            fh.write(_struct.pack("<I", int(eid)))
            fh.write(table.vectors[int(eid)].astype("<f4").tobytes())


def load_features(path: str | Path, graph: KnowledgeGraph) -> FeatureTable:
    """Load an MMKF file; entities missing from it get Xavier fallback vectors."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != MMKF_MAGIC:
        raise FeatureFileError(f"{path}: bad magic (expected {MMKF_MAGIC!r})")
    version, count, dim = _struct.unpack_from("<III", raw, 4)
    if version != MMKF_VERSION:
        raise FeatureFileError(f"{path}: unsupported version {version}")
    if dim <= 0:
        raise FeatureFileError(f"{path}: non-positive dim {dim}")
    record_size = 4 + 4 * dim
    expected = 16 + count * record_size
    if len(raw) != expected:
        raise FeatureFileError(
            f"{path}: truncated payload (expected {expected} bytes, got {len(raw)})")

    vectors = np.zeros((graph.entity_count, dim), dtype=np.float32)
    provenance = np.full(graph.entity_count, PROV_XAVIER_FALLBACK, dtype=np.uint8)
    seen: set[int] = set()
    offset = 16
    for _ in range(count):
        (eid,) = _struct.unpack_from("<I", raw, offset)
        if eid >= graph.entity_count:
            raise FeatureFileError(f"{path}: entity id {eid} out of range")
        if eid in seen:
            raise FeatureFileError(f"{path}: duplicate entity record {eid}")
        seen.add(eid)
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=offset + 4)
        vectors[eid] = vec
        provenance[eid] = PROV_EXTRACTED
        offset += record_size

    for eid in range(graph.entity_count):
        if eid not in seen:
            vectors[eid] = xavier_fallback_vector(eid, dim)
    return FeatureTable(dim=dim, vectors=vectors, provenance=provenance)


def generate_features(entity_count: int, dim: int, mode: str = "xavier",
                      seed: int = 0) -> FeatureTable:
    """Synthetic feature table: Xavier-uniform per entity, or all zeros."""
    if dim <= 0:
        raise ValueError("dim must be positive")
    if mode == "zeros":
        vectors = np.zeros((entity_count, dim), dtype=np.float32)
    elif mode == "xavier":
        bound = xavier_uniform_bound(1, dim)
        vectors = np.empty((entity_count, dim), dtype=np.float32)
        for eid in range(entity_count):
            rng = np.random.default_rng([seed, eid])
            vectors[eid] = rng.uniform(-bound, bound, size=dim).astype(np.float32)
    else:
        raise ValueError(f"unknown feature mode {mode!r}")
    provenance = np.full(entity_count, PROV_SYNTHETIC, dtype=np.uint8)
    return FeatureTable(dim=dim, vectors=vectors, provenance=provenance)


def make_batches(split: np.ndarray, n_batches: int, seed: int) -> list[np.ndarray]:
    """Seeded permutation of a split, cut into n_batches near-equal chunks."""
    split = np.asarray(split, dtype=np.int64).reshape(-1, 3)
    if n_batches < 1:
        raise ValueError("n_batches must be >= 1")
    if n_batches > len(split):
        raise ValueError(f"n_batches={n_batches} exceeds split size {len(split)}")
    perm = np.random.default_rng(seed).permutation(len(split))
    return [split[idx] for idx in np.array_split(perm, n_batches)]
