"""Trainable parameters and the composite translational score.

An entity has a structural embedding (a trainable row of ``struct_emb``)
and a multimodal embedding obtained by linearly projecting its raw
feature vector with ``proj`` (no bias). A triple is scored by summing up
to five translational components over the two embedding kinds:

    ss: f(h_s, r, t_s)        mm: f(h_m, r, t_m)
    sm: f(h_s, r, t_m)        ms: f(h_m, r, t_s)
    all: f(h_s + h_m, r, t_s + t_m)

with f(h, r, t) = -||h + r - t||_p, p in {1, 2}.
"""

from __future__ import annotations

import struct as _struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import FeatureTable, xavier_uniform_bound

MMKC_MAGIC = b"MMKC"
MMKC_VERSION = 1

# component order used by masks and kernels
COMPONENT_NAMES = ("ss", "mm", "sm", "ms", "all")


class CheckpointError(ValueError):
    """Malformed MMKC checkpoint file."""


@dataclass(frozen=True)
class ScoreMask:
    """Which of the five score components are enabled."""

    ss: bool = True
    mm: bool = True
    sm: bool = True
    ms: bool = True
    all: bool = True

    def __post_init__(self):
        if not any(self.as_array()):
            raise ValueError("at least one score component must be enabled")

    def as_array(self) -> np.ndarray:
        return np.array([self.ss, self.mm, self.sm, self.ms, self.all],
                        dtype=np.bool_)

    def names(self) -> tuple[str, ...]:
        return tuple(n for n, on in zip(COMPONENT_NAMES, self.as_array()) if on)

    @classmethod
    def from_names(cls, names) -> "ScoreMask":
        if isinstance(names, str):
            names = [n.strip() for n in names.split(",") if n.strip()]
        unknown = set(names) - set(COMPONENT_NAMES)
        if unknown:
            raise ValueError(f"unknown score components: {sorted(unknown)}")
        return cls(**{n: (n in names) for n in COMPONENT_NAMES})


@dataclass
class ModelParams:
    struct_emb: np.ndarray  # (entity_count, d_e) float64
    rel_emb: np.ndarray     # (relation_count, d_e) float64
    proj: np.ndarray        # (d_e, d_m) float64

    def __post_init__(self):
        self.struct_emb = np.ascontiguousarray(self.struct_emb, dtype=np.float64)
        self.rel_emb = np.ascontiguousarray(self.rel_emb, dtype=np.float64)
        self.proj = np.ascontiguousarray(self.proj, dtype=np.float64)
        if self.proj.ndim != 2:
            raise ValueError("proj must be a d_e x d_m matrix")
        if self.proj.shape[0] != self.d_e:
            raise ValueError(
                f"proj shape {self.proj.shape} inconsistent with d_e={self.d_e}")

    @property
    def entity_count(self) -> int:
        return self.struct_emb.shape[0]

    @property
    def relation_count(self) -> int:
        return self.rel_emb.shape[0]

    @property
    def d_e(self) -> int:
        return self.struct_emb.shape[1]

    @property
    def d_m(self) -> int:
        return self.proj.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.struct_emb.copy(), self.rel_emb.copy(),
                           self.proj.copy())

    def all_finite(self) -> bool:
        return (np.all(np.isfinite(self.struct_emb))
                and np.all(np.isfinite(self.rel_emb))
                and np.all(np.isfinite(self.proj)))


def init_params(entity_count: int, relation_count: int, d_e: int = 128,
                d_m: int = 768, seed: int = 0) -> ModelParams:
    """Xavier-uniform initialization of all tensors, deterministic per seed."""
    if entity_count <= 0 or relation_count <= 0:
        raise ValueError("entity_count and relation_count must be positive")
    if d_e <= 0 or d_m <= 0:
        raise ValueError("d_e and d_m must be positive")
    rng = np.random.default_rng(seed)
    be = xavier_uniform_bound(d_e, d_e)
    bp = xavier_uniform_bound(d_m, d_e)
    return ModelParams(
        struct_emb=rng.uniform(-be, be, size=(entity_count, d_e)),
        rel_emb=rng.uniform(-be, be, size=(relation_count, d_e)),
        proj=rng.uniform(-bp, bp, size=(d_e, d_m)),
    )


def project(params: ModelParams, feature: np.ndarray) -> np.ndarray:
    """Multimodal embedding of one raw feature vector: proj @ feature."""
    feature = np.asarray(feature, dtype=np.float64)
    if feature.shape != (params.d_m,):
        raise ValueError(
            f"feature has shape {feature.shape}, expected ({params.d_m},)")
    return params.proj @ feature


def project_all(params: ModelParams, features: FeatureTable) -> np.ndarray:
    """Project every entity's feature at once; rows are multimodal embeddings."""
    if features.dim != params.d_m:
        raise ValueError(
            f"feature dim {features.dim} does not match model d_m {params.d_m}")
    return features.vectors.astype(np.float64) @ params.proj.T


def base_score(h: np.ndarray, r: np.ndarray, t: np.ndarray, p: int = 1) -> float:
    """Translational score -||h + r - t||_p. 0 is the best possible value."""
    h, r, t = (np.asarray(v, dtype=np.float64) for v in (h, r, t))
    if not (h.shape == r.shape == t.shape):
        raise ValueError("h, r, t must have equal lengths")
    if p not in (1, 2):
        raise ValueError("norm order p must be 1 or 2")
    d = h + r - t
    return float(-np.sum(np.abs(d))) if p == 1 else float(-np.sqrt(np.sum(d * d)))


def composite_score(params: ModelParams, features: FeatureTable, triple,
                    mask: ScoreMask = ScoreMask(), p: int = 1) -> float:
    """Sum of the enabled score components for one (h, r, t) triple."""
    h, r, t = (int(x) for x in triple)
    if not (0 <= h < params.entity_count and 0 <= t < params.entity_count):
        raise ValueError("entity id out of range")
    if not (0 <= r < params.relation_count):
        raise ValueError("relation id out of range")
    hs, ts = params.struct_emb[h], params.struct_emb[t]
    rv = params.rel_emb[r]
    hm = project(params, features.vectors[h])
    tm = project(params, features.vectors[t])
    total = 0.0
    if mask.ss:
        total += base_score(hs, rv, ts, p)
    if mask.mm:
        total += base_score(hm, rv, tm, p)
    if mask.sm:
        total += base_score(hs, rv, tm, p)
    if mask.ms:
        total += base_score(hm, rv, ts, p)
    if mask.all:
        total += base_score(hs + hm, rv, ts + tm, p)
    return total


def save_checkpoint(path: str | Path, params: ModelParams) -> None:
    """Write params as an MMKC file (tensors stored as little-endian f32)."""
    with Path(path).open("wb") as fh:
        fh.write(MMKC_MAGIC)
        fh.write(_struct.pack("<IIIII", MMKC_VERSION, params.entity_count,
                              params.relation_count, params.d_e, params.d_m))
        fh.write(params.struct_emb.astype("<f4").tobytes())
        fh.write(params.rel_emb.astype("<f4").tobytes())
        fh.write(params.proj.astype("<f4").tobytes())


def load_checkpoint(path: str | Path) -> ModelParams:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 24 or raw[:4] != MMKC_MAGIC:
        raise CheckpointError(f"{path}: bad magic (expected {MMKC_MAGIC!r})")
    version, ne, nr, d_e, d_m = _struct.unpack_from("<IIIII", raw, 4)
    if version != MMKC_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    sizes = (ne * d_e, nr * d_e, d_e * d_m)
    expected = 24 + 4 * sum(sizes)
    if len(raw) != expected:
        raise CheckpointError(
            f"{path}: truncated payload (expected {expected} bytes, got {len(raw)})")
    offset = 24
    tensors = []
    for n in sizes:
        tensors.append(np.frombuffer(raw, dtype="<f4", count=n, offset=offset)
                       .astype(np.float64))
        offset += 4 * n
    return ModelParams(struct_emb=tensors[0].reshape(ne, d_e),
                       rel_emb=tensors[1].reshape(nr, d_e),
                       proj=tensors[2].reshape(d_e, d_m))
