"""Pluggable joint text+image encoders.

An encoder turns one entity's token sequence

    [CLS] w_1 ... w_n [SEP] v_1 ... v_m [SEP]

(word tokens from the description, visual tokens from image regions) into
a single fixed-dimension vector, the pooled [CLS]-style state. Encoders
are selected by identifier:

    hashed-bow            deterministic, weight-free (default)
    transformers:<model>  a local pretrained vision-language model

The hashed-bow encoder maps every token to a fixed pseudo-random unit
vector derived from a hash of the token string and pools the sequence by
a normalized mean. It needs no downloaded weights, runs identically on
every machine, and honors the full encoder contract, which makes it the
right default for offline and CI use.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np
from PIL import Image

CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"

_WORD_RE = re.compile(r"[a-z0-9]+")

# visual tokens are drawn from a fixed grid of image regions
_GRID = 4


class EncoderError(RuntimeError):
    """Encoder cannot be constructed or produced a bad output."""


@dataclass(frozen=True)
class ExtractorConfig:
    encoder: str = "hashed-bow"
    dim: int = 768
    max_text_tokens: int = 64
    max_visual_tokens: int = 32
    batch_size: int = 32
    device: str = "cpu"

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.max_text_tokens < 0 or self.max_visual_tokens < 0:
            raise ValueError("token limits must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def text_tokens(description: str, limit: int) -> list[str]:
    return _WORD_RE.findall(description.lower())[:limit]


def visual_tokens(image_paths, limit: int) -> tuple[list[str], list[str]]:
    """Region tokens across all images, truncated to ``limit``.

    Each image yields a fixed grid of region tokens encoding the region's
    quantized mean color and position. Returns (tokens, skipped_files).
    """
    tokens: list[str] = []
    skipped: list[str] = []
    for path in image_paths:
        try:
            with Image.open(path) as img:
                small = img.convert("RGB").resize((_GRID, _GRID),
                                                  Image.Resampling.BILINEAR)
                pixels = np.asarray(small, dtype=np.uint8)
        except OSError:
            skipped.append(str(path))
            continue
        for row in range(_GRID):
            for col in range(_GRID):
                r, g, b = (int(v) >> 4 for v in pixels[row, col])
                tokens.append(f"img:r{row}c{col}:{r:x}{g:x}{b:x}")
    return tokens[:limit], skipped


class HashedBowEncoder:
    """Weight-free deterministic encoder over the joint token sequence."""

    def __init__(self, config: ExtractorConfig):
        self.config = config
        self._cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.blake2b(token.encode("utf-8"),
                                     digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            vec = rng.standard_normal(self.config.dim)
            vec /= np.linalg.norm(vec)
            self._cache[token] = vec
        return vec

    def encode(self, words: list[str], visuals: list[str]) -> np.ndarray:
        sequence = [CLS_TOKEN, *words, SEP_TOKEN, *visuals, SEP_TOKEN]
        pooled = np.zeros(self.config.dim)
        for token in sequence:
            pooled += self._token_vector(token)
        norm = np.linalg.norm(pooled)
        if norm > 0:
            pooled /= norm
        return pooled.astype(np.float32)


class TransformersEncoder:
    """Pretrained vision-language encoder loaded from a local model path."""

    def __init__(self, config: ExtractorConfig, model_id: str):
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderError("transformers is not installed") from exc
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            self.model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderError(
                f"cannot load pretrained encoder {model_id!r}; pass a local "
                f"model path or use the hashed-bow encoder ({exc})") from exc
        self.model.eval()
        self.config = config

    def encode(self, words: list[str], visuals: list[str]) -> np.ndarray:
        import torch

        text = " ".join([*words, *visuals])
        inputs = self.tokenizer(text, return_tensors="pt", truncation=True)
        with torch.no_grad():
            out = self.model(**inputs)
        pooled = out.last_hidden_state[0, 0].numpy().astype(np.float32)
        if pooled.shape[0] != self.config.dim:
            raise EncoderError(
                f"encoder emits dim {pooled.shape[0]}, config wants "
                f"{self.config.dim}")
        return pooled


def make_encoder(config: ExtractorConfig):
    name = config.encoder
    if name == "hashed-bow":
        return HashedBowEncoder(config)
    if name.startswith("transformers:"):
        return TransformersEncoder(config, name.split(":", 1)[1])
    raise EncoderError(f"unknown encoder identifier {name!r}")
