"""Run an encoder over entity media and emit MMKF + provenance sidecar."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from mmkge.data import PROV_EXTRACTED, FeatureTable, write_features

from .encoders import ExtractorConfig, make_encoder, text_tokens, visual_tokens
from .media import EntityMedia


def extract_features(media: list[EntityMedia],
                     config: ExtractorConfig) -> tuple[FeatureTable, dict]:
    """Encode every entity; returns the feature table and per-entity
    provenance (token counts, image counts, skipped files, degenerate-input
    flags)."""
    encoder = make_encoder(config)
    vectors = np.empty((len(media), config.dim), dtype=np.float32)
    entities: dict[str, dict] = {}
    for i, item in enumerate(sorted(media, key=lambda m: m.entity_id)):
        if item.entity_id != i:
            raise ValueError("entity ids must be dense from 0")
        words = text_tokens(item.description, config.max_text_tokens)
        visuals, skipped = visual_tokens(item.image_paths,
                                         config.max_visual_tokens)
        vectors[i] = encoder.encode(words, visuals)
        record = {
            "text_tokens": len(words),
            "visual_tokens": len(visuals),
            "images": len(item.image_paths),
            "empty_input": not words and not visuals,
        }
        if skipped:
            record["skipped_images"] = skipped
        entities[str(i)] = record
    table = FeatureTable(config.dim, vectors,
                         np.full(len(media), PROV_EXTRACTED, np.uint8))
    provenance = {
        "encoder": config.encoder,
        "dim": config.dim,
        "max_text_tokens": config.max_text_tokens,
        "max_visual_tokens": config.max_visual_tokens,
        "entity_count": len(media),
        "entities": entities,
    }
    return table, provenance


def write_outputs(out_path: str | Path, table: FeatureTable,
                  provenance: dict) -> Path:
    """Write the MMKF file and ``<out>.provenance.json`` next to it."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_features(out_path, table)
    sidecar = out_path.with_name(out_path.stem + ".provenance.json")
    sidecar.write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n",
                       encoding="utf-8")
    return sidecar
