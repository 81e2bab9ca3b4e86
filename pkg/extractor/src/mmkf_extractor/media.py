"""Collect per-entity text and images from a dataset directory.

Entity ids and names come from ``entities.dict`` (the same file the
embedding engine reads). An optional ``descriptions.txt`` in the dataset
directory ("<id>\\t<text>" per line) supplies richer descriptions; the
entity name is the fallback. Images live under the images directory as
``<entity_id>.<ext>`` or ``<entity_id>/*.<ext>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp")


class MediaError(ValueError):
    """Malformed dataset or description files."""


@dataclass
class EntityMedia:
    entity_id: int
    description: str
    image_paths: list[Path] = field(default_factory=list)


def _read_id_text_file(path: Path) -> dict[int, str]:
    out: dict[int, str] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise MediaError(f"{path}:{lineno}: expected '<id>\\t<text>'")
            try:
                idx = int(parts[0])
            except ValueError:
                raise MediaError(
                    f"{path}:{lineno}: non-integer id {parts[0]!r}") from None
            if idx in out:
                raise MediaError(f"{path}:{lineno}: duplicate id {idx}")
            out[idx] = parts[1]
    if not out:
        raise MediaError(f"{path}: empty file")
    return out


def _images_for(entity_id: int, images_dir: Path | None) -> list[Path]:
    if images_dir is None:
        return []
    found = []
    subdir = images_dir / str(entity_id)
    if subdir.is_dir():
        found.extend(p for p in sorted(subdir.iterdir())
                     if p.suffix.lower() in IMAGE_EXTENSIONS)
    for ext in IMAGE_EXTENSIONS:
        flat = images_dir / f"{entity_id}{ext}"
        if flat.is_file():
            found.append(flat)
    return found


def collect_media(dataset_dir: str | Path,
                  images_dir: str | Path | None = None) -> list[EntityMedia]:
    """One EntityMedia per entity, ordered by id, covering every entity."""
    dataset_dir = Path(dataset_dir)
    dict_path = dataset_dir / "entities.dict"
    if not dict_path.is_file():
        raise FileNotFoundError(dict_path)
    names = _read_id_text_file(dict_path)
    if sorted(names) != list(range(len(names))):
        raise MediaError(f"{dict_path}: ids are not dense from 0")
    descriptions: dict[int, str] = {}
    desc_path = dataset_dir / "descriptions.txt"
    if desc_path.is_file():
        descriptions = _read_id_text_file(desc_path)
        stray = set(descriptions) - set(names)
        if stray:
            raise MediaError(
                f"{desc_path}: ids without entities: {sorted(stray)[:5]}")
    images_dir = Path(images_dir) if images_dir else None
    if images_dir is not None and not images_dir.is_dir():
        raise FileNotFoundError(images_dir)
    return [EntityMedia(entity_id=i,
                        description=descriptions.get(i, names[i]),
                        image_paths=_images_for(i, images_dir))
            for i in range(len(names))]
