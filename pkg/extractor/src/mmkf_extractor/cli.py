"""Command-line entry point: extract features for a dataset."""

from __future__ import annotations

import argparse
import sys

from .encoders import EncoderError, ExtractorConfig
from .extract import extract_features, write_outputs
from .media import MediaError, collect_media


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extract",
        description="Encode entity text and images into an MMKF feature file.")
    parser.add_argument("--dataset", required=True,
                        help="dataset directory (entities.dict etc.)")
    parser.add_argument("--images", default=None,
                        help="directory of per-entity images (optional)")
    parser.add_argument("--out", required=True, help="output .mmkf path")
    parser.add_argument("--encoder", default="hashed-bow",
                        help="encoder identifier (hashed-bow or "
                             "transformers:<model>)")
    parser.add_argument("--dim", type=int, default=768)
    parser.add_argument("--max-text-tokens", type=int, default=64)
    parser.add_argument("--max-visual-tokens", type=int, default=32)
    parser.add_argument("--batch-size", type=int, default=32)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExtractorConfig(encoder=args.encoder, dim=args.dim,
                                 max_text_tokens=args.max_text_tokens,
                                 max_visual_tokens=args.max_visual_tokens,
                                 batch_size=args.batch_size)
        media = collect_media(args.dataset, args.images)
        table, provenance = extract_features(media, config)
        sidecar = write_outputs(args.out, table, provenance)
    except (MediaError, EncoderError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    skipped = sum(len(rec.get("skipped_images", ()))
                  for rec in provenance["entities"].values())
    if skipped:
        print(f"warning: skipped {skipped} unreadable image(s), "
              f"see {sidecar}", file=sys.stderr)
    print(f"wrote {table.entity_count} records of dim {table.dim} "
          f"to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
