"""Multimodal feature extraction into MMKF files."""

from .encoders import EncoderError, ExtractorConfig, make_encoder
from .extract import extract_features, write_outputs
from .media import EntityMedia, MediaError, collect_media

__version__ = "0.1.0"

__all__ = [
    "EncoderError", "ExtractorConfig", "make_encoder",
    "extract_features", "write_outputs",
    "EntityMedia", "MediaError", "collect_media",
    "__version__",
]
