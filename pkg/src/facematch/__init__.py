"""Parallel exact face-embedding identification against a stored gallery."""

from facematch.core import (
    DEFAULT_DIM,
    DEFAULT_MIN_CHUNK,
    DEFAULT_THRESHOLD,
    Embedding,
    IdentityRecord,
    MatchResult,
    SearchConfig,
    euclidean_distance,
    is_match,
)
from facematch.errors import (
    DecodeError,
    DimensionError,
    FaceMatchError,
    FormatError,
    IoError,
    ProviderError,
)
from facematch.gallery import Gallery, GallerySnapshot, build_from_directory, load, save
from facematch.matcher import (
    ChunkPlan,
    Matcher,
    plan_chunks,
    search_batch,
    search_parallel,
    search_sequential,
)
from facematch.provider import EmbedProvider, FaceBox, Frame, MockProvider, load_frame

__version__ = "0.1.0"

__all__ = [
    "ChunkPlan",
    "DEFAULT_DIM",
    "DEFAULT_MIN_CHUNK",
    "DEFAULT_THRESHOLD",
    "DecodeError",
    "DimensionError",
    "EmbedProvider",
    "Embedding",
    "FaceBox",
    "FaceMatchError",
    "FormatError",
    "Frame",
    "Gallery",
    "GallerySnapshot",
    "IdentityRecord",
    "IoError",
    "MatchResult",
    "Matcher",
    "MockProvider",
    "ProviderError",
    "SearchConfig",
    "build_from_directory",
    "euclidean_distance",
    "is_match",
    "load",
    "load_frame",
    "plan_chunks",
    "save",
    "search_batch",
    "search_parallel",
    "search_sequential",
]
