"""Embedding vectors, identity records, match results and the distance metric."""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import ArrayLike

from facematch import _kernels
from facematch.errors import DimensionError

DEFAULT_DIM = 128
DEFAULT_THRESHOLD = 0.6
DEFAULT_MIN_CHUNK = 1024


@dataclass(frozen=True, eq=False)
class Embedding:
    """A finite float32 vector. The backing array is read-only.

    Equality is bit-exact on the stored float32 elements.
    """

    values: np.ndarray

    def __init__(self, values: ArrayLike, dim: int | None = None) -> None:
        with np.errstate(over="ignore"):
            arr = np.array(values, dtype=np.float32)
        if arr.ndim != 1 or arr.shape[0] == 0:
            raise ValueError(f"embedding must be a non-empty 1-D vector, got shape {arr.shape}")
        if dim is not None and arr.shape[0] != dim:
            raise DimensionError(dim, arr.shape[0])
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.dim

    def __getitem__(self, i):
        return self.values[i]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return self.values.tobytes() == other.values.tobytes()

    def __hash__(self) -> int:
        return hash(self.values.tobytes())

    def __repr__(self) -> str:
        head = ", ".join(f"{v:.4g}" for v in self.values[:3])
        more = ", ..." if self.dim > 3 else ""
        return f"Embedding(dim={self.dim}, [{head}{more}])"


EmbeddingLike = Union[Embedding, ArrayLike]


def as_embedding(value: EmbeddingLike) -> Embedding:
    if isinstance(value, Embedding):
        return value
    return Embedding(value)


def validate_id(identity: str) -> str:
    if not isinstance(identity, str) or not identity:
        raise ValueError("identity id must be a non-empty string")
    if any(unicodedata.category(ch) == "Cc" for ch in identity):
        raise ValueError(f"identity id {identity!r} contains control characters")
    return identity


@dataclass(frozen=True)
class IdentityRecord:
    """One gallery row."""

    id: str
    name: str
    embedding: Embedding

    def __post_init__(self) -> None:
        validate_id(self.id)
        if not isinstance(self.name, str):
            raise TypeError("name must be a string")
        if not isinstance(self.embedding, Embedding):
            object.__setattr__(self, "embedding", Embedding(self.embedding))


@dataclass(frozen=True)
class MatchResult:
    """Nearest gallery record for one probe.

    ``accepted`` is whether ``distance`` fell within the search threshold.
    A search over an empty gallery returns ``None`` instead of a result.
    """

    best_index: int
    best_id: str
    distance: float
    accepted: bool

    @property
    def label(self) -> str:
        """Display tag: the id when accepted, otherwise ``unknown(id, distance)``."""
        if self.accepted:
            return self.best_id
        return f"unknown({self.best_id}, {self.distance:.6g})"


@dataclass(frozen=True)
class SearchConfig:
    threshold: float = DEFAULT_THRESHOLD
    workers: int = 1
    min_chunk: int = DEFAULT_MIN_CHUNK

    def __post_init__(self) -> None:
        if not (math.isfinite(self.threshold) and self.threshold >= 0):
            raise ValueError(f"threshold must be finite and >= 0, got {self.threshold}")
        if int(self.workers) != self.workers or self.workers < 1:
            raise ValueError(f"workers must be a positive integer, got {self.workers}")
        if int(self.min_chunk) != self.min_chunk or self.min_chunk < 1:
            raise ValueError(f"min_chunk must be a positive integer, got {self.min_chunk}")


def euclidean_distance(a: EmbeddingLike, b: EmbeddingLike) -> float:
    """Euclidean distance, accumulated in float64 in ascending index order.

    Raises DimensionError when the vectors differ in length.
    """
    a = as_embedding(a)
    b = as_embedding(b)
    if a.dim != b.dim:
        raise DimensionError(a.dim, b.dim)
    return math.sqrt(_kernels.squared_distance(a.values, b.values))


def is_match(distance: float, threshold: float) -> bool:
    """Inclusive threshold test, so a zero threshold accepts exact duplicates."""
    return distance <= threshold
