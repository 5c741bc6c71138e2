"""Persistent identity gallery and its EMBG on-disk format.

EMBG layout, all integers little-endian::

    0   4  magic b"EMBG"
    4   2  format version (u16, currently 1)
    6   2  embedding dim (u16)
    8   8  record count (u64)
    16  .. records: u16 id length, UTF-8 id, u16 name length, UTF-8 name,
           dim float32 values

No padding and no trailing bytes.
"""

from __future__ import annotations

import logging
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Iterator, Sequence

import numpy as np

from facematch.core import DEFAULT_DIM, Embedding, IdentityRecord, validate_id
from facematch.errors import DecodeError, DimensionError, FormatError, IoError, ProviderError

if TYPE_CHECKING:
    from facematch.provider import EmbedProvider

log = logging.getLogger(__name__)

MAGIC = b"EMBG"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHHQ")
_U16 = struct.Struct("<H")
_MAX_U16 = 0xFFFF


@dataclass(frozen=True, eq=False)
class GallerySnapshot:
    """Immutable view of a gallery at one version.

    ``vectors`` is a read-only, C-contiguous ``(N, dim)`` float32 array;
    ``ids`` and ``names`` are parallel tuples.
    """

    dim: int
    vectors: np.ndarray
    ids: tuple[str, ...]
    names: tuple[str, ...]
    version: int = 0

    def __post_init__(self) -> None:
        vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            raise DimensionError(self.dim, vectors.shape[-1] if vectors.ndim else 0)
        if not (len(self.ids) == len(self.names) == vectors.shape[0]):
            raise ValueError("ids, names and vectors must have the same length")
        if vectors.flags.writeable:
            if vectors is self.vectors:
                vectors = vectors.copy()
            vectors.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "names", tuple(self.names))

    @classmethod
    def from_arrays(
        cls,
        vectors: np.ndarray,
        ids: Sequence[str] | None = None,
        names: Sequence[str] | None = None,
        version: int = 0,
    ) -> GallerySnapshot:
        vectors = np.asarray(vectors, dtype=np.float32)
        n = vectors.shape[0]
        if ids is None:
            ids = [f"id{i}" for i in range(n)]
        if names is None:
            names = ids
        return cls(vectors.shape[1], vectors, tuple(ids), tuple(names), version)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def record(self, index: int) -> IdentityRecord:
        return IdentityRecord(self.ids[index], self.names[index], Embedding(self.vectors[index]))


class Gallery:
    """Ordered, append/remove-able collection of identity records.

    Single-writer: mutate from one thread only. Searches run against
    :meth:`snapshot`, which is unaffected by later mutation. Duplicate ids
    are allowed (several enrollment photos per person).
    """

    def __init__(self, dim: int = DEFAULT_DIM, records: Iterable[IdentityRecord] = ()) -> None:
        if not 1 <= dim <= _MAX_U16:
            raise ValueError(f"dim must be in 1..{_MAX_U16}, got {dim}")
        self.dim = dim
        self.version = 0
        self._ids: list[str] = []
        self._names: list[str] = []
        self._buf = np.empty((16, dim), dtype=np.float32)
        self._snapshot: GallerySnapshot | None = None
        for rec in records:
            self.enroll(rec)
        self.version = 0

    def __len__(self) -> int:
        return len(self._ids)

    def __iter__(self) -> Iterator[IdentityRecord]:
        for i in range(len(self)):
            yield IdentityRecord(self._ids[i], self._names[i], Embedding(self._buf[i]))

    @property
    def records(self) -> list[IdentityRecord]:
        return list(self)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def __eq__(self, other: object) -> bool:
        # version is bookkeeping, not content
        if not isinstance(other, Gallery):
            return NotImplemented
        n = len(self)
        return (
            self.dim == other.dim
            and self._ids == other._ids
            and self._names == other._names
            and self._buf[:n].tobytes() == other._buf[: len(other)].tobytes()
        )

    def __repr__(self) -> str:
        return f"Gallery(dim={self.dim}, records={len(self)}, version={self.version})"

    def _reserve(self, extra: int) -> None:
        need = len(self) + extra
        if need > self._buf.shape[0]:
            cap = max(need, 2 * self._buf.shape[0])
            buf = np.empty((cap, self.dim), dtype=np.float32)
            buf[: len(self)] = self._buf[: len(self)]
            self._buf = buf

    def enroll(self, record: IdentityRecord) -> int:
        """Append ``record`` and return the new version."""
        if record.embedding.dim != self.dim:
            raise DimensionError(self.dim, record.embedding.dim)
        self._reserve(1)
        self._buf[len(self)] = record.embedding.values
        self._ids.append(record.id)
        self._names.append(record.name)
        return self._bump()

    def enroll_arrays(self, ids: Sequence[str], names: Sequence[str], vectors: np.ndarray) -> int:
        """Bulk append. One version bump for the whole batch."""
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            raise DimensionError(self.dim, vectors.shape[-1])
        if not (len(ids) == len(names) == vectors.shape[0]):
            raise ValueError("ids, names and vectors must have the same length")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embeddings contain non-finite values")
        for identity in ids:
            validate_id(identity)
        if vectors.shape[0] == 0:
            return self.version
        self._reserve(vectors.shape[0])
        n = len(self)
        self._buf[n : n + vectors.shape[0]] = vectors
        self._ids.extend(ids)
        self._names.extend(names)
        return self._bump()

    def remove_by_id(self, identity: str) -> int:
        """Drop every record with this id; return how many were removed."""
        keep = [i for i, rid in enumerate(self._ids) if rid != identity]
        removed = len(self) - len(keep)
        if removed == 0:
            return 0
        n = len(keep)
        buf = np.empty((max(n, 16), self.dim), dtype=np.float32)
        buf[:n] = self._buf[keep] if keep else buf[:0]
        self._buf = buf
        self._ids = [self._ids[i] for i in keep]
        self._names = [self._names[i] for i in keep]
        self._bump()
        return removed

    def snapshot(self) -> GallerySnapshot:
        if self._snapshot is None or self._snapshot.version != self.version:
            vectors = self._buf[: len(self)].copy()
            vectors.flags.writeable = False
            self._snapshot = GallerySnapshot(
                self.dim, vectors, tuple(self._ids), tuple(self._names), self.version
            )
        return self._snapshot

    def _bump(self) -> int:
        self.version += 1
        self._snapshot = None
        return self.version


def enroll(gallery: Gallery, record: IdentityRecord) -> int:
    return gallery.enroll(record)


def remove_by_id(gallery: Gallery, identity: str) -> int:
    return gallery.remove_by_id(identity)


def to_bytes(gallery: Gallery) -> bytes:
    """Serialise to EMBG. Same contents always give the same bytes."""
    n = len(gallery)
    parts = [HEADER.pack(MAGIC, FORMAT_VERSION, gallery.dim, n)]
    rows = gallery._buf[:n].astype("<f4", copy=False)
    for i in range(n):
        for text in (gallery._ids[i], gallery._names[i]):
            raw = text.encode("utf-8")
            if len(raw) > _MAX_U16:
                raise ValueError(f"string of {len(raw)} bytes does not fit a u16 length field")
            parts.append(_U16.pack(len(raw)))
            parts.append(raw)
        parts.append(rows[i].tobytes())
    return b"".join(parts)


def save(gallery: Gallery, path: str | os.PathLike) -> int:
    """Write the gallery to ``path`` atomically; return the byte count."""
    data = to_bytes(gallery)
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(path, exc) from exc
    return len(data)


def _parse_header(data: bytes) -> tuple[int, int]:
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError("bad magic, expected b'EMBG'", 0)
    if len(data) < HEADER.size:
        raise FormatError("truncated header", len(data))
    _, version, dim, count = HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", 4)
    if dim == 0:
        raise FormatError("dimension of 0", 6)
    return dim, count


def read_header(path: str | os.PathLike) -> tuple[int, int, int]:
    """Return ``(format_version, dim, count)`` reading only the 16-byte header."""
    try:
        with open(path, "rb") as fh:
            data = fh.read(HEADER.size)
    except OSError as exc:
        raise IoError(path, exc) from exc
    dim, count = _parse_header(data)
    return FORMAT_VERSION, dim, count


def from_bytes(data: bytes) -> Gallery:
    dim, count = _parse_header(data)
    off = HEADER.size
    row_bytes = 4 * dim
    # each record needs at least 4 length bytes plus its floats
    if count > (len(data) - off) // (4 + row_bytes):
        raise FormatError(f"record count {count} exceeds file size", 8)
    ids: list[str] = []
    names: list[str] = []
    vectors = np.empty((count, dim), dtype=np.float32)
    view = memoryview(data)

    def take(size: int, what: str) -> memoryview:
        nonlocal off
        if off + size > len(data):
            raise FormatError(f"truncated {what}", off)
        chunk = view[off : off + size]
        off += size
        return chunk

    def text(what: str) -> str:
        start = off
        (length,) = _U16.unpack(take(2, f"{what} length"))
        raw = take(length, what)
        try:
            return str(raw, "utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{what} is not valid UTF-8", start + 2) from None

    for i in range(count):
        rec_start = off
        identity = text("id")
        try:
            validate_id(identity)
        except ValueError as exc:
            raise FormatError(str(exc), rec_start) from None
        ids.append(identity)
        names.append(text("name"))
        vec_start = off
        row = np.frombuffer(take(row_bytes, "embedding"), dtype="<f4")
        if not np.all(np.isfinite(row)):
            raise FormatError("non-finite embedding value", vec_start)
        vectors[i] = row
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes", off)
    gallery = Gallery(dim)
    gallery._buf = vectors if count else gallery._buf
    gallery._ids = ids
    gallery._names = names
    return gallery


def load(path: str | os.PathLike) -> Gallery:
    """Read an EMBG file. The returned gallery starts at version 0."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(path, exc) from exc
    return from_bytes(data)


IMAGE_SUFFIXES = (".png", ".ppm")


def identity_from_filename(path: str | os.PathLike) -> str:
    """``alice_01.png`` -> ``alice``. Falls back to the full stem."""
    stem = Path(path).stem
    head = stem.split("_", 1)[0]
    return head or stem


def build_from_directory(
    directory: str | os.PathLike,
    provider: EmbedProvider,
    gallery: Gallery | None = None,
) -> Gallery:
    """Enroll every face found in the images of ``directory``.

    Images are visited in lexicographic filename order and faces in the
    provider's detection order. Unreadable images are logged and skipped.
    Pass ``gallery`` to extend an existing one.
    """
    from facematch.provider import load_frame

    if gallery is None:
        gallery = Gallery(provider.dim)
    elif gallery.dim != provider.dim:
        raise DimensionError(gallery.dim, provider.dim)
    directory = Path(directory)
    try:
        entries = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    except OSError as exc:
        raise IoError(directory, exc) from exc
    for path in entries:
        try:
            frame = load_frame(path)
        except (DecodeError, IoError) as exc:
            log.warning("skipping %s: %s", path, exc)
            continue
        identity = identity_from_filename(path)
        for box in provider.detect(frame):
            try:
                emb = provider.embed(frame, box)
            except ProviderError as exc:
                log.warning("skipping face %s in %s: %s", box, path, exc)
                continue
            gallery.enroll(IdentityRecord(identity, identity, emb))
    return gallery
