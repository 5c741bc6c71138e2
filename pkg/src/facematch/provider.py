"""Face detection / embedding providers and image loading.

The real system would plug an SSD face detector and an Inception-style
embedding network in here. What ships is :class:`MockProvider`: detection
comes from ``.faces`` sidecar annotations, and embeddings are a pure
function of the cropped pixel bytes.

Mock embedding recipe (stable across platforms)::

    h     = FNV-1a-64(u32le(crop_w) + u32le(crop_h) + crop_rgb_bytes,
                      offset_basis = 0xCBF29CE484222325 ^ seed)
    state = splitmix64(h)            # 0 is replaced by 0x9E3779B97F4A7C15
    for each of dim values:
        x      = xorshift64*(state)  # shifts 12, 25, 27; multiplier 0x2545F4914F6CDD1D
        value  = float32(2 * (x >> 11) / 2**53 - 1)
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence, runtime_checkable

import numpy as np

from facematch import _kernels
from facematch.core import DEFAULT_DIM, Embedding
from facematch.errors import DecodeError, IoError, ProviderError

log = logging.getLogger(__name__)

FNV_OFFSET = 0xCBF29CE484222325
MASK64 = (1 << 64) - 1
SIDECAR_SUFFIX = ".faces"


@dataclass(frozen=True)
class FaceBox:
    """Face bounding box in pixels: top-left corner plus size."""

    x: int
    y: int
    width: int
    height: int
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"box size must be positive, got {self.width}x{self.height}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")

    def clamp(self, frame_width: int, frame_height: int) -> tuple[int, int, int, int]:
        """Return ``(x0, y0, x1, y1)`` clipped to the frame; may be empty."""
        x0 = min(max(self.x, 0), frame_width)
        y0 = min(max(self.y, 0), frame_height)
        x1 = min(max(self.x + self.width, 0), frame_width)
        y1 = min(max(self.y + self.height, 0), frame_height)
        return x0, y0, x1, y1

    def as_list(self) -> list:
        return [self.x, self.y, self.width, self.height, self.confidence]


def detection_order(boxes: Sequence[FaceBox]) -> list[FaceBox]:
    """Confidence descending, then top to bottom, then left to right."""
    return sorted(boxes, key=lambda b: (-b.confidence, b.y, b.x))


@dataclass(frozen=True, eq=False)
class Frame:
    """An RGB image, row-major, 3 bytes per pixel."""

    width: int
    height: int
    pixels: bytes
    source_tag: str = ""

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame size must be positive, got {self.width}x{self.height}")
        pixels = bytes(self.pixels)
        if len(pixels) != self.width * self.height * 3:
            raise ValueError(
                f"pixel buffer has {len(pixels)} bytes, expected {self.width * self.height * 3}"
            )
        object.__setattr__(self, "pixels", pixels)

    @classmethod
    def from_array(cls, rgb: np.ndarray, source_tag: str = "") -> Frame:
        rgb = np.asarray(rgb, dtype=np.uint8)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise ValueError(f"expected an (H, W, 3) array, got {rgb.shape}")
        return cls(rgb.shape[1], rgb.shape[0], rgb.tobytes(), source_tag)

    def array(self) -> np.ndarray:
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.height, self.width, 3)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return (self.width, self.height, self.pixels, self.source_tag) == (
            other.width,
            other.height,
            other.pixels,
            other.source_tag,
        )


@runtime_checkable
class EmbedProvider(Protocol):
    """Anything that can find faces in a frame and embed them.

    ``detect`` must return boxes in :func:`detection_order`; ``embed`` must
    return an Embedding of exactly ``dim`` finite values. Implementations
    must be safe to call from several threads.
    """

    dim: int

    def detect(self, frame: Frame) -> list[FaceBox]: ...

    def embed(self, frame: Frame, box: FaceBox) -> Embedding: ...


# -- sidecar annotations ------------------------------------------------------


def sidecar_path(image_path: str | os.PathLike) -> Path:
    return Path(image_path).with_suffix(SIDECAR_SUFFIX)


def parse_sidecar(text: str, origin: str = "<sidecar>") -> list[FaceBox]:
    """Parse ``x y width height confidence`` lines; ``#`` starts a comment."""
    boxes = []
    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        try:
            if len(fields) != 5:
                raise ValueError(f"expected 5 fields, got {len(fields)}")
            x, y, w, h = (int(f) for f in fields[:4])
            boxes.append(FaceBox(x, y, w, h, float(fields[4])))
        except ValueError as exc:
            raise ProviderError(f"{origin}:{lineno}: {exc}") from None
    return boxes


def format_sidecar(boxes: Sequence[FaceBox]) -> str:
    return "".join(f"{b.x} {b.y} {b.width} {b.height} {b.confidence!r}\n" for b in boxes)


def write_sidecar(image_path: str | os.PathLike, boxes: Sequence[FaceBox]) -> Path:
    path = sidecar_path(image_path)
    path.write_text(format_sidecar(boxes), encoding="ascii", newline="\n")
    return path


# -- hashing and PRNG -----------------------------------------------------------


def fnv1a64(data: bytes, seed: int = 0) -> int:
    arr = np.frombuffer(data, dtype=np.uint8)
    return int(_kernels.fnv1a64(arr, np.uint64((FNV_OFFSET ^ seed) & MASK64)))


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def uniform_stream(seed: int, count: int) -> np.ndarray:
    """``count`` float32 values in [-1, 1] from xorshift64* seeded via splitmix64."""
    state = splitmix64(seed & MASK64) or 0x9E3779B97F4A7C15
    out = np.empty(count, dtype=np.float64)
    for i in range(count):
        state ^= state >> 12
        state ^= (state << 25) & MASK64
        state ^= state >> 27
        x = (state * 0x2545F4914F6CDD1D) & MASK64
        out[i] = 2.0 * (x >> 11) / 9007199254740992.0 - 1.0
    return out.astype(np.float32)


def crop_bytes(frame: Frame, box: FaceBox) -> tuple[int, int, bytes]:
    x0, y0, x1, y1 = box.clamp(frame.width, frame.height)
    if x1 <= x0 or y1 <= y0:
        raise ProviderError(f"box {box.as_list()} has no area inside {frame.width}x{frame.height} frame")
    crop = frame.array()[y0:y1, x0:x1]
    return x1 - x0, y1 - y0, crop.tobytes()


class MockProvider:
    """Deterministic stand-in for a detector plus embedding network.

    Boxes come from ``annotations[frame.source_tag]`` when present, else from
    the ``.faces`` file beside the image named by ``source_tag``. Embeddings
    are content-addressed: equal crops give bit-identical vectors.
    """

    def __init__(
        self,
        dim: int = DEFAULT_DIM,
        seed: int = 0,
        annotations: Mapping[str, Sequence[FaceBox]] | None = None,
    ) -> None:
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim
        self.seed = seed
        self.annotations = dict(annotations or {})

    def detect(self, frame: Frame) -> list[FaceBox]:
        boxes = self.annotations.get(frame.source_tag)
        if boxes is None:
            boxes = self._read_sidecar(frame.source_tag)
        return detection_order(boxes)

    def _read_sidecar(self, source_tag: str) -> list[FaceBox]:
        if not source_tag:
            return []
        path = sidecar_path(source_tag)
        try:
            text = path.read_text(encoding="ascii")
        except FileNotFoundError:
            return []
        except (OSError, UnicodeDecodeError) as exc:
            raise ProviderError(f"cannot read {path}: {exc}") from exc
        return parse_sidecar(text, str(path))

    def embed(self, frame: Frame, box: FaceBox) -> Embedding:
        w, h, data = crop_bytes(frame, box)
        digest = fnv1a64(struct.pack("<II", w, h) + data, self.seed)
        return Embedding(uniform_stream(digest, self.dim))


# -- image decoding -------------------------------------------------------------


def _decode_ppm(data: bytes, tag: str) -> Frame:
    magic = data[:2]
    if magic not in (b"P6", b"P3"):
        raise DecodeError(f"{tag}: not a PPM file")
    tokens: list[bytes] = []
    pos = 2
    # header: width, height, maxval, each separated by whitespace or comments
    while len(tokens) < 3:
        if pos >= len(data):
            raise DecodeError(f"{tag}: truncated PPM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
                pos += 1
            tokens.append(data[start:pos])
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise DecodeError(f"{tag}: malformed PPM header") from None
    if width <= 0 or height <= 0 or not 0 < maxval <= 255:
        raise DecodeError(f"{tag}: unsupported PPM geometry {width}x{height} maxval {maxval}")
    count = width * height * 3
    if magic == b"P6":
        if pos >= len(data) or not data[pos : pos + 1].isspace():
            raise DecodeError(f"{tag}: malformed PPM header")
        raster = data[pos + 1 : pos + 1 + count]
        if len(raster) != count:
            raise DecodeError(f"{tag}: truncated PPM raster")
        values = np.frombuffer(raster, dtype=np.uint8)
    else:
        body = b" ".join(line.split(b"#", 1)[0] for line in data[pos:].splitlines())
        try:
            values = np.array([int(t) for t in body.split()[:count]], dtype=np.int64)
        except ValueError:
            raise DecodeError(f"{tag}: malformed ASCII PPM raster") from None
        if values.size != count or values.max(initial=0) > maxval:
            raise DecodeError(f"{tag}: bad ASCII PPM raster")
    if maxval != 255:
        values = (values.astype(np.int64) * 255 + maxval // 2) // maxval
    return Frame(width, height, values.astype(np.uint8).tobytes(), tag)


def _decode_png(path: Path, tag: str) -> Frame:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            return Frame(rgb.width, rgb.height, rgb.tobytes(), tag)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"{tag}: {exc}") from exc


def load_frame(path: str | os.PathLike) -> Frame:
    """Decode a PNG or PPM file into an RGB frame tagged with its path."""
    path = Path(path)
    tag = str(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        if not path.exists():
            raise IoError(path, FileNotFoundError("no such file"))
        return _decode_png(path, tag)
    if suffix in (".ppm", ".pnm"):
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise IoError(path, exc) from exc
        return _decode_ppm(data, tag)
    raise DecodeError(f"{tag}: unsupported image format {suffix or '(none)'}")


def encode_ppm(frame: Frame) -> bytes:
    return b"P6\n%d %d\n255\n" % (frame.width, frame.height) + frame.pixels


def save_ppm(frame: Frame, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.write_bytes(encode_ppm(frame))
    return path
