"""Frame-by-frame identification: detect, embed, search, report."""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Union

import numpy as np

from facematch import _kernels
from facematch.core import MatchResult, SearchConfig
from facematch.errors import DecodeError, DimensionError, IoError, ProviderError
from facematch.gallery import IMAGE_SUFFIXES, GallerySnapshot
from facematch.matcher import Matcher
from facematch.provider import EmbedProvider, FaceBox, Frame, format_sidecar

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrameFailure:
    """Placeholder a source yields for a frame it could not decode."""

    source_tag: str
    error: str


SourceItem = Union[Frame, FrameFailure]


class DirectorySource:
    """Images in a directory, in lexicographic filename order."""

    def __init__(self, directory: str | os.PathLike) -> None:
        self.directory = Path(directory)

    def paths(self) -> list[Path]:
        try:
            return sorted(p for p in self.directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        except OSError as exc:
            raise IoError(self.directory, exc) from exc

    def __iter__(self) -> Iterator[SourceItem]:
        from facematch.provider import load_frame

        for path in self.paths():
            try:
                yield load_frame(path)
            except (DecodeError, IoError) as exc:
                log.warning("cannot decode %s: %s", path, exc)
                yield FrameFailure(str(path), str(exc))


class SyntheticSource:
    """Seeded random frames with random face boxes.

    ``annotations`` maps each frame's tag to its boxes; hand it to
    ``MockProvider(annotations=...)`` so detection finds them.
    """

    def __init__(
        self,
        count: int,
        seed: int = 0,
        width: int = 96,
        height: int = 96,
        faces_per_frame: int = 1,
        face_size: int = 24,
    ) -> None:
        rng = np.random.default_rng(seed)
        self.frames: list[Frame] = []
        self.annotations: dict[str, list[FaceBox]] = {}
        for i in range(count):
            tag = f"synthetic-{seed}-{i:06d}"
            pixels = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
            self.frames.append(Frame.from_array(pixels, tag))
            boxes = []
            for _ in range(faces_per_frame):
                x = int(rng.integers(0, width - face_size + 1))
                y = int(rng.integers(0, height - face_size + 1))
                conf = round(float(rng.uniform(0.5, 1.0)), 3)
                boxes.append(FaceBox(x, y, face_size, face_size, conf))
            self.annotations[tag] = boxes

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)

    def __len__(self) -> int:
        return len(self.frames)

    def write(self, directory: str | os.PathLike) -> list[Path]:
        """Dump frames as PPM files with ``.faces`` sidecars."""
        from facematch.provider import save_ppm

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        out = []
        for frame in self.frames:
            path = save_ppm(frame, directory / f"{frame.source_tag}.ppm")
            path.with_suffix(".faces").write_text(format_sidecar(self.annotations[frame.source_tag]))
            out.append(path)
        return out


@dataclass(frozen=True)
class Detection:
    box: FaceBox
    match: MatchResult | None
    error: str | None = None

    @property
    def label(self) -> str:
        if self.error is not None:
            return "error"
        if self.match is None:
            return "unknown"
        return self.match.label


@dataclass(frozen=True)
class Timings:
    detect_ms: float = 0.0
    embed_ms: float = 0.0
    search_ms: float = 0.0
    total_ms: float = 0.0


@dataclass(frozen=True)
class FrameReport:
    source_tag: str
    detections: tuple[Detection, ...]
    timings: Timings
    error: str | None = None

    def to_json(self) -> dict:
        """JSON-lines record. Everything except ``timings`` is deterministic."""
        dets = self.detections
        return {
            "source_tag": self.source_tag,
            "boxes": [d.box.as_list() for d in dets],
            "ids": [d.match.best_id if d.match else None for d in dets],
            "indices": [d.match.best_index if d.match else None for d in dets],
            "distances": [d.match.distance if d.match else None for d in dets],
            "accepted": [bool(d.match and d.match.accepted) for d in dets],
            "labels": [d.label for d in dets],
            "errors": [d.error for d in dets],
            "frame_error": self.error,
            "timings": {
                "detect_ms": self.timings.detect_ms,
                "embed_ms": self.timings.embed_ms,
                "search_ms": self.timings.search_ms,
                "total_ms": self.timings.total_ms,
            },
        }


def _ms(ns: int) -> float:
    return ns / 1e6


def process_frame(
    frame: Frame,
    provider: EmbedProvider,
    snapshot: GallerySnapshot,
    config: SearchConfig,
    matcher: Matcher | None = None,
) -> FrameReport:
    """Identify every face in one frame.

    A provider failure on one face becomes an error entry for that face;
    the rest of the frame is still processed.
    """
    if provider.dim != snapshot.dim:
        raise DimensionError(snapshot.dim, provider.dim)
    own = matcher is None
    if own:
        matcher = Matcher(config)
    try:
        t0 = time.perf_counter_ns()
        boxes = provider.detect(frame)
        t1 = time.perf_counter_ns()
        embed_ns = search_ns = 0
        detections = []
        for box in boxes:
            s = time.perf_counter_ns()
            try:
                emb = provider.embed(frame, box)
            except ProviderError as exc:
                embed_ns += time.perf_counter_ns() - s
                detections.append(Detection(box, None, str(exc)))
                continue
            m = time.perf_counter_ns()
            embed_ns += m - s
            result = matcher.search(snapshot, emb)
            search_ns += time.perf_counter_ns() - m
            detections.append(Detection(box, result))
        end = time.perf_counter_ns()
    finally:
        if own:
            matcher.close()
    timings = Timings(_ms(t1 - t0), _ms(embed_ns), _ms(search_ns), _ms(end - t0))
    return FrameReport(frame.source_tag, tuple(detections), timings)


@dataclass
class RunSummary:
    frames: int = 0
    faces: int = 0
    accepted: int = 0
    frame_errors: int = 0
    face_errors: int = 0
    p50_ms: float = 0.0
    p95_ms: float = 0.0
    max_ms: float = 0.0
    complete: bool = True
    error: str | None = None
    frame_ms: list[float] = field(default_factory=list, repr=False)

    def finish(self) -> RunSummary:
        if self.frame_ms:
            lat = np.asarray(self.frame_ms)
            self.p50_ms = float(np.percentile(lat, 50))
            self.p95_ms = float(np.percentile(lat, 95))
            self.max_ms = float(lat.max())
        return self


ReportSink = Callable[[FrameReport], None]


def run(
    source: Iterable[SourceItem],
    provider: EmbedProvider,
    snapshot: GallerySnapshot,
    config: SearchConfig,
    sink: ReportSink | None = None,
) -> RunSummary:
    """Process the whole stream against one fixed snapshot.

    The sink sees one report per source item, in source order. If the source
    itself raises, the run stops and the summary is marked incomplete.
    """
    if provider.dim != snapshot.dim:
        raise DimensionError(snapshot.dim, provider.dim)
    _kernels.warm_up()
    summary = RunSummary()
    with Matcher(config) as matcher:
        it = iter(source)
        while True:
            try:
                item = next(it)
            except StopIteration:
                break
            except Exception as exc:  # noqa: BLE001 - any source failure ends the run
                log.error("frame source failed: %s", exc)
                summary.complete = False
                summary.error = str(exc)
                break
            if isinstance(item, FrameFailure):
                report = FrameReport(item.source_tag, (), Timings(), item.error)
                summary.frame_errors += 1
            else:
                report = process_frame(item, provider, snapshot, config, matcher)
            summary.frames += 1
            summary.faces += len(report.detections)
            summary.accepted += sum(1 for d in report.detections if d.match and d.match.accepted)
            summary.face_errors += sum(1 for d in report.detections if d.error is not None)
            summary.frame_ms.append(report.timings.total_ms)
            if sink is not None:
                sink(report)
    return summary.finish()


class JsonLinesSink:
    """Writes one JSON object per report to a text stream."""

    def __init__(self, stream) -> None:
        self.stream = stream

    def __call__(self, report: FrameReport) -> None:
        self.stream.write(json.dumps(report.to_json(), ensure_ascii=False) + "\n")
