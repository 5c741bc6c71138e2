"""Search-speedup benchmark over synthetic galleries.

Output CSV::

    # key: value            machine / run metadata
    gallery_size,workers,mean_search_us,p95_search_us,speedup_vs_1
"""

from __future__ import annotations

import csv
import io
import os
import platform
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from facematch import _kernels
from facematch.core import DEFAULT_DIM, DEFAULT_MIN_CHUNK, SearchConfig
from facematch.errors import FaceMatchError
from facematch.gallery import GallerySnapshot
from facematch.matcher import Matcher, search_sequential

CSV_COLUMNS = ("gallery_size", "workers", "mean_search_us", "p95_search_us", "speedup_vs_1")


class BenchMismatch(FaceMatchError):
    """A timed search disagreed with the sequential reference."""


@dataclass(frozen=True)
class BenchSpec:
    gallery_sizes: Sequence[int]
    worker_counts: Sequence[int]
    probes_per_point: int = 100
    dim: int = DEFAULT_DIM
    seed: int = 0
    warmup_iters: int = 3
    min_chunk: int = DEFAULT_MIN_CHUNK
    check_fraction: float = 0.01

    def __post_init__(self) -> None:
        if not self.gallery_sizes or not self.worker_counts:
            raise ValueError("gallery_sizes and worker_counts must be non-empty")
        if any(n < 1 for n in self.gallery_sizes):
            raise ValueError("gallery sizes must be positive")
        if any(w < 1 for w in self.worker_counts):
            raise ValueError("worker counts must be positive")
        if self.probes_per_point < 1:
            raise ValueError("probes_per_point must be >= 1")
        if self.dim < 1 or self.warmup_iters < 0:
            raise ValueError("dim must be positive and warmup_iters non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class BenchRow:
    gallery_size: int
    workers: int
    mean_search_us: float
    p95_search_us: float
    speedup_vs_1: float = 1.0
    samples_us: list[float] = field(default_factory=list, repr=False)

    def csv_fields(self) -> list[str]:
        return [
            str(self.gallery_size),
            str(self.workers),
            f"{self.mean_search_us:.3f}",
            f"{self.p95_search_us:.3f}",
            f"{self.speedup_vs_1:.4f}",
        ]


def synthetic_vectors(n: int, dim: int, seed: int, block: int = 65536) -> np.ndarray:
    """Seeded uniform [-1, 1] float32 rows, generated in blocks to bound memory."""
    rng = np.random.default_rng(seed)
    out = np.empty((n, dim), dtype=np.float32)
    for start in range(0, n, block):
        stop = min(n, start + block)
        out[start:stop] = rng.uniform(-1.0, 1.0, size=(stop - start, dim)).astype(np.float32)
    return out


def synthetic_snapshot(n: int, dim: int, seed: int) -> GallerySnapshot:
    vectors = synthetic_vectors(n, dim, seed)
    vectors.flags.writeable = False
    ids = tuple(f"s{i}" for i in range(n))
    return GallerySnapshot(dim, vectors, ids, ids)


def machine_info() -> dict[str, str]:
    import psutil

    model = platform.processor() or ""
    try:
        with open("/proc/cpuinfo", encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("model name"):
                    model = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return {
        "cpu_model": model or "unknown",
        "logical_cores": str(os.cpu_count() or 0),
        "physical_cores": str(psutil.cpu_count(logical=False) or 0),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def time_searches(
    snapshot: GallerySnapshot,
    probes: np.ndarray,
    config: SearchConfig,
    warmup: int,
    check_every: int,
) -> list[float]:
    """Per-probe search latency in microseconds.

    Every ``check_every``-th probe is re-run sequentially; a mismatch raises
    BenchMismatch.
    """
    samples = []
    with Matcher(config) as matcher:
        for i in range(warmup):
            matcher.search(snapshot, probes[i % len(probes)])
        for i, probe in enumerate(probes):
            t0 = time.perf_counter_ns()
            result = matcher.search(snapshot, probe)
            samples.append((time.perf_counter_ns() - t0) / 1e3)
            if i % check_every == 0:
                expected = search_sequential(snapshot, probe, config)
                if result != expected:
                    raise BenchMismatch(
                        f"size {len(snapshot)}, workers {config.workers}, probe {i}: "
                        f"{result} != {expected}"
                    )
    return samples


def run_bench(spec: BenchSpec, progress=None) -> list[BenchRow]:
    """Time every (size, workers) cell, one cell at a time.

    Rows come back sorted by (gallery_size, workers). ``speedup_vs_1`` divides
    the size's first 1-worker mean by the row's mean; a 1-worker baseline is
    measured even when 1 is not among ``worker_counts``.
    """
    _kernels.warm_up()
    check_every = max(1, round(1 / spec.check_fraction)) if spec.check_fraction > 0 else 1 << 62
    rows: list[BenchRow] = []
    order = sorted(range(len(spec.worker_counts)), key=lambda i: spec.worker_counts[i])
    for size in sorted(spec.gallery_sizes):
        snapshot = synthetic_snapshot(size, spec.dim, spec.seed)
        probes = synthetic_vectors(spec.probes_per_point, spec.dim, spec.seed + 1)
        cells = []
        for i in order:
            workers = spec.worker_counts[i]
            config = SearchConfig(threshold=0.0, workers=workers, min_chunk=spec.min_chunk)
            samples = time_searches(snapshot, probes, config, spec.warmup_iters, check_every)
            cells.append(
                BenchRow(size, workers, float(np.mean(samples)), float(np.percentile(samples, 95)), 1.0, samples)
            )
            if progress:
                progress(cells[-1])
        baseline = next((c.mean_search_us for c in cells if c.workers == 1), None)
        if baseline is None:
            config = SearchConfig(threshold=0.0, workers=1, min_chunk=spec.min_chunk)
            baseline = float(np.mean(time_searches(snapshot, probes, config, spec.warmup_iters, check_every)))
        for c in cells:
            c.speedup_vs_1 = 1.0 if c.workers == 1 else baseline / c.mean_search_us
        rows.extend(cells)
    return rows


def format_csv(rows: Sequence[BenchRow], spec: BenchSpec, metadata: dict[str, str] | None = None) -> str:
    buf = io.StringIO()
    meta = dict(metadata if metadata is not None else machine_info())
    meta.update(
        probes_per_point=str(spec.probes_per_point),
        dim=str(spec.dim),
        seed=str(spec.seed),
        warmup_iters=str(spec.warmup_iters),
        min_chunk=str(spec.min_chunk),
    )
    for key, value in meta.items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


def read_csv(text: str) -> list[dict[str, str]]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))
