"""Exact nearest-neighbour search over a gallery snapshot.

The snapshot is split into contiguous, balanced index ranges; each worker
scans one range for its local best, and the caller reduces the local bests
in range order. Every record's distance comes from the same compiled loop no
matter which worker computes it, so the parallel result is bit-identical to
the sequential scan.
"""

from __future__ import annotations

import threading
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from facematch import _kernels
from facematch.core import EmbeddingLike, MatchResult, SearchConfig, as_embedding, is_match
from facematch.errors import DimensionError
from facematch.gallery import GallerySnapshot


@dataclass(frozen=True)
class ChunkPlan:
    """Half-open ``[start, end)`` ranges, one per active worker."""

    ranges: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.ranges)

    def __iter__(self):
        return iter(self.ranges)


@dataclass(frozen=True)
class LocalBest:
    index: int
    distance: float


def plan_chunks(n: int, config: SearchConfig) -> ChunkPlan:
    """Split ``range(n)`` into at most ``config.workers`` balanced ranges.

    Fewer ranges are used when the gallery is small: no range is planned
    shorter than ``config.min_chunk`` unless that would leave nothing to scan.
    The first ``n % k`` ranges get one extra record.
    """
    if n < 0:
        raise ValueError(f"record count must be >= 0, got {n}")
    if n == 0:
        return ChunkPlan(())
    k = min(config.workers, -(-n // config.min_chunk))
    base, extra = divmod(n, k)
    ranges = []
    start = 0
    for i in range(k):
        end = start + base + (1 if i < extra else 0)
        ranges.append((start, end))
        start = end
    return ChunkPlan(tuple(ranges))


def _probe_array(snapshot: GallerySnapshot, probe: EmbeddingLike, probe_index: int | None = None) -> np.ndarray:
    emb = as_embedding(probe)
    if emb.dim != snapshot.dim:
        raise DimensionError(snapshot.dim, emb.dim, probe_index)
    return emb.values


def scan(snapshot: GallerySnapshot, probe: np.ndarray, start: int, end: int) -> LocalBest:
    index, distance = _kernels.scan_range(snapshot.vectors, probe, start, end)
    return LocalBest(int(index), float(distance))


def _result(snapshot: GallerySnapshot, best: LocalBest, config: SearchConfig) -> MatchResult:
    return MatchResult(
        best.index, snapshot.ids[best.index], best.distance, is_match(best.distance, config.threshold)
    )


def reduce_local_bests(bests: Sequence[LocalBest]) -> LocalBest | None:
    """Global minimum; on equal distance the earlier range (lower index) wins."""
    winner = None
    for b in bests:
        if b.index < 0:
            continue
        if winner is None or b.distance < winner.distance:
            winner = b
    return winner


def search_sequential(
    snapshot: GallerySnapshot, probe: EmbeddingLike, config: SearchConfig
) -> MatchResult | None:
    """Scan every record in index order. ``None`` means the gallery is empty."""
    p = _probe_array(snapshot, probe)
    if len(snapshot) == 0:
        return None
    return _result(snapshot, scan(snapshot, p, 0, len(snapshot)), config)


_pools: dict[int, ThreadPoolExecutor] = {}
_pools_lock = threading.Lock()


def shared_pool(workers: int) -> ThreadPoolExecutor:
    """Process-wide pool of ``workers`` threads, created on first use."""
    with _pools_lock:
        pool = _pools.get(workers)
        if pool is None:
            pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix=f"facematch-{workers}")
            _pools[workers] = pool
        return pool


def _search(
    snapshot: GallerySnapshot, p: np.ndarray, config: SearchConfig, executor: Executor | None
) -> MatchResult | None:
    plan = plan_chunks(len(snapshot), config)
    if not plan.ranges:
        return None
    if len(plan) == 1:
        bests = [scan(snapshot, p, *plan.ranges[0])]
    else:
        pool = executor if executor is not None else shared_pool(config.workers)
        futures = [pool.submit(scan, snapshot, p, start, end) for start, end in plan]
        bests = [f.result() for f in futures]
    return _result(snapshot, reduce_local_bests(bests), config)


def search_parallel(
    snapshot: GallerySnapshot,
    probe: EmbeddingLike,
    config: SearchConfig,
    executor: Executor | None = None,
) -> MatchResult | None:
    """Same answer as :func:`search_sequential`, computed by up to ``config.workers`` threads.

    Uses ``executor`` if given, otherwise a shared pool sized to the worker count.
    """
    return _search(snapshot, _probe_array(snapshot, probe), config, executor)


def search_batch(
    snapshot: GallerySnapshot,
    probes: Sequence[EmbeddingLike],
    config: SearchConfig,
    executor: Executor | None = None,
) -> list[MatchResult | None]:
    arrays = [_probe_array(snapshot, p, i) for i, p in enumerate(probes)]
    return [_search(snapshot, p, config, executor) for p in arrays]


class Matcher:
    """Search front end that owns one worker pool for its lifetime.

    >>> with Matcher(SearchConfig(workers=4)) as m:  # doctest: +SKIP
    ...     m.search(snapshot, probe)
    """

    def __init__(self, config: SearchConfig) -> None:
        self.config = config
        self._pool = (
            ThreadPoolExecutor(max_workers=config.workers, thread_name_prefix="facematch-matcher")
            if config.workers > 1
            else None
        )

    def search(self, snapshot: GallerySnapshot, probe: EmbeddingLike) -> MatchResult | None:
        return search_parallel(snapshot, probe, self.config, self._pool)

    def search_batch(
        self, snapshot: GallerySnapshot, probes: Sequence[EmbeddingLike]
    ) -> list[MatchResult | None]:
        return search_batch(snapshot, probes, self.config, self._pool)

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self) -> Matcher:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


__all__ = [
    "ChunkPlan",
    "LocalBest",
    "Matcher",
    "plan_chunks",
    "reduce_local_bests",
    "search_batch",
    "search_parallel",
    "search_sequential",
    "shared_pool",
]
