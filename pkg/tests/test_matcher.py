import math
import threading
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facematch import (
    DimensionError,
    Gallery,
    GallerySnapshot,
    Matcher,
    SearchConfig,
    plan_chunks,
    search_batch,
    search_parallel,
    search_sequential,
)
from facematch.matcher import LocalBest, reduce_local_bests


def snapshot_of(vectors, ids=None):
    return GallerySnapshot.from_arrays(np.asarray(vectors, dtype=np.float32), ids)


def naive_nearest(rows, probe):
    """Plain double loop over rows and coordinates, in Python floats."""
    best, best_d = None, None
    for i, row in enumerate(rows):
        d = math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(row, probe)))
        if best_d is None or d < best_d:
            best, best_d = i, d
    return best, best_d


def covers_exactly(plan, n):
    seen = set()
    for start, end in plan:
        chunk = set(range(start, end))
        assert not (chunk & seen)
        seen |= chunk
    return seen == set(range(n))


def test_plan_empty():
    assert plan_chunks(0, SearchConfig(workers=8, min_chunk=1)).ranges == ()


def test_plan_balanced_split():
    plan = plan_chunks(10, SearchConfig(workers=4, min_chunk=1))
    assert plan.ranges == ((0, 3), (3, 6), (6, 8), (8, 10))


def test_plan_large_gallery_coverage():
    plan = plan_chunks(100_000, SearchConfig(workers=8, min_chunk=1024))
    assert len(plan) == 8
    assert covers_exactly(plan, 100_000)
    assert [s for s, _ in plan] == sorted(s for s, _ in plan)


def test_plan_small_gallery_uses_fewer_workers():
    assert len(plan_chunks(1000, SearchConfig(workers=8, min_chunk=1024))) == 1
    assert len(plan_chunks(3000, SearchConfig(workers=8, min_chunk=1024))) == 3


@given(st.integers(0, 200_000), st.integers(1, 32), st.integers(1, 5000))
def test_plan_invariants(n, workers, min_chunk):
    plan = plan_chunks(n, SearchConfig(workers=workers, min_chunk=min_chunk))
    assert plan == plan_chunks(n, SearchConfig(workers=workers, min_chunk=min_chunk))
    if n == 0:
        assert len(plan) == 0
        return
    assert len(plan) == min(workers, math.ceil(n / min_chunk))
    sizes = [e - s for s, e in plan]
    assert max(sizes) - min(sizes) <= 1 and min(sizes) >= 1
    starts = [s for s, _ in plan]
    ends = [e for _, e in plan]
    assert starts[0] == 0 and ends[-1] == n and starts[1:] == ends[:-1]


def test_singleton_exact_match_threshold_zero():
    snap = snapshot_of([[0.5, -1.0, 2.0]], ["only"])
    r = search_sequential(snap, [0.5, -1.0, 2.0], SearchConfig(threshold=0.0))
    assert (r.best_index, r.best_id, r.distance, r.accepted) == (0, "only", 0.0, True)


def test_tie_breaks_to_lowest_index():
    snap = snapshot_of([[1, 1], [0, 0], [0, 0]])
    r = search_sequential(snap, [0, 0], SearchConfig())
    assert r.best_index == 1


def test_empty_gallery_gives_none():
    snap = snapshot_of(np.zeros((0, 4)), [])
    cfg = SearchConfig(workers=4)
    assert search_sequential(snap, np.zeros(4), cfg) is None
    assert search_parallel(snap, np.zeros(4), cfg) is None


def test_dimension_mismatch():
    snap = snapshot_of(np.zeros((3, 4)))
    with pytest.raises(DimensionError):
        search_sequential(snap, np.zeros(5), SearchConfig())
    with pytest.raises(DimensionError):
        search_parallel(snap, np.zeros(5), SearchConfig(workers=2))


def test_sequential_matches_naive_oracle():
    rng = np.random.default_rng(11)
    rows = rng.uniform(-1, 1, size=(500, 16)).astype(np.float32)
    snap = snapshot_of(rows)
    cfg = SearchConfig()
    for probe in rng.uniform(-1, 1, size=(50, 16)).astype(np.float32):
        index, dist = naive_nearest(rows, probe)
        r = search_sequential(snap, probe, cfg)
        assert r.best_index == index
        assert r.distance == pytest.approx(dist, rel=1e-12)


def test_parallel_one_worker_equals_sequential():
    rng = np.random.default_rng(12)
    snap = snapshot_of(rng.normal(size=(300, 8)))
    probe = rng.normal(size=8)
    assert search_parallel(snap, probe, SearchConfig(workers=1)) == search_sequential(
        snap, probe, SearchConfig()
    )


def test_exact_duplicate_probe_hits_first_occurrence():
    rng = np.random.default_rng(13)
    rows = rng.normal(size=(2000, 8)).astype(np.float32)
    rows[1500] = rows[700]
    snap = snapshot_of(rows)
    r = search_parallel(snap, rows[700], SearchConfig(threshold=0.0, workers=8, min_chunk=1))
    assert (r.best_index, r.distance, r.accepted) == (700, 0.0, True)


@pytest.mark.parametrize("workers", [2, 3, 4, 8])
def test_parallel_equals_sequential_10k(workers):
    rng = np.random.default_rng(workers)
    snap = snapshot_of(rng.uniform(-1, 1, size=(10_000, 128)))
    cfg = SearchConfig(threshold=7.0, workers=workers, min_chunk=256)
    for probe in rng.uniform(-1, 1, size=(100, 128)):
        assert search_parallel(snap, probe, cfg) == search_sequential(snap, probe, cfg)


def test_batch_matches_single_searches():
    rng = np.random.default_rng(14)
    snap = snapshot_of(rng.normal(size=(1000, 16)))
    probes = list(rng.normal(size=(16, 16)))
    cfg = SearchConfig(workers=4, min_chunk=64)
    assert search_batch(snap, [], cfg) == []
    assert search_batch(snap, probes[:1], cfg) == [search_parallel(snap, probes[0], cfg)]
    assert search_batch(snap, probes, cfg) == [search_sequential(snap, p, cfg) for p in probes]


def test_batch_dimension_error_names_probe():
    snap = snapshot_of(np.zeros((2, 3)))
    with pytest.raises(DimensionError) as err:
        search_batch(snap, [np.zeros(3), np.zeros(3), np.zeros(4)], SearchConfig())
    assert err.value.probe_index == 2


def test_reduce_prefers_earlier_range_on_tie():
    best = reduce_local_bests([LocalBest(-1, math.inf), LocalBest(5, 1.0), LocalBest(9, 1.0), LocalBest(12, 2.0)])
    assert best == LocalBest(5, 1.0)
    assert reduce_local_bests([]) is None


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 300),
    st.integers(1, 6),
    st.integers(1, 32),
    st.integers(1, 50),
    st.integers(0, 2**32 - 1),
)
def test_worker_count_independence(n, dim, workers, min_chunk, seed):
    rng = np.random.default_rng(seed)
    # coarse values force many exact distance ties
    rows = rng.integers(-2, 3, size=(n, dim)).astype(np.float32)
    snap = snapshot_of(rows)
    probe = rng.integers(-2, 3, size=dim).astype(np.float32)
    expected = search_sequential(snap, probe, SearchConfig())
    assert search_parallel(snap, probe, SearchConfig(workers=workers, min_chunk=min_chunk)) == expected


def test_renaming_records_never_moves_the_match():
    rng = np.random.default_rng(15)
    rows = rng.integers(-1, 2, size=(200, 3)).astype(np.float32)
    probe = rng.integers(-1, 2, size=3)
    a = search_parallel(snapshot_of(rows, [f"n{i}" for i in range(200)]), probe, SearchConfig(workers=4, min_chunk=8))
    names = [f"m{i}" for i in rng.permutation(200)]
    b = search_parallel(snapshot_of(rows, names), probe, SearchConfig(workers=4, min_chunk=8))
    assert a.best_index == b.best_index and a.distance == b.distance


def test_concurrent_callers_share_snapshot():
    rng = np.random.default_rng(16)
    snap = snapshot_of(rng.normal(size=(5000, 32)))
    probes = rng.normal(size=(40, 32))
    cfg = SearchConfig(workers=4, min_chunk=128)
    expected = [search_sequential(snap, p, cfg) for p in probes]
    results = [None] * 4

    def worker(slot):
        results[slot] = [search_parallel(snap, p, cfg) for p in probes]

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == expected for r in results)


def test_matcher_owns_its_pool():
    rng = np.random.default_rng(17)
    g = Gallery(8)
    g.enroll_arrays([f"i{k}" for k in range(3000)], ["x"] * 3000, rng.normal(size=(3000, 8)))
    snap = g.snapshot()
    probe = rng.normal(size=8)
    cfg = SearchConfig(workers=3, min_chunk=100)
    with Matcher(cfg) as m:
        assert m.search(snap, probe) == search_sequential(snap, probe, cfg)
        assert m.search_batch(snap, [probe]) == [search_sequential(snap, probe, cfg)]


def test_accepted_label_rendering():
    snap = snapshot_of([[0.0, 0.0]], ["alice"])
    hit = search_sequential(snap, [0.0, 0.0], SearchConfig(threshold=0.0))
    miss = search_sequential(snap, [3.0, 4.0], SearchConfig(threshold=1.0))
    assert hit.label == "alice"
    assert miss.label == "unknown(alice, 5)"


def test_scan_kernel_releases_the_gil():
    # worker threads only overlap if the hot loop runs without the GIL; a GIL-holding
    # kernel would stall this thread for the whole scan
    from facematch import _kernels

    vectors = np.random.default_rng(18).uniform(-1, 1, size=(300_000, 128)).astype(np.float32)
    probe = vectors[0].copy()
    _kernels.scan_range(vectors, probe, 0, 10)
    t0 = time.perf_counter()
    _kernels.scan_range(vectors, probe, 0, len(vectors))
    solo = time.perf_counter() - t0

    t = threading.Thread(target=_kernels.scan_range, args=(vectors, probe, 0, len(vectors)))
    stamps = [time.perf_counter()]
    t.start()
    while t.is_alive():
        stamps.append(time.perf_counter())
    t.join()
    longest_stall = float(np.max(np.diff(stamps)))
    assert longest_stall < 0.5 * solo
