import heapq
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xmem import ConfigError
from xmem.bounds import sort_e
from xmem.buffer_pq import BufferTreePQ, Leaf, Node, pq_deletemin, pq_insert, pq_new, pq_sort
from xmem.trace import SortTrace

from conftest import make_disk

GOLDEN = Path(__file__).parent / "golden"


def test_new_queue_parameters():
    pq = pq_new(make_disk(256, 16))
    assert pq.f == 4 and len(pq) == 0
    assert isinstance(pq.root, Leaf) and pq.root.count == 0
    with pytest.warns(RuntimeWarning):
        assert pq_new(make_disk(64, 16)).f == 2
    with pytest.raises(ConfigError):
        pq_new(make_disk(32, 16))


def test_single_insert_and_small_sequence():
    pq = pq_new(make_disk())
    pq_insert(pq, 5)
    assert pq_deletemin(pq) == 5
    for x in (3, 1, 2):
        pq_insert(pq, x)
    assert [pq_deletemin(pq) for _ in range(3)] == [1, 2, 3]
    with pytest.raises(IndexError):
        pq_deletemin(pq)
    with pytest.raises(ValueError):
        pq_insert(pq, -1)


def test_insertion_buffer_batches_b_elements():
    d = make_disk(256, 16)
    pq = pq_new(d)
    for x in range(15):
        pq.insert(x)
    assert d.stats().io_count == 0 and len(pq.ins) == 15
    pq.insert(15)
    assert d.stats().writes == 1 and pq.ins == []


def test_new_minimum_displaces_mini_queue_max(rng):
    d = make_disk(256, 16)
    pq = pq_new(d, debug=True)
    for x in rng.permutation(1000) + 100:
        pq.insert(int(x))
    pq.deletemin()
    assert len(pq.mini) == pq.mini_cap - 1
    old_max = pq.mini.max()
    pq.insert(5)
    assert 5 in pq.mini.values() and old_max not in pq.mini.values()
    assert pq.ins[-1] == old_max
    pq.check_invariants(full=True)
    assert pq.deletemin() == 5


def _grow(pq, n, rng):
    for x in rng.integers(0, 2 ** 40, n):
        pq.insert(int(x))


def test_tree_grows_with_equal_depth_leaves(rng):
    pq = pq_new(make_disk(256, 16), debug=True)
    heights = set()
    for _ in range(40):
        _grow(pq, 500, rng)
        pq.check_invariants(full=True)
        heights.add(pq.height())
    assert max(heights) >= 3
    assert sorted(heights) == list(range(min(heights), max(heights) + 1))


def test_forced_flush_moves_everything(rng):
    pq = pq_new(make_disk(256, 16))
    _grow(pq, 3000, rng)
    pq._flush_insertion_buffer()
    root = pq.root
    assert isinstance(root, Node)
    _grow(pq, 16 * 2, rng)
    pq._flush_insertion_buffer()
    assert 0 < len(root.buffer) <= pq.half
    pq._empty(root, forced=True)
    assert len(root.buffer) == 0
    pq.check_invariants(full=True)


def test_emptying_cost_is_linear_in_m_over_b(rng):
    d = make_disk(256, 16)
    pq = pq_new(d)
    orig_empty, orig_dist, orig_split = pq._empty, pq._distribute, pq._split_leaf
    frames, costs = [], []

    def io():
        return d.stats().io_count

    def wrap(fn, own):
        def inner(*a, **k):
            start = io()
            frames.append([0, 0])
            out = fn(*a, **k)
            nested, batches = frames.pop()
            total = io() - start
            if own:
                costs.append((total - nested, batches))
            if frames:
                if fn is orig_dist:
                    frames[-1][1] += 1
                else:
                    frames[-1][0] += total
            return out
        return inner

    pq._empty = wrap(orig_empty, True)
    pq._split_leaf = wrap(orig_split, False)
    pq._distribute = wrap(orig_dist, False)
    _grow(pq, 20_000, rng)
    assert costs
    bound = 8 * (256 // 16)
    for own, batches in costs:
        assert own <= bound * max(1, batches)


def test_leftmost_path_empty_after_refill(rng):
    pq = pq_new(make_disk(256, 16), debug=True)
    _grow(pq, 5000, rng)
    seen = 0
    for _ in range(3000):
        refills = pq.refills
        pq.deletemin()
        if pq.refills != refills:
            seen += 1
            path, _ = pq._leftmost_path()
            assert all(len(v.buffer) == 0 for v in path)
    assert seen > 5


def test_matches_heap_on_10m_inserts_then_deletes(rng):
    M = 256
    pq = pq_new(make_disk(M, 16))
    data = rng.integers(0, 2 ** 64, 10 * M, dtype=np.uint64)
    for x in data:
        pq.insert(int(x))
    out = [pq.deletemin() for _ in range(10 * M)]
    assert out == sorted(int(x) for x in data)
    assert pq.disk.allocated == 0


@pytest.mark.parametrize("cfg", [(256, 16), (144, 16), (1024, 32)])
def test_interleaved_against_heapq(cfg, rng):
    pq = pq_new(make_disk(*cfg), debug=True)
    ref = []
    for i in range(6000):
        if ref and rng.random() < 0.45:
            assert pq.deletemin() == heapq.heappop(ref)
        else:
            x = int(rng.integers(0, 500))
            pq.insert(x)
            heapq.heappush(ref, x)
        pq.check_invariants(full=i % 500 == 0)
    assert pq.disk.stats().peak_resident <= cfg[0]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@settings(max_examples=30, deadline=None)
@given(st.lists(st.one_of(st.none(), st.integers(0, 2 ** 64 - 1)), max_size=1500),
       st.sampled_from([(256, 16), (128, 16), (512, 32)]))
def test_operation_sequences(ops, cfg):
    pq = pq_new(make_disk(*cfg), debug=True)
    ref = []
    for op in ops:
        if op is None:
            if ref:
                assert pq.deletemin() == heapq.heappop(ref)
        else:
            pq.insert(op)
            heapq.heappush(ref, op)
    pq.check_invariants(full=True)
    while ref:
        assert pq.deletemin() == heapq.heappop(ref)


def test_binary_fanout_still_correct(rng):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        pq = pq_new(make_disk(64, 16), debug=True)
    data = [int(x) for x in rng.integers(0, 100, 1500)]
    for x in data:
        pq.insert(x)
    pq.check_invariants(full=True)
    assert [pq.deletemin() for _ in data] == sorted(data)


@pytest.mark.parametrize("kind", ["uniform", "dupes"])
def test_pq_sort(kind, rng):
    d = make_disk(256, 16)
    data = (rng.integers(0, 2 ** 64, 4096, dtype=np.uint64) if kind == "uniform"
            else rng.integers(0, 3, 4096).astype(np.uint64))
    tr = SortTrace()
    out = pq_sort(d, d.stage(data), trace=tr)
    assert np.array_equal(d.peek(out), np.sort(data))
    assert tr.depth >= 1
    assert d.stats().peak_resident <= 256


def test_pq_sort_ratio_2_16(rng):
    N, M, B = 2 ** 16, 2 ** 10, 2 ** 5
    d = make_disk(M, B)
    data = rng.integers(0, 2 ** 64, N, dtype=np.uint64)
    out = pq_sort(d, d.stage(data))
    assert np.array_equal(d.peek(out), np.sort(data))
    assert d.stats().io_count / (N / B * sort_e(N, M, B)) <= 8


def test_pq_sort_rejects_small_input():
    d = make_disk(256, 16)
    with pytest.raises(ValueError):
        pq_sort(d, d.stage(range(100)))


def test_dump_golden():
    pq = pq_new(make_disk(256, 16))
    rng = np.random.default_rng(2024)
    for x in rng.integers(0, 10_000, 3000):
        pq.insert(int(x))
    for _ in range(700):
        pq.deletemin()
    text = pq.dump(ids=False) + "\n"
    golden = GOLDEN / "pq_dump.txt"
    if not golden.exists():
        golden.write_text(text)
    assert text == golden.read_text()
