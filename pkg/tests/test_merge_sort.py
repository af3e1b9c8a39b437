import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xmem.bounds import merge_phases
from xmem.internal_algos import OpCounter
from xmem.merge_sort import (MergeHeap, RadixHeap, external_merge_sort, form_runs,
                             max_fan_in, merge_runs)
from xmem.trace import SortTrace

from conftest import keys, make_disk


@pytest.mark.parametrize("cls", [MergeHeap, RadixHeap])
def test_queues_pop_in_order(cls, rng):
    q = cls(OpCounter())
    vals = rng.integers(0, 2 ** 64, 300, dtype=np.uint64)
    for i, v in enumerate(vals):
        q.push(int(v), i)
    out = [q.pop()[0] for _ in range(len(vals))]
    assert out == sorted(int(v) for v in vals)


def test_merge_heap_ties_by_run_index():
    q = MergeHeap()
    q.push(5, 3)
    q.push(5, 1)
    assert q.pop() == (5, 1)


def test_form_runs_counts(rng):
    d = make_disk(256, 16)
    data = rng.integers(0, 2 ** 64, 4096, dtype=np.uint64)
    run = d.stage(data)
    runs = form_runs(d, run)
    s = d.stats()
    assert len(runs) == 16 and all(len(r) == 256 for r in runs)
    assert (s.reads, s.writes, s.io_count) == (256, 256, 512)
    for r in runs:
        got = d.peek(r)
        assert np.all(got[1:] >= got[:-1])
    assert np.array_equal(np.sort(np.concatenate([d.peek(r) for r in runs])), np.sort(data))


def test_form_runs_two_runs_for_2m():
    d = make_disk(256, 16)
    runs = form_runs(d, d.stage(np.arange(512)[::-1]))
    assert len(runs) == 2


def test_merge_tiny_runs():
    d = make_disk(8, 2)
    a, b = d.stage([1, 3]), d.stage([2, 4])
    assert list(d.peek(merge_runs(d, [a, b]))) == [1, 2, 3, 4]


def test_merge_fifteen_runs(rng):
    d = make_disk(256, 16)
    data = rng.integers(0, 2 ** 64, 3840, dtype=np.uint64)
    runs = form_runs(d, d.stage(data))
    before = d.stats()
    out = merge_runs(d, runs, "radix")
    s = d.stats() - before
    assert np.array_equal(d.peek(out), np.sort(data))
    assert s.reads == 240 and s.writes == 240
    # every output block but the last is full
    assert all(c == 16 for c in out.counts[:-1])


def test_merge_single_run_is_free():
    d = make_disk(256, 16)
    r = d.stage(range(100))
    before = d.stats()
    assert merge_runs(d, [r]) is r
    assert d.stats().io_count == before.io_count


def test_merge_rejects_too_many_runs():
    d = make_disk(64, 16)
    runs = [d.stage([i]) for i in range(5)]
    with pytest.raises(ValueError):
        merge_runs(d, runs)


def test_fan_in_alignment():
    d = make_disk(256, 16)
    assert max_fan_in(d) == 16
    assert max_fan_in(d, [d.stage(range(20))]) == 15


@pytest.mark.parametrize("kind", ["uniform", "reverse", "equal", "sorted"])
def test_sort_4096(kind, rng):
    d = make_disk(256, 16)
    data = {"uniform": rng.integers(0, 2 ** 64, 4096, dtype=np.uint64),
            "reverse": np.arange(4096, dtype=np.uint64)[::-1].copy(),
            "equal": np.full(4096, 7, dtype=np.uint64),
            "sorted": np.arange(4096, dtype=np.uint64)}[kind]
    tr = SortTrace()
    out = external_merge_sort(d, d.stage(data), trace=tr)
    assert np.array_equal(d.peek(out), np.sort(data))
    assert tr.phases == 1 == merge_phases(4096, 256, 16)
    # the I/O count does not depend on the data
    assert d.stats().io_count == 2 * 256 * (1 + tr.phases) == 1024
    assert d.stats().peak_resident <= 256


def test_sort_rejects_small_input():
    d = make_disk(256, 16)
    with pytest.raises(ValueError):
        external_merge_sort(d, d.stage(range(300)))


def test_unaligned_sizes_use_reduced_fan_in(rng):
    d = make_disk(100, 10)
    n = 5003
    data = rng.integers(0, 1000, n, dtype=np.uint64)
    tr = SortTrace()
    out = external_merge_sort(d, d.stage(data), trace=tr)
    assert np.array_equal(d.peek(out), np.sort(data))
    assert tr.fan_in == 9
    assert tr.phases == merge_phases(n, 100, 10) == 2


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(2, 6), st.data())
def test_merge_sort_property(lb, mult, data):
    B = 2 ** lb
    M = B * mult
    n = data.draw(st.integers(2 * M, 6 * M))
    xs = data.draw(st.lists(st.integers(0, 50), min_size=n, max_size=n))
    d = make_disk(M, B)
    tr = SortTrace()
    out = external_merge_sort(d, d.stage(xs), trace=tr)
    assert np.array_equal(d.peek(out), np.sort(keys(xs)))
    assert d.stats().peak_resident <= M
    assert tr.phases == merge_phases(n, M, B)
