"""Split-sort: distribution with splitters discovered online.

A distribution pass starts with no splitters.  Whenever a bucket reaches
2n/s elements the pass pauses, the bucket is split at its median (which
becomes a new splitter) and both halves are rewritten; then distribution
resumes.  Every bucket therefore ends with between n/s and 2n/s - 1
elements, without the sampling pass of the classic distribution sort.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .distribution_sort import DistBuckets, check_layout, sort_in_memory, split_count
from .em_model import Disk, Run, RunWriter, iter_loads
from .internal_algos import SplitterSet, group_by_bucket, linear_split
from .selection import external_select, min_above, partition2, select_partition
from .trace import SortTrace

__all__ = ["OnlineSplitState", "online_split_pass", "split_bucket", "split_sort",
           "external_select"]


@dataclass
class OnlineSplitState:
    s: int
    threshold: int
    splitters: SplitterSet = field(default_factory=SplitterSet)
    counts: list = field(default_factory=lambda: [0])
    writers: list = field(default_factory=list)
    # sound bounds on each bucket's values; lo == hi means single-valued
    lo: list = field(default_factory=lambda: [None])
    hi: list = field(default_factory=lambda: [None])
    oversize: list = field(default_factory=lambda: [False])

    @property
    def nbuckets(self) -> int:
        return len(self.counts)

    def can_split(self, b: int) -> bool:
        return self.splitters.s < self.s and not self.oversize[b]

    def single_valued(self, b: int) -> bool:
        return self.counts[b] > 0 and self.lo[b] is not None and self.lo[b] == self.hi[b]


def _batch_size(M: int, B: int, s: int) -> int:
    # leave room for a split's sampling and five-way partition at a pause
    spare = M - (s + 1) * B - s - 8 * B
    return max(B, min(M // 2, spare) // B * B)


def online_split_pass(disk: Disk, run: Run, s: int | None = None,
                      trace: SortTrace | None = None) -> DistBuckets:
    """Distribute a run with online median splitting; returns the buckets."""
    M, B = disk.M, disk.B
    n = len(run)
    if s is None:
        s = split_count(M, B)
    if s < 1:
        raise ValueError("online splitting needs s >= 1")
    check_layout(M, B, s)
    if trace is None:
        trace = SortTrace()
    st = OnlineSplitState(s=s, threshold=-(-2 * n // s))
    st.writers = [RunWriter(disk)]
    disk.hold(s)
    for batch in iter_loads(disk, run, _batch_size(M, B, s)):
        pos = 0
        while pos < batch.size:
            part = batch[pos:]
            idx = linear_split(part, st.splitters, trace.ops)
            cut, hit = part.size, None
            for b in range(st.nbuckets):
                if not st.can_split(b):
                    continue
                need = st.threshold - st.counts[b]
                where = np.flatnonzero(idx == b)
                if where.size >= need and where[need - 1] < cut:
                    cut, hit = int(where[need - 1]) + 1, b
            _dispatch(st, part[:cut], idx[:cut])
            pos += cut
            if hit is not None:
                split_bucket(disk, st, hit, trace)
    disk.release(s)
    runs = [w.close() for w in st.writers]
    out = DistBuckets(runs, st.splitters, list(st.counts), list(st.lo), list(st.hi))
    out.oversize = list(st.oversize)
    return out


def _dispatch(st: OnlineSplitState, elems, idx):
    if not elems.size:
        return
    grouped, sizes = group_by_bucket(elems, idx, st.nbuckets)
    off = 0
    for b, c in enumerate(sizes):
        c = int(c)
        if not c:
            continue
        part = grouped[off:off + c]
        off += c
        st.writers[b].append(part)
        st.counts[b] += c
        lo, hi = int(part.min()), int(part.max())
        st.lo[b] = lo if st.lo[b] is None else min(st.lo[b], lo)
        st.hi[b] = hi if st.hi[b] is None else max(st.hi[b], hi)


def split_bucket(disk: Disk, st: OnlineSplitState, b: int,
                 trace: SortTrace | None = None) -> OnlineSplitState:
    """Split bucket b at its median, rewriting both halves to fresh runs.

    Keys smaller than the median go left, the rest right.  When duplicates
    put the median at the bucket minimum the split moves up to the next
    distinct key; a bucket holding one value only is marked oversize.
    """
    if trace is None:
        trace = SortTrace()
    if st.splitters.s >= st.s:
        st.oversize[b] = True
        trace.oversize += 1
        return st
    if st.single_valued(b):
        st.oversize[b] = True
        trace.oversize += 1
        return st
    before = disk.stats().io_count
    X = st.writers[b].close()
    c = len(X)
    trace.ops.add("median", c)
    m, L, R = select_partition(disk, X, (c + 1) // 2 + 1, trace.ops)
    if not len(L):
        # median equals the minimum: cut just above it instead
        nxt = min_above(disk, R, m)
        disk.free_run(L)
        disk.free_run(R)
        if nxt is None:
            st.writers[b] = RunWriter(disk, X)
            st.lo[b] = st.hi[b] = int(m)
            st.oversize[b] = True
            trace.oversize += 1
            trace.split_ios += disk.stats().io_count - before
            return st
        m = np.uint64(nxt)
        L, R = partition2(disk, X, m, trace.ops)
    disk.free_run(X)
    m = int(m)
    st.splitters = st.splitters.insert(m)
    lo, hi = st.lo[b], st.hi[b]
    st.writers[b:b + 1] = [RunWriter(disk, L), RunWriter(disk, R)]
    st.counts[b:b + 1] = [len(L), len(R)]
    st.lo[b:b + 1] = [lo, m]
    st.hi[b:b + 1] = [m - 1, hi]
    st.oversize[b:b + 1] = [False, False]
    trace.splits += 1
    trace.split_ios += disk.stats().io_count - before
    return st


def split_sort(disk: Disk, run: Run, trace: SortTrace | None = None) -> Run:
    """Sort by recursive online-split distribution down to sets below M."""
    N = len(run)
    M, B = disk.M, disk.B
    if N < 2 * M:
        raise ValueError(f"split sort expects N >= 2M, got N={N} M={M}")
    if trace is None:
        trace = SortTrace()
    s = split_count(M, B)
    check_layout(M, B, s)
    pieces = []
    stack = [(run, 1, False, False)]
    while stack:
        r, level, owned, single = stack.pop()
        n = len(r)
        if n == 0:
            continue
        if single:
            pieces.append(r)
            continue
        if n < M:
            pieces.append(sort_in_memory(disk, r, trace.ops))
            if owned:
                disk.free_run(r)
            continue
        trace.depth = max(trace.depth, level)
        buckets = online_split_pass(disk, r, s, trace)
        nonempty = [i for i, sz in enumerate(buckets.sizes) if sz]
        if len(nonempty) == 1 and not buckets.single_valued(nonempty[0]):
            # no split fired (s = 1 makes the threshold 2n): halve at the median
            trace.forced_splits += 1
            for b in buckets.runs:
                disk.free_run(b)
            buckets = _forced_halves(disk, r, trace)
        if owned:
            disk.free_run(r)
        for i in reversed(range(len(buckets))):
            stack.append((buckets.runs[i], level + 1, True, buckets.single_valued(i)))
    trace.phases = trace.depth
    return Run.concat(pieces)


def _forced_halves(disk: Disk, run: Run, trace: SortTrace) -> DistBuckets:
    n = len(run)
    m, L, R = select_partition(disk, run, (n + 1) // 2 + 1, trace.ops)
    if not len(L):
        nxt = min_above(disk, R, m)
        disk.free_run(L)
        disk.free_run(R)
        if nxt is None:
            raise AssertionError("forced split of a single-valued set")
        m = np.uint64(nxt)
        L, R = partition2(disk, run, m, trace.ops)
    m = int(m)
    return DistBuckets([L, R], SplitterSet(np.array([m], dtype=np.uint64)),
                       [len(L), len(R)], [None, m], [m - 1, None])
