"""External distribution sort with sampled splitters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .em_model import DTYPE, ConfigError, Disk, Run, RunWriter, iter_loads
from .internal_algos import (SplitterSet, binary_split, internal_sort,
                             linear_split, select_ranks)
from .selection import _load_all, external_multiselect, external_select, min_above
from .trace import SortTrace


def split_count(M: int, B: int) -> int:
    """Number of splitters per distribution: floor(sqrt(M/B)) - 1, at least 1."""
    return max(1, math.isqrt(M // B) - 1)


def sample_stride(M: int, B: int) -> int:
    return max(1, math.isqrt(M // B) // 4)


def check_layout(M: int, B: int, s: int):
    """Splitters plus one output block per bucket must fit in M/2."""
    if not s / B + (s + 1) * B < M / 2:
        raise ConfigError(
            f"distribution layout {s}/{B} + {s + 1}*{B} does not fit in M/2={M / 2}")


@dataclass
class DistBuckets:
    runs: list
    splitters: SplitterSet
    sizes: list = field(default_factory=list)
    mins: list = field(default_factory=list)
    maxs: list = field(default_factory=list)
    # buckets exempted from the size law (one repeated key)
    oversize: list = field(default_factory=list)

    def __len__(self):
        return len(self.runs)

    @property
    def buckets(self):
        return self.runs

    def single_valued(self, i: int) -> bool:
        lo, hi = self.mins[i], self.maxs[i]
        return self.sizes[i] > 0 and lo is not None and lo == hi


def compute_splitters(disk: Disk, run: Run, s: int,
                      trace: SortTrace | None = None) -> SplitterSet:
    """Pick up to s splitters giving buckets of O(N/s) elements.

    Memory loads are sorted and every k-th element kept as a candidate
    (k = floor(sqrt(M/B)/4)); the splitters are the candidates at ranks
    ceil(i*|C|/(s+1)), found by linear-time selection.  When k is 1 the
    candidate set is the input itself and is selected from in place.
    """
    if s <= 0:
        return SplitterSet()
    counter = trace.ops if trace is not None else None
    n = len(run)
    k = sample_stride(disk.M, disk.B)
    avail = disk.available()
    est = -(-n // k)
    if est <= avail // 2:
        load = max(disk.B, (avail - est) // disk.B * disk.B)
        cands = []
        for chunk in iter_loads(disk, run, load):
            picked = internal_sort(chunk, counter=counter)[k - 1::k]
            disk.release(chunk.size - picked.size)
            cands.append(picked)
        C = np.concatenate(cands) if cands else np.empty(0, DTYPE)
        ranks = _ranks(C.size, s)
        vals = select_ranks(C, ranks, counter) if ranks else np.empty(0, DTYPE)
        disk.release(C.size)
    else:
        if k == 1:
            c_run, own = run, False
        else:
            w = RunWriter(disk)
            for chunk in iter_loads(disk, run, avail // disk.B * disk.B):
                picked = internal_sort(chunk, counter=counter)[k - 1::k]
                disk.release(chunk.size - picked.size)
                w.append(picked)
            c_run, own = w.close(), True
        ranks = _ranks(len(c_run), s)
        vals = external_multiselect(disk, c_run, ranks, counter) if ranks else []
        if own:
            disk.free_run(c_run)
    uniq = np.unique(np.asarray(vals, dtype=DTYPE))
    return SplitterSet(uniq, degenerate=uniq.size < s)


def _ranks(c: int, s: int) -> list:
    if c == 0:
        return []
    return [max(1, -(-i * c // (s + 1))) for i in range(1, s + 1)]


SPLIT_METHODS = ("sort", "linear", "binary")


def distribute(disk: Disk, run: Run, splitters: SplitterSet,
               method: str = "sort", trace: SortTrace | None = None) -> DistBuckets:
    """Split a run into s+1 bucket runs, M/2 elements at a time.

    ``method`` chooses how each memory load is routed: "sort" sorts it and
    cuts at the splitters, "linear" uses the jump-table split, "binary" is
    the comparison baseline with one binary search per element.
    """
    s = splitters.s
    check_layout(disk.M, disk.B, s)
    if method not in SPLIT_METHODS:
        raise ValueError(f"unknown split method {method!r}")
    counter = trace.ops if trace is not None else None
    nb = s + 1
    writers = [RunWriter(disk) for _ in range(nb)]
    sizes = [0] * nb
    mins = [None] * nb
    maxs = [None] * nb
    disk.hold(s)
    for batch in iter_loads(disk, run, disk.M // 2):
        if method == "sort":
            grouped = internal_sort(batch, counter=counter)
            cuts = np.searchsorted(grouped, splitters.splitters, side="left")
            bounds = np.concatenate(([0], cuts, [grouped.size]))
            counts = np.diff(bounds)
        else:
            fn = linear_split if method == "linear" else binary_split
            idx = fn(batch, splitters, counter)
            order = np.argsort(idx, kind="stable")
            grouped = batch[order]
            counts = np.bincount(idx, minlength=nb)
        _deal(writers, grouped, counts, sizes, mins, maxs)
    disk.release(s)
    runs = [w.close() for w in writers]
    return DistBuckets(runs, splitters, sizes, mins, maxs)


def _deal(writers, grouped, counts, sizes, mins, maxs):
    off = 0
    for b, c in enumerate(counts):
        c = int(c)
        if not c:
            continue
        part = grouped[off:off + c]
        off += c
        writers[b].append(part)
        sizes[b] += c
        lo, hi = int(part.min()), int(part.max())
        mins[b] = lo if mins[b] is None else min(mins[b], lo)
        maxs[b] = hi if maxs[b] is None else max(maxs[b], hi)


def two_way_splitter(disk: Disk, run: Run, lo_value) -> SplitterSet:
    """A single splitter leaving both sides non-empty (median, or the
    smallest key above the minimum when the median equals the minimum)."""
    n = len(run)
    m = external_select(disk, run, n // 2 + 1)
    if m == lo_value:
        m = min_above(disk, run, m)
        if m is None:
            return SplitterSet(degenerate=True)
    return SplitterSet(np.array([m], dtype=DTYPE))


def sort_in_memory(disk: Disk, run: Run, counter=None) -> Run:
    arr = _load_all(disk, run)
    w = RunWriter(disk)
    w.append(internal_sort(arr, counter=counter))
    return w.close()


def external_distribution_sort(disk: Disk, run: Run, method: str = "sort",
                               trace: SortTrace | None = None) -> Run:
    """Recursive sqrt(M/B)-way distribution until sets are smaller than M."""
    N = len(run)
    M, B = disk.M, disk.B
    if N < 2 * M:
        raise ValueError(f"distribution sort expects N >= 2M, got N={N} M={M}")
    if trace is None:
        trace = SortTrace()
    s = split_count(M, B)
    check_layout(M, B, s)
    pieces = []
    # (run, level, owned, single-valued, parent size)
    stack = [(run, 1, False, False, 0)]
    while stack:
        r, level, owned, single, parent = stack.pop()
        n = len(r)
        if n == 0:
            continue
        if single:
            pieces.append(r)
            continue
        if n < M:
            if parent >= 2 * M and n <= B:
                trace.warnings.append(f"base set of {n} <= B from parent {parent}")
            pieces.append(sort_in_memory(disk, r, trace.ops))
            if owned:
                disk.free_run(r)
            continue
        trace.depth = max(trace.depth, level)
        sp = compute_splitters(disk, r, s, trace)
        buckets = distribute(disk, r, sp, method, trace)
        stuck = [i for i, sz in enumerate(buckets.sizes) if sz == n]
        if stuck and not buckets.single_valued(stuck[0]):
            # sampled splitters failed to cut a duplicate-heavy set
            trace.forced_splits += 1
            lo = buckets.mins[stuck[0]]
            for b in buckets.runs:
                disk.free_run(b)
            sp = two_way_splitter(disk, r, lo)
            buckets = distribute(disk, r, sp, method, trace)
        if owned:
            disk.free_run(r)
        for i in reversed(range(len(buckets))):
            stack.append((buckets.runs[i], level + 1, True,
                          buckets.single_valued(i), n))
    trace.phases = trace.depth
    return Run.concat(pieces)
