"""External multiway merge sort.

Run formation sorts memory loads of M elements.  Merging keeps one block of
every input run in memory; a priority queue keyed by the *last* element of
each run's loaded block says which run is exhausted next.  Everything in
memory that is <= that key can be emitted, after which exactly that run's
next block is loaded.  This is the same block schedule as an element-wise
merge (a run's next block is read when all its loaded elements have been
output) but emits in vectorised batches.
"""

from __future__ import annotations

import heapq

import numpy as np

from .em_model import DTYPE, Disk, Run, RunWriter, iter_loads
from .internal_algos import OpCounter, internal_sort
from .trace import SortTrace


class MergeHeap:
    """Binary heap of (key, run index); ties go to the lower run index."""

    def __init__(self, counter: OpCounter | None = None):
        self._h: list = []
        self.counter = counter if counter is not None else OpCounter()

    def push(self, key: int, run: int):
        heapq.heappush(self._h, (key, run))
        self.counter.add("heap", max(1, len(self._h).bit_length()))

    def pop(self) -> tuple[int, int]:
        self.counter.add("heap", max(1, len(self._h).bit_length()))
        return heapq.heappop(self._h)

    def __len__(self):
        return len(self._h)


class RadixHeap:
    """Monotone integer priority queue over 64-bit keys.

    Valid when popped keys never decrease, which holds for merge forecasting
    (a run's next block ends no earlier than its current one).  Bucket i
    holds keys whose highest bit differing from the last popped key is i-1.
    """

    def __init__(self, counter: OpCounter | None = None):
        self._buckets: list[list] = [[] for _ in range(65)]
        self._last = 0
        self._n = 0
        self.counter = counter if counter is not None else OpCounter()

    def _slot(self, key: int) -> int:
        return (key ^ self._last).bit_length()

    def push(self, key: int, run: int):
        if key < self._last:
            raise ValueError("radix heap keys must be monotone")
        self._buckets[self._slot(key)].append((key, run))
        self._n += 1
        self.counter.add("heap", 1)

    def pop(self) -> tuple[int, int]:
        if not self._n:
            raise IndexError("pop from empty queue")
        if not self._buckets[0]:
            i = 1
            while not self._buckets[i]:
                i += 1
            bucket = self._buckets[i]
            self._buckets[i] = []
            self._last = min(bucket)[0]
            for item in bucket:
                self._buckets[self._slot(item[0])].append(item)
            self.counter.add("heap", len(bucket))
        b0 = self._buckets[0]
        # equal keys: lowest run index first
        j = min(range(len(b0)), key=lambda t: b0[t][1])
        item = b0.pop(j)
        self._n -= 1
        self.counter.add("heap", 1)
        return item

    def __len__(self):
        return self._n


QUEUES = {"binary": MergeHeap, "radix": RadixHeap}


def _aligned(disk: Disk, runs) -> bool:
    B = disk.B
    return all(c == B for r in runs for c in r.counts[:-1]) and \
        all(len(r) % B == 0 for r in runs)


def max_fan_in(disk: Disk, runs=None) -> int:
    """Largest number of runs one merge may take within the M budget.

    With block-aligned runs the merge never holds more than (k-1)*B
    unconsumed elements plus a partial output block of fewer elements than
    were consumed from the loaded blocks, so k = floor(M/B) fits; otherwise
    one block is reserved for the output buffer.
    """
    f = disk.M // disk.B
    if runs is not None and not _aligned(disk, runs):
        f -= 1
    return max(2, f)


def form_runs(disk: Disk, run: Run, sort: str = "radix",
              trace: SortTrace | None = None) -> list[Run]:
    """Sort memory loads of M elements into runs (2*ceil(N/B) I/Os)."""
    counter = trace.ops if trace is not None else None
    runs = []
    for load in iter_loads(disk, run, disk.M):
        runs.append(_write(disk, internal_sort(load, sort, counter)))
    if trace is not None:
        trace.runs = len(runs)
    return runs


def _write(disk, arr) -> Run:
    w = RunWriter(disk)
    w.append(arr)
    return w.close()


def merge_runs(disk: Disk, runs: list[Run], queue: str = "binary",
               trace: SortTrace | None = None) -> Run:
    """Merge sorted runs into one sorted run, emitting full blocks of B."""
    runs = [r for r in runs if len(r)]
    if not runs:
        return Run()
    if len(runs) == 1:
        return runs[0]
    limit = max_fan_in(disk, runs)
    if len(runs) > limit:
        raise ValueError(f"{len(runs)} runs exceed merge fan-in {limit}")
    counter = trace.ops if trace is not None else OpCounter()
    pq = QUEUES[queue](counter)
    pos = [0] * len(runs)
    pool = np.empty(0, dtype=DTYPE)
    out = RunWriter(disk)

    def load(i):
        nonlocal pool
        r = runs[i]
        blk = disk.read_block(r.blocks[pos[i]])
        pos[i] += 1
        pool = np.concatenate((pool, blk))
        pool = np.sort(pool, kind="stable")
        counter.add("merge", blk.size)
        if pos[i] < len(r.blocks):
            pq.push(int(blk[-1]), i)

    for i in range(len(runs)):
        load(i)
    while len(pq):
        key, i = pq.pop()
        cut = int(np.searchsorted(pool, np.uint64(key), side="right"))
        if cut:
            out.append(pool[:cut])
            pool = pool[cut:]
        load(i)
    out.append(pool)
    return out.close()


def merge_phases_for(n_runs: int, fan_in: int) -> int:
    phases = 0
    while n_runs > 1:
        n_runs = -(-n_runs // fan_in)
        phases += 1
    return phases


def external_merge_sort(disk: Disk, run: Run, sort: str = "radix",
                        queue: str = "binary",
                        trace: SortTrace | None = None) -> Run:
    N = len(run)
    if N < 2 * disk.M:
        raise ValueError(f"merge sort expects N >= 2M, got N={N} M={disk.M}")
    if trace is None:
        trace = SortTrace()
    runs = form_runs(disk, run, sort, trace)
    phases = 0
    while len(runs) > 1:
        f = max_fan_in(disk, runs)
        trace.fan_in = f
        nxt = []
        for g in range(0, len(runs), f):
            group = runs[g:g + f]
            merged = merge_runs(disk, group, queue, trace)
            if len(group) > 1:
                for r in group:
                    disk.free_run(r)
            nxt.append(merged)
        runs = nxt
        phases += 1
    trace.phases = phases
    return runs[0]
