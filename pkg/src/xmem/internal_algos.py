"""Internal-memory primitives on 64-bit unsigned keys.

These stand in for the RAM-model black boxes: a linear-pass radix sort for
the fast internal sort, a table-driven multi-way split, and selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .em_model import DTYPE


class OpCounter:
    """Tally of elementary internal operations, for growth-rate checks."""

    def __init__(self):
        self.counts: dict[str, int] = {}

    def add(self, key: str, n: int):
        self.counts[key] = self.counts.get(key, 0) + int(n)

    def __getitem__(self, key):
        return self.counts.get(key, 0)

    def total(self) -> int:
        return sum(self.counts.values())


def _as_keys(elements) -> np.ndarray:
    return np.asarray(elements, dtype=DTYPE)


@dataclass(frozen=True)
class SplitterSet:
    """Strictly increasing split elements x_1 < ... < x_s.

    Element e belongs to bucket i = number of splitters <= e, so bucket 0
    holds everything below x_1 and bucket s everything >= x_s.
    """

    splitters: np.ndarray = field(default_factory=lambda: np.empty(0, DTYPE))
    # set when fewer distinct splitters than requested could be found
    degenerate: bool = False

    def __post_init__(self):
        arr = _as_keys(self.splitters)
        if arr.ndim != 1:
            raise ValueError("splitters must be one-dimensional")
        if arr.size > 1 and not np.all(arr[1:] > arr[:-1]):
            raise ValueError("splitters must be strictly increasing")
        object.__setattr__(self, "splitters", arr)

    @property
    def s(self) -> int:
        return int(self.splitters.size)

    def __len__(self):
        return self.s

    def insert(self, x) -> "SplitterSet":
        x = np.uint64(x)
        i = int(np.searchsorted(self.splitters, x, side="left"))
        if i < self.s and self.splitters[i] == x:
            raise ValueError(f"splitter {int(x)} already present")
        return SplitterSet(np.insert(self.splitters, i, x))

    def bucket_of(self, e) -> int:
        return int(np.searchsorted(self.splitters, np.uint64(e), side="right"))

    def tolist(self):
        return [int(v) for v in self.splitters]


# sorting

def radix_sort(elements, counter: OpCounter | None = None) -> np.ndarray:
    """Stable LSD radix sort, 8 bits per pass.

    Passes whose digit is constant across the input are skipped.  Each pass
    is a counting sort on one byte (numpy's stable sort on uint8 is itself a
    counting/radix sort, so every pass is linear).
    """
    a = _as_keys(elements).copy()
    n = a.size
    if n <= 1:
        return a
    varying = int(np.bitwise_or.reduce(a ^ a[0]))
    passes = 0
    for shift in range(0, 64, 8):
        if not (varying >> shift) & 0xFF:
            continue
        digit = ((a >> np.uint64(shift)) & np.uint64(0xFF)).astype(np.uint8)
        a = a[np.argsort(digit, kind="stable")]
        passes += 1
    if counter is not None:
        counter.add("sort", n * max(passes, 1))
    return a


def comparison_sort(elements, counter: OpCounter | None = None) -> np.ndarray:
    a = _as_keys(elements)
    if counter is not None and a.size > 1:
        counter.add("sort", int(a.size * np.log2(a.size)))
    return np.sort(a, kind="stable")


SORTS = {"radix": radix_sort, "comparison": comparison_sort}


def internal_sort(elements, method: str = "radix",
                  counter: OpCounter | None = None) -> np.ndarray:
    """Ascending, stable sort of word keys held in memory."""
    try:
        fn = SORTS[method]
    except KeyError:
        raise ValueError(f"unknown sort method {method!r}") from None
    return fn(elements, counter)


# splitting

def binary_split(elements, splitters: SplitterSet,
                 counter: OpCounter | None = None) -> np.ndarray:
    """Comparison-model baseline: one binary search per element."""
    a = _as_keys(elements)
    if counter is not None and a.size:
        counter.add("split", a.size * max(1, int(np.ceil(np.log2(splitters.s + 1)))))
    return np.searchsorted(splitters.splitters, a, side="right").astype(np.int64)


class JumpTable:
    """Radix-indexed dispatch over the splitter key range.

    The range [x_1, x_s] is cut into 2^p equal-width classes by the top p
    bits of (e - x_1).  Each class stores how many splitters precede it and
    how many fall inside it; an element in a class with no splitters is
    dispatched by one lookup, otherwise by a search restricted to the few
    splitters of that class.
    """

    def __init__(self, splitters: SplitterSet):
        self.splitters = splitters.splitters
        s = splitters.s
        self.s = s
        if s == 0:
            return
        self.lo = self.splitters[0]
        span = int(self.splitters[-1] - self.lo)
        self.p = max(1, int(np.ceil(np.log2(4 * (s + 1)))))
        self.shift = max(0, span.bit_length() - self.p)
        nclass = (span >> self.shift) + 1
        cls = ((self.splitters - self.lo) >> np.uint64(self.shift)).astype(np.int64)
        inside = np.bincount(cls, minlength=nclass)
        # splitters strictly before class c
        self.before = np.concatenate(([0], np.cumsum(inside)[:-1])).astype(np.int64)
        self.inside = inside.astype(np.int64)
        self.nclass = nclass

    def dispatch(self, elements, counter: OpCounter | None = None) -> np.ndarray:
        a = _as_keys(elements)
        n = a.size
        if self.s == 0:
            return np.zeros(n, dtype=np.int64)
        out = np.empty(n, dtype=np.int64)
        below = a < self.lo
        out[below] = 0
        rest = ~below
        off = (a[rest] - self.lo) >> np.uint64(self.shift)
        above = off >= self.nclass
        cls = np.minimum(off, self.nclass - 1).astype(np.int64)
        base = self.before[cls] + self.inside[cls]
        res = np.where(above, self.s, base)
        # classes holding splitters need the exact count of splitters <= e
        crowded = (~above) & (self.inside[cls] > 0)
        if crowded.any():
            vals = a[rest][crowded]
            res[crowded] = np.searchsorted(self.splitters, vals, side="right")
            if counter is not None:
                width = int(self.inside[cls[crowded]].max())
                counter.add("split", int(crowded.sum()) * int(np.ceil(np.log2(width + 1))))
        out[rest] = res
        if counter is not None:
            counter.add("split", n)
        return out


def linear_split(elements, splitters: SplitterSet,
                 counter: OpCounter | None = None) -> np.ndarray:
    """Bucket index for each element: the number of splitters <= it."""
    return JumpTable(splitters).dispatch(elements, counter)


def group_by_bucket(elements: np.ndarray, idx: np.ndarray, nbuckets: int):
    """Stable partition: returns (elements reordered by bucket, bucket sizes)."""
    order = np.argsort(idx, kind="stable")
    sizes = np.bincount(idx, minlength=nbuckets)
    return elements[order], sizes


# selection

def select_kth(elements, k: int, counter: OpCounter | None = None):
    """k-th smallest (1-based) by introselect."""
    a = _as_keys(elements)
    if not 1 <= k <= a.size:
        raise IndexError(f"rank {k} out of range for {a.size} elements")
    if counter is not None:
        counter.add("select", a.size)
    return np.partition(a, k - 1)[k - 1]


def select_ranks(elements, ranks, counter: OpCounter | None = None) -> np.ndarray:
    a = _as_keys(elements)
    ranks = [int(r) for r in ranks]
    for k in ranks:
        if not 1 <= k <= a.size:
            raise IndexError(f"rank {k} out of range for {a.size} elements")
    if counter is not None:
        counter.add("select", a.size * max(1, len(ranks)))
    if not ranks:
        return np.empty(0, DTYPE)
    kth = sorted({k - 1 for k in ranks})
    part = np.partition(a, kth)
    return part[[k - 1 for k in ranks]]
