"""Selection and partitioning of runs that do not fit in memory."""

from __future__ import annotations

import math

import numpy as np

from .em_model import DTYPE, Disk, Run, RunWriter, iter_blocks, iter_loads
from .internal_algos import OpCounter, internal_sort, select_kth, select_ranks


def _load_all(disk: Disk, run: Run) -> np.ndarray:
    parts = list(iter_blocks(disk, run))
    if not parts:
        return np.empty(0, DTYPE)
    return np.concatenate(parts) if len(parts) > 1 else parts[0]


def external_select(disk: Disk, run: Run, k: int,
                    counter: OpCounter | None = None, method: str = "bracket"):
    """k-th smallest element (1-based) of a run on disk."""
    return external_multiselect(disk, run, [k], counter, method)[0]


SELECT_METHODS = ("bracket", "mom")


def external_multiselect(disk: Disk, run: Run, ranks,
                         counter: OpCounter | None = None,
                         method: str = "bracket") -> list:
    """Elements of the given 1-based ranks of a run on disk.

    "bracket" (default) reads the run once to sort memory loads and keep a
    regular sample, selects from the sample the two values that must enclose
    each rank, then reads the run again keeping only what lies strictly
    between them.  "mom" is the classic external median of medians.  Both
    are deterministic and use O(n/B) I/Os.
    """
    n = len(run)
    ranks = [int(k) for k in ranks]
    for k in ranks:
        if not 1 <= k <= n:
            raise IndexError(f"rank {k} out of range for run of {n}")
    if method not in SELECT_METHODS:
        raise ValueError(f"unknown select method {method!r}")
    counter = counter if counter is not None else OpCounter()
    found: dict[int, int] = {}
    want = sorted(set(ranks))
    if method == "mom":
        _multiselect(disk, run, want, 0, False, found, counter)
    else:
        _bracket_select(disk, run, want, False, found, counter)
    return [found[k] for k in ranks]


def _in_memory(disk, run, ranks, offset, owned, found, counter) -> bool:
    if len(run) > disk.available():
        return False
    arr = _load_all(disk, run)
    vals = select_ranks(arr, [k - offset for k in ranks], counter)
    disk.release(arr.size)
    for k, v in zip(ranks, vals):
        found[k] = int(v)
    if owned:
        disk.free_run(run)
    return True


def _multiselect(disk, run, ranks, offset, owned, found, counter):
    if not ranks:
        if owned:
            disk.free_run(run)
        return
    if _in_memory(disk, run, ranks, offset, owned, found, counter):
        return
    pivot = _median_of_medians(disk, run, counter)
    less, greater, n_eq = partition3(disk, run, pivot, counter)
    if owned:
        disk.free_run(run)
    nl = len(less)
    lo = [k for k in ranks if k - offset <= nl]
    mid = [k for k in ranks if nl < k - offset <= nl + n_eq]
    hi = [k for k in ranks if k - offset > nl + n_eq]
    for k in mid:
        found[k] = int(pivot)
    _multiselect(disk, less, lo, offset, True, found, counter)
    _multiselect(disk, greater, hi, offset + nl + n_eq, True, found, counter)


# sample brackets

class Sample:
    """Every q-th element of each sorted memory load of a run.

    For a sample value x of sample rank a (1-based, duplicates counted) the
    run holds at least q*a elements <= x and at most q*(a-1) + loads*(q-1)
    elements < x.  That is what lets two sample values bracket a rank.
    """

    def __init__(self, run: Run, q: int, loads: int, n: int):
        self.run, self.q, self.loads, self.n = run, q, loads, n

    def __len__(self):
        return len(self.run)

    def lo_rank(self, r: int):
        """Sample rank whose value has fewer than r elements below it."""
        a = (r - 1 - self.loads * (self.q - 1)) // self.q + 1
        return a if a >= 1 else None

    def hi_rank(self, r: int):
        """Sample rank whose value has at least r elements at or below it."""
        a = -(-r // self.q)
        return a if a <= len(self.run) else None

    def window(self, a_lo, a_hi) -> int:
        """Bound on elements strictly between the two bracket values."""
        below_hi = self.n if a_hi is None else min(
            self.n, self.q * (a_hi - 1) + self.loads * (self.q - 1))
        at_lo = 0 if a_lo is None else self.q * a_lo
        return max(0, below_hi - at_lo)


def take_sample(disk: Disk, run: Run, counter=None) -> Sample | None:
    """One read pass; None when memory is too small for a useful sample."""
    B = disk.B
    load = (disk.available() - B) // B * B
    if load < 16:
        return None
    q = max(2, math.isqrt(load // 2))
    w = RunWriter(disk)
    loads = 0
    for chunk in iter_loads(disk, run, load):
        picked = internal_sort(chunk, counter=counter)[q - 1::q]
        disk.release(chunk.size - picked.size)
        w.append(picked)
        loads += 1
    return Sample(w.close(), q, loads, len(run))


def bracket(disk: Disk, sample: Sample, ranks, counter=None) -> dict:
    """(lo, hi, a_lo, a_hi) per rank; lo/hi are None when unbounded."""
    need = {}
    for r in ranks:
        need[r] = (sample.lo_rank(r), sample.hi_rank(r))
    wanted = sorted({a for pair in need.values() for a in pair if a is not None})
    vals = {}
    if wanted:
        got = external_multiselect(disk, sample.run, wanted, counter)
        vals = dict(zip(wanted, got))
    return {r: (None if a is None else vals[a], None if b is None else vals[b], a, b)
            for r, (a, b) in need.items()}


def _bracket_select(disk, run, ranks, owned, found, counter):
    if not ranks:
        if owned:
            disk.free_run(run)
        return
    if _in_memory(disk, run, ranks, 0, owned, found, counter):
        return
    sample = take_sample(disk, run, counter)
    if sample is None:
        # too little memory for sampling: fall back to median of medians
        _multiselect(disk, run, ranks, 0, owned, found, counter)
        return
    br = bracket(disk, sample, ranks, counter)
    disk.free_run(sample.run)
    groups = _merge_brackets(ranks, br, sample)
    n = len(run)
    if any(g["bound"] >= n for g in groups):
        _multiselect(disk, run, ranks, 0, owned, found, counter)
        return
    # as many groups per pass as there is room for their output buffers
    B = disk.B
    per_pass = max(1, (disk.available() - B) // (B + 2))
    for i in range(0, len(groups), per_pass):
        _window_pass(disk, run, groups[i:i + per_pass], found, counter)
    if owned:
        disk.free_run(run)


def _merge_brackets(ranks, br, sample):
    """Merge overlapping rank brackets into disjoint value windows."""
    def key_lo(v):
        return -1 if v is None else v

    items = sorted(ranks, key=lambda r: (key_lo(br[r][0]), r))
    groups = []
    for r in items:
        lo, hi, a_lo, a_hi = br[r]
        if groups:
            g = groups[-1]
            if g["hi"] is None or (lo is not None and lo <= g["hi"]) or lo is None:
                g["ranks"].append(r)
                if g["hi"] is not None and (hi is None or hi > g["hi"]):
                    g["hi"], g["a_hi"] = hi, a_hi
                g["bound"] = sample.window(g["a_lo"], g["a_hi"])
                continue
        groups.append({"lo": lo, "hi": hi, "a_lo": a_lo, "a_hi": a_hi,
                       "ranks": [r], "bound": sample.window(a_lo, a_hi)})
    return groups


def _window_pass(disk, run, groups, found, counter):
    B = disk.B
    held = 2 * len(groups)
    disk.hold(held)
    room = disk.available() - B
    in_mem = sum(g["bound"] for g in groups) <= room - len(groups)
    for g in groups:
        g["lt"] = g["eq_lo"] = g["eq_hi"] = 0
        g["w"] = [] if in_mem else RunWriter(disk)
    for blk in iter_blocks(disk, run):
        kept = 0
        for g in groups:
            lo, hi = g["lo"], g["hi"]
            mask = np.ones(blk.size, dtype=bool)
            if lo is not None:
                g["lt"] += int(np.count_nonzero(blk < lo))
                eq = blk == lo
                g["eq_lo"] += int(np.count_nonzero(eq))
                mask &= blk > lo
            if hi is not None:
                if hi != lo:
                    g["eq_hi"] += int(np.count_nonzero(blk == hi))
                mask &= blk < hi
            part = blk[mask]
            kept += part.size
            g["w"].append(part)
        if counter is not None:
            counter.add("partition", blk.size)
        # the window writers own their elements from here on
        disk.release(blk.size - kept)
    for g in groups:
        if in_mem:
            arr = np.concatenate(g["w"]) if g["w"] else np.empty(0, DTYPE)
            wrun = None
        else:
            wrun = g["w"].close()
            arr = None
        nw = arr.size if in_mem else len(wrun)
        inner = []
        for r in g["ranks"]:
            r0 = r - g["lt"]
            if r0 <= g["eq_lo"]:
                found[r] = int(g["lo"])
            elif r0 <= g["eq_lo"] + nw:
                inner.append((r, r0 - g["eq_lo"]))
            else:
                found[r] = int(g["hi"])
        if in_mem:
            if inner:
                vals = select_ranks(arr, [k for _, k in inner], counter)
                for (r, _), v in zip(inner, vals):
                    found[r] = int(v)
            disk.release(arr.size)
        else:
            sub: dict[int, int] = {}
            _bracket_select(disk, wrun, sorted({k for _, k in inner}), True, sub, counter)
            for r, k in inner:
                found[r] = sub[k]
    disk.release(held)


def select_partition(disk: Disk, run: Run, k: int,
                     counter: OpCounter | None = None):
    """Find m, the k-th smallest element, and split the run around it.

    Returns (m, left, right) with left holding the elements < m and right
    those >= m.
    """
    m, less, equal, greater = select_split3(disk, run, k, counter)
    return m, less, equal + greater


def select_split3(disk: Disk, run: Run, k: int,
                  counter: OpCounter | None = None):
    """(m, less, equal, greater) for m the k-th smallest element.

    The second read of the bracket selection already sorts each element
    into below / equal-low / window / equal-high / above, so the split
    costs one write pass on top of the selection, not a pass of its own.
    """
    n = len(run)
    if not 1 <= k <= n:
        raise IndexError(f"rank {k} out of range for run of {n}")
    counter = counter if counter is not None else OpCounter()
    B = disk.B
    if n <= disk.available() - 3 * B:
        arr = _load_all(disk, run)
        m = select_kth(arr, k, counter)
        return (m, *_write3(disk, arr, m, counter))
    sample = take_sample(disk, run, counter)
    lo = hi = None
    bound = n
    if sample is not None:
        lo, hi, a_lo, a_hi = bracket(disk, sample, [k], counter)[k]
        bound = sample.window(a_lo, a_hi)
        disk.free_run(sample.run)
    if bound >= n or disk.available() < 6 * B:
        m = np.uint64(external_select(disk, run, k, counter, method="mom"))
        return (m, *partition_eq(disk, run, m, counter))
    disk.hold(2)
    room = disk.available() - 6 * B
    in_mem = bound <= room
    lw, rw, elw, ehw = (RunWriter(disk) for _ in range(4))
    wmem, ww = [], (None if in_mem else RunWriter(disk))
    for blk in iter_blocks(disk, run):
        none = np.zeros(blk.size, bool)
        below = blk < lo if lo is not None else none
        above = blk > hi if hi is not None else none
        eq_lo = blk == lo if lo is not None else none
        eq_hi = (blk == hi) & ~eq_lo if hi is not None else none
        mid = ~(below | above | eq_lo | eq_hi)
        lw.append(blk[below])
        rw.append(blk[above])
        elw.append(blk[eq_lo])
        ehw.append(blk[eq_hi])
        if in_mem:
            wmem.append(blk[mid])
        else:
            ww.append(blk[mid])
        counter.add("partition", blk.size)
    L, R, EL, EH = lw.close(), rw.close(), elw.close(), ehw.close()
    W = np.concatenate(wmem) if in_mem and wmem else np.empty(0, DTYPE)
    wrun = None if in_mem else ww.close()
    nw = W.size if in_mem else len(wrun)
    nl, ne = len(L), len(EL)
    disk.release(2)
    if k <= nl + ne:
        m = np.uint64(lo)
        # the window lies strictly above lo
        w_all = _write3(disk, W, m, counter)[2] if in_mem else wrun
        return m, L, EL, w_all + EH + R
    if k > nl + ne + nw:
        m = np.uint64(hi)
        w_all = _write3(disk, W, m, counter)[0] if in_mem else wrun
        return m, L + EL + w_all, EH, R
    if in_mem:
        m = select_kth(W, k - nl - ne, counter)
        w_lt, w_eq, w_gt = _write3(disk, W, m, counter)
    else:
        m = np.uint64(external_select(disk, wrun, k - nl - ne, counter))
        w_lt, w_eq, w_gt = partition_eq(disk, wrun, m, counter)
        disk.free_run(wrun)
    return m, L + EL + w_lt, w_eq, w_gt + EH + R


def _write3(disk, arr, m, counter):
    """Write resident elements out as (< m), (== m), (> m) runs."""
    out = []
    for part in (arr[arr < m], arr[arr == m], arr[arr > m]):
        w = RunWriter(disk)
        w.append(part)
        out.append(w.close())
    counter.add("partition", arr.size)
    return tuple(out)


def partition_eq(disk: Disk, run: Run, pivot, counter: OpCounter | None = None):
    """Stream a run into (< pivot), (== pivot), (> pivot) runs."""
    pivot = np.uint64(pivot)
    ws = [RunWriter(disk) for _ in range(3)]
    for blk in iter_blocks(disk, run):
        ws[0].append(blk[blk < pivot])
        ws[1].append(blk[blk == pivot])
        ws[2].append(blk[blk > pivot])
        if counter is not None:
            counter.add("partition", blk.size)
    return tuple(w.close() for w in ws)


def _median_of_medians(disk: Disk, run: Run, counter) -> np.uint64:
    B = disk.B
    avail = disk.available()
    load = max(B, (avail // 2) // B * B)
    n_loads = math.ceil(len(run) / B / max(1, load // B)) + 1
    spill = n_loads > max(1, (avail - load) // 2)
    meds = RunWriter(disk) if spill else []
    held = 0
    for chunk in iter_loads(disk, run, load):
        med = select_kth(chunk, (chunk.size + 1) // 2, counter)
        disk.release(chunk.size - 1)
        if spill:
            meds.append(np.array([med], dtype=DTYPE))
        else:
            meds.append(med)
            held += 1
    if spill:
        med_run = meds.close()
        p = external_select(disk, med_run, (len(med_run) + 1) // 2, counter)
        disk.free_run(med_run)
        return np.uint64(p)
    p = select_kth(np.array(meds, dtype=DTYPE), (held + 1) // 2, counter)
    disk.release(held)
    return np.uint64(p)


def partition3(disk: Disk, run: Run, pivot, counter: OpCounter | None = None):
    """Stream a run into (< pivot) and (> pivot) runs; equal keys are
    counted and dropped.  Returns (less, greater, n_equal)."""
    pivot = np.uint64(pivot)
    lw, gw = RunWriter(disk), RunWriter(disk)
    n_eq = 0
    for blk in iter_blocks(disk, run):
        lt = blk[blk < pivot]
        gt = blk[blk > pivot]
        eq = blk.size - lt.size - gt.size
        if eq:
            disk.release(eq)
            n_eq += eq
        lw.append(lt)
        gw.append(gt)
        if counter is not None:
            counter.add("partition", blk.size)
    return lw.close(), gw.close(), n_eq


def partition2(disk: Disk, run: Run, pivot, counter: OpCounter | None = None):
    """Stream a run into (< pivot) and (>= pivot) runs."""
    pivot = np.uint64(pivot)
    lw, rw = RunWriter(disk), RunWriter(disk)
    for blk in iter_blocks(disk, run):
        mask = blk < pivot
        lw.append(blk[mask])
        rw.append(blk[~mask])
        if counter is not None:
            counter.add("partition", blk.size)
    return lw.close(), rw.close()


def min_above(disk: Disk, run: Run, value):
    """Smallest element strictly greater than ``value``, or None."""
    value = np.uint64(value)
    best = None
    for blk in iter_blocks(disk, run):
        up = blk[blk > value]
        if up.size:
            m = int(up.min())
            if best is None or m < best:
                best = m
        disk.release(blk.size)
    return best


def split_at_rank(disk: Disk, run: Run, k: int,
                  counter: OpCounter | None = None):
    """Split a run into its k smallest elements and the rest.

    Returns (m, left, right) with |left| = k, m = min(right), and every
    element of left <= m.  Copies of m are divided between the two sides as
    needed, so the sizes are exact even with repeated keys.
    """
    n = len(run)
    if not 0 < k < n:
        raise IndexError(f"split rank {k} out of range for run of {n}")
    m, L, E, R = select_split3(disk, run, k + 1, counter)
    need = k - len(L)
    left, right = Run(), Run()
    for bid, c in zip(E.blocks, E.counts):
        if need >= c:
            left.blocks.append(bid)
            left.counts.append(c)
            need -= c
        elif need == 0:
            right.blocks.append(bid)
            right.counts.append(c)
        else:
            # the block holding the boundary is cut in two
            blk = disk.read_block(bid)
            disk.free_block(bid)
            a, b = RunWriter(disk), RunWriter(disk)
            a.append(blk[:need])
            b.append(blk[need:])
            left = left + a.close()
            right = right + b.close()
            need = 0
    return m, L + left, right + R
