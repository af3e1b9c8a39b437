"""External priority queue on a buffer tree.

A B-tree of fan-out f = floor(sqrt(M/B)) sits over leaves of M/2..M
elements.  Every internal node has a FIFO buffer on disk; inserts collect
in an in-memory insertion buffer of B elements and are pushed into the
root buffer, and a buffer holding more than M/2 elements pushes its M/2
oldest elements one level down.  The smallest elements live in an
in-memory mini-queue, refilled from the leftmost leaf after every buffer
on the leftmost path has been emptied.

Tree shape (splitters, child links, counts) is kept in Python objects and
not charged as I/O; element data lives in disk blocks.
"""

from __future__ import annotations

import bisect
import itertools
import math
import warnings
from collections import deque

import numpy as np

from .em_model import DTYPE, ConfigError, Disk, Run, RunWriter, iter_blocks
from .internal_algos import OpCounter, SplitterSet, internal_sort, linear_split
from .selection import split_at_rank
from .trace import SortTrace

_ids = itertools.count()


class Fifo:
    """Block chain consumed from the head, appended at the tail.

    Each entry is [block id, first valid slot, valid count]; reading the
    head entry after a partial take re-reads that block.
    """

    def __init__(self):
        self.entries: deque = deque()
        self.count = 0

    def __len__(self):
        return self.count

    def append(self, disk: Disk, arr: np.ndarray):
        if not arr.size:
            return
        w = RunWriter(disk)
        w.append(arr)
        for bid, c in zip(*_blocks(w.close())):
            self.entries.append([bid, 0, c])
        self.count += arr.size

    def take(self, disk: Disk, k: int) -> np.ndarray:
        """Read and remove the k oldest elements."""
        out = []
        need = min(k, self.count)
        while need:
            bid, start, c = self.entries[0]
            blk = disk.read_block(bid, start + c)
            disk.release(start)
            blk = blk[start:]
            if c <= need:
                out.append(blk)
                need -= c
                self.entries.popleft()
                disk.free_block(bid)
            else:
                out.append(blk[:need])
                disk.release(c - need)
                self.entries[0] = [bid, start + need, c - need]
                need = 0
        got = np.concatenate(out) if out else np.empty(0, DTYPE)
        self.count -= got.size
        return got

    def free(self, disk: Disk):
        for bid, _, _ in self.entries:
            disk.free_block(bid)
        self.entries.clear()
        self.count = 0

    def extend(self, other: "Fifo"):
        self.entries.extend(other.entries)
        self.count += other.count
        other.entries = deque()
        other.count = 0

    def peek(self, disk: Disk) -> np.ndarray:
        parts = [disk.peek(Run([bid], [s + c]))[s:] for bid, s, c in self.entries]
        return np.concatenate(parts) if parts else np.empty(0, DTYPE)


def _blocks(run: Run):
    return run.blocks, run.counts


class Leaf:
    __slots__ = ("run", "count", "parent", "id")

    def __init__(self, run: Run | None = None, count: int = 0):
        self.run = run if run is not None else Run()
        self.count = count
        self.parent = None
        self.id = next(_ids)


class Node:
    __slots__ = ("children", "splitters", "buffer", "parent", "id")

    def __init__(self, children, splitters):
        self.children = list(children)
        self.splitters = [int(x) for x in splitters]
        self.buffer = Fifo()
        self.parent = None
        self.id = next(_ids)
        for c in self.children:
            c.parent = self

    @property
    def is_leaf_parent(self) -> bool:
        return isinstance(self.children[0], Leaf)

    def index(self, child) -> int:
        for i, c in enumerate(self.children):
            if c is child:
                return i
        raise ValueError("not a child of this node")


class MiniQueue:
    """In-memory double-ended priority queue (sorted list, min at the end)."""

    def __init__(self, counter: OpCounter):
        self._neg: list[int] = []
        self.counter = counter

    def __len__(self):
        return len(self._neg)

    def push(self, x: int):
        bisect.insort(self._neg, -x)
        self.counter.add("mini", max(1, len(self._neg).bit_length()))

    def pop_min(self) -> int:
        self.counter.add("mini", 1)
        return -self._neg.pop()

    def pop_max(self) -> int:
        self.counter.add("mini", 1)
        return -self._neg.pop(0)

    def max(self) -> int:
        return -self._neg[0]

    def min(self) -> int:
        return -self._neg[-1]

    def extend_sorted(self, arr):
        """Load ascending keys into an empty queue."""
        self._neg = [-int(x) for x in arr[::-1]]
        self.counter.add("mini", len(self._neg))

    def values(self):
        return [-x for x in self._neg]


class BufferTreePQ:
    def __init__(self, disk: Disk, debug: bool = False):
        M, B = disk.M, disk.B
        if M // B < 4:
            raise ConfigError(f"M/B = {M // B} < 4 leaves a fan-out below 2")
        self.disk = disk
        self.M, self.B = M, B
        self.f = max(2, math.isqrt(M // B))
        if self.f == 2:
            warnings.warn("fan-out 2: the tree degenerates to a binary tree",
                          RuntimeWarning, stacklevel=2)
        self.min_fan = -(-self.f // 2)
        self.half = M // 2
        # the mini-queue shares memory with one M/2 emptying load, its
        # splitters, a partly consumed head block and one block of the caller
        self.mini_cap = max(1, self.half - 2 * B - self.f)
        self.root: Node | Leaf = Leaf()
        self.mini = MiniQueue(OpCounter())
        self.ops = self.mini.counter
        self.ins: list[int] = []
        self.n = 0
        self.forced_ios = 0
        self.refills = 0
        self.debug = debug
        # exact minimum outside the mini-queue, kept in debug mode only
        self._floor = None

    def __len__(self):
        return self.n

    # public operations

    def insert(self, e: int):
        e = int(e)
        if not 0 <= e < 2 ** 64:
            raise ValueError("keys are unsigned 64-bit integers")
        self.disk.hold(1)
        self.n += 1
        if len(self.mini) and e < self.mini.max():
            self.mini.push(e)
            e = self.mini.pop_max()
        self.ins.append(e)
        if self.debug:
            self._floor = e if self._floor is None else min(self._floor, e)
        if len(self.ins) >= self.B:
            self._flush_insertion_buffer()

    def deletemin(self) -> int:
        if not self.n:
            raise IndexError("deletemin from an empty priority queue")
        if not len(self.mini):
            self._refill()
        self.n -= 1
        self.disk.release(1)
        return self.mini.pop_min()

    def peek_min(self) -> int:
        if not self.n:
            raise IndexError("empty priority queue")
        if not len(self.mini):
            self._refill()
        return self.mini.min()

    # insertion side

    def _flush_insertion_buffer(self):
        if not self.ins:
            return
        arr = np.array(self.ins, dtype=DTYPE)
        self.ins = []
        root = self.root
        if isinstance(root, Leaf):
            self._append_leaf(root, arr)
            if root.count > self.M:
                self._split_leaf(root)
            return
        root.buffer.append(self.disk, arr)
        if len(root.buffer) > self.half:
            self._empty(root)

    def _append_leaf(self, leaf: Leaf, arr):
        w = RunWriter(self.disk)
        w.append(arr)
        leaf.run = leaf.run + w.close()
        leaf.count += arr.size

    def _empty(self, v: Node, forced: bool = False):
        """Buffer-emptying: push M/2 oldest elements (everything when forced)
        one level down, recursing into children that run over M/2."""
        while len(v.buffer) > self.half or (forced and len(v.buffer)):
            batch = v.buffer.take(self.disk, self.half)
            kids = list(v.children)
            self._distribute(v, batch)
            if isinstance(kids[0], Leaf):
                for leaf in kids:
                    if leaf.count > self.M:
                        self._split_leaf(leaf)
            else:
                for c in kids:
                    if len(c.buffer) > self.half:
                        self._empty(c)

    def _distribute(self, v: Node, batch):
        s = len(v.splitters)
        self.disk.hold(s)
        sp = np.array(v.splitters, dtype=DTYPE)
        if s and np.all(sp[1:] > sp[:-1]):
            idx = linear_split(batch, SplitterSet(sp), self.ops)
        else:
            idx = np.searchsorted(sp, batch, side="right")
            self.ops.add("split", batch.size)
        order = np.argsort(idx, kind="stable")
        grouped = batch[order]
        sizes = np.bincount(idx, minlength=len(v.children))
        off = 0
        for child, c in zip(v.children, sizes):
            c = int(c)
            if not c:
                continue
            part = grouped[off:off + c]
            off += c
            if isinstance(child, Leaf):
                self._append_leaf(child, part)
            else:
                child.buffer.append(self.disk, part)
        self.disk.release(s)

    def _split_leaf(self, leaf: Leaf):
        c = leaf.count
        m, L, R = split_at_rank(self.disk, leaf.run, (c + 1) // 2, self.ops)
        self.disk.free_run(leaf.run)
        leaf.run, leaf.count = L, len(L)
        right = Leaf(R, len(R))
        self._add_sibling(leaf, right, int(m))

    def _add_sibling(self, left, right, sep: int):
        """Insert ``right`` after ``left`` under their parent; split upward."""
        p = left.parent
        if p is None:
            self.root = Node([left, right], [sep])
            return
        i = p.index(left)
        p.children.insert(i + 1, right)
        p.splitters.insert(i, sep)
        right.parent = p
        if len(p.children) > self.f:
            self._split_node(p)

    def _split_node(self, v: Node):
        k = len(v.children)
        nl = -(-k // 2)
        sep = v.splitters[nl - 1]
        w = Node(v.children[nl:], v.splitters[nl:])
        v.children = v.children[:nl]
        v.splitters = v.splitters[:nl - 1]
        if len(v.buffer):
            a, b = self._route_buffer(v.buffer, sep)
            v.buffer, w.buffer = a, b
        self._add_sibling(v, w, sep)

    def _route_buffer(self, buf: Fifo, sep: int):
        """Partition a buffer by a splitter, keeping FIFO order on each side."""
        sep = np.uint64(sep)
        lw, rw = RunWriter(self.disk), RunWriter(self.disk)
        while len(buf):
            blk = buf.take(self.disk, self.B)
            mask = blk < sep
            lw.append(blk[mask])
            rw.append(blk[~mask])
        out = []
        for w in (lw, rw):
            fifo = Fifo()
            run = w.close()
            for bid, c in zip(run.blocks, run.counts):
                fifo.entries.append([bid, 0, c])
            fifo.count = len(run)
            out.append(fifo)
        return out

    # deletemin side

    def _leftmost_path(self):
        path = []
        v = self.root
        while isinstance(v, Node):
            path.append(v)
            v = v.children[0]
        return path, v

    def _flush_leftmost(self):
        before = self.disk.stats().io_count
        v = self.root
        while isinstance(v, Node):
            if len(v.buffer):
                self._empty(v, forced=True)
            v = v.children[0]
        self.forced_ios += self.disk.stats().io_count - before

    def _refill(self):
        self.refills += 1
        self._flush_insertion_buffer()
        self._flush_leftmost()
        _, leaf = self._leftmost_path()
        arr = np.concatenate(list(iter_blocks(self.disk, leaf.run))) \
            if leaf.run.blocks else np.empty(0, DTYPE)
        self.disk.free_run(leaf.run)
        arr = internal_sort(arr, counter=self.ops)
        q = min(self.mini_cap, arr.size)
        self.mini.extend_sorted(arr[:q])
        rest = arr[q:]
        if leaf is self.root or rest.size >= self.half:
            leaf.run, leaf.count = Run(), 0
            if rest.size:
                self._append_leaf(leaf, rest)
        else:
            nxt = self._next_leaf(leaf)
            if rest.size:
                self._append_leaf(nxt, rest)
            leaf.run, leaf.count = Run(), 0
            self._remove_leftmost(leaf)
            if nxt.count > self.M:
                self._split_leaf(nxt)
            # a fusion may have pulled a non-empty buffer onto the path
            self._flush_leftmost()
        if self.debug:
            self._floor = self._scan_min()

    def _next_leaf(self, leaf: Leaf) -> Leaf:
        v = leaf
        while v.parent is not None and len(v.parent.children) == 1:
            v = v.parent
        p = v.parent
        w = p.children[1]
        while isinstance(w, Node):
            w = w.children[0]
        return w

    def _remove_leftmost(self, child):
        """Drop the leftmost child of its parent and rebalance upward."""
        p = child.parent
        p.children.pop(0)
        if p.splitters:
            p.splitters.pop(0)
        child.parent = None
        if not p.children:
            p.buffer.free(self.disk)
            if p.parent is None:
                self.root = Leaf()
            else:
                self._remove_leftmost(p)
            return
        self._rebalance(p)

    def _rebalance(self, v: Node):
        if v.parent is None:
            while isinstance(self.root, Node) and len(self.root.children) == 1:
                old = self.root
                self.root = old.children[0]
                self.root.parent = None
                if isinstance(self.root, Node):
                    self.root.buffer.extend(old.buffer)
                elif len(old.buffer):
                    self._append_leaf(self.root, old.buffer.take(self.disk, len(old.buffer)))
            if isinstance(self.root, Leaf) and self.root.count > self.M:
                self._split_leaf(self.root)
            return
        if len(v.children) >= self.min_fan:
            return
        p = v.parent
        if len(p.children) == 1:
            self._rebalance(p)
            return
        i = p.index(v)
        if i + 1 < len(p.children):
            left, right, sep_i = v, p.children[i + 1], i
        else:
            left, right, sep_i = p.children[i - 1], v, i - 1
        sep = p.splitters.pop(sep_i)
        p.children.pop(sep_i + 1)
        left.splitters = left.splitters + [sep] + right.splitters
        for c in right.children:
            c.parent = left
        left.children = left.children + right.children
        left.buffer.extend(right.buffer)
        right.parent = None
        if len(left.children) > self.f:
            self._split_node(left)
        else:
            self._rebalance(p)

    # inspection

    def _leaves_and_nodes(self):
        nodes, leaves = [], []
        stack = [(self.root, 0)]
        while stack:
            v, d = stack.pop()
            if isinstance(v, Leaf):
                leaves.append((v, d))
            else:
                nodes.append((v, d))
                stack.extend((c, d + 1) for c in v.children)
        return nodes, leaves

    def _scan_min(self):
        """Minimum over leaves, buffers and the insertion buffer (no I/O)."""
        nodes, leaves = self._leaves_and_nodes()
        parts = [self.disk.peek(l.run) for l, _ in leaves]
        parts += [v.buffer.peek(self.disk) for v, _ in nodes]
        parts.append(np.array(self.ins, dtype=DTYPE))
        allv = np.concatenate(parts) if parts else np.empty(0, DTYPE)
        return int(allv.min()) if allv.size else None

    def contents(self) -> np.ndarray:
        """Every stored element, unordered (no I/O; for tests)."""
        nodes, leaves = self._leaves_and_nodes()
        parts = [self.disk.peek(l.run) for l, _ in leaves]
        parts += [v.buffer.peek(self.disk) for v, _ in nodes]
        parts.append(np.array(self.ins, dtype=DTYPE))
        parts.append(np.array(self.mini.values(), dtype=DTYPE))
        return np.concatenate(parts)

    def check_invariants(self, full: bool = False):
        """Raise AssertionError on any structural violation.

        Shape checks read only tree metadata.  Mini-queue dominance is
        checked against the tracked outside minimum in debug mode and
        against a full scan of every block when ``full`` is set.
        """
        M = self.M
        nodes, leaves = self._leaves_and_nodes()
        depths = {d for _, d in leaves}
        assert len(depths) == 1, f"leaves at depths {sorted(depths)}"
        for v, _ in nodes:
            k = len(v.children)
            assert len(v.splitters) == k - 1, "splitter/child count mismatch"
            assert all(a <= b for a, b in zip(v.splitters, v.splitters[1:])), \
                "splitters out of order"
            if v is self.root:
                assert k >= 2, "root with fewer than 2 children"
            else:
                assert self.min_fan <= k <= self.f, f"node {v.id} fan-out {k}"
            assert k <= self.f, f"node {v.id} fan-out {k} > {self.f}"
            assert len(v.buffer) <= M, f"node {v.id} buffer {len(v.buffer)} > M"
            assert len({type(c) for c in v.children}) == 1, "mixed child kinds"
            for c in v.children:
                assert c.parent is v, "broken parent link"
        for leaf, _ in leaves:
            assert leaf.count == len(leaf.run), "leaf count drift"
            if leaf is not self.root:
                assert M // 2 <= leaf.count <= M, f"leaf {leaf.id} holds {leaf.count}"
        assert len(self.ins) < self.B, "insertion buffer overflow"
        assert len(self.mini) <= self.mini_cap, "mini-queue overflow"
        stored = sum(l.count for l, _ in leaves) + sum(len(v.buffer) for v, _ in nodes)
        assert stored + len(self.ins) + len(self.mini) == self.n, "element count drift"
        if len(self.mini):
            if self.debug and self._floor is not None:
                assert self.mini.max() <= self._floor, "mini-queue dominance"
            if full:
                lo = self._scan_min()
                assert lo is None or self.mini.max() <= lo, "mini-queue dominance"
        if full:
            self._check_ranges()

    def _check_ranges(self):
        def walk(v, lo, hi):
            vals = self.disk.peek(v.run) if isinstance(v, Leaf) else v.buffer.peek(self.disk)
            if vals.size:
                assert lo is None or vals.min() >= lo, "element below subtree range"
                assert hi is None or vals.max() <= hi, "element above subtree range"
            if isinstance(v, Node):
                bounds = [lo] + v.splitters + [hi]
                for i, c in enumerate(v.children):
                    walk(c, bounds[i], bounds[i + 1])
        walk(self.root, None, None)

    def dump(self, ids: bool = True) -> str:
        """Indented text rendering of the tree, one line per node or leaf."""
        lines = [f"pq n={self.n} mini={len(self.mini)} ins={len(self.ins)} "
                 f"f={self.f} M={self.M} B={self.B}"]

        def walk(v, depth):
            pad = "  " * depth
            tag = f"#{v.id}" if ids else ""
            if isinstance(v, Leaf):
                lines.append(f"{pad}leaf{tag} count={v.count}")
                return
            lines.append(f"{pad}node{tag} splitters={v.splitters} "
                         f"buffer={len(v.buffer)}")
            for c in v.children:
                walk(c, depth + 1)

        walk(self.root, 1)
        return "\n".join(lines)

    def height(self) -> int:
        h, v = 0, self.root
        while isinstance(v, Node):
            h += 1
            v = v.children[0]
        return h


def pq_new(disk: Disk, debug: bool = False) -> BufferTreePQ:
    return BufferTreePQ(disk, debug=debug)


def pq_insert(pq: BufferTreePQ, e: int):
    pq.insert(e)


def pq_deletemin(pq: BufferTreePQ) -> int:
    return pq.deletemin()


def pq_sort(disk: Disk, run: Run, pq: BufferTreePQ | None = None,
            trace: SortTrace | None = None) -> Run:
    """Sort by N inserts followed by N deletemins.

    ``trace.depth`` records the tree height once every element is in.
    """
    N = len(run)
    if N < 2 * disk.M:
        raise ValueError(f"pq sort expects N >= 2M, got N={N} M={disk.M}")
    if pq is None:
        pq = BufferTreePQ(disk)
    for blk in iter_blocks(disk, run):
        for x in blk.tolist():
            # the element moves from our block buffer into the queue
            disk.release(1)
            pq.insert(x)
    if trace is not None:
        trace.depth = trace.phases = pq.height()
    out = RunWriter(disk)
    for _ in range(N):
        if not len(pq.mini) and out.buffered:
            # a refill needs the whole workspace
            out.flush()
        x = pq.deletemin()
        disk.hold(1)
        out.append(np.array([x], dtype=DTYPE))
    return out.close()
