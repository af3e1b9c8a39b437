"""Simulated external memory.

A disk holds fixed-capacity blocks of 64-bit unsigned keys.  Every
``read_block``/``write_block`` call is one I/O; the number of elements it
moves is recorded separately, so both the I/O count and the transfer volume
can be checked against bounds.  Elements brought into internal memory are
tracked by a workspace counter which, with budget enforcement on, may never
exceed M.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

DTYPE = np.dtype("<u8")


class DiskError(Exception):
    pass


class ConfigError(DiskError, ValueError):
    pass


class BlockError(DiskError):
    pass


class BudgetExceeded(DiskError):
    """Raised when the workspace would hold more than M elements."""


class AccountingError(DiskError):
    """Workspace released more elements than it holds."""


@dataclass(frozen=True)
class DiskConfig:
    capacity_m: int
    block_size_b: int
    enforce_budget: bool = True

    def __post_init__(self):
        if self.block_size_b < 2:
            raise ConfigError(f"B must be >= 2, got {self.block_size_b}")
        if self.capacity_m < 2 * self.block_size_b:
            raise ConfigError(
                f"M must be >= 2B, got M={self.capacity_m} B={self.block_size_b}")

    @property
    def m(self) -> int:
        return self.capacity_m

    @property
    def b(self) -> int:
        return self.block_size_b


@dataclass(frozen=True)
class IoStats:
    io_count: int = 0
    elements_transferred: int = 0
    reads: int = 0
    writes: int = 0
    peak_resident: int = 0

    def __sub__(self, other: "IoStats") -> "IoStats":
        # peak is not additive; the later snapshot's value is kept
        return IoStats(self.io_count - other.io_count,
                       self.elements_transferred - other.elements_transferred,
                       self.reads - other.reads,
                       self.writes - other.writes,
                       self.peak_resident)


class Workspace:
    """Counts original elements (and copies) currently in internal memory."""

    def __init__(self, limit: int, enforce: bool):
        self.limit = limit
        self.enforce = enforce
        self.resident = 0
        self.peak = 0

    def acquire(self, n: int):
        if n < 0:
            raise ValueError("negative acquire")
        new = self.resident + n
        if self.enforce and new > self.limit:
            raise BudgetExceeded(
                f"workspace would hold {new} elements, budget M={self.limit}")
        self.resident = new
        if new > self.peak:
            self.peak = new

    def release(self, n: int):
        if n < 0:
            raise ValueError("negative release")
        if n > self.resident:
            raise AccountingError(
                f"releasing {n} elements but only {self.resident} resident")
        self.resident -= n

    def available(self) -> int:
        return self.limit - self.resident


@dataclass
class Run:
    """Handle to a sequence of blocks on one disk.

    Blocks may be partially filled, including ones in the middle (runs are
    concatenated by joining block lists, which costs no I/O).
    """

    blocks: list = field(default_factory=list)
    counts: list = field(default_factory=list)

    def __len__(self) -> int:
        return self.length

    @property
    def length(self) -> int:
        return sum(self.counts)

    def __add__(self, other: "Run") -> "Run":
        return Run(self.blocks + other.blocks, self.counts + other.counts)

    @staticmethod
    def concat(runs) -> "Run":
        out = Run()
        for r in runs:
            out.blocks.extend(r.blocks)
            out.counts.extend(r.counts)
        return out


class Disk:
    """In-memory simulated block device.  Counts only; storage is a dict."""

    def __init__(self, config: DiskConfig):
        self.config = config
        self.M = config.capacity_m
        self.B = config.block_size_b
        self.workspace = Workspace(self.M, config.enforce_budget)
        self._fill: dict[int, int] = {}
        self._free: list[int] = []
        self._next = 0
        self._io = 0
        self._transferred = 0
        self._reads = 0
        self._writes = 0
        self._data: dict[int, np.ndarray] = {}

    # storage backend hooks
    def _store(self, bid: int, data: np.ndarray):
        self._data[bid] = data

    def _load(self, bid: int, count: int) -> np.ndarray:
        return self._data[bid][:count].copy()

    def _drop(self, bid: int):
        self._data.pop(bid, None)

    # allocation
    def alloc_block(self) -> int:
        if self._free:
            bid = self._free.pop()
        else:
            bid = self._next
            self._next += 1
        self._fill[bid] = 0
        return bid

    def free_block(self, bid: int):
        if bid not in self._fill:
            raise BlockError(f"block {bid} is not allocated")
        del self._fill[bid]
        self._drop(bid)
        self._free.append(bid)

    def free_run(self, run: Run):
        for bid in run.blocks:
            self.free_block(bid)
        run.blocks = []
        run.counts = []

    def fill(self, bid: int) -> int:
        try:
            return self._fill[bid]
        except KeyError:
            raise BlockError(f"block {bid} is not allocated") from None

    @property
    def allocated(self) -> int:
        return len(self._fill)

    # counted transfers
    def read_block(self, bid: int, count: int | None = None) -> np.ndarray:
        stored = self.fill(bid)
        if count is None:
            count = stored
        if count <= 0 or count > stored:
            raise BlockError(
                f"cannot read {count} elements from block {bid} holding {stored}")
        self.workspace.acquire(count)
        self._io += 1
        self._reads += 1
        self._transferred += count
        return self._load(bid, count)

    def write_block(self, bid: int, elements) -> None:
        arr = np.asarray(elements, dtype=DTYPE)
        n = arr.size
        self.fill(bid)
        if n == 0:
            raise BlockError("zero-element writes are not issued")
        if n > self.B:
            raise BlockError(f"block overflow: {n} elements > B={self.B}")
        self.workspace.release(n)
        self._io += 1
        self._writes += 1
        self._transferred += n
        self._store(bid, arr.copy())
        self._fill[bid] = n

    def stats(self) -> IoStats:
        return IoStats(self._io, self._transferred, self._reads, self._writes,
                       self.workspace.peak)

    # uncounted staging, for loading inputs and verifying outputs
    def stage(self, data) -> Run:
        arr = np.ascontiguousarray(data, dtype=DTYPE)
        run = Run()
        for start in range(0, arr.size, self.B):
            chunk = arr[start:start + self.B]
            bid = self.alloc_block()
            self._store(bid, chunk.copy())
            self._fill[bid] = chunk.size
            run.blocks.append(bid)
            run.counts.append(chunk.size)
        return run

    def peek(self, run: Run) -> np.ndarray:
        if not run.blocks:
            return np.empty(0, dtype=DTYPE)
        parts = [self._load(b, self.fill(b)) for b in run.blocks]
        return np.concatenate(parts)

    def peek_blocks(self, run: Run) -> list:
        return [self._load(b, self.fill(b)) for b in run.blocks]

    # workspace shortcuts
    def hold(self, n: int):
        self.workspace.acquire(n)

    def release(self, n: int):
        self.workspace.release(n)

    def available(self) -> int:
        return self.workspace.available()

    @property
    def resident(self) -> int:
        return self.workspace.resident


class FileDisk(Disk):
    """Disk backed by a flat file of little-endian u64, block i at i*B*8.

    A JSON sidecar (``<path>.meta.json``) records B and the fill count of
    every allocated block.  Counters behave exactly as in the simulated disk.
    """

    def __init__(self, config: DiskConfig, path):
        super().__init__(config)
        self.path = os.fspath(path)
        self.meta_path = self.path + ".meta.json"
        self._fh = open(self.path, "w+b")

    def _store(self, bid, data):
        self._fh.seek(bid * self.B * 8)
        self._fh.write(data.astype(DTYPE, copy=False).tobytes())

    def _load(self, bid, count):
        self._fh.seek(bid * self.B * 8)
        raw = self._fh.read(count * 8)
        return np.frombuffer(raw, dtype=DTYPE).copy()

    def _drop(self, bid):
        pass

    def sync(self):
        self._fh.flush()
        meta = {"block_size": self.B,
                "fills": {str(k): v for k, v in sorted(self._fill.items())}}
        with open(self.meta_path, "w") as f:
            json.dump(meta, f)

    def close(self):
        if not self._fh.closed:
            self.sync()
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def create_disk(config: DiskConfig, backend: str = "sim", path=None) -> Disk:
    if backend == "sim":
        return Disk(config)
    if backend == "file":
        if path is None:
            raise ValueError("file backend needs a path")
        return FileDisk(config, path)
    raise ValueError(f"unknown backend {backend!r}")


def read_file_disk(path) -> tuple[int, dict]:
    """Parse a file-backed disk image: returns (B, {block: elements})."""
    path = os.fspath(path)
    with open(path + ".meta.json") as f:
        meta = json.load(f)
    B = meta["block_size"]
    raw = np.fromfile(path, dtype=DTYPE)
    blocks = {}
    for key, n in meta["fills"].items():
        i = int(key)
        blocks[i] = raw[i * B:i * B + n].copy()
    return B, blocks


class RunWriter:
    """Buffers elements already resident in the workspace and writes full
    blocks.  ``close`` flushes the partial tail and returns the run."""

    def __init__(self, disk: Disk, run: Run | None = None):
        self.disk = disk
        self.run = run if run is not None else Run()
        self._buf: list = []
        self._n = 0

    def __len__(self):
        return self.run.length + self._n

    @property
    def buffered(self) -> int:
        return self._n

    def append(self, arr: np.ndarray):
        if arr.size == 0:
            return
        self._buf.append(arr)
        self._n += arr.size
        B = self.disk.B
        if self._n < B:
            return
        data = np.concatenate(self._buf) if len(self._buf) > 1 else self._buf[0]
        full = (data.size // B) * B
        for start in range(0, full, B):
            self._emit(data[start:start + B])
        rest = data[full:]
        self._buf = [rest] if rest.size else []
        self._n = rest.size

    def flush(self):
        if self._n:
            data = np.concatenate(self._buf) if len(self._buf) > 1 else self._buf[0]
            self._emit(data)
            self._buf = []
            self._n = 0

    def close(self) -> Run:
        self.flush()
        return self.run

    def _emit(self, chunk):
        bid = self.disk.alloc_block()
        self.disk.write_block(bid, chunk)
        self.run.blocks.append(bid)
        self.run.counts.append(chunk.size)


def iter_blocks(disk: Disk, run: Run):
    """Yield each block of ``run`` as an array (one counted read each).

    The caller owns the yielded elements in the workspace and must write or
    release them.
    """
    for bid in run.blocks:
        yield disk.read_block(bid)


def iter_loads(disk: Disk, run: Run, load: int):
    """Yield memory loads of at most ``load`` elements, block-aligned."""
    buf = []
    n = 0
    for bid, cnt in zip(run.blocks, run.counts):
        if n and n + cnt > load:
            yield np.concatenate(buf) if len(buf) > 1 else buf[0]
            buf, n = [], 0
        buf.append(disk.read_block(bid))
        n += cnt
    if buf:
        yield np.concatenate(buf) if len(buf) > 1 else buf[0]


def write_sorted(disk: Disk, arr: np.ndarray) -> Run:
    w = RunWriter(disk)
    w.append(arr)
    return w.close()
