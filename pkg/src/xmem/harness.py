"""Input generators, the permuting task, and the experiment runner."""

from __future__ import annotations

import csv
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundInputs, sort_e
from .buffer_pq import BufferTreePQ, pq_sort
from .distribution_sort import external_distribution_sort, sort_in_memory
from .em_model import DTYPE, Disk, DiskConfig, IoStats, Run, RunWriter, create_disk, iter_blocks
from .merge_sort import external_merge_sort, form_runs, merge_runs
from .split_sort import split_sort
from .trace import SortTrace

DISTRIBUTIONS = ("uniform", "sorted", "reverse", "dupes")
ALGORITHMS = ("merge", "dist", "split", "pq", "permute")
KEY_BITS = 48
CSV_COLUMNS = ["algo", "n", "m", "b", "dist", "seed", "ios", "reads", "writes",
               "transferred", "peak_resident", "phases", "ratio_io",
               "ratio_transfer", "wall_ms"]


class VerificationError(AssertionError):
    pass


def generate(dist: str, n: int, seed: int, bits: int = KEY_BITS) -> np.ndarray:
    """Seed-deterministic keys below 2**bits."""
    rng = np.random.default_rng(seed)
    hi = 1 << bits
    if dist == "uniform":
        return rng.integers(0, hi, n, dtype=np.uint64)
    if dist == "sorted":
        return np.sort(rng.integers(0, hi, n, dtype=np.uint64))
    if dist == "reverse":
        return np.sort(rng.integers(0, hi, n, dtype=np.uint64))[::-1].copy()
    if dist == "dupes":
        pool = rng.integers(0, hi, 16, dtype=np.uint64)
        return pool[rng.integers(0, pool.size, n)]
    raise ValueError(f"unknown distribution {dist!r}")


# permuting

def check_assignment(target, n: int, B: int) -> np.ndarray:
    t = np.asarray(target, dtype=np.int64)
    if t.shape != (n,):
        raise ValueError(f"assignment has {t.size} entries for {n} elements")
    if n % B:
        raise ValueError(f"N={n} is not a multiple of B={B}")
    nb = n // B
    if t.size and (t.min() < 0 or t.max() >= nb):
        raise ValueError("assignment names a block outside [0, N/B)")
    if np.any(np.bincount(t, minlength=nb) != B):
        raise ValueError("every destination block must receive exactly B elements")
    return t


def random_assignment(n: int, B: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return (rng.permutation(n) // B).astype(np.int64)


def permute(disk: Disk, run: Run, target, trace: SortTrace | None = None) -> Run:
    """Rearrange elements so output block j holds those assigned to j.

    Each key is tagged with its destination in the high bits, the tagged
    keys are sorted with split sort, and the tags are stripped while
    reblocking into blocks of exactly B.  The assignment itself is treated
    as given and is not charged.
    """
    B = disk.B
    n = len(run)
    t = check_assignment(target, n, B)
    nb = n // B
    tag_bits = max(1, (nb - 1).bit_length())
    vbits = 64 - tag_bits
    mask = np.uint64((1 << vbits) - 1)
    if trace is None:
        trace = SortTrace()
    w = RunWriter(disk)
    pos = 0
    for blk in iter_blocks(disk, run):
        if blk.size and int(blk.max()) >> vbits:
            w.close()
            raise ValueError(f"keys need {vbits} bits or fewer to carry a tag")
        dest = t[pos:pos + blk.size].astype(DTYPE)
        pos += blk.size
        w.append((dest << np.uint64(vbits)) | blk)
    tagged = w.close()
    if n >= 2 * disk.M:
        ordered = split_sort(disk, tagged, trace)
    elif n >= disk.M:
        # two runs, one merge
        runs = form_runs(disk, tagged, trace=trace)
        ordered = merge_runs(disk, runs, trace=trace)
        if len(runs) > 1:
            for r in runs:
                disk.free_run(r)
    else:
        ordered = sort_in_memory(disk, tagged, trace.ops)
    disk.free_run(tagged)
    out = RunWriter(disk)
    for blk in iter_blocks(disk, ordered):
        out.append(blk & mask)
    disk.free_run(ordered)
    return out.close()


def permute_oracle(values, target, B: int) -> list:
    """Sorted contents of each destination block, computed in memory."""
    values = np.asarray(values, dtype=DTYPE)
    t = np.asarray(target, dtype=np.int64)
    order = np.argsort(t, kind="stable")
    grouped = values[order]
    return [np.sort(grouped[j:j + B]) for j in range(0, values.size, B)]


# experiments

@dataclass
class ExperimentReport:
    algo: str
    inputs: BoundInputs
    dist: str
    seed: int
    stats: IoStats
    phases: int
    wall_ms: float
    verified: bool = True
    trace: SortTrace = field(default_factory=SortTrace, repr=False)

    @property
    def sort_e(self) -> int:
        return sort_e(self.inputs.n, self.inputs.m, self.inputs.b_block)

    @property
    def ratio_io(self) -> float:
        blocks = -(-self.inputs.n // self.inputs.b_block)
        return self.stats.io_count / (blocks * self.sort_e)

    @property
    def ratio_transfer(self) -> float:
        return self.stats.elements_transferred / (self.inputs.n * self.sort_e)

    def row(self) -> dict:
        s = self.stats
        return {"algo": self.algo, "n": self.inputs.n, "m": self.inputs.m,
                "b": self.inputs.b_block, "dist": self.dist, "seed": self.seed,
                "ios": s.io_count, "reads": s.reads, "writes": s.writes,
                "transferred": s.elements_transferred,
                "peak_resident": s.peak_resident, "phases": self.phases,
                "ratio_io": round(self.ratio_io, 6),
                "ratio_transfer": round(self.ratio_transfer, 6),
                "wall_ms": round(self.wall_ms, 3)}


def _run_sort(algo: str, disk: Disk, run: Run, trace: SortTrace) -> tuple[Run, int]:
    if algo == "merge":
        return external_merge_sort(disk, run, trace=trace), trace.phases
    if algo == "dist":
        return external_distribution_sort(disk, run, trace=trace), trace.phases
    if algo == "split":
        return split_sort(disk, run, trace), trace.phases
    out = pq_sort(disk, run, BufferTreePQ(disk), trace)
    return out, trace.phases


def run_experiment(algo: str, n: int, m: int, b: int, dist: str = "uniform",
                   seed: int = 0, backend: str = "sim", budget: bool = True,
                   path=None) -> ExperimentReport:
    """Run one algorithm on a generated input and verify the result.

    Raises VerificationError if the output differs from the oracle; the
    report is only returned for verified runs.
    """
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {ALGORITHMS}")
    inputs = BoundInputs(n, m, b)
    data = generate(dist, n, seed)
    with tempfile.TemporaryDirectory() as tmp:
        if backend == "file" and path is None:
            path = os.path.join(tmp, "disk.bin")
        disk = create_disk(DiskConfig(m, b, budget), backend, path)
        try:
            run = disk.stage(data)
            trace = SortTrace()
            target = random_assignment(n, b, seed) if algo == "permute" else None
            before = disk.stats()
            t0 = time.perf_counter()
            if algo == "permute":
                out = permute(disk, run, target, trace)
                phases = trace.phases
            else:
                out, phases = _run_sort(algo, disk, run, trace)
            wall = (time.perf_counter() - t0) * 1000
            stats = disk.stats() - before
            _verify(algo, disk, out, data, target, b)
        finally:
            if hasattr(disk, "close"):
                disk.close()
    return ExperimentReport(algo, inputs, dist, seed, stats, phases, wall,
                            True, trace)


def _verify(algo, disk, out, data, target, B):
    got = disk.peek(out)
    if algo == "permute":
        blocks = disk.peek_blocks(out)
        want = permute_oracle(data, target, B)
        if len(blocks) != len(want):
            raise VerificationError(f"{len(blocks)} output blocks, expected {len(want)}")
        for j, (g, w) in enumerate(zip(blocks, want)):
            if not np.array_equal(np.sort(g), w):
                raise VerificationError(f"block {j} holds the wrong elements")
        return
    want = np.sort(data)
    if got.size != want.size:
        raise VerificationError(f"{algo}: {got.size} elements out, {want.size} in")
    if not np.array_equal(got, want):
        bad = int(np.flatnonzero(got != want)[0])
        raise VerificationError(f"{algo}: output differs from oracle at position {bad}")


def write_csv(reports, path):
    """Append report rows, writing the header when the file is new."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        if new:
            w.writeheader()
        for r in reports:
            w.writerow(r.row())
