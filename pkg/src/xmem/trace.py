from __future__ import annotations

from dataclasses import dataclass, field

from .internal_algos import OpCounter


@dataclass
class SortTrace:
    """Per-run instrumentation filled in by the sorting algorithms."""

    phases: int = 0          # merge phases, or distribution levels
    runs: int = 0            # initial runs (merge sort)
    fan_in: int = 0
    depth: int = 0           # deepest distribution level reached (1-based)
    splits: int = 0          # online median splits performed
    oversize: int = 0        # buckets exempted from the size law
    forced_splits: int = 0   # no-progress fallbacks
    split_ios: int = 0       # I/Os spent inside median splits
    warnings: list = field(default_factory=list)
    ops: OpCounter = field(default_factory=OpCounter)
