"""Executable forms of the sorting and permuting bounds.

All logarithms are base 2.  Lower bounds are returned constant-free: the
value is the governing expression inside the Omega, so only growth rates
and ratios are meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .em_model import ConfigError


@dataclass(frozen=True)
class BoundInputs:
    n: int
    m: int
    b_block: int
    b_avg: float | None = None

    def __post_init__(self):
        n, m, B = self.n, self.m, self.b_block
        if B < 2:
            raise ConfigError(f"B must be >= 2, got {B}")
        if m < 2 * B:
            raise ConfigError(f"M must be >= 2B, got M={m} B={B}")
        if n < 2 * m:
            raise ConfigError(f"N must be >= 2M, got N={n} M={m}")
        if self.b_avg is None:
            object.__setattr__(self, "b_avg", B)
        if not 1 <= self.b_avg <= B:
            raise ConfigError(f"average transfer b must lie in [1, B], got {self.b_avg}")


@dataclass(frozen=True)
class Bound:
    """A bound's governing expression, with its applicability flag."""

    value: float
    expr: str
    applies: bool = True
    threshold: float | None = None
    note: str = ""

    def __float__(self):
        return float(self.value)


def sort_e(n: int, m: int, b_block: int) -> int:
    """max(1, ceil(log_{M/B}(N/B))), computed exactly."""
    inp = BoundInputs(n, m, b_block)
    base = Fraction(inp.m, inp.b_block)
    target = Fraction(inp.n, inp.b_block)
    k, power = 1, base
    while power < target:
        power *= base
        k += 1
    return k


def merge_fan_in(n: int, m: int, b_block: int) -> int:
    """Fan-in the merge sort uses: M/B for block-aligned runs, else one less."""
    f = m // b_block
    if m % b_block or n % b_block:
        f -= 1
    return max(2, f)


def merge_phases(n: int, m: int, b_block: int) -> int:
    """Merge phases after run formation, at the implemented fan-in."""
    runs = -(-n // m)
    f = merge_fan_in(n, m, b_block)
    phases = 0
    while runs > 1:
        runs = -(-runs // f)
        phases += 1
    return phases


def permute_lb(inputs: BoundInputs) -> Bound:
    N, M, B, b = inputs.n, inputs.m, inputs.b_block, inputs.b_avg
    value = N * math.log2(N / B) / (math.log2(N) + b * math.log2(M / b))
    return Bound(value, "Omega(N log(N/B) / (log N + b log(M/b))) I/Os")


def transfer_lb(inputs: BoundInputs) -> Bound:
    """N * sort_E(N) element transfers; flagged outside the regime
    (N/B) * sort_E(N) < N where the argument holds."""
    N, M, B = inputs.n, inputs.m, inputs.b_block
    se = sort_e(N, M, B)
    in_regime = -(-N // B) * se < N
    note = "" if in_regime else f"(N/B)*sort_E = {-(-N // B) * se} >= N"
    return Bound(N * se, "Omega(N sort_E(N)) elements", in_regime, note=note)


def tall_cache_transfer_lb(inputs: BoundInputs, eps: float) -> Bound:
    """N log_M N transfers for algorithms using fewer than eps*N/4 I/Os.

    Applies under the tall cache assumption B <= M^(1-eps).
    """
    N, M, B = inputs.n, inputs.m, inputs.b_block
    if not 0 < eps < 1:
        raise ConfigError(f"eps must lie in (0, 1), got {eps}")
    tall = math.log2(B) <= (1 - eps) * math.log2(M) + 1e-12
    note = "" if tall else f"B={B} > M^(1-eps)={M ** (1 - eps):.4g}"
    return Bound(N * math.log2(N) / math.log2(M), "Omega(N log_M N) elements",
                 tall, threshold=eps * N / 4, note=note)


def describe(inputs: BoundInputs, eps: float = 0.5) -> dict:
    """All bound values for one configuration, as printed by the CLI."""
    tc = tall_cache_transfer_lb(inputs, eps)
    tr = transfer_lb(inputs)
    return {
        "n": inputs.n, "m": inputs.m, "b": inputs.b_block, "avg_b": inputs.b_avg,
        "sort_e": sort_e(inputs.n, inputs.m, inputs.b_block),
        "merge_phases": merge_phases(inputs.n, inputs.m, inputs.b_block),
        "permute_lb": permute_lb(inputs).value,
        "transfer_lb": tr.value,
        "transfer_lb_in_regime": tr.applies,
        "tall_cache_lb": tc.value,
        "tall_cache_io_threshold": tc.threshold,
        "tall_cache_holds": tc.applies,
        "eps": eps,
    }
