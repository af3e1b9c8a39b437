import math
from fractions import Fraction

import pytest
from hypothesis import assume, given, strategies as st

from xmem import ConfigError
from xmem.bounds import (BoundInputs, describe, merge_fan_in, merge_phases, permute_lb,
                         sort_e, tall_cache_transfer_lb, transfer_lb)

# hand-evaluated: N log(N/B) = 2^20 * 12; log N + b log(M/b) = 20 + 256*6 or 20 + 14
PERMUTE_B256 = Fraction(12582912, 1556)
PERMUTE_B1 = Fraction(12582912, 34)


def _sig6(x, y):
    return f"{x:.6g}" == f"{y:.6g}"


def test_sort_e_examples():
    assert sort_e(4096, 256, 16) == 2
    assert sort_e(2 ** 20, 2 ** 14, 2 ** 8) == 2
    assert sort_e(512, 256, 16) == 2
    assert sort_e(2 ** 16, 2 ** 10, 2 ** 5) == 3


def test_sort_e_rejects_bad_inputs():
    for args in [(100, 256, 16), (4096, 16, 16), (4096, 256, 1)]:
        with pytest.raises(ConfigError):
            sort_e(*args)


@given(st.integers(1, 12), st.integers(1, 8), st.integers(1, 30))
def test_sort_e_matches_log_definition(lb, lr, extra):
    B = 2 ** lb
    M = B * 2 ** lr
    N = 2 * M + extra * B
    want = max(1, math.ceil(math.log(N / B) / math.log(M / B) - 1e-12))
    assert sort_e(N, M, B) == want
    # N >= 2M puts N/B above M/B, so the floor of one pass never binds
    assert want >= 2


def test_permute_lb_values():
    big = BoundInputs(2 ** 20, 2 ** 14, 2 ** 8, 256)
    assert _sig6(permute_lb(big).value, float(PERMUTE_B256))
    assert f"{float(permute_lb(big)):.6g}" == "8086.7"
    small = BoundInputs(2 ** 20, 2 ** 14, 2 ** 8, 1)
    assert _sig6(permute_lb(small).value, float(PERMUTE_B1))
    assert int(permute_lb(small).value) == 370085


@given(st.integers(4, 16), st.integers(2, 10), st.integers(1, 12), st.data())
def test_permute_lb_smallest_at_full_blocks(ln, lr, lb, data):
    B = 2 ** lb
    M = B * 2 ** lr
    N = M * 2 ** ln
    assume(B <= M / math.e)
    b = data.draw(st.integers(1, B))
    full = permute_lb(BoundInputs(N, M, B, B)).value
    assert full <= permute_lb(BoundInputs(N, M, B, b)).value * (1 + 1e-12)


def test_permute_lb_not_monotone_for_huge_blocks():
    # b log(M/b) peaks at b = M/e, so with B = M/2 the full-block value is not the least
    N, M, B = 2 ** 12, 64, 32
    assert permute_lb(BoundInputs(N, M, B, 32)).value > permute_lb(BoundInputs(N, M, B, 23)).value


def test_average_transfer_must_fit_block():
    with pytest.raises(ConfigError):
        BoundInputs(4096, 256, 16, 17)
    with pytest.raises(ConfigError):
        BoundInputs(4096, 256, 16, 0.5)


def test_transfer_lb():
    t = transfer_lb(BoundInputs(2 ** 20, 2 ** 14, 2 ** 8))
    assert t.value == 2097152 and t.applies
    assert transfer_lb(BoundInputs(4096, 256, 16)).value == 8192
    # (N/B) * sort_E >= N once B is tiny relative to the pass count
    out = transfer_lb(BoundInputs(2 ** 12, 8, 2))
    assert not out.applies and out.note


def test_tall_cache():
    t = tall_cache_transfer_lb(BoundInputs(2 ** 20, 2 ** 14, 2 ** 8), 0.4)
    assert t.applies
    assert math.isclose(t.value, 2 ** 20 * 20 / 14)
    assert round(t.value) == 1497966
    assert math.isclose(t.threshold, 104857.6)
    # B = M^(1-eps) exactly
    assert tall_cache_transfer_lb(BoundInputs(2 ** 20, 2 ** 14, 2 ** 7), 0.5).applies
    assert not tall_cache_transfer_lb(BoundInputs(2 ** 20, 2 ** 14, 2 ** 8), 0.5).applies
    with pytest.raises(ConfigError):
        tall_cache_transfer_lb(BoundInputs(2 ** 20, 2 ** 14, 2 ** 8), 1.5)


def test_merge_phase_predictor():
    assert merge_fan_in(4096, 256, 16) == 16
    assert merge_phases(4096, 256, 16) == 1
    assert merge_fan_in(2 ** 20, 2 ** 14, 2 ** 8) == 64
    assert merge_phases(2 ** 20, 2 ** 14, 2 ** 8) == 1
    assert merge_fan_in(5003, 100, 10) == 9
    assert merge_phases(5003, 100, 10) == 2
    assert merge_phases(2 ** 18, 2 ** 10, 2 ** 5) == 2


def test_bounds_are_pure():
    inp = BoundInputs(2 ** 20, 2 ** 14, 2 ** 8, 64)
    assert describe(inp, 0.4) == describe(inp, 0.4)
