import math

import numpy as np
import pytest

from conftest import small_profile
from vppsim.charlib import (HC_MIN_STEP, HC_STEP, EdgeRowError, characterize_row, determine_wcdp_retention,
                            determine_wcdp_rowhammer, measure_ber, measure_hc_first, measure_retention,
                            measure_trcd_min, probe_adjacency, retention_windows, row_sample)
from vppsim.device import build_device
from vppsim.mapping import block_swizzle, identity, low_bit_inversion
from vppsim.patterns import PATTERNS, row_bits


def linear_scan_hc_first(dev, row, pattern, step=50, limit=700_000):
    """Oracle: smallest HC on a fine grid that flips any bit (fresh fill each probe)."""
    hc = step
    while hc <= limit:
        if measure_ber(dev, row, pattern, hc) > 0:
            return hc
        hc += step
    return None


@pytest.fixture
def dev(profile):
    return build_device(profile, 21)


def test_row_sample_layout():
    s = row_sample(65536)
    assert len(s.rows) == 4096
    assert [s.rows[i * 1024] for i in range(4)] == [0, 16384, 32768, 49152]
    assert s.rows[1023] == 1023
    with pytest.raises(ValueError):
        row_sample(1000)


def test_measure_ber_zero_hammer(dev):
    assert measure_ber(dev, 10, 0, 0) == 0.0


def test_measure_ber_saturates_at_susceptible_fraction(dev):
    rp = dev.row_params(0, 10)
    thr = dev.cell_thresholds(rp)  # worst-pattern thresholds
    pid = rp.worst_pattern
    susceptible = np.count_nonzero(PATTERNS[pid].victim_bits(dev.bits) == rp.true_bits)
    assert measure_ber(dev, 10, pid, int(thr.max()) + 1) == susceptible / dev.bits


def test_edge_row_rejected(dev):
    with pytest.raises(EdgeRowError):
        measure_ber(dev, 0, 0, 100)


@pytest.mark.parametrize("threshold", [42_200, 5_000, 137_777, 299_000])
def test_hc_first_within_300_of_injected(dev, threshold):
    dev.inject_row(0, 40, thresholds=float(threshold), worst_pattern=0)
    r = measure_hc_first(dev, 40, 0, iterations=2)
    assert abs(r.hc_first - threshold) <= 300
    lo, hi = r.bracket
    assert (lo is None or lo < threshold) and hi >= threshold


def test_hc_first_threshold_at_start_point(dev):
    dev.inject_row(0, 40, thresholds=300_000.0, worst_pattern=0)
    r = measure_hc_first(dev, 40, 0, iterations=1)
    assert r.probes[0] == (300_000.0, r.probes[0][1]) and r.probes[0][1] > 0
    assert abs(r.hc_first - 300_000) <= 300


def test_hc_first_none_above_cap(dev):
    dev.inject_row(0, 40, thresholds=5e6, worst_pattern=0)
    assert measure_hc_first(dev, 40, 0, iterations=1).hc_first is None


def test_search_levels(dev):
    # while step > 100 with step halving from 150K: 150000 / 2**10 = 146.5 is the last step
    expected = 1 + int(math.floor(math.log2(HC_STEP / HC_MIN_STEP)))
    assert expected == 11
    dev.inject_row(0, 40, thresholds=77_000.0, worst_pattern=0)
    r = measure_hc_first(dev, 40, 0, iterations=3)
    assert r.levels == expected
    assert len(r.raw) == expected * 3


def test_agrees_with_linear_scan_on_sampled_rows():
    p = small_profile(rows_per_bank=64)
    dev = build_device(p, 5)
    for row in range(1, 63, 7):
        pid = dev.row_params(0, row).worst_pattern
        alg = measure_hc_first(dev, row, pid, iterations=1).hc_first
        ref = linear_scan_hc_first(dev, row, pid)
        assert ref is not None
        assert abs(alg - ref) <= 2 * 146.5 + 50


def test_isolation(dev):
    before = {r: dev.peek_row(0, r).copy() for r in range(30, 50)}
    measure_hc_first(dev, 40, 0, iterations=1)
    for r, b in before.items():
        if 38 <= r <= 42:  # victim, aggressors and the aggressors' outer neighbours
            continue
        assert np.array_equal(dev.peek_row(0, r), b)


def test_characterize_row_reports_max_ber(dev):
    r = characterize_row(dev, 40, dev.row_params(0, 40).worst_pattern, iterations=3)
    assert r.ber_at_300k == max(r.raw) and len(r.raw) == 3


def test_wcdp_follows_worst_pattern(dev):
    dev.inject_row(0, 40, worst_pattern=2)
    assert determine_wcdp_rowhammer(dev, 40, iterations=1).pattern == 2


def test_wcdp_all_identical_gives_zero(dev):
    dev.inject_row(0, 40, thresholds=60_000.0, true_bits=row_bits(0xF0, dev.bits))
    ch = determine_wcdp_rowhammer(dev, 40, iterations=1)
    assert len({x for x in ch.per_pattern}) == 1
    assert ch.pattern == 0


def test_wcdp_tie_broken_by_ber(dev):
    dev.inject_row(0, 40, thresholds=50_000.0, true_bits=row_bits(0xCC, dev.bits))
    ch = determine_wcdp_rowhammer(dev, 40, iterations=1)
    assert ch.pattern == 4
    assert ch.per_pattern[4][1] == 1.0 and ch.per_pattern[5][0] is None


def test_wcdp_requires_nominal(dev):
    dev.set_vpp(2.0)
    with pytest.raises(ValueError):
        determine_wcdp_rowhammer(dev, 40, iterations=1)


def test_wcdp_none_when_nothing_flips(dev):
    dev.inject_row(0, 40, thresholds=5e6)
    assert determine_wcdp_rowhammer(dev, 40, iterations=1).pattern is None


@pytest.mark.parametrize("req,expected", [(12.0, 12.0), (11.9, 12.0), (12.1, 13.5), (13.5, 13.5),
                                          (14.0, 15.0), (23.5, 24.0)])
def test_trcd_grid_walk(dev, req, expected):
    dev.inject_row(0, 40, trcd=req)
    r = measure_trcd_min(dev, 40, 0, iterations=2)
    assert r.trcd_min == expected and not r.unbounded_below


def test_trcd_unbounded_below_and_ceiling(dev):
    dev.inject_row(0, 40, trcd=1.0)
    r = measure_trcd_min(dev, 40, 0, iterations=1)
    assert r.unbounded_below and r.trcd_min == 1.5
    dev.inject_row(0, 40, trcd=31.0)
    r = measure_trcd_min(dev, 40, 0, iterations=1)
    assert r.trcd_min is None and r.error


def test_retention_windows():
    w = retention_windows()
    assert w[0] == 0.016 and w[1] == 0.032 and len(w) == 10 and w[-1] <= 16.0


def test_retention_all_long_is_clean(dev):
    dev.inject_row(0, 40, retention=100.0)
    res = measure_retention(dev, [40], 0)
    assert all(b == 0 for b in res.ber[40].values())


def test_retention_one_cell(dev):
    ret = np.full(dev.bits, 100.0)
    ret[5] = 0.1
    dev.inject_row(0, 40, retention=ret, true_bits=np.ones(dev.bits, np.uint8))
    res = measure_retention(dev, [40], 0)
    first = next(w for w in res.windows if res.ber[40][w] > 0)
    assert first == 0.128 and res.ber[40][first] == 1 / dev.bits
    assert determine_wcdp_retention(dev, 40) == 0


def test_retention_monotone_in_window(dev):
    res = measure_retention(dev, [40, 41, 42], {40: 0, 41: 2, 42: 5})
    for r in res.rows:
        b = [res.ber[r][w] for w in res.windows]
        assert b == sorted(b)


@pytest.mark.parametrize("mapping", [identity(64), low_bit_inversion(64, 1)])
def test_probe_adjacency_recovers_mapping(mapping):
    p = small_profile(rows_per_bank=64)
    d = build_device(p, 3, mapping)
    res = probe_adjacency(d, window=4)
    assert not res.fallback
    assert res.mapping == mapping


def test_probe_adjacency_with_non_flipping_rows():
    p = small_profile(rows_per_bank=64)
    m = block_swizzle(64, 8, 1)
    d = build_device(p, 3, m)
    rng = np.random.default_rng(2)
    dead = rng.choice(64, 2, replace=False)  # ~3% of rows never flip
    for r in dead:
        d.inject_row(0, int(r), thresholds=1e12)
    res = probe_adjacency(d, window=16)  # swizzled neighbours can be 15 rows apart
    truth = {frozenset((m.logical(i), m.logical(i + 1))) for i in range(63)}
    assert len(res.pairs & truth) / len(truth) >= 0.97
    assert res.pairs <= truth or res.flagged
