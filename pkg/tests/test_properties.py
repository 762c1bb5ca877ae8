"""Property tests for the invariants the model must hold for any input."""

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import small_profile
from vppsim import analysis as an
from vppsim.charlib import measure_hc_first, measure_retention
from vppsim.circuit import CircuitParams, saturation_voltage
from vppsim.device import Act, Pre, build_device
from vppsim.mapping import block_swizzle, low_bit_inversion
from vppsim.patterns import PATTERNS
from vppsim.records import decode, encode, seal

PROFILE = small_profile()
FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def _flips(dev, victim, pid, n):
    p = PATTERNS[pid]
    dev.fill_row(0, victim - 1, p.aggressor_byte)
    dev.fill_row(0, victim + 1, p.aggressor_byte)
    dev.fill_row(0, victim, p.victim_byte)
    dev.hammer(0, [victim - 1, victim + 1], n)
    return dev.read_row(0, victim) != p.victim_bits(dev.bits)


@FAST
@given(seed=st.integers(0, 2**31), row=st.integers(1, 254), pid=st.integers(0, 5),
       h=st.integers(0, 400_000), extra=st.integers(0, 400_000))
def test_monotone_hammering(seed, row, pid, h, extra):
    dev = build_device(PROFILE, seed)
    a = _flips(dev, row, pid, h)
    b = _flips(dev, row, pid, h + extra)
    assert not np.any(a & ~b)


@FAST
@given(seed=st.integers(0, 2**31), row=st.integers(1, 254))
def test_restore_clears(seed, row):
    dev = build_device(PROFILE, seed)
    rp = dev.row_params(0, row)
    below = int(min(dev.cell_thresholds(rp))) - 1
    dev.fill_row(0, row, PATTERNS[rp.worst_pattern].victim_byte)
    dev.hammer(0, [row - 1, row + 1], max(below - 10, 0))
    dev.execute(Act(row))
    dev.execute(Pre())
    dev.hammer(0, [row - 1, row + 1], 10)
    assert np.array_equal(dev.peek_row(0, row), PATTERNS[rp.worst_pattern].victim_bits(dev.bits))


cmd = st.one_of(
    st.tuples(st.just("fill"), st.integers(1, 30), st.sampled_from([0x00, 0xFF, 0xAA, 0x33])),
    st.tuples(st.just("hammer"), st.integers(1, 30), st.integers(0, 200_000)),
    st.tuples(st.just("wait"), st.floats(0, 2.0)),
    st.tuples(st.just("vpp"), st.sampled_from([2.5, 2.1, 1.8, 1.6])),
)


@FAST
@given(seed=st.integers(0, 1000), prog=st.lists(cmd, max_size=12))
def test_determinism(seed, prog):
    outs = []
    for _ in range(2):
        d = build_device(PROFILE, seed)
        for c in prog:
            if c[0] == "fill":
                d.fill_row(0, c[1], c[2])
            elif c[0] == "hammer":
                d.hammer(0, [c[1] - 1, c[1] + 1], c[2])
            elif c[0] == "wait":
                d.wait(c[1])
            else:
                d.set_vpp(c[1])
        outs.append(np.stack([d.read_row(0, r) for r in range(0, 32)]))
    assert np.array_equal(*outs)


@settings(max_examples=25, deadline=None)
@given(thr=st.integers(5_000, 300_000), seed=st.integers(0, 100))
def test_alg1_within_final_steps(thr, seed):
    dev = build_device(PROFILE, seed)
    dev.inject_row(0, 77, thresholds=float(thr), worst_pattern=0)
    got = measure_hc_first(dev, 77, 0, iterations=1).hc_first
    assert abs(got - thr) <= 2 * 146.5


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 1000), rows=st.lists(st.integers(1, 254), min_size=1, max_size=3, unique=True))
def test_retention_ber_non_decreasing(seed, rows):
    dev = build_device(small_profile(retention_nominal_dist=PROFILE.retention_nominal_dist), seed)
    res = measure_retention(dev, rows, 0)
    for r in rows:
        b = [res.ber[r][w] for w in res.windows]
        assert all(x <= y for x, y in zip(b, b[1:]))


@given(pos=st.lists(st.integers(0, 8191), max_size=60))
def test_secded_matches_bruteforce(pos):
    rep = an.secded_analysis(8192, np.array(sorted(set(pos)), dtype=np.int64))
    per = [0] * 128
    for p in set(pos):
        per[p // 64] += 1
    assert rep.counts[0].tolist() == [per.count(0), per.count(1), sum(1 for k in per if k >= 2)]
    assert rep.correctable == all(k <= 1 for k in per)
    assert rep.counts.sum() == 128


@given(its=st.lists(st.floats(1e-6, 1.0), min_size=2, max_size=10), c=st.floats(1e-3, 1e3))
def test_cv_scale_invariance(its, c):
    a = an.cv_percentiles([seal("rowhammer", {"module_id": "M", "vpp": 2.5, "row": 1, "ber_iterations": its})])
    b = an.cv_percentiles([seal("rowhammer", {"module_id": "M", "vpp": 2.5, "row": 1,
                                              "ber_iterations": [x * c for x in its]})])
    assert np.isclose(a["p90"], b["p90"], rtol=1e-9, atol=1e-12)


@given(x=st.lists(st.floats(0.3, 2.0), min_size=1, max_size=300), w=st.sampled_from([0.01, 0.02, 0.05]))
def test_histogram_mass(x, w):
    assert abs(an.population_density(np.asarray(x), w).mass() - 1.0) <= 1e-9


@given(data=st.lists(st.tuples(st.floats(1e-5, 0.5), st.floats(0.3, 2.0)), min_size=1, max_size=20))
def test_normalized_nominal_is_one(data):
    recs = []
    for i, (b, f) in enumerate(data):
        recs += [seal("rowhammer", {"module_id": "M", "vpp": 2.5, "row": i, "hc_first": 1000.0 * (i + 1),
                                    "ber_at_300k": b}),
                 seal("rowhammer", {"module_id": "M", "vpp": 1.8, "row": i, "hc_first": 1000.0 * (i + 1) * f,
                                    "ber_at_300k": min(b * f, 1.0)})]
    sw = an.normalize_and_band(recs, resamples=10)["M"]
    assert np.all(sw.ber_rows[2.5] == 1.0) and np.all(sw.hc_rows[2.5] == 1.0)


json_val = st.recursive(
    st.one_of(st.none(), st.booleans(), st.integers(-2**53, 2**53), st.floats(allow_nan=False, allow_infinity=False),
              st.text(max_size=8)),
    lambda ch: st.one_of(st.lists(ch, max_size=4), st.dictionaries(st.text(max_size=5), ch, max_size=4)),
    max_leaves=12)


@given(payload=st.dictionaries(st.text(min_size=1, max_size=6).filter(
    lambda k: k not in ("checksum", "kind", "schema_version")), json_val, max_size=5))
def test_record_roundtrip_bytes(payload):
    r = seal("x", payload)
    line = encode(r)
    assert encode(decode(line)) == line


@given(rows=st.sampled_from([64, 128, 256]), bits=st.integers(1, 3), seed=st.integers(0, 50))
def test_mappings_bijective(rows, bits, seed):
    for m in (low_bit_inversion(rows, bits), block_swizzle(rows, 8, seed)):
        assert np.array_equal(np.sort(m.to_physical), np.arange(rows))
        assert np.array_equal(m.to_logical[m.to_physical], np.arange(rows))


@given(v1=st.floats(1.0, 2.6), v2=st.floats(1.0, 2.6))
def test_saturation_monotone(v1, v2):
    lo, hi = sorted((v1, v2))
    p = CircuitParams()
    assert saturation_voltage(p.with_vpp(lo)) <= saturation_voltage(p.with_vpp(hi))
