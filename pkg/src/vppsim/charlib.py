"""Measurement procedures run against a DramDevice through its command interface."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .device import BER_REFERENCE_HC, HC_CAP, DramDevice
from .mapping import AdjacencyMapping, explicit
from .patterns import N_PATTERNS, PATTERNS, row_bits

log = logging.getLogger(__name__)

__all__ = [
    "RowSample", "row_sample", "EdgeRowError", "HcFirstResult", "HammerResult",
    "TrcdResult", "RetentionResult", "AdjacencyProbe",
    "measure_ber", "measure_hc_first", "determine_wcdp_rowhammer", "characterize_row",
    "measure_trcd_min", "measure_retention", "determine_wcdp_retention",
    "retention_windows", "probe_adjacency",
    "HC_START", "HC_STEP", "HC_MIN_STEP", "TRCD_START", "TRCD_STEP",
]

HC_START = 300_000
HC_STEP = 150_000
HC_MIN_STEP = 100
TRCD_START = 13.5
TRCD_STEP = 1.5
DEFAULT_ITERATIONS = 10


class EdgeRowError(ValueError):
    """Victim lacks two in-bounds physical neighbours."""


# ------------------------------------------------------------- row sample
@dataclass(frozen=True)
class RowSample:
    bank: int
    rows: tuple[int, ...]


def row_sample(rows_per_bank: int, bank: int = 0, chunk: int = 1024, chunks: int = 4) -> RowSample:
    """``chunks`` contiguous runs of ``chunk`` rows starting at multiples of rows/chunks."""
    if chunk * chunks > rows_per_bank:
        raise ValueError("sample larger than the bank")
    stride = rows_per_bank // chunks
    rows = tuple(s * stride + i for s in range(chunks) for i in range(chunk))
    return RowSample(bank, rows)


# ----------------------------------------------------------- rowhammer
def _aggressors(dev: DramDevice, victim: int) -> tuple[int, int]:
    n = dev.mapping.neighbors(victim, 1)
    if len(n) != 2:
        raise EdgeRowError(f"row {victim} has {len(n)} physical neighbour(s)")
    return n[0], n[1]


def measure_ber(dev: DramDevice, victim: int, pattern: int, hc: int, bank: int = 0) -> float:
    """Double-sided hammer ``victim`` ``hc`` times per aggressor; flipped-bit fraction."""
    a1, a2 = _aggressors(dev, victim)
    pat = PATTERNS[pattern]
    # aggressors first so the victim's own restore clears their init activations
    dev.fill_row(bank, a1, pat.aggressor_byte)
    dev.fill_row(bank, a2, pat.aggressor_byte)
    dev.fill_row(bank, victim, pat.victim_byte)
    dev.hammer(bank, [a1, a2], int(round(hc)))
    got = dev.read_row(bank, victim)
    return float(np.count_nonzero(got != pat.victim_bits(dev.bits))) / dev.bits


@dataclass
class HcFirstResult:
    hc_first: float | None
    probes: list[tuple[float, float]]  # (hc, max BER over iterations)
    raw: list[tuple[float, int, float]]  # (hc, iteration, BER)
    bracket: tuple[float | None, float | None]  # (largest clean hc, smallest flipping hc)

    @property
    def levels(self) -> int:
        return len(self.probes)


def measure_hc_first(dev: DramDevice, victim: int, pattern: int, iterations: int = DEFAULT_ITERATIONS,
                     bank: int = 0) -> HcFirstResult:
    """Step-halving HC search, followed literally.

    The search result is the HC held after the last step; it is not re-tested.
    ``bracket`` reports the tightest verified interval seen while probing.
    A row that never flipped at any probed level reports ``hc_first = None``.
    """
    hc = float(HC_START)
    step = float(HC_STEP)
    probes, raw = [], []
    clean, flip = None, None
    while step > HC_MIN_STEP:
        if hc > HC_CAP:
            break
        worst = 0.0
        for i in range(iterations):
            b = measure_ber(dev, victim, pattern, hc, bank)
            raw.append((hc, i, b))
            worst = max(worst, b)
        probes.append((hc, worst))
        if worst == 0:
            clean = hc if clean is None else max(clean, hc)
            hc += step
        else:
            flip = hc if flip is None else min(flip, hc)
            hc -= step
        step /= 2
    return HcFirstResult(hc if flip is not None else None, probes, raw, (clean, flip))


@dataclass
class HammerResult:
    row: int
    vpp: float
    wcdp: int
    hc_first: float | None
    ber_at_300k: float
    iterations: int
    raw: list = field(default_factory=list)
    bracket: tuple = (None, None)

    def __post_init__(self):
        if not 0.0 <= self.ber_at_300k <= 1.0:
            raise ValueError("BER outside [0, 1]")


def characterize_row(dev: DramDevice, victim: int, pattern: int, iterations: int = DEFAULT_ITERATIONS,
                     bank: int = 0) -> HammerResult:
    """HC_first search plus BER at the reference count (max over iterations)."""
    hc = measure_hc_first(dev, victim, pattern, iterations, bank)
    bers = [measure_ber(dev, victim, pattern, BER_REFERENCE_HC, bank) for _ in range(iterations)]
    return HammerResult(
        row=victim, vpp=dev.vpp, wcdp=pattern, hc_first=hc.hc_first, ber_at_300k=max(bers),
        iterations=iterations, raw=bers, bracket=hc.bracket,
    )


@dataclass
class WcdpChoice:
    pattern: int | None
    per_pattern: list[tuple[float | None, float]]  # (hc_first, ber@300K)


def determine_wcdp_rowhammer(dev: DramDevice, victim: int, iterations: int = DEFAULT_ITERATIONS,
                             bank: int = 0) -> WcdpChoice:
    """Pattern with the lowest HC_first; ties by higher BER, then lower id.

    ``pattern`` is None when no pattern flips within the search range.
    """
    if abs(dev.vpp - dev.profile.vpp_nominal) > 1e-9:
        raise ValueError("WCDP is identified at nominal VPP")
    per = []
    for pid in range(N_PATTERNS):
        r = characterize_row(dev, victim, pid, iterations, bank)
        per.append((r.hc_first, r.ber_at_300k))
    cands = [(hc, -ber, pid) for pid, (hc, ber) in enumerate(per) if hc is not None]
    if not cands:
        log.info("row %d: no pattern flips within the search range", victim)
        return WcdpChoice(None, per)
    return WcdpChoice(min(cands)[2], per)


# ----------------------------------------------------------------- tRCD
@dataclass
class TrcdResult:
    row: int
    vpp: float
    trcd_min: float | None
    unbounded_below: bool = False
    error: str | None = None
    tested: list[tuple[float, bool]] = field(default_factory=list)  # (tRCD, faulty)


def _trcd_search(dev, row, pattern, iterations, bank, ceiling, floor, step):
    bits = PATTERNS[pattern].victim_bits(dev.bits)
    trcd = TRCD_START
    found_faulty = found_reliable = False
    trcd_min = None
    tested = []
    while not (found_faulty and found_reliable):
        if trcd > ceiling + 1e-9:
            return TrcdResult(row, dev.vpp, None, error=f"faulty at ceiling {ceiling} ns", tested=tested)
        if trcd < floor - 1e-9:
            return TrcdResult(row, dev.vpp, trcd_min, unbounded_below=True, tested=tested)
        faulty = False
        for _ in range(iterations):
            # any column, any iteration faulty => candidate faulty
            if dev.trcd_pass(bank, row, bits, trcd).any():
                faulty = True
        tested.append((trcd, faulty))
        if faulty:
            trcd += step
            found_faulty = True
        else:
            trcd_min = trcd
            trcd -= step
            found_reliable = True
    return TrcdResult(row, dev.vpp, trcd_min, tested=tested)


def measure_trcd_min(dev: DramDevice, row: int, pattern: int, iterations: int = DEFAULT_ITERATIONS,
                     runs: int = 1, bank: int = 0, ceiling: float = 30.0, floor: float = 1.5,
                     step: float = TRCD_STEP) -> TrcdResult:
    """Walk tRCD on a grid anchored at 13.5 ns; largest tRCD_min over ``runs``."""
    best = None
    for _ in range(runs):
        r = _trcd_search(dev, row, pattern, iterations, bank, ceiling, floor, step)
        if r.error:
            return r
        if best is None or (r.trcd_min or -1) > (best.trcd_min or -1):
            best = r
    return best


# ------------------------------------------------------------ retention
def retention_windows(start: float = 0.016, stop: float = 16.0) -> list[float]:
    out, w = [], start
    while w <= stop * (1 + 1e-9):
        out.append(w)
        w *= 2
    return out


@dataclass
class RetentionResult:
    windows: list[float]
    rows: list[int]
    patterns: dict[int, int]
    # ber[row][window] = max over iterations; flips[row][window] = flipped-bit mask
    ber: dict[int, dict[float, float]]
    flips: dict[int, dict[float, np.ndarray]]
    raw: list[tuple[float, int, int, float]]  # (window, iteration, row, BER)


def measure_retention(dev: DramDevice, rows, patterns, iterations: int = 1, bank: int = 0,
                      windows=None, keep_masks: bool = True) -> RetentionResult:
    """Refresh-window sweep: init, wait tREFW, read back, for every row and window.

    ``patterns`` maps row -> pattern id (a single int applies to all rows).
    The recorded per-row mask is the union of flips over iterations.
    """
    rows = list(rows)
    windows = retention_windows() if windows is None else list(windows)
    pats = {r: int(patterns) for r in rows} if np.isscalar(patterns) else dict(patterns)
    ber = {r: {} for r in rows}
    flips = {r: {} for r in rows}
    raw = []
    for w in windows:
        for it in range(iterations):
            for r in rows:
                pat = PATTERNS[pats[r]]
                dev.fill_row(bank, r, pat.victim_byte)
                dev.wait(w)
                got = dev.read_row(bank, r)
                diff = got != pat.victim_bits(dev.bits)
                b = float(np.count_nonzero(diff)) / dev.bits
                raw.append((w, it, r, b))
                ber[r][w] = max(ber[r].get(w, 0.0), b)
                if keep_masks:
                    prev = flips[r].get(w)
                    flips[r][w] = diff if prev is None else (prev | diff)
    return RetentionResult(windows, rows, pats, ber, flips, raw)


def determine_wcdp_retention(dev: DramDevice, row: int, bank: int = 0, windows=None) -> int:
    """Pattern failing at the smallest window; ties by larger BER at the last window, then id."""
    windows = retention_windows() if windows is None else list(windows)
    best = None
    for pid in range(N_PATTERNS):
        res = measure_retention(dev, [row], pid, 1, bank, windows, keep_masks=False)
        b = res.ber[row]
        first = next((w for w in windows if b[w] > 0), math.inf)
        key = (first, -b[windows[-1]], pid)
        if best is None or key < best:
            best = key
    return best[2]


# ----------------------------------------------------------- adjacency
@dataclass
class AdjacencyProbe:
    mapping: AdjacencyMapping
    pairs: set  # frozenset({a, b}) of logical rows found physically adjacent
    flagged: list[int]
    fallback: bool


def probe_adjacency(dev: DramDevice, rows=None, hc: int = HC_CAP, window: int = 16, bank: int = 0,
                    pattern: int = 0, declared: AdjacencyMapping | None = None) -> AdjacencyProbe:
    """Recover physical row order by single-sided hammering.

    Each probe row is hammered alone; logical rows within ``window`` that show
    flips are its neighbour candidates (the two with the most flips are kept).
    Both the fill and its inverse are tried so every cell is charged once.
    The union of neighbour pairs is assembled into a path; when that path
    does not cover all probed rows exactly once the declared mapping is
    returned with the offending rows flagged.
    """
    n = dev.profile.rows_per_bank
    rows = list(range(n)) if rows is None else list(rows)
    probe_set = set(rows)
    pairs: set = set()
    byte = PATTERNS[pattern].victim_byte
    for r in rows:
        cand = [c for c in range(max(0, r - window), min(n, r + window + 1)) if c != r]
        counts = {c: 0 for c in cand}
        for fill in (byte, (~byte) & 0xFF):
            for c in cand:
                dev.fill_row(bank, c, fill)
            dev.hammer(bank, [r], hc)
            ref = row_bits(fill, dev.bits)
            for c in cand:
                counts[c] += int(np.count_nonzero(dev.read_row(bank, c) != ref))
        hit = sorted((k for k in counts if counts[k] > 0), key=lambda k: (-counts[k], k))[:2]
        for h in hit:
            pairs.add(frozenset((r, h)))
    adj: dict[int, set] = {r: set() for r in rows}
    for p in pairs:
        a, b = tuple(p)
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    flagged = sorted(r for r in rows if len(adj.get(r, ())) not in (1, 2))
    ends = sorted(r for r in rows if len(adj.get(r, ())) == 1)
    declared = declared or dev.mapping
    path = None
    if not flagged and len(ends) == 2 and len(probe_set) == n:
        path, prev, cur = [ends[0]], None, ends[0]
        while True:
            nxt = [x for x in adj[cur] if x != prev]
            if not nxt:
                break
            prev, cur = cur, nxt[0]
            if cur in path:
                path = None
                break
            path.append(cur)
        if path is not None and len(path) != n:
            flagged = sorted(probe_set - set(path))
            path = None
    if path is None:
        if ends and len(ends) != 2:
            flagged = sorted(set(flagged) | set(ends))
        return AdjacencyProbe(declared, pairs, flagged, True)
    table = np.empty(n, dtype=np.int64)
    table[np.asarray(path)] = np.arange(n)
    return AdjacencyProbe(explicit(table), pairs, [], False)
