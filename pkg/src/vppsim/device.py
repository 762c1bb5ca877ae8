"""Command-level behavioral DRAM model with VPP-dependent fault behavior.

Rows are materialized lazily: a row's cell parameters are a pure function of
(seed, bank, physical row), so touching rows in any order yields the same
device.  Stochastic decisions (whether a cell past its hammer threshold
actually flips, unreliable-mode corruption) come from a counter-based hash of
(noise seed, bank, row, restore epoch, cell) and are therefore independent of
command interleaving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .mapping import AdjacencyMapping, identity
from .patterns import N_PATTERNS, PATTERNS, detect_pattern, fill_pattern_id, row_bits
from .profile import DeviceProfile, Gamma, Mixture, Point

__all__ = [
    "Act", "Rd", "Wr", "Pre", "Wait", "Command",
    "CommandError", "DramDevice", "RowParams", "CellParams",
    "build_device", "BER_REFERENCE_HC", "HC_CAP", "VPP_LEGAL_RANGE",
    "saturation_fraction", "COLUMN_BITS", "SAFE_TRCD",
]

BER_REFERENCE_HC = 300_000
HC_CAP = 3_000_000
VPP_LEGAL_RANGE = (1.0, 2.6)
COLUMN_BITS = 64
NOMINAL_TRCD = 13.5
# latency used for plain data movement (init / readback), comfortably above
# every requirement a preset can produce
SAFE_TRCD = 30.0


# ----------------------------------------------------------------- commands
@dataclass(frozen=True)
class Act:
    row: int
    trcd: float = NOMINAL_TRCD
    bank: int = 0


@dataclass(frozen=True)
class Rd:
    col: int
    bank: int = 0


@dataclass(frozen=True)
class Wr:
    col: int
    data: np.ndarray
    bank: int = 0


@dataclass(frozen=True)
class Pre:
    bank: int = 0


@dataclass(frozen=True)
class Wait:
    seconds: float


Command = Union[Act, Rd, Wr, Pre, Wait]


class CommandError(RuntimeError):
    """A command was illegal in the current device state."""


# ------------------------------------------------------------------ hashing
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)


def _splitmix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + _GOLD
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _hash_uniform(keys: tuple[int, ...], idx: np.ndarray) -> np.ndarray:
    h = np.zeros(1, dtype=np.uint64)
    for k in keys:
        h = _splitmix(h ^ np.uint64(k & 0xFFFFFFFFFFFFFFFF))
    z = _splitmix(np.asarray(idx, dtype=np.uint64) ^ h)
    return (z >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def saturation_fraction(profile: DeviceProfile, vpp: float) -> float:
    """Saturation voltage over VDD: the fraction of full charge a restore reaches."""
    v = (vpp - profile.vth_access) / (1.0 + profile.body_effect)
    return max(0.0, min(1.0, v / profile.vdd))


_PHI = (math.sqrt(5.0) - 1.0) / 2.0


# --------------------------------------------------------------- row model
@dataclass
class RowParams:
    """Per-row sampled parameters (VPP-independent inputs)."""

    hc_nominal: float
    hc_factor: float
    ber_factor: float
    worst_pattern: int
    designated_cell: int
    excess: np.ndarray  # per-cell threshold excess Z >= 0
    true_bits: np.ndarray
    trcd_nominal: float
    trcd_slope: float
    trcd_cell_offset: np.ndarray
    retention_nominal: np.ndarray | None = None  # seconds, filled lazily
    injected_thresholds: np.ndarray | None = None  # fixed per-cell HC, if injected
    # cells ordered by threshold; the order is the same at every VPP/pattern
    # because thresholds are increasing in the excess
    _order: np.ndarray | None = None
    _key: np.ndarray | None = None
    # per-VPP derived quantities; cleared whenever the row is re-injected
    _vcache: dict = field(default_factory=dict, repr=False)

    def sorted_cells(self) -> tuple[np.ndarray, np.ndarray]:
        if self._order is None:
            k = self.injected_thresholds if self.injected_thresholds is not None else self.excess
            self._order = np.argsort(k, kind="stable")
            self._key = k[self._order]
        return self._order, self._key


@dataclass(frozen=True)
class CellParams:
    """View of one row's cells evaluated at a VPP."""

    hammer_threshold: np.ndarray
    hammer_threshold_nominal: np.ndarray
    retention_time: np.ndarray
    trcd_requirement: np.ndarray
    worst_pattern_id: np.ndarray
    true_bit: np.ndarray
    unreliable: bool


@dataclass
class _RowState:
    data: np.ndarray
    tag: int
    counter: float = 0.0
    last_restore: float = 0.0
    epoch: int = 0
    # cells (in threshold order) already decided during this restore epoch
    ptr: int = 0
    # conservative counter value below which no further cell can flip;
    # -inf means "unknown, evaluate on the next disturbance"
    need: float = -math.inf


class DramDevice:
    def __init__(self, profile: DeviceProfile, seed: int, mapping: AdjacencyMapping | None = None,
                 noise_seed: int | None = None):
        profile.validate()
        self.profile = profile
        self.seed = int(seed)
        self.noise_seed = self.seed if noise_seed is None else int(noise_seed)
        self.mapping = mapping or identity(profile.rows_per_bank)
        if self.mapping.rows != profile.rows_per_bank:
            raise ValueError("mapping size does not match rows_per_bank")
        self.bits = profile.bits_per_row
        self.columns = self.bits // COLUMN_BITS
        self.vpp = profile.vpp_nominal
        self.time = 0.0
        self.open_row: dict[int, int | None] = {b: None for b in range(profile.banks)}
        self._open_trcd: dict[int, float] = {}
        self._rows: dict[tuple[int, int], _RowState] = {}
        self._params: dict[tuple[int, int], RowParams] = {}
        self._blast: dict[int, float] = {1: 1.0}
        self._reads = 0
        self._hc_min_vppmin = self._target_min_at_vppmin()
        self._fill_cache: dict[int, np.ndarray] = {}
        self.command_count = 0

    # ------------------------------------------------------------ sampling
    def _target_min_at_vppmin(self) -> float | None:
        p = self.profile
        t = p.hc_first_min_at_vpp_min
        if t is None:
            return None
        hmin = p.hc_first_nominal_dist.support()[0]
        lo, hi = p.hc_factor_range
        d = 300.0 / hmin
        return float(min(max(t, hmin * (lo + d)), hmin * (hi - d)))

    def _sample_row(self, bank: int, prow: int) -> RowParams:
        p = self.profile
        rng = np.random.default_rng([self.seed, bank, prow])
        hmin = p.hc_first_nominal_dist.support()[0]
        h = float(p.hc_first_nominal_dist.sample(rng, 1)[0])
        f = float(p.hc_vpp_factor_dist.sample(rng, 1)[0])
        b = float(p.ber_vpp_factor_dist.sample(rng, 1)[0])
        wp = int(rng.choice(N_PATTERNS, p=np.asarray(p.worst_pattern_dist)))
        d = 300.0 / h
        lo, hi = p.hc_factor_range
        tmin = self._hc_min_vppmin
        if tmin is not None and h == hmin:
            # rows at the module minimum carry the published minimum at vpp_min
            f = tmin / h
        else:
            f = min(max(f, lo + d), hi - d)
            # keep changed rows resolvable by the step-halving search
            if f > 1.0:
                f = max(f, 1.0 + d)
            elif f < 1.0:
                f = min(f, 1.0 - d)
            if tmin is not None:
                f = max(f, tmin / h)
        blo, bhi = p.ber_factor_range
        b = min(max(b, blo + 0.005), bhi - 0.005)
        u = rng.random(self.bits)
        excess = (u / p.ber_density) ** (1.0 / p.ber_shape)
        designated = int(rng.integers(self.bits))
        excess[designated] = 0.0
        true_bits = row_bits(PATTERNS[wp].victim_byte, self.bits)
        tn = float(p.trcd_min_nominal_dist.sample(rng, 1)[0])
        ts = float(p.trcd_vpp_slope_dist.sample(rng, 1)[0])
        off = rng.exponential(p.trcd_cell_spread, self.bits) if p.trcd_cell_spread > 0 \
            else np.zeros(self.bits)
        off[designated] = 0.0
        return RowParams(h, f, b, wp, designated, excess, true_bits, tn, ts, off)

    def _sample_retention(self, bank: int, prow: int, rp: RowParams) -> np.ndarray:
        p = self.profile
        rng = np.random.default_rng([self.seed, bank, prow, 1])
        ret = p.retention_nominal_dist.sample(rng, self.bits)
        if p.weak_rows:
            # golden-ratio placement anchored at physical row 1, so every bank's
            # first non-edge row belongs to the first weak population
            u = ((prow - 1) * _PHI) % 1.0
            acc = 0.0
            sat_min = self._retention_scale(p.vpp_min)
            for w in p.weak_rows:
                if acc <= u < acc + w.fraction:
                    words = rng.choice(self.bits // COLUMN_BITS, size=w.words, replace=False)
                    pos = words * COLUMN_BITS + rng.integers(COLUMN_BITS, size=w.words)
                    at_min = rng.uniform(w.low * w.window, w.high * w.window, w.words)
                    ret[pos] = at_min / sat_min
                    break
                acc += w.fraction
        return ret

    def row_params(self, bank: int, row: int) -> RowParams:
        """Sampled parameters of logical ``row`` (materialized on first use)."""
        return self._row_params_phys(bank, self.mapping.physical(row))

    def _row_params_phys(self, bank: int, prow: int) -> RowParams:
        key = (bank, prow)
        rp = self._params.get(key)
        if rp is None:
            rp = self._sample_row(bank, prow)
            self._params[key] = rp
        return rp

    def _retention_nominal(self, bank: int, prow: int) -> np.ndarray:
        rp = self._row_params_phys(bank, prow)
        if rp.retention_nominal is None:
            rp.retention_nominal = self._sample_retention(bank, prow, rp)
        return rp.retention_nominal

    # ---------------------------------------------------------- VPP model
    @property
    def unreliable(self) -> bool:
        return self.vpp < self.profile.vpp_min - 1e-9

    def _lam(self, vpp: float | None = None) -> float:
        v = self.vpp if vpp is None else vpp
        p = self.profile
        return min(1.0, max(0.0, (p.vpp_nominal - v) / p.vpp_range))

    def _retention_scale(self, vpp: float) -> float:
        p = self.profile
        s = saturation_fraction(p, vpp) if p.retention_coupling else 1.0
        s *= max(0.0, 1.0 - p.retention_vpp_slope * max(0.0, p.vpp_nominal - vpp))
        return s

    def row_hc_first(self, rp: RowParams, vpp: float | None = None) -> float:
        """Row-level HC_first under the worst pattern at ``vpp``."""
        lam = self._lam(vpp)
        return rp.hc_nominal * (1.0 + (rp.hc_factor - 1.0) * lam)

    def cell_thresholds(self, rp: RowParams, vpp: float | None = None) -> np.ndarray:
        """Per-cell hammer thresholds (per-aggressor, double-sided HC) at ``vpp``."""
        if rp.injected_thresholds is not None:
            return rp.injected_thresholds.copy()
        hv = self.row_hc_first(rp, vpp)
        return hv * (1.0 + rp.excess * self.cell_thresholds_scale(rp, vpp))

    def _row_at(self, rp: RowParams, vpp: float) -> tuple[float, float]:
        c = rp._vcache.get(("hv", vpp))
        if c is None:
            c = (self.row_hc_first(rp, vpp), self.cell_thresholds_scale(rp, vpp))
            rp._vcache[("hv", vpp)] = c
        return c

    def cell_thresholds_scale(self, rp: RowParams, vpp: float | None = None) -> float:
        """Spread g(v) of cell thresholds above the row minimum.

        Chosen so that the row BER at the reference hammer count scales by
        exactly the row's BER factor while HC_first scales by its HC factor.
        """
        lam = self._lam(vpp)
        h0 = rp.hc_nominal
        hv = self.row_hc_first(rp, vpp)
        bv = 1.0 + (rp.ber_factor - 1.0) * lam
        ref = BER_REFERENCE_HC
        if h0 < 0.95 * ref and hv < ref:
            r = max((ref / hv - 1.0) / (ref / h0 - 1.0), 0.05)
        else:
            r = 1.0
        return r * bv ** (-1.0 / self.profile.ber_shape)

    def cell_params(self, bank: int, row: int, vpp: float | None = None) -> CellParams:
        v = self.vpp if vpp is None else vpp
        prow = self.mapping.physical(row)
        rp = self._row_params_phys(bank, prow)
        ret = self._retention_nominal(bank, prow) * self._retention_scale(v)
        return CellParams(
            hammer_threshold=self.cell_thresholds(rp, v),
            hammer_threshold_nominal=self.cell_thresholds(rp, self.profile.vpp_nominal),
            retention_time=ret,
            trcd_requirement=self._trcd_requirements(rp, v),
            worst_pattern_id=np.full(self.bits, rp.worst_pattern),
            true_bit=rp.true_bits.copy(),
            unreliable=v < self.profile.vpp_min - 1e-9,
        )

    def _trcd_requirements(self, rp: RowParams, vpp: float) -> np.ndarray:
        lam_v = min(self.profile.vpp_nominal - vpp, self.profile.vpp_range)
        base = rp.trcd_nominal + rp.trcd_slope * max(0.0, lam_v)
        return base - rp.trcd_cell_offset

    def _trcd_cached(self, rp: RowParams, vpp: float) -> tuple[np.ndarray, float]:
        c = rp._vcache.get(("trcd", vpp))
        if c is None:
            req = self._trcd_requirements(rp, vpp)
            c = (req, float(req.max()))
            rp._vcache[("trcd", vpp)] = c
        return c

    def set_vpp(self, vpp: float) -> None:
        lo, hi = VPP_LEGAL_RANGE
        if not lo <= vpp <= hi:
            raise ValueError(f"vpp {vpp} outside legal range [{lo}, {hi}]")
        self.vpp = float(vpp)
        for st in self._rows.values():
            st.need = -math.inf

    # ------------------------------------------------------ injection API
    def inject_row(self, bank: int, row: int, *, thresholds=None, worst_pattern=None,
                   retention=None, trcd=None, true_bits=None) -> None:
        """Override parameters of logical ``row`` (test fixtures, oracles)."""
        prow = self.mapping.physical(row)
        rp = self._row_params_phys(bank, prow)
        rp._vcache.clear()
        st = self._rows.get((bank, prow))
        if st is not None:
            st.need = -math.inf
        if worst_pattern is not None:
            rp.worst_pattern = int(worst_pattern)
            rp.true_bits = row_bits(PATTERNS[rp.worst_pattern].victim_byte, self.bits)
        if true_bits is not None:
            rp.true_bits = np.asarray(true_bits, dtype=np.uint8).copy()
        if thresholds is not None:
            t = np.broadcast_to(np.asarray(thresholds, dtype=float), (self.bits,)).copy()
            rp.injected_thresholds = t
            rp._order = None
        if retention is not None:
            rp.retention_nominal = np.broadcast_to(
                np.asarray(retention, dtype=float), (self.bits,)).copy()
        if trcd is not None:
            rp.trcd_nominal = float(np.max(trcd))
            rp.trcd_slope = 0.0
            rp.trcd_cell_offset = rp.trcd_nominal - np.broadcast_to(
                np.asarray(trcd, dtype=float), (self.bits,))

    def blast_radius_config(self, distance: int, attenuation=0.0) -> None:
        """Disturb rows up to ``distance`` away; weight at d is attenuation**(d-1).

        ``attenuation`` may also be a sequence of weights for d = 2..distance.
        """
        if distance < 1:
            raise ValueError("distance must be >= 1")
        w = {1: 1.0}
        for d in range(2, distance + 1):
            if np.ndim(attenuation):
                a = float(attenuation[d - 2])
            else:
                a = float(attenuation) ** (d - 1)
            if a > 0:
                w[d] = a
        self._blast = w

    @property
    def blast_weights(self) -> dict[int, float]:
        return dict(self._blast)

    # ------------------------------------------------------------- state
    def _fill(self, byte: int) -> np.ndarray:
        f = self._fill_cache.get(byte)
        if f is None:
            f = row_bits(byte, self.bits)
            self._fill_cache[byte] = f
        return f

    def _state(self, bank: int, prow: int) -> _RowState:
        key = (bank, prow)
        st = self._rows.get(key)
        if st is None:
            st = _RowState(data=np.zeros(self.bits, dtype=np.uint8), tag=1)
            self._rows[key] = st
        return st

    def counter(self, bank: int, row: int) -> float:
        return self._state(bank, self.mapping.physical(row)).counter

    def peek_row(self, bank: int, row: int) -> np.ndarray:
        """Stored bits of ``row`` without issuing commands (no sensing, no decay)."""
        return self._state(bank, self.mapping.physical(row)).data.copy()

    def _key_limit(self, rp: RowParams, tag: int, counter: float) -> float:
        """Largest sort key whose cell threshold is reached by ``counter``."""
        limit = counter / 2.0
        if rp.injected_thresholds is not None:
            return limit
        if tag != rp.worst_pattern:
            limit /= self.profile.pattern_penalty
        hv, g = self._row_at(rp, self.vpp)
        if limit < hv:
            return -1.0
        # threshold = hv * (1 + z * g)
        return (limit / hv - 1.0) / g

    def _need(self, rp: RowParams, tag: int, key0: float) -> float:
        """Counter at which the cell with sort key ``key0`` is reached (inverse of _key_limit)."""
        if rp.injected_thresholds is not None:
            return 2.0 * key0
        hv, g = self._row_at(rp, self.vpp)
        pen = self.profile.pattern_penalty if tag != rp.worst_pattern else 1.0
        return 2.0 * pen * hv * (1.0 + max(key0, 0.0) * g)

    def _disturb(self, bank: int, prow: int, amount: float) -> None:
        st = self._rows.get((bank, prow)) or self._state(bank, prow)
        st.counter += amount
        if st.counter >= st.need:
            self._process_hammer(bank, prow, st)

    def _process_hammer(self, bank: int, prow: int, st: _RowState) -> None:
        rp = self._row_params_phys(bank, prow)
        order, key = rp.sorted_cells()
        if st.ptr >= len(key):
            st.need = math.inf
            return
        klim = self._key_limit(rp, st.tag, st.counter)
        if key[st.ptr] <= klim:
            end = int(np.searchsorted(key, klim, side="right"))
            cells = order[st.ptr:end]
            st.ptr = end
            cells = cells[st.data[cells] == rp.true_bits[cells]]
            q = self.profile.flip_probability
            if q < 1.0 and len(cells):
                u = _hash_uniform((self.noise_seed, 1, bank, prow, st.epoch), cells)
                cells = cells[u < q]
            if len(cells):
                st.data[cells] ^= 1
            if st.ptr >= len(key):
                st.need = math.inf
                return
        # prefilter for later disturbances; the exact test above still decides
        if st.ptr == 0:
            ck = ("need0", st.tag, self.vpp)
            need = rp._vcache.get(ck)
            if need is None:
                need = self._need(rp, st.tag, float(key[0])) * (1.0 - 1e-9)
                rp._vcache[ck] = need
        else:
            need = self._need(rp, st.tag, float(key[st.ptr])) * (1.0 - 1e-9)
        st.need = need

    def _sense(self, bank: int, prow: int, st: _RowState) -> None:
        """Apply retention loss accumulated since the last restore."""
        elapsed = self.time - st.last_restore
        if elapsed <= 0:
            return
        rp = self._row_params_phys(bank, prow)
        ret = self._retention_nominal(bank, prow) * self._retention_scale(self.vpp)
        leak = (ret < elapsed) & (st.data == rp.true_bits)
        if leak.any():
            st.data[leak] ^= 1

    def _restore(self, bank: int, prow: int, st: _RowState) -> None:
        st.counter = 0.0
        st.last_restore = self.time
        st.epoch += 1
        st.ptr = 0
        st.need = -math.inf

    def _activate(self, bank: int, prow: int) -> None:
        st = self._state(bank, prow)
        if self.time > st.last_restore:
            self._sense(bank, prow, st)
        self._restore(bank, prow, st)
        rows = self.profile.rows_per_bank
        for d, w in self._blast.items():
            if prow - d >= 0:
                self._disturb(bank, prow - d, w)
            if prow + d < rows:
                self._disturb(bank, prow + d, w)

    # ---------------------------------------------------------- commands
    def execute(self, cmd: Command):
        self.command_count += 1
        if isinstance(cmd, Act):
            self._check_bank(cmd.bank)
            if self.open_row[cmd.bank] is not None:
                raise CommandError(f"ACT on bank {cmd.bank} with row {self.open_row[cmd.bank]} open")
            prow = self._phys(cmd.row)
            self._activate(cmd.bank, prow)
            self.open_row[cmd.bank] = cmd.row
            self._open_trcd[cmd.bank] = float(cmd.trcd)
            return None
        if isinstance(cmd, Rd):
            row = self._require_open(cmd.bank)
            return self._read_col(cmd.bank, row, cmd.col)
        if isinstance(cmd, Wr):
            row = self._require_open(cmd.bank)
            self._write_col(cmd.bank, row, cmd.col, cmd.data)
            return None
        if isinstance(cmd, Pre):
            self._check_bank(cmd.bank)
            self.open_row[cmd.bank] = None
            return None
        if isinstance(cmd, Wait):
            if cmd.seconds < 0:
                raise CommandError("WAIT duration must be non-negative")
            self.time += float(cmd.seconds)
            return None
        raise CommandError(f"unknown command {cmd!r}")

    def _check_bank(self, bank: int) -> None:
        if bank not in self.open_row:
            raise CommandError(f"bank {bank} out of range")

    def _phys(self, row: int) -> int:
        if not 0 <= row < self.profile.rows_per_bank:
            raise CommandError(f"row {row} out of range")
        return self.mapping.physical(row)

    def _require_open(self, bank: int) -> int:
        self._check_bank(bank)
        row = self.open_row[bank]
        if row is None:
            raise CommandError(f"bank {bank} has no open row")
        return row

    def _col_slice(self, col: int) -> slice:
        if not 0 <= col < self.columns:
            raise CommandError(f"column {col} out of range")
        return slice(col * COLUMN_BITS, (col + 1) * COLUMN_BITS)

    def _read_col(self, bank: int, row: int, col: int) -> np.ndarray:
        sl = self._col_slice(col)
        prow = self.mapping.physical(row)
        st = self._state(bank, prow)
        out = st.data[sl].copy()
        rp = self._row_params_phys(bank, prow)
        req = self._trcd_cached(rp, self.vpp)[0][sl]
        early = req > self._open_trcd[bank]
        if early.any():
            out[early] ^= 1
        if self.unreliable:
            self._reads += 1
            u = _hash_uniform((self.noise_seed, 2, bank, prow, st.epoch, self._reads),
                              np.arange(COLUMN_BITS))
            out ^= (u < self.profile.unreliable_corruption).astype(np.uint8)
        return out

    def _write_col(self, bank: int, row: int, col: int, data) -> None:
        sl = self._col_slice(col)
        d = np.asarray(data, dtype=np.uint8)
        if d.shape != (COLUMN_BITS,):
            raise CommandError(f"WR data must be {COLUMN_BITS} bits")
        st = self._state(bank, self.mapping.physical(row))
        st.data[sl] = d
        st.tag = detect_pattern(st.data)
        st.need = -math.inf

    def wait(self, seconds: float) -> None:
        self.execute(Wait(seconds))

    # ------------------------------------------------------------ macros
    # Each macro is observably identical to the command sequence in its
    # docstring; they exist only to avoid per-command interpreter overhead.
    def write_row(self, bank: int, row: int, bits: np.ndarray, trcd: float = SAFE_TRCD,
                  _tag: int | None = None) -> None:
        """ACT(row); WR(c) for every column; PRE."""
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape != (self.bits,):
            raise CommandError("row data has wrong length")
        if self.open_row[bank] is not None:
            raise CommandError(f"ACT on bank {bank} with row {self.open_row[bank]} open")
        prow = self._phys(row)
        self._activate(bank, prow)
        st = self._state(bank, prow)
        st.data[:] = bits
        st.tag = detect_pattern(bits) if _tag is None else _tag
        st.need = -math.inf
        self.command_count += 2 + self.columns

    def fill_row(self, bank: int, row: int, byte: int) -> None:
        self.write_row(bank, row, self._fill(byte), _tag=fill_pattern_id(byte))

    def read_row(self, bank: int, row: int, trcd: float = SAFE_TRCD) -> np.ndarray:
        """ACT(row, trcd); RD(c) for every column; PRE."""
        if self.open_row[bank] is not None:
            raise CommandError(f"ACT on bank {bank} with row {self.open_row[bank]} open")
        prow = self._phys(row)
        self._activate(bank, prow)
        st = self._state(bank, prow)
        out = st.data.copy()
        rp = self._row_params_phys(bank, prow)
        req, req_max = self._trcd_cached(rp, self.vpp)
        if req_max > trcd:
            out[req > trcd] ^= 1
        if self.unreliable:
            for c in range(self.columns):
                self._reads += 1
                u = _hash_uniform((self.noise_seed, 2, bank, prow, st.epoch, self._reads),
                                  np.arange(COLUMN_BITS))
                sl = slice(c * COLUMN_BITS, (c + 1) * COLUMN_BITS)
                out[sl] ^= (u < self.profile.unreliable_corruption).astype(np.uint8)
        self.command_count += 2 + self.columns
        return out

    def hammer(self, bank: int, aggressors: list[int], count: int) -> None:
        """Repeat ``count`` times: for a in aggressors: ACT(a); PRE."""
        if count <= 0 or not aggressors:
            return
        if self.open_row[bank] is not None:
            raise CommandError(f"ACT on bank {bank} with row {self.open_row[bank]} open")
        rows = self.profile.rows_per_bank
        phys = [self._phys(a) for a in aggressors]
        agg_set = set(phys)
        # first activation of each aggressor senses it (time is frozen, so
        # later activations see zero elapsed time)
        for a in phys:
            st = self._state(bank, a)
            self._sense(bank, a, st)
        total: dict[int, float] = {}
        last_round: dict[int, float] = {}
        n = len(phys)
        for i, a in enumerate(phys):
            for d, w in self._blast.items():
                for q in (a - d, a + d):
                    if 0 <= q < rows:
                        total[q] = total.get(q, 0.0) + w * count
                        if q in agg_set:
                            # contributions after q's own last activation
                            j = max(k for k in range(n) if phys[k] == q)
                            if i > j:
                                last_round[q] = last_round.get(q, 0.0) + w
        for a in phys:
            st = self._state(bank, a)
            st.epoch += count - 1
            self._restore(bank, a, st)
        for q, amt in total.items():
            if q in agg_set:
                amt = last_round.get(q, 0.0)
                if amt == 0.0:
                    continue
            self._disturb(bank, q, amt)
        self.command_count += 2 * count * n

    def probe_column(self, bank: int, row: int, col: int, bits: np.ndarray, trcd: float) -> bool:
        """Init row with ``bits``; ACT(trcd); RD(col); PRE; True if the column read back intact."""
        self.write_row(bank, row, bits)
        prow = self._phys(row)
        self._activate(bank, prow)
        self.open_row[bank] = row
        self._open_trcd[bank] = float(trcd)
        got = self._read_col(bank, row, col)
        self.open_row[bank] = None
        self.command_count += 3
        return bool(np.array_equal(got, bits[self._col_slice(col)]))

    def trcd_pass(self, bank: int, row: int, bits: np.ndarray, trcd: float) -> np.ndarray:
        """``probe_column`` over every column; returns a per-column failure mask.

        Equivalent to calling ``probe_column`` for c = 0..columns-1 in order:
        two activations per column, the row rewritten before each probe.
        """
        bits = np.asarray(bits, dtype=np.uint8)
        if self.open_row[bank] is not None:
            raise CommandError(f"ACT on bank {bank} with row {self.open_row[bank]} open")
        prow = self._phys(row)
        rp = self._row_params_phys(bank, prow)
        st = self._state(bank, prow)
        self._sense(bank, prow, st)
        n = self.columns
        st.epoch += 2 * n - 1
        self._restore(bank, prow, st)
        st.data[:] = bits
        st.tag = detect_pattern(bits)
        st.need = -math.inf
        early = (self._trcd_cached(rp, self.vpp)[0] > trcd).reshape(n, COLUMN_BITS)
        fails = early.any(axis=1)
        if self.unreliable:
            # epoch of the c-th probe activation is base + 2c + 2
            base = st.epoch - 2 * n
            for c in range(n):
                self._reads += 1
                u = _hash_uniform((self.noise_seed, 2, bank, prow, base + 2 * c + 2, self._reads),
                                  np.arange(COLUMN_BITS))
                flip = (u < self.profile.unreliable_corruption) ^ early[c]
                fails[c] = bool(flip.any())
        rows = self.profile.rows_per_bank
        for d, w in self._blast.items():
            for q in (prow - d, prow + d):
                if 0 <= q < rows:
                    self._disturb(bank, q, w * 2 * n)
        self.command_count += 5 * n + n * self.columns
        return fails


def build_device(profile: DeviceProfile, seed: int, mapping: AdjacencyMapping | None = None,
                 noise_seed: int | None = None) -> DramDevice:
    """Fresh device at nominal VPP with every row restored at t = 0."""
    return DramDevice(profile, seed, mapping, noise_seed)
