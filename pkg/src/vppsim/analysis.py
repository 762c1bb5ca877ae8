"""Reductions from characterization records to fleet-level aggregates.

All functions take plain record dicts (as produced by ``campaign`` and read
back with ``records.read_records``) so they work equally on live results and
on archived campaigns.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .device import NOMINAL_TRCD

__all__ = [
    "NormalizedSweep", "Histogram", "CorrectabilityReport", "GuardbandReport",
    "normalize_and_band", "normalized_at_vppmin", "population_density", "cv_percentiles",
    "secded_analysis", "selective_refresh_fraction", "first_failure_refresh_fractions",
    "guardband_report", "recommended_vpp", "module_rowhammer_summary",
    "retention_mean_ber", "write_series",
]

VPP_NOMINAL = 2.5
BAND_LEVEL = 0.90
BOOTSTRAP_RESAMPLES = 2000


def _vkey(v: float) -> float:
    # VPP levels are compared at millivolt resolution
    return round(float(v), 3)


def _by_kind(records: Iterable[dict], kind: str) -> list[dict]:
    return [r for r in records if r.get("kind") == kind]


# ------------------------------------------------------------ normalization
def _bootstrap_band(x: np.ndarray, rng: np.random.Generator, resamples: int,
                    level: float) -> tuple[float, float]:
    if len(x) == 0:
        return (math.nan, math.nan)
    if len(x) == 1:
        return (float(x[0]), float(x[0]))
    idx = rng.integers(0, len(x), size=(resamples, len(x)))
    means = x[idx].mean(axis=1)
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [a, 1.0 - a])
    return (float(lo), float(hi))


@dataclass
class NormalizedSweep:
    module_id: str
    vpps: list[float]
    ber_mean: list[float]
    ber_band: list[tuple[float, float]]
    hc_mean: list[float]
    hc_band: list[tuple[float, float]]
    n_ber: list[int]
    n_hc: list[int]
    excluded_ber: int = 0  # rows without a usable nominal baseline
    excluded_hc: int = 0
    # per-vpp arrays of per-row normalized values (row order preserved)
    ber_rows: dict = field(default_factory=dict, repr=False)
    hc_rows: dict = field(default_factory=dict, repr=False)


def _row_table(rh: list[dict]) -> dict:
    """module -> row -> vpp -> record"""
    t: dict = defaultdict(lambda: defaultdict(dict))
    for r in rh:
        t[r["module_id"]][r["row"]][_vkey(r["vpp"])] = r
    return t


def normalize_and_band(records: Iterable[dict], seed: int = 0, resamples: int = BOOTSTRAP_RESAMPLES,
                       level: float = BAND_LEVEL, vpp_nominal: float = VPP_NOMINAL
                       ) -> dict[str, NormalizedSweep]:
    """Per-row normalization to the nominal-VPP value, then the cross-row mean.

    The band is a percentile bootstrap of the mean over rows.  Rows whose
    nominal BER is zero (or whose nominal HC_first is missing) cannot be
    normalized for that metric and are excluded and counted.
    """
    table = _row_table(_by_kind(records, "rowhammer"))
    nom = _vkey(vpp_nominal)
    out = {}
    for mod in sorted(table):
        rows = table[mod]
        vpps = sorted({v for r in rows.values() for v in r}, reverse=True)
        ber_rows, hc_rows = {}, {}
        ex_b = ex_h = 0
        for v in vpps:
            ber_rows[v], hc_rows[v] = [], []
        for row in sorted(rows):
            by_v = rows[row]
            base = by_v.get(nom)
            if base is None or not base["ber_at_300k"]:
                ex_b += 1
            else:
                for v in vpps:
                    if v in by_v:
                        ber_rows[v].append(by_v[v]["ber_at_300k"] / base["ber_at_300k"])
            if base is None or base["hc_first"] is None:
                ex_h += 1
            else:
                for v in vpps:
                    if v in by_v and by_v[v]["hc_first"] is not None:
                        hc_rows[v].append(by_v[v]["hc_first"] / base["hc_first"])
        rng = np.random.default_rng([seed, _stable_id(mod)])
        sw = NormalizedSweep(mod, vpps, [], [], [], [], [], [], ex_b, ex_h)
        for v in vpps:
            b = np.asarray(ber_rows[v], dtype=float)
            h = np.asarray(hc_rows[v], dtype=float)
            sw.ber_rows[v], sw.hc_rows[v] = b, h
            sw.ber_mean.append(float(b.mean()) if len(b) else math.nan)
            sw.hc_mean.append(float(h.mean()) if len(h) else math.nan)
            sw.ber_band.append(_bootstrap_band(b, rng, resamples, level))
            sw.hc_band.append(_bootstrap_band(h, rng, resamples, level))
            sw.n_ber.append(len(b))
            sw.n_hc.append(len(h))
        out[mod] = sw
    return out


def _stable_id(s: str) -> int:
    return int.from_bytes(s.encode()[:8].ljust(8, b"\0"), "little")


def normalized_at_vppmin(records: Iterable[dict], vpp_nominal: float = VPP_NOMINAL,
                         sweeps: dict[str, NormalizedSweep] | None = None) -> dict:
    """Per-row normalized values at each module's lowest tested VPP.

    Returns {"ber": {mfr: array}, "hc_first": {mfr: array}} plus "module" maps.
    """
    records = list(records)
    mfr = {r["module_id"]: r["manufacturer_id"] for r in _by_kind(records, "module")}
    sweeps = sweeps if sweeps is not None else normalize_and_band(records, resamples=1,
                                                                  vpp_nominal=vpp_nominal)
    out = {"ber": defaultdict(list), "hc_first": defaultdict(list),
           "module_ber": {}, "module_hc_first": {}}
    for mod, sw in sweeps.items():
        vmin = sw.vpps[-1]
        m = mfr.get(mod, mod[:1])
        out["ber"][m].extend(sw.ber_rows[vmin].tolist())
        out["hc_first"][m].extend(sw.hc_rows[vmin].tolist())
        out["module_ber"][mod] = sw.ber_rows[vmin]
        out["module_hc_first"][mod] = sw.hc_rows[vmin]
    for k in ("ber", "hc_first"):
        out[k] = {m: np.asarray(v, dtype=float) for m, v in sorted(out[k].items())}
    return out


# ----------------------------------------------------------- densities
@dataclass
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    n: int
    support: tuple[float, float]
    frac_above_1: float
    frac_below_1: float

    def mass(self) -> float:
        return float(np.sum(self.density * np.diff(self.edges)))


def population_density(values: np.ndarray | dict, bin_width: float = 0.02):
    """Histogram (density) of normalized values with bins anchored at multiples of ``bin_width``.

    A dict of arrays (e.g. per manufacturer) gives a dict of histograms.
    """
    if isinstance(values, dict):
        return {k: population_density(v, bin_width) for k, v in values.items()}
    x = np.asarray(values, dtype=float)
    x = x[np.isfinite(x)]
    if len(x) == 0:
        return Histogram(np.array([0.0, bin_width]), np.zeros(1), 0, (math.nan, math.nan), 0.0, 0.0)
    lo = math.floor(x.min() / bin_width + 1e-9)
    hi = math.floor(x.max() / bin_width + 1e-9) + 1
    edges = np.arange(lo, hi + 1) * bin_width
    counts = np.zeros(hi - lo)
    idx = np.clip(np.floor(x / bin_width + 1e-9).astype(int) - lo, 0, hi - lo - 1)
    np.add.at(counts, idx, 1)
    dens = counts / (len(x) * bin_width)
    return Histogram(edges, dens, len(x), (float(x.min()), float(x.max())),
                     float(np.mean(x > 1.0)), float(np.mean(x < 1.0)))


# ---------------------------------------------------------------- CV
def cv_percentiles(records: Iterable[dict], percentiles=(90, 95, 99)) -> dict:
    """Percentiles of the coefficient of variation across iterations.

    One CV per (row, vpp, metric); only metrics recorded with per-iteration
    values take part (BER at the reference hammer count).  CV uses the
    population standard deviation.
    """
    cvs, zero = [], 0
    for r in records:
        if r.get("kind") != "rowhammer":
            continue
        it = r.get("ber_iterations")
        if not it or len(it) < 2:
            continue
        a = np.asarray(it, dtype=float)
        m = a.mean()
        if m == 0:
            zero += 1
            continue
        cvs.append(a.std() / m)
    cvs = np.asarray(cvs)
    out = {f"p{p}": (float(np.percentile(cvs, p)) if len(cvs) else math.nan) for p in percentiles}
    out.update(n=len(cvs), excluded_zero_mean=zero)
    return out


# -------------------------------------------------------------- SECDED
@dataclass
class CorrectabilityReport:
    trefw: float | None
    word_bits: int
    counts: np.ndarray  # (rows, 3): words with 0, 1, 2+ flips
    max_per_word: np.ndarray  # (rows,)

    @property
    def rows(self) -> int:
        return len(self.counts)

    @property
    def erroneous_rows(self) -> np.ndarray:
        return self.counts[:, 1] + self.counts[:, 2] > 0

    @property
    def fraction_rows_with_errors(self) -> float:
        return float(self.erroneous_rows.mean()) if self.rows else 0.0

    @property
    def correctable(self) -> bool:
        return bool(np.all(self.counts[:, 2] == 0))


def _as_mask(f, n_bits: int) -> np.ndarray:
    """Bool/uint8 arrays are flip masks; other integer arrays are bit positions."""
    f = np.asarray(f)
    if f.dtype == bool or f.dtype == np.uint8:
        if f.shape != (n_bits,):
            raise ValueError("flip mask has wrong length")
        return f.astype(bool)
    m = np.zeros(n_bits, dtype=bool)
    m[f.astype(np.int64)] = True
    return m


def secded_analysis(row_bits: int, flips, word_bits: int = 64,
                    trefw: float | None = None) -> CorrectabilityReport:
    """Per-word flip counts for one row (mask or positions) or a list of rows."""
    if row_bits % word_bits:
        raise ValueError("row length must be divisible by the word size")
    rows = flips if isinstance(flips, (list, tuple)) else [flips]
    words = row_bits // word_bits
    counts = np.zeros((len(rows), 3), dtype=np.int64)
    mx = np.zeros(len(rows), dtype=np.int64)
    for i, f in enumerate(rows):
        per = _as_mask(f, row_bits).reshape(words, word_bits).sum(axis=1)
        counts[i] = (np.sum(per == 0), np.sum(per == 1), np.sum(per >= 2))
        mx[i] = per.max(initial=0)
    return CorrectabilityReport(trefw, word_bits, counts, mx)


def selective_refresh_fraction(reports: dict[float, CorrectabilityReport]) -> dict[float, float | None]:
    """Fraction of rows with an erroneous word at tREFW but none at tREFW/2.

    ``reports`` maps tREFW to reports over the same rows in the same order.
    A window whose half is missing maps to None (undefined).
    """
    keys = {round(k, 6): k for k in reports}
    out = {}
    for k in sorted(reports):
        half = keys.get(round(k / 2, 6))
        if half is None:
            out[k] = None
            continue
        now, before = reports[k].erroneous_rows, reports[half].erroneous_rows
        out[k] = float(np.mean(now & ~before)) if len(now) else 0.0
    return out


def _retention_reports(rt: list[dict]) -> dict:
    """module -> vpp -> trefw -> CorrectabilityReport from retention records."""
    grouped: dict = defaultdict(lambda: defaultdict(list))
    for r in rt:
        grouped[r["module_id"]][_vkey(r["vpp"])].append(r)
    out: dict = {}
    for mod, by_v in grouped.items():
        out[mod] = {}
        for v, rows in by_v.items():
            rows = sorted(rows, key=lambda r: r["row"])
            windows = rows[0]["windows"]
            reps = {}
            for j, w in enumerate(windows):
                c = np.array([[r["words_k0"][j], r["words_k1"][j], r["words_k2p"][j]] for r in rows])
                m = np.array([r["max_per_word"][j] for r in rows])
                reps[w] = CorrectabilityReport(w, 64, c, m)
            out[mod][v] = reps
    return out


def first_failure_refresh_fractions(records: Iterable[dict], vpp: float | str = "vpp_min") -> dict:
    """Selective-refresh fractions grouped by each module's smallest failing tREFW.

    Modules are grouped by the smallest window with any erroneous row, at
    ``vpp``: a level, "vpp_min" (each module's own, from its module record)
    or "min" (lowest tested).  The fraction is pooled over all rows of the
    modules in a group, so a 64 ms entry covers exactly the modules that
    first fail at 64 ms.
    """
    records = list(records)
    vmins = {r["module_id"]: _vkey(r["vpp_min"]) for r in _by_kind(records, "module")}
    reps = _retention_reports(_by_kind(records, "retention"))
    groups: dict = defaultdict(list)
    first = {}
    for mod in sorted(reps):
        by_v = reps[mod]
        if vpp == "min":
            v = min(by_v)
        elif vpp == "vpp_min":
            v = vmins.get(mod, min(by_v))
        else:
            v = _vkey(vpp)
        if v not in by_v:
            continue
        fails = [w for w in sorted(by_v[v]) if by_v[v][w].fraction_rows_with_errors > 0]
        if not fails:
            continue
        w0 = fails[0]
        first[mod] = w0
        groups[w0].append(by_v[v])
    fractions = {}
    for w0, lst in sorted(groups.items()):
        pooled = {}
        for w in (w0 / 2, w0):
            present = [r for r in lst if any(abs(k - w) < 1e-9 for k in r)]
            if len(present) != len(lst):
                continue
            pooled[w] = CorrectabilityReport(
                w, 64,
                np.concatenate([_pick(r, w).counts for r in lst]),
                np.concatenate([_pick(r, w).max_per_word for r in lst]))
        f = selective_refresh_fraction(pooled) if w0 in pooled else {}
        fractions[w0] = f.get(w0) if f else None
    return {"first_failure": first, "fractions": fractions,
            "modules": {w: sorted(m for m, x in first.items() if x == w) for w in fractions}}


def _pick(reps: dict, w: float):
    for k, r in reps.items():
        if abs(k - w) < 1e-9:
            return r
    raise KeyError(w)


def retention_mean_ber(records: Iterable[dict], vpp: float, trefw: float) -> dict[str, float]:
    """Mean retention BER over rows at (vpp, tREFW), per manufacturer."""
    records = list(records)
    mfr = {r["module_id"]: r["manufacturer_id"] for r in _by_kind(records, "module")}
    acc: dict = defaultdict(list)
    for r in _by_kind(records, "retention"):
        if _vkey(r["vpp"]) != _vkey(vpp):
            continue
        for w, b in zip(r["windows"], r["ber"]):
            if abs(w - trefw) < 1e-9:
                acc[mfr.get(r["module_id"], r["module_id"][:1])].append(b)
    return {m: float(np.mean(v)) for m, v in sorted(acc.items())}


# ------------------------------------------------------------ guardband
@dataclass
class GuardbandReport:
    modules: dict  # module -> {"vpps": [...], "trcd_min": [...], "guardband": [...]}
    exceeding_nominal: list[str]
    mean_reduction: float  # over modules staying within the nominal tRCD
    reductions: dict


def guardband_report(records: Iterable[dict], nominal: float = NOMINAL_TRCD) -> GuardbandReport:
    """Module tRCD_min (largest over rows) per VPP and the guardband it leaves."""
    per: dict = defaultdict(lambda: defaultdict(list))
    for r in _by_kind(records, "trcd"):
        if r.get("trcd_min") is None:
            per[r["module_id"]][_vkey(r["vpp"])].append(math.inf)
        else:
            per[r["module_id"]][_vkey(r["vpp"])].append(r["trcd_min"])
    modules, exceed, red = {}, [], {}
    for mod in sorted(per):
        vpps = sorted(per[mod], reverse=True)
        t = [max(per[mod][v]) for v in vpps]
        gb = [(nominal - x) / nominal for x in t]
        modules[mod] = {"vpps": vpps, "trcd_min": t, "guardband": gb}
        if max(t) > nominal:
            exceed.append(mod)
        elif gb[0] > 0:
            red[mod] = (gb[0] - gb[-1]) / gb[0]
    mean = float(np.mean(list(red.values()))) if red else math.nan
    return GuardbandReport(modules, exceed, mean, red)


# --------------------------------------------------- recommended VPP
def module_rowhammer_summary(records: Iterable[dict]) -> dict:
    """module -> vpp -> (min HC_first over rows, mean BER over rows)."""
    acc: dict = defaultdict(lambda: defaultdict(lambda: ([], [])))
    for r in _by_kind(records, "rowhammer"):
        hc, ber = acc[r["module_id"]][_vkey(r["vpp"])]
        if r["hc_first"] is not None:
            hc.append(r["hc_first"])
        ber.append(r["ber_at_300k"])
    out = {}
    for mod, by_v in sorted(acc.items()):
        out[mod] = {v: (min(h) if h else None, float(np.mean(b)) if b else None)
                    for v, (h, b) in sorted(by_v.items(), reverse=True)}
    return out


def recommended_vpp(summary: dict[float, tuple]) -> float | None:
    """argmax of module HC_first over VPP; ties by lower BER, then higher VPP."""
    cand = [(v, hc, ber) for v, (hc, ber) in summary.items() if hc is not None]
    if not cand:
        return None
    cand.sort(key=lambda t: (-t[1], t[2] if t[2] is not None else math.inf, -t[0]))
    return cand[0][0]


# -------------------------------------------------------------- output
def write_series(path: str | Path, header: list[str], rows: Iterable[Iterable]) -> None:
    """CSV with fixed float formatting (byte-stable across runs)."""
    def fmt(x):
        if x is None:
            return ""
        if isinstance(x, float):
            return "nan" if math.isnan(x) else f"{x:.6g}"
        return str(x)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])
