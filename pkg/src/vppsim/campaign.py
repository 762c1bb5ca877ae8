"""End-to-end characterization campaigns over module presets.

A campaign is split into independent units: one WCDP unit per module
(nominal VPP) followed by one unit per (module, VPP).  Every unit builds a
fresh device from the module profile, so a unit's records depend only on
(config, module, unit) and never on scheduling.  Each finished unit is
written atomically to its own file ending in a completion marker; resuming
reuses every intact unit file and recomputes the rest.
"""

from __future__ import annotations

import hashlib
import logging
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .charlib import (
    DEFAULT_ITERATIONS, EdgeRowError, characterize_row, determine_wcdp_retention,
    determine_wcdp_rowhammer, measure_retention, measure_trcd_min, retention_windows,
)
from .device import VPP_LEGAL_RANGE, build_device
from .presets import load_preset
from .profile import DeviceProfile, ProfileError, load_profile, profile_to_dict
from .records import RecordError, canonical, read_records, seal, write_records

log = logging.getLogger(__name__)

__all__ = ["CampaignConfig", "ConfigError", "run_campaign", "default_grid", "unit_plan",
           "load_profiles", "derive_seed", "OUT_ENV"]

TESTS = ("rowhammer", "trcd", "retention", "circuit")
DEVICE_TESTS = ("rowhammer", "trcd", "retention")
OUT_ENV = "VPPSIM_OUT"


class ConfigError(ValueError):
    pass


def default_grid() -> tuple[float, ...]:
    """2.5 V down to 1.0 V in 0.1 V steps; each module stops at its vpp_min."""
    return tuple(round(2.5 - 0.1 * i, 1) for i in range(16))


@dataclass
class CampaignConfig:
    profiles: list = field(default_factory=list)  # preset ids, YAML paths or DeviceProfile
    seed: int = 0
    vpp_grid: tuple[float, ...] = field(default_factory=default_grid)
    tests: tuple[str, ...] = ("rowhammer",)
    iterations: int = DEFAULT_ITERATIONS
    out: str | None = None
    jobs: int = 1
    rows: int = 256  # sampled rows per module (four evenly spaced chunks)
    retention_windows: tuple[float, ...] = field(default_factory=lambda: tuple(retention_windows()))
    retention_iterations: int = 1
    # extra retention-only VPP levels (may lie below a module's vpp_min)
    retention_vpps: tuple[float, ...] = ()
    trcd_runs: int = 1

    def validate(self) -> None:
        if not self.tests:
            raise ConfigError("at least one test must be selected")
        bad = set(self.tests) - set(TESTS)
        if bad:
            raise ConfigError(f"unknown tests {sorted(bad)}; choose from {TESTS}")
        lo, hi = VPP_LEGAL_RANGE
        if not self.vpp_grid:
            raise ConfigError("vpp grid is empty")
        for v in tuple(self.vpp_grid) + tuple(self.retention_vpps):
            if not lo <= v <= hi:
                raise ConfigError(f"grid value {v} outside [{lo}, {hi}]")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.rows < 4 or self.rows % 4:
            raise ConfigError("rows must be a positive multiple of 4")

    def to_dict(self) -> dict:
        return {
            "profiles": [p if isinstance(p, str) else p.module_id for p in self.profiles],
            "seed": self.seed, "vpp_grid": list(self.vpp_grid), "tests": list(self.tests),
            "iterations": self.iterations, "rows": self.rows,
            "retention_windows": list(self.retention_windows),
            "retention_iterations": self.retention_iterations, "trcd_runs": self.trcd_runs,
            "retention_vpps": list(self.retention_vpps),
        }


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def load_profiles(specs) -> list[DeviceProfile]:
    out = []
    for s in specs:
        if isinstance(s, DeviceProfile):
            out.append(s)
        elif os.path.exists(str(s)):
            out.append(load_profile(s))
        else:
            out.append(load_preset(str(s)))
    ids = [p.module_id for p in out]
    if len(set(ids)) != len(ids):
        raise ProfileError("duplicate module ids in campaign")
    return out


def module_vpps(profile: DeviceProfile, grid) -> list[float]:
    """Grid values from nominal down to vpp_min; nominal and vpp_min always included."""
    vs = {round(v, 3) for v in grid if v >= profile.vpp_min - 1e-9 and v <= profile.vpp_nominal + 1e-9}
    vs |= {round(profile.vpp_nominal, 3), round(profile.vpp_min, 3)}
    return sorted(vs, reverse=True)


def unit_vpps(cfg: "CampaignConfig", profile: DeviceProfile) -> list[float]:
    vs = set(module_vpps(profile, cfg.vpp_grid))
    if "retention" in cfg.tests:
        vs |= {round(v, 3) for v in cfg.retention_vpps}
    return sorted(vs, reverse=True)


def sample_rows(profile: DeviceProfile, n: int) -> list[int]:
    chunk = n // 4
    stride = profile.rows_per_bank // 4
    return [s * stride + i for s in range(4) for i in range(chunk)]


def unit_plan(cfg: CampaignConfig, profiles: list[DeviceProfile]) -> list[tuple[str, str]]:
    """Ordered (module, unit label) pairs; labels are 'wcdp' or the VPP in mV."""
    plan = []
    for p in profiles:
        plan.append((p.module_id, "wcdp"))
        for v in unit_vpps(cfg, p):
            plan.append((p.module_id, f"{int(round(v * 1000)):04d}mV"))
    return plan


def _profile_digest(p: DeviceProfile) -> str:
    return hashlib.sha256(canonical(profile_to_dict(p)).encode()).hexdigest()[:16]


# -------------------------------------------------------------- units
def _device(cfg: CampaignConfig, p: DeviceProfile, label: str, vpp: float | None = None):
    if vpp is not None and vpp < p.vpp_min - 1e-9:
        # retention below vpp_min: reads stay intact, only leakage changes
        p = replace(p, unreliable_corruption=0.0)
    return build_device(p, derive_seed(cfg.seed, p.module_id),
                        noise_seed=derive_seed(cfg.seed, p.module_id, label))


def _usable(dev, rows: list[int]) -> tuple[list[int], list[int]]:
    ok, edge = [], []
    for r in rows:
        (ok if len(dev.mapping.neighbors(r, 1)) == 2 else edge).append(r)
    return ok, edge


def _run_wcdp(cfg: CampaignConfig, p: DeviceProfile) -> list[dict]:
    dev = _device(cfg, p, "wcdp")
    rows, edge = _usable(dev, sample_rows(p, cfg.rows))
    recs = [seal("edge_rows", {"module_id": p.module_id, "rows": edge})] if edge else []
    for r in rows:
        payload = {"module_id": p.module_id, "row": r, "rowhammer": None, "retention": None,
                   "per_pattern": None}
        if "rowhammer" in cfg.tests or "trcd" in cfg.tests:
            ch = determine_wcdp_rowhammer(dev, r, cfg.iterations)
            payload["rowhammer"] = ch.pattern
            payload["per_pattern"] = [[hc, ber] for hc, ber in ch.per_pattern]
        if "retention" in cfg.tests:
            payload["retention"] = determine_wcdp_retention(dev, r, windows=cfg.retention_windows)
        recs.append(seal("wcdp", payload))
    return recs


def _run_vpp(cfg: CampaignConfig, p: DeviceProfile, vpp: float, wcdp: dict[int, dict]) -> list[dict]:
    label = f"{int(round(vpp * 1000)):04d}mV"
    dev = _device(cfg, p, label, vpp)
    dev.set_vpp(vpp)
    recs = []
    rows = sorted(wcdp)
    base = {"module_id": p.module_id, "vpp": vpp}
    in_sweep = vpp in module_vpps(p, cfg.vpp_grid)
    if "rowhammer" in cfg.tests and in_sweep:
        for r in rows:
            pat = wcdp[r]["rowhammer"]
            if pat is None:
                continue
            try:
                res = characterize_row(dev, r, pat, cfg.iterations)
            except EdgeRowError:
                continue
            recs.append(seal("rowhammer", {
                **base, "row": r, "wcdp": pat, "hc_first": res.hc_first,
                "ber_at_300k": res.ber_at_300k, "ber_iterations": list(res.raw),
                "bracket": list(res.bracket), "iterations": res.iterations,
            }))
    if "trcd" in cfg.tests and in_sweep:
        for r in rows:
            pat = wcdp[r]["rowhammer"]
            pat = 0 if pat is None else pat
            res = measure_trcd_min(dev, r, pat, cfg.iterations, runs=cfg.trcd_runs)
            recs.append(seal("trcd", {
                **base, "row": r, "pattern": pat, "trcd_min": res.trcd_min,
                "unbounded_below": res.unbounded_below, "error": res.error,
                "tested": [[t, f] for t, f in res.tested],
            }))
    if "retention" in cfg.tests:
        pats = {r: wcdp[r]["retention"] for r in rows}
        res = measure_retention(dev, rows, pats, cfg.retention_iterations,
                                windows=cfg.retention_windows)
        for r in rows:
            k0, k1, k2, mx, nflip = [], [], [], [], []
            for w in res.windows:
                per = res.flips[r][w].reshape(-1, 64).sum(axis=1)
                k0.append(int(np.sum(per == 0)))
                k1.append(int(np.sum(per == 1)))
                k2.append(int(np.sum(per >= 2)))
                mx.append(int(per.max()))
                nflip.append(int(per.sum()))
            recs.append(seal("retention", {
                **base, "row": r, "pattern": pats[r], "windows": list(res.windows),
                "ber": [res.ber[r][w] for w in res.windows], "flips": nflip,
                "words_k0": k0, "words_k1": k1, "words_k2p": k2, "max_per_word": mx,
            }))
    return recs


def _unit_path(out: Path, module: str, label: str) -> Path:
    return out / "units" / module / f"{label}.jsonl"


def _marker(module: str, label: str, n: int, digest: str) -> dict:
    return seal("unit_complete", {"module_id": module, "unit": label, "records": n,
                                  "profile_digest": digest})


def _load_unit(path: Path, module: str, label: str, digest: str) -> list[dict] | None:
    """Records of an intact unit file, else None."""
    if not path.exists():
        return None
    try:
        recs = list(read_records(path))
    except (RecordError, OSError) as e:
        log.warning("discarding unit %s/%s: %s", module, label, e)
        return None
    if not recs or recs[-1].get("kind") != "unit_complete":
        return None
    m = recs[-1]
    if (m["module_id"], m["unit"], m["records"], m["profile_digest"]) != (
            module, label, len(recs) - 1, digest):
        return None
    return recs[:-1]


def _execute_unit(args) -> tuple[str, str, list[dict]]:
    cfg, prof, label, wcdp, out = args
    if label == "wcdp":
        recs = _run_wcdp(cfg, prof)
    else:
        recs = _run_vpp(cfg, prof, int(label[:-2]) / 1000.0, wcdp)
    if out is not None:
        path = _unit_path(Path(out), prof.module_id, label)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_records(path, recs + [_marker(prof.module_id, label, len(recs), _profile_digest(prof))])
    return prof.module_id, label, recs


def _wcdp_map(recs: list[dict]) -> dict[int, dict]:
    return {r["row"]: r for r in recs if r["kind"] == "wcdp"}


def run_campaign(cfg: CampaignConfig, resume: bool = False, stop_after: int | None = None,
                 progress=None) -> list[dict]:
    """Run (or resume) a campaign; returns the merged record list.

    ``stop_after`` aborts after that many freshly computed units (used to
    exercise resumption).  With an output directory the merged stream is
    written to ``records.jsonl`` once every unit is complete.
    """
    cfg.validate()
    profiles = load_profiles(cfg.profiles)
    out = Path(cfg.out) if cfg.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if not resume and (out / "units").exists():
            shutil.rmtree(out / "units")
        for f in ("records.jsonl",):
            if (out / f).exists():
                (out / f).unlink()
    device_tests = [t for t in cfg.tests if t in DEVICE_TESTS]
    by_id = {p.module_id: p for p in profiles}
    digests = {p.module_id: _profile_digest(p) for p in profiles}
    done: dict[tuple[str, str], list[dict]] = {}
    plan = unit_plan(cfg, profiles) if device_tests else []
    if resume and out is not None:
        for mod, label in plan:
            recs = _load_unit(_unit_path(out, mod, label), mod, label, digests[mod])
            if recs is not None:
                done[(mod, label)] = recs
    fresh = 0

    def budget_left():
        return stop_after is None or fresh < stop_after

    # WCDP units first: every VPP unit of a module depends on its WCDP unit
    for stage in ("wcdp", "vpp"):
        todo = [(m, l) for m, l in plan if (m, l) not in done and (l == "wcdp") == (stage == "wcdp")]
        args = []
        for m, l in todo:
            w = None if l == "wcdp" else _wcdp_map(done[(m, "wcdp")])
            args.append((cfg, by_id[m], l, w, str(out) if out else None))
        if cfg.jobs > 1 and len(args) > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
                for m, l, recs in ex.map(_execute_unit, args):
                    done[(m, l)] = recs
                    fresh += 1
                    if progress:
                        progress(m, l)
                    if not budget_left():
                        ex.shutdown(cancel_futures=True)
                        raise InterruptedError("campaign stopped early")
        else:
            for a in args:
                if not budget_left():
                    raise InterruptedError("campaign stopped early")
                m, l, recs = _execute_unit(a)
                done[(m, l)] = recs
                fresh += 1
                if progress:
                    progress(m, l)
    merged = [seal("campaign", {"config": cfg.to_dict(), "version": __version__})]
    for p in profiles:
        merged.append(seal("module", {
            "module_id": p.module_id, "manufacturer_id": p.manufacturer_id, "chips": p.chips,
            "organization": p.organization, "vpp_min": p.vpp_min,
            "vpps": module_vpps(p, cfg.vpp_grid), "unit_vpps": unit_vpps(cfg, p), "profile_digest": digests[p.module_id],
            "device_seed": derive_seed(cfg.seed, p.module_id), "notes": p.notes,
        }))
    for mod, label in plan:
        merged.extend(done[(mod, label)])
    if out is not None:
        write_records(out / "records.jsonl", merged)
    return merged
