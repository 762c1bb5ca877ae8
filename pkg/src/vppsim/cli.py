"""Command-line entry point: characterize, circuit, report, list-presets, validate-profile."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import analysis as an
from .campaign import OUT_ENV, CampaignConfig, ConfigError, run_campaign
from .charlib import DEFAULT_ITERATIONS
from .circuit import CircuitParams, MonteCarloConfig, monte_carlo
from .presets import list_presets, load_preset
from .profile import ProfileError, load_profile
from .records import RecordError, canonical, read_records, seal, write_records

log = logging.getLogger("vppsim")

RECORDS = "records.jsonl"
CIRCUIT = "circuit.jsonl"
REPORT_DIR = "report"


def _grid(text: str | None) -> tuple[float, ...] | None:
    """'2.5,2.0,1.5' or 'start:stop:step' (inclusive, descending allowed)."""
    if not text:
        return None
    if ":" in text:
        a, b, s = (float(x) for x in text.split(":"))
        if s <= 0:
            raise ConfigError("grid step must be positive")
        n = int(round(abs(a - b) / s))
        sign = -1 if b < a else 1
        return tuple(round(a + sign * s * i, 4) for i in range(n + 1))
    return tuple(float(x) for x in text.split(",") if x.strip())


def _profiles(values: list[str]) -> list[str]:
    out = []
    for v in values or []:
        for item in v.split(","):
            item = item.strip()
            if item == "all":
                out.extend(list_presets())
            elif item:
                out.append(item)
    if not out:
        raise ConfigError("no profiles given (use --profile ID|PATH|all)")
    return out


def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "vppsim-out")


# ----------------------------------------------------------- commands
def cmd_characterize(args) -> int:
    tests = tuple(t.strip() for t in args.tests.split(",") if t.strip())
    device_tests = tuple(t for t in tests if t != "circuit")
    out = _out_dir(args.out)
    if device_tests:
        cfg = CampaignConfig(
            profiles=_profiles(args.profile), seed=args.seed, tests=device_tests,
            iterations=args.iterations, out=str(out), jobs=args.jobs, rows=args.rows,
            retention_vpps=_grid(args.retention_vpps) or (),
        )
        g = _grid(args.vpp_grid)
        if g:
            cfg.vpp_grid = g
        done = []
        run_campaign(cfg, resume=args.resume,
                     progress=lambda m, l: done.append(log.info("unit %s/%s done", m, l)))
        print(f"wrote {out / RECORDS}")
    elif not tests:
        raise ConfigError("at least one test must be selected")
    if "circuit" in tests:
        _run_circuit(out, args.seed, _grid(args.vpp_grid), args.runs)
    return 0


def _run_circuit(out: Path, seed: int, grid, runs: int) -> None:
    kw = {"vpp_grid": tuple(sorted(set(grid)))} if grid else {}
    cfg = MonteCarloConfig(seed=seed, runs_per_vpp=runs, **kw)
    res = monte_carlo(CircuitParams(), cfg)
    out.mkdir(parents=True, exist_ok=True)
    recs = [seal("circuit_run", {"seed": seed, "runs_per_vpp": runs,
                                 "variation_fraction": cfg.variation_fraction,
                                 "vpp_grid": list(cfg.vpp_grid)})]
    recs += [seal("circuit_point", row) for row in res.summary_rows()]
    for q in ("trcd_min", "tras_min"):
        recs += [seal("circuit_hist", h) for h in res.histogram_records(q)]
    write_records(out / CIRCUIT, recs)
    _circuit_series(recs, out)
    print(f"wrote {out / CIRCUIT}")


def cmd_circuit(args) -> int:
    _run_circuit(_out_dir(args.out), args.seed, _grid(args.vpp_grid), args.runs)
    return 0


def _circuit_series(recs: list[dict], out: Path) -> None:
    for q, name in (("trcd_min", "fig7b.csv"), ("tras_min", "fig8b.csv")):
        rows = [(h["vpp"], h["bin_lo"], h["bin_hi"], h["count"])
                for h in recs if h["kind"] == "circuit_hist" and h["quantity"] == q]
        an.write_series(out / name, ["vpp", "bin_lo_ns", "bin_hi_ns", "count"], rows)
    pts = [r for r in recs if r["kind"] == "circuit_point"]
    an.write_series(out / "circuit_summary.csv",
                    ["vpp", "runs", "failures", "trcd_mean", "trcd_std", "trcd_worst",
                     "tras_mean", "tras_worst", "v_saturation"],
                    [(p["vpp"], p["runs"], p["failures"], p["trcd_mean"], p["trcd_std"],
                      p["trcd_worst"], p["tras_mean"], p["tras_worst"], p["v_saturation"])
                     for p in pts])


def _load(path: Path) -> list[dict]:
    return list(read_records(path, strict=True))


def _f(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return float(x)


def build_report(records: list[dict], out: Path, seed: int = 0) -> dict:
    """Every analysis over one record stream; CSV series plus summary.json in ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    summary: dict = {"diagnostics": []}
    mfr = {r["module_id"]: r["manufacturer_id"] for r in records if r["kind"] == "module"}
    rh = [r for r in records if r["kind"] == "rowhammer"]
    if rh:
        sweeps = an.normalize_and_band(records, seed=seed)
        for mod, sw in sweeps.items():
            if sw.excluded_ber or sw.excluded_hc:
                summary["diagnostics"].append(
                    f"{mod}: {sw.excluded_ber} row(s) without a BER baseline, "
                    f"{sw.excluded_hc} without an HC_first baseline")
            if len(sw.vpps) < 2:
                summary["diagnostics"].append(f"{mod}: single VPP level, normalization only")
        for name, key in (("fig2.csv", "ber"), ("fig3.csv", "hc")):
            rows = []
            for mod, sw in sweeps.items():
                mean, band, n = getattr(sw, f"{key}_mean"), getattr(sw, f"{key}_band"), getattr(sw, f"n_{key}")
                for v, m, (lo, hi), k in zip(sw.vpps, mean, band, n):
                    rows.append((mod, v, m, lo, hi, k))
            an.write_series(out / name, ["module", "vpp", "mean", "band_lo", "band_hi", "rows"], rows)
        at_min = an.normalized_at_vppmin(records, sweeps=sweeps)
        fleet = {}
        for metric, fig in (("ber", "fig4.csv"), ("hc_first", "fig5.csv")):
            hists = an.population_density(at_min[metric])
            rows = [(m, lo, hi, d) for m, h in hists.items()
                    for lo, hi, d in zip(h.edges[:-1], h.edges[1:], h.density)]
            an.write_series(out / fig, ["manufacturer", "bin_lo", "bin_hi", "density"], rows)
            allv = np.concatenate([v for v in at_min[metric].values()]) if at_min[metric] else np.zeros(0)
            allv = allv[np.isfinite(allv)]
            fleet[metric] = {
                "mean": _f(np.mean(allv)) if allv.size else None,
                "frac_above_1": _f(np.mean(allv > 1)) if allv.size else None,
                "frac_below_1": _f(np.mean(allv < 1)) if allv.size else None,
                "per_manufacturer": {m: {"mean": _f(np.mean(h_v)), "support": [_f(h.support[0]), _f(h.support[1])],
                                         "frac_above_1": _f(h.frac_above_1), "frac_below_1": _f(h.frac_below_1),
                                         "rows": h.n}
                                     for (m, h), h_v in zip(hists.items(), at_min[metric].values())},
            }
        summary["normalized_at_vpp_min"] = fleet
        try:
            summary["cv"] = {k: _f(v) if isinstance(v, float) else v
                             for k, v in an.cv_percentiles(records).items()}
        except ValueError as e:
            summary["diagnostics"].append(f"cv: {e}")
        rs = an.module_rowhammer_summary(records)
        rec_rows, rec = [], {}
        for mod, by_v in rs.items():
            v = an.recommended_vpp(by_v)
            rec[mod] = v
            hc, ber = by_v.get(v, (None, None)) if v is not None else (None, None)
            nom = by_v.get(max(by_v)) if by_v else (None, None)
            rec_rows.append((mod, mfr.get(mod, ""), nom[0], nom[1], min(by_v), by_v[min(by_v)][0],
                             by_v[min(by_v)][1], v, hc, ber))
        an.write_series(out / "recommended_vpp.csv",
                        ["module", "manufacturer", "hc_first_nominal", "ber_nominal", "vpp_min",
                         "hc_first_vpp_min", "ber_vpp_min", "vpp_rec", "hc_first_rec", "ber_rec"],
                        rec_rows)
        summary["recommended_vpp"] = rec
    if any(r["kind"] == "trcd" for r in records):
        gb = an.guardband_report(records)
        rows = [(mod, v, t if math.isfinite(t) else None, g if math.isfinite(g) else None)
                for mod, d in gb.modules.items()
                for v, t, g in zip(d["vpps"], d["trcd_min"], d["guardband"])]
        an.write_series(out / "fig6.csv", ["module", "vpp", "trcd_min_ns", "guardband"], rows)
        summary["trcd"] = {"exceeding_nominal": gb.exceeding_nominal,
                           "mean_guardband_reduction": _f(gb.mean_reduction),
                           "reductions": {k: _f(v) for k, v in gb.reductions.items()}}
    rt = [r for r in records if r["kind"] == "retention"]
    if rt:
        acc = defaultdict(list)
        for r in rt:
            for w, b in zip(r["windows"], r["ber"]):
                acc[(mfr.get(r["module_id"], r["module_id"][:1]), round(r["vpp"], 3), w)].append(b)
        an.write_series(out / "fig9.csv", ["manufacturer", "vpp", "trefw_s", "mean_ber", "rows"],
                        [(m, v, w, float(np.mean(b)), len(b)) for (m, v, w), b in sorted(acc.items())])
        at4 = defaultdict(list)
        for r in rt:
            for w, b in zip(r["windows"], r["ber"]):
                if abs(w - 4.096) < 1e-6:
                    at4[(mfr.get(r["module_id"], r["module_id"][:1]), round(r["vpp"], 3))].append(b)
        an.write_series(out / "fig9b.csv", ["manufacturer", "vpp", "ber", "rows"],
                        [(m, v, float(b), int(c)) for (m, v), bs in sorted(at4.items())
                         for b, c in zip(*np.unique(np.round(bs, 6), return_counts=True))])
        ff = an.first_failure_refresh_fractions(records)
        # rows per number of erroneous words at each module's first failing window
        hist = defaultdict(lambda: defaultdict(int))
        vmin = {r["module_id"]: r["vpp_min"] for r in records if r["kind"] == "module"}
        for r in rt:
            w0 = ff["first_failure"].get(r["module_id"])
            if w0 is None or abs(r["vpp"] - vmin[r["module_id"]]) > 1e-9:
                continue
            j = next(i for i, w in enumerate(r["windows"]) if abs(w - w0) < 1e-9)
            hist[w0][r["words_k1"][j] + r["words_k2p"][j]] += 1
        an.write_series(out / "fig10.csv", ["trefw_s", "erroneous_words", "rows"],
                        [(w, k, n) for w in sorted(hist) for k, n in sorted(hist[w].items())])
        summary["retention"] = {
            "first_failure": ff["first_failure"],
            "selective_refresh": {str(w): _f(f) for w, f in ff["fractions"].items()},
            "modules_by_window": {str(w): m for w, m in ff["modules"].items()},
            "first_failure_lowest_vpp": an.first_failure_refresh_fractions(records, "min")["first_failure"],
            "secded_correctable_at_first_failure": {
                mod: bool(all(m <= 1 for r in rt if r["module_id"] == mod and abs(r["vpp"] - vmin[mod]) < 1e-9
                              for m in [r["max_per_word"][r["windows"].index(w0)]]))
                for mod, w0 in ff["first_failure"].items()},
            "mean_ber_4s": {str(v): an.retention_mean_ber(records, v, 4.096)
                            for v in sorted({round(r["vpp"], 3) for r in rt}, reverse=True)},
        }
    with open(out / "summary.json", "w") as fh:
        fh.write(json.dumps(json.loads(canonical(summary)), indent=2, sort_keys=True) + "\n")
    return summary


def cmd_report(args) -> int:
    src = Path(args.input or _out_dir(None))
    out = Path(args.out) if args.out else src / REPORT_DIR
    records = []
    found = False
    if (src / RECORDS).exists():
        records = _load(src / RECORDS)
        found = True
    if (src / CIRCUIT).exists():
        out.mkdir(parents=True, exist_ok=True)
        _circuit_series(_load(src / CIRCUIT), out)
        found = True
    if not found:
        raise ConfigError(f"no {RECORDS} or {CIRCUIT} in {src}")
    summary = build_report(records, out, seed=args.seed)
    for d in summary["diagnostics"]:
        print(f"note: {d}", file=sys.stderr)
    rec = summary.get("recommended_vpp", {})
    if rec:
        print("module  vpp_rec")
        for mod, v in rec.items():
            print(f"{mod:<7} {v}")
    print(f"wrote report to {out}")
    return 0


def cmd_list_presets(args) -> int:
    for name in list_presets():
        p = load_preset(name)
        print(f"{name}\t{p.manufacturer_id}\t{p.organization}\tchips={p.chips}\tvpp_min={p.vpp_min}")
    return 0


def cmd_validate_profile(args) -> int:
    bad = 0
    for path in args.paths:
        try:
            p = load_profile(path)
            p.validate()
            print(f"{path}: ok ({p.module_id})")
        except (ProfileError, OSError, ValueError) as e:
            print(f"{path}: {e}", file=sys.stderr)
            bad += 1
    return 1 if bad else 0


# ----------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vppsim", description="Reduced-VPP DRAM characterization simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("characterize", help="run a characterization campaign")
    c.add_argument("--profile", action="append", help="preset id, YAML path, or 'all' (repeatable)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--vpp-grid", help="comma list or start:stop:step (default 2.5..1.0 by 0.1)")
    c.add_argument("--tests", default="rowhammer", help="comma list of rowhammer,trcd,retention,circuit")
    c.add_argument("--iterations", type=int, default=DEFAULT_ITERATIONS)
    c.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./vppsim-out)")
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--resume", action="store_true", help="reuse completed units in --out")
    c.add_argument("--rows", type=int, default=256, help="sampled rows per module")
    c.add_argument("--retention-vpps", help="extra retention-only VPP levels")
    c.add_argument("--runs", type=int, default=10_000, help="Monte-Carlo runs per VPP (circuit test)")
    c.set_defaults(func=cmd_characterize)

    m = sub.add_parser("circuit", help="Monte-Carlo activation/restoration study")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--vpp-grid", help="default 1.5..2.5 by 0.1")
    m.add_argument("--runs", type=int, default=10_000)
    m.add_argument("--out")
    m.set_defaults(func=cmd_circuit)

    r = sub.add_parser("report", help="analyse a campaign directory")
    r.add_argument("input", nargs="?", help=f"campaign directory (default ${OUT_ENV})")
    r.add_argument("--out", help="report directory (default <input>/report)")
    r.add_argument("--seed", type=int, default=0, help="bootstrap seed")
    r.set_defaults(func=cmd_report)

    lp = sub.add_parser("list-presets", help="list shipped module presets")
    lp.set_defaults(func=cmd_list_presets)

    vp = sub.add_parser("validate-profile", help="check profile YAML files")
    vp.add_argument("paths", nargs="+")
    vp.set_defaults(func=cmd_validate_profile)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RecordError as e:
        print(f"error: rejected record stream: {e}", file=sys.stderr)
        return 3
    except (ConfigError, ProfileError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
