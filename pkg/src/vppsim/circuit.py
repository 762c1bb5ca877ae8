"""Cell / bitline / sense-amplifier activation model.

A lumped RC network is integrated with a fixed 1 ps forward-Euler step:

    cell capacitor --R_cell-- access NMOS --(near bitline)--R_bl--(far bitline)
                                                                 |
                                      cross-coupled sense amp ---+--- reference bitline

The access transistor and the four sense-amplifier transistors follow a
square-law model.  The access transistor threshold carries a linear
body-effect term, which is what makes the restored cell voltage saturate
below VDD when VPP is lowered.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numba import njit

NS = 1e-9

# Order of the per-run perturbation vector.  Every entry is an independent
# component instance; the two halves of the sense amplifier are separate.
COMPONENTS = (
    "cell_capacitance",
    "cell_resistance",
    "bitline_capacitance",
    "reference_capacitance",
    "bitline_resistance",
    "access_w",
    "access_l",
    "san1_w",
    "san1_l",
    "san2_w",
    "san2_l",
    "sap1_w",
    "sap1_l",
    "sap2_w",
    "sap2_l",
)

STATUS_OK = 0
STATUS_NO_TRCD = 1
STATUS_NO_TRAS = 2
STATUS_WRONG_SENSE = 3


@dataclass(frozen=True)
class CircuitParams:
    cell_capacitance: float = 16.8e-15
    cell_resistance: float = 698.0
    bitline_capacitance: float = 100.5e-15
    bitline_resistance: float = 6980.0
    access_w: float = 55e-9
    access_l: float = 85e-9
    senseamp_nmos_w: float = 1.3e-6
    senseamp_nmos_l: float = 0.1e-6
    senseamp_pmos_w: float = 0.9e-6
    senseamp_pmos_l: float = 0.1e-6
    vdd: float = 1.2
    vpp: float = 2.5
    # threshold at zero source bias and its body-effect slope
    vth_access: float = 0.5295
    body_effect: float = 0.1905
    v_readable_fraction: float = 0.8888
    restoration_completion_fraction: float = 0.99
    # process transconductance k' = mu*Cox (A/V^2)
    kn: float = 300e-6
    kp: float = 150e-6
    access_kn: float = 142.3e-6
    vth_senseamp: float = 0.35
    # scales the latch transconductance; absorbs wiring and SA load
    senseamp_gain: float = 0.04865
    wordline_rise: float = 0.1376  # ns
    # latch fires once |v_bitline - v_reference| reaches this margin
    sense_margin: float = 0.05044
    sense_enable_time: float = 0.0  # ns, earliest allowed enable
    # command decode + wordline driver delay ahead of the wordline edge;
    # added to both latencies, waveforms stay referenced to wordline onset
    decode_latency: float = 5.005  # ns

    def validate(self) -> None:
        for name in (
            "cell_capacitance",
            "cell_resistance",
            "bitline_capacitance",
            "bitline_resistance",
            "access_w",
            "access_l",
            "senseamp_nmos_w",
            "senseamp_nmos_l",
            "senseamp_pmos_w",
            "senseamp_pmos_l",
            "vdd",
            "vpp",
            "kn",
            "kp",
            "access_kn",
            "senseamp_gain",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.decode_latency < 0 or self.sense_enable_time < 0:
            raise ValueError("latencies must be non-negative")
        if not 0 < self.v_readable_fraction < 1:
            raise ValueError("v_readable_fraction must be in (0, 1)")
        if not 0 < self.restoration_completion_fraction < 1:
            raise ValueError("restoration_completion_fraction must be in (0, 1)")

    def with_vpp(self, vpp: float) -> "CircuitParams":
        return replace(self, vpp=float(vpp))

    def to_dict(self) -> dict:
        return asdict(self)


def saturation_voltage(params: CircuitParams) -> float:
    """Highest voltage the access transistor can restore into the cell.

    Restoration stops when vpp - v_cell equals the body-biased threshold
    vth_access + body_effect * v_cell, so the cut-off point is
    (vpp - vth_access) / (1 + body_effect), clamped to VDD.
    """
    v = (params.vpp - params.vth_access) / (1.0 + params.body_effect)
    return float(min(params.vdd, max(v, 0.0)))


def charge_sharing_voltage(
    params: CircuitParams, v_cell_initial: float, v_precharge: float
) -> float:
    for v in (v_cell_initial, v_precharge):
        if not -1e-12 <= v <= params.vdd + 1e-12:
            raise ValueError(f"voltage {v} outside [0, vdd]")
    cb, cc = params.bitline_capacitance, params.cell_capacitance
    return (cb * v_precharge + cc * v_cell_initial) / (cb + cc)


def fit_access_threshold(
    vpp_points=(1.9, 1.8, 1.7), reductions=(0.041, 0.110, 0.181), vdd: float = 1.2
) -> tuple[float, float]:
    """Least-squares (vth_access, body_effect) from saturation-voltage reductions.

    The saturated voltage is linear in vpp: v = (vpp - vth0) / (1 + k), so a
    straight-line fit of v against vpp recovers both constants.
    """
    x = np.asarray(vpp_points, dtype=float)
    v = vdd * (1.0 - np.asarray(reductions, dtype=float))
    slope, intercept = np.polyfit(x, v, 1)
    k = 1.0 / slope - 1.0
    vth0 = -intercept * (1.0 + k)
    return float(vth0), float(k)


@dataclass
class ActivationResult:
    time_ns: np.ndarray
    bitline_waveform: np.ndarray
    cell_waveform: np.ndarray
    trcd_min: float
    tras_min: float
    v_saturation: float
    status: int = STATUS_OK
    # cell-side half of the bitline; bitline_waveform is the sense-amp side
    bitline_near_waveform: np.ndarray | None = None

    @property
    def converged(self) -> bool:
        return self.status == STATUS_OK

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_ns", "v_bitline", "v_cell"])
            for t, b, c in zip(self.time_ns, self.bitline_waveform, self.cell_waveform):
                w.writerow([f"{t:.4f}", f"{b:.6f}", f"{c:.6f}"])


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, result: ActivationResult):
        super().__init__(message)
        self.result = result


# ---------------------------------------------------------------------------
# integration kernel


@njit(cache=True, inline="always")
def _nmos(beta, vg, va, vb, vth0, body):
    # current flowing from terminal a to terminal b (negative if b -> a)
    if va >= vb:
        vd, vs, sign = va, vb, 1.0
    else:
        vd, vs, sign = vb, va, -1.0
    vov = vg - vs - (vth0 + body * vs)
    if vov <= 0.0:
        return 0.0
    vds = vd - vs
    if vds < vov:
        return sign * beta * (vov * vds - 0.5 * vds * vds)
    return sign * 0.5 * beta * vov * vov


@njit(cache=True)
def _integrate(
    comp,  # perturbed component values, ordered as COMPONENTS
    vpp,
    vdd,
    vth0,
    body,
    kn,
    kp,
    kacc,
    vt_sa,
    sa_gain,
    wl_rise,
    t_sae,
    margin,
    v_read,
    restore_frac,
    dt,
    n_steps,
    sense_on,
    v_cell0,
    record_every,
    out_bl,
    out_cell,
    out_near,
):
    cc = comp[0]
    rc = comp[1]
    cb = comp[2]
    cref = comp[3]
    rb = comp[4]
    beta_acc = kacc * comp[5] / comp[6]
    bn1 = sa_gain * kn * comp[7] / comp[8]
    bn2 = sa_gain * kn * comp[9] / comp[10]
    bp1 = sa_gain * kp * comp[11] / comp[12]
    bp2 = sa_gain * kp * comp[13] / comp[14]

    vsat = (vpp - vth0) / (1.0 + body)
    if vsat > vdd:
        vsat = vdd
    v_restore = restore_frac * vsat

    half = 0.5 * vdd
    vc = v_cell0
    vn = half  # near-cell bitline node
    vs = half  # sense-amp side bitline node
    vr = half  # reference bitline
    cn = 0.5 * cb
    cs = 0.5 * cb
    i_prev = 0.0
    trcd = -1.0
    tras = -1.0
    wrong = False
    enabled = False
    n_rec = 0
    for step in range(n_steps):
        t = step * dt
        if record_every > 0 and step % record_every == 0 and n_rec < out_bl.shape[0]:
            out_bl[n_rec] = vs
            out_cell[n_rec] = vc
            out_near[n_rec] = vn
            n_rec += 1
        vg = vpp if t >= wl_rise else vpp * t / wl_rise
        # series cell resistance: shift the cell terminal by the previous drop
        v_term = vc + i_prev * rc
        i_acc = _nmos(beta_acc, vg, vn, v_term, vth0, body)  # bitline -> cell
        i_prev = i_acc
        i_rb = (vn - vs) / rb  # near -> far
        dvc = i_acc / cc
        dvn = (-i_acc - i_rb) / cn
        dvs = i_rb / cs
        dvr = 0.0
        if sense_on and not enabled and t >= t_sae and abs(vs - vr) >= margin:
            enabled = True
        if enabled:
            # n1 pulls vs down (gate vr), n2 pulls vr down (gate vs)
            i_n1 = _nmos(bn1, vr, vs, 0.0, vt_sa, 0.0)
            i_n2 = _nmos(bn2, vs, vr, 0.0, vt_sa, 0.0)
            # p1 pulls vs up (gate vr), p2 pulls vr up (gate vs); mirrored nmos
            i_p1 = _nmos(bp1, vdd - vr, vdd - vs, 0.0, vt_sa, 0.0)
            i_p2 = _nmos(bp2, vdd - vs, vdd - vr, 0.0, vt_sa, 0.0)
            dvs += (i_p1 - i_n1) / cs
            dvr += (i_p2 - i_n2) / cref
        vc += dvc * dt
        vn += dvn * dt
        vs_new = vs + dvs * dt
        vr += dvr * dt
        t_next = t + dt
        if trcd < 0.0 and vs_new >= v_read:
            frac = (v_read - vs) / (vs_new - vs) if vs_new != vs else 1.0
            trcd = t + frac * dt
        vs = vs_new
        if enabled and trcd < 0.0 and vs < 0.05 * vdd:
            wrong = True
            break
        if tras < 0.0 and enabled and vc >= v_restore:
            tras = t_next
        if trcd >= 0.0 and tras >= 0.0 and record_every <= 0:
            break
    return trcd, tras, wrong, n_rec


def _nominal_components(p: CircuitParams) -> np.ndarray:
    return np.array(
        [
            p.cell_capacitance,
            p.cell_resistance,
            p.bitline_capacitance,
            p.bitline_capacitance,
            p.bitline_resistance,
            p.access_w,
            p.access_l,
            p.senseamp_nmos_w,
            p.senseamp_nmos_l,
            p.senseamp_nmos_w,
            p.senseamp_nmos_l,
            p.senseamp_pmos_w,
            p.senseamp_pmos_l,
            p.senseamp_pmos_w,
            p.senseamp_pmos_l,
        ],
        dtype=np.float64,
    )


def _run(
    p: CircuitParams,
    comp: np.ndarray,
    duration_ns: float,
    dt_ps: float,
    sense_on: bool,
    v_cell0: float | None,
    record_every: int,
):
    dt = dt_ps * 1e-12
    n_steps = int(round(duration_ns * NS / dt))
    if v_cell0 is None:
        v_cell0 = saturation_voltage(p)
    n_rec = (n_steps + record_every - 1) // record_every if record_every > 0 else 0
    out_bl = np.zeros(n_rec)
    out_cell = np.zeros(n_rec)
    out_near = np.zeros(n_rec)
    trcd, tras, wrong, got = _integrate(
        comp,
        p.vpp,
        p.vdd,
        p.vth_access,
        p.body_effect,
        p.kn,
        p.kp,
        p.access_kn,
        p.vth_senseamp,
        p.senseamp_gain,
        p.wordline_rise * NS,
        p.sense_enable_time * NS,
        p.sense_margin,
        p.v_readable_fraction * p.vdd,
        p.restoration_completion_fraction,
        dt,
        n_steps,
        sense_on,
        float(v_cell0),
        record_every,
        out_bl,
        out_cell,
        out_near,
    )
    if wrong:
        status = STATUS_WRONG_SENSE
    elif trcd < 0:
        status = STATUS_NO_TRCD
    elif tras < 0:
        status = STATUS_NO_TRAS
    else:
        status = STATUS_OK
    trcd_ns = trcd / NS + p.decode_latency if trcd >= 0 else math.nan
    tras_ns = tras / NS + p.decode_latency if tras >= 0 else math.nan
    return trcd_ns, tras_ns, status, out_bl[:got], out_cell[:got], out_near[:got]


def simulate_activation(
    params: CircuitParams,
    duration: float = 60.0,
    *,
    dt_ps: float = 1.0,
    sense_amp: bool = True,
    v_cell_initial: float | None = None,
    record_every: int = 10,
    raise_on_failure: bool = False,
) -> ActivationResult:
    """Integrate one activation starting at the ACT command (t = 0).

    The cell starts at ``v_cell_initial`` (default: fully restored, i.e. the
    saturation voltage for this VPP) and both bitlines at VDD/2.
    """
    params.validate()
    if duration < 40.0:
        raise ValueError("duration must be at least 40 ns")
    if dt_ps > 1.0:
        raise ValueError("integration step must be <= 1 ps")
    if params.vpp <= params.vth_access:
        raise ValueError("vpp must exceed vth_access")
    comp = _nominal_components(params)
    trcd, tras, status, bl, cell, near = _run(
        params, comp, duration, dt_ps, sense_amp, v_cell_initial, record_every
    )
    t = np.arange(len(bl)) * record_every * dt_ps * 1e-3
    res = ActivationResult(
        time_ns=t,
        bitline_waveform=bl,
        cell_waveform=cell,
        trcd_min=trcd,
        tras_min=tras,
        v_saturation=saturation_voltage(params),
        status=status,
        bitline_near_waveform=near,
    )
    if raise_on_failure and sense_amp and status != STATUS_OK:
        raise NonConvergenceError(f"activation did not complete (status {status})", res)
    return res


@njit(cache=True)
def _batch(
    comps, vpp, vdd, vth0, body, kn, kp, kacc, vt_sa, sa_gain, wl_rise, t_sae, margin,
    v_read, restore_frac, dt, n_steps, v_cell0, trcd_out, tras_out, status_out,
):
    dummy = np.zeros(0)
    for i in range(comps.shape[0]):
        trcd, tras, wrong, _ = _integrate(
            comps[i], vpp, vdd, vth0, body, kn, kp, kacc, vt_sa, sa_gain, wl_rise,
            t_sae, margin, v_read, restore_frac, dt, n_steps, True, v_cell0,
            0, dummy, dummy, dummy,
        )
        trcd_out[i] = trcd
        tras_out[i] = tras
        if wrong:
            status_out[i] = STATUS_WRONG_SENSE
        elif trcd < 0.0:
            status_out[i] = STATUS_NO_TRCD
        elif tras < 0.0:
            status_out[i] = STATUS_NO_TRAS
        else:
            status_out[i] = STATUS_OK


def default_vpp_grid() -> tuple[float, ...]:
    return tuple(round(1.5 + 0.1 * i, 1) for i in range(11))


@dataclass(frozen=True)
class MonteCarloConfig:
    variation_fraction: float = 0.05
    runs_per_vpp: int = 10_000
    vpp_grid: tuple[float, ...] = field(default_factory=default_vpp_grid)
    seed: int = 0
    duration: float = 80.0  # ns
    dt_ps: float = 1.0
    histogram_bins: int = 60

    def validate(self) -> None:
        if not 0.0 <= self.variation_fraction <= 0.2:
            raise ValueError("variation_fraction must lie in [0, 0.2]")
        if self.runs_per_vpp < 1:
            raise ValueError("runs_per_vpp must be >= 1")
        grid = np.asarray(self.vpp_grid, dtype=float)
        if grid.size == 0 or np.any(np.diff(grid) <= 0):
            raise ValueError("vpp_grid must be non-empty and strictly increasing")


def perturbations(config: MonteCarloConfig, n_components: int = len(COMPONENTS)) -> np.ndarray:
    """Multiplicative factors, one row per run.

    Each run draws from its own generator seeded with (seed, run index), so a
    run's perturbation does not depend on how runs are scheduled or batched.
    """
    out = np.empty((config.runs_per_vpp, n_components))
    a = config.variation_fraction
    for i in range(config.runs_per_vpp):
        rng = np.random.default_rng([config.seed, i])
        out[i] = 1.0 + rng.uniform(-a, a, n_components)
    return out


@dataclass
class Distribution:
    """Summary of one quantity over the converged runs at one VPP."""

    values: np.ndarray
    failures: int

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values.size else math.nan

    @property
    def std(self) -> float:
        return float(np.std(self.values)) if self.values.size else math.nan

    @property
    def min(self) -> float:
        return float(np.min(self.values)) if self.values.size else math.nan

    @property
    def max(self) -> float:
        return float(np.max(self.values)) if self.values.size else math.nan

    def histogram(self, bins: int = 60):
        if not self.values.size:
            return np.zeros(0), np.zeros(0)
        lo, hi = self.min, self.max
        if hi <= lo:
            hi = lo + 1e-9
        counts, edges = np.histogram(self.values, bins=bins, range=(lo, hi))
        return counts, edges

    def summary(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "max": self.max,
            "n": int(self.values.size),
            "failures": self.failures,
        }


@dataclass
class VppDistribution:
    vpp: float
    trcd_min: Distribution
    tras_min: Distribution
    v_saturation: Distribution
    runs: int
    failures: int
    per_run_trcd: np.ndarray
    per_run_tras: np.ndarray

    @property
    def failure_fraction(self) -> float:
        return self.failures / self.runs

    @property
    def reliable(self) -> bool:
        # a grid point is usable when fewer than 0.1% of runs fail
        return self.failure_fraction < 1e-3

    @property
    def worst_trcd(self) -> float:
        return self.trcd_min.max


@dataclass
class MonteCarloResult:
    config: MonteCarloConfig
    params: CircuitParams
    points: dict[float, VppDistribution]

    def __getitem__(self, vpp: float) -> VppDistribution:
        return self.points[round(float(vpp), 4)]

    def summary_rows(self) -> list[dict]:
        rows = []
        for vpp, d in sorted(self.points.items()):
            rows.append(
                {
                    "vpp": vpp,
                    "runs": d.runs,
                    "failures": d.failures,
                    "reliable": d.reliable,
                    "trcd_mean": d.trcd_min.mean,
                    "trcd_std": d.trcd_min.std,
                    "trcd_worst": d.trcd_min.max,
                    "tras_mean": d.tras_min.mean,
                    "tras_std": d.tras_min.std,
                    "tras_worst": d.tras_min.max,
                    "v_saturation": d.v_saturation.mean,
                }
            )
        return rows

    def histogram_records(self, quantity: str = "trcd_min") -> list[dict]:
        out = []
        for vpp, d in sorted(self.points.items()):
            counts, edges = getattr(d, quantity).histogram(self.config.histogram_bins)
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                out.append(
                    {"vpp": vpp, "quantity": quantity, "bin_lo": float(lo),
                     "bin_hi": float(hi), "count": int(c)}
                )
        return out


def simulate_batch(params: CircuitParams, factors: np.ndarray, duration: float = 80.0,
                   dt_ps: float = 1.0):
    """Run one activation per row of ``factors`` (multiplicative perturbations)."""
    params.validate()
    comps = _nominal_components(params)[None, :] * factors
    n = comps.shape[0]
    trcd = np.empty(n)
    tras = np.empty(n)
    status = np.empty(n, dtype=np.int64)
    dt = dt_ps * 1e-12
    _batch(
        np.ascontiguousarray(comps), params.vpp, params.vdd, params.vth_access,
        params.body_effect, params.kn, params.kp, params.access_kn, params.vth_senseamp,
        params.senseamp_gain, params.wordline_rise * NS, params.sense_enable_time * NS,
        params.sense_margin, params.v_readable_fraction * params.vdd,
        params.restoration_completion_fraction, dt, int(round(duration * NS / dt)),
        saturation_voltage(params), trcd, tras, status,
    )
    trcd_ns = np.where(trcd >= 0, trcd / NS + params.decode_latency, np.nan)
    tras_ns = np.where(tras >= 0, tras / NS + params.decode_latency, np.nan)
    return trcd_ns, tras_ns, status


def monte_carlo(params: CircuitParams, config: MonteCarloConfig) -> MonteCarloResult:
    config.validate()
    factors = perturbations(config)
    points = {}
    for vpp in config.vpp_grid:
        p = params.with_vpp(vpp)
        trcd, tras, status = simulate_batch(p, factors, config.duration, config.dt_ps)
        ok = status == STATUS_OK
        fails = int((~ok).sum())
        vsat = np.full(int(ok.sum()), saturation_voltage(p))
        points[round(float(vpp), 4)] = VppDistribution(
            vpp=float(vpp),
            trcd_min=Distribution(trcd[ok], fails),
            tras_min=Distribution(tras[ok], fails),
            v_saturation=Distribution(vsat, fails),
            runs=config.runs_per_vpp,
            failures=fails,
            per_run_trcd=trcd,
            per_run_tras=tras,
        )
    return MonteCarloResult(config=config, params=params, points=points)


def guardband(trcd_ns: float, nominal: float = 13.5) -> float:
    return (nominal - trcd_ns) / nominal
