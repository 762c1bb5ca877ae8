"""Statistical device profiles and their versioned YAML representation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from scipy import stats

__all__ = [
    "PROFILE_SCHEMA_VERSION",
    "Distribution",
    "Point",
    "Uniform",
    "TruncNormal",
    "Gamma",
    "LogNormal",
    "Mixture",
    "WeakRowSpec",
    "DeviceProfile",
    "ProfileError",
    "dist_from_dict",
    "load_profile",
    "save_profile",
    "profile_to_dict",
    "profile_from_dict",
]

PROFILE_SCHEMA_VERSION = 1
MANUFACTURERS = ("A", "B", "C")


class ProfileError(ValueError):
    pass


class Distribution:
    """Base class. Subclasses sample strictly through the supplied generator."""

    kind: str = ""

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def support(self) -> tuple[float, float]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items()}
        return {"kind": self.kind, **d}


@dataclass(frozen=True)
class Point(Distribution):
    value: float
    kind = "point"

    def sample(self, rng, size):
        return np.full(size, float(self.value))

    def mean(self):
        return float(self.value)

    def support(self):
        return (float(self.value), float(self.value))


@dataclass(frozen=True)
class Uniform(Distribution):
    low: float
    high: float
    kind = "uniform"

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)

    def mean(self):
        return 0.5 * (self.low + self.high)

    def support(self):
        return (float(self.low), float(self.high))


@dataclass(frozen=True)
class TruncNormal(Distribution):
    mu: float
    sigma: float
    low: float = -math.inf
    high: float = math.inf
    kind = "truncnormal"

    def _frozen(self):
        a = (self.low - self.mu) / self.sigma
        b = (self.high - self.mu) / self.sigma
        return stats.truncnorm(a, b, loc=self.mu, scale=self.sigma)

    def sample(self, rng, size):
        if self.sigma == 0:
            return np.full(size, float(self.mu))
        # inverse-CDF keeps the draw count fixed at ``size`` (stable streams)
        return self._frozen().ppf(rng.random(size))

    def mean(self):
        return float(self.mu) if self.sigma == 0 else float(self._frozen().mean())

    def support(self):
        return (float(self.low), float(self.high))


@dataclass(frozen=True)
class Gamma(Distribution):
    """``loc + sign * Gamma(shape, scale)``; sign -1 reflects below ``loc``."""

    shape: float
    scale: float
    loc: float = 0.0
    sign: int = 1
    kind = "gamma"

    def sample(self, rng, size):
        return self.loc + self.sign * rng.gamma(self.shape, self.scale, size)

    def mean(self):
        return self.loc + self.sign * self.shape * self.scale

    def support(self):
        return (self.loc, math.inf) if self.sign > 0 else (-math.inf, self.loc)


@dataclass(frozen=True)
class LogNormal(Distribution):
    """exp(N(mu, sigma)) truncated to [low, high] by inverse CDF."""

    mu: float
    sigma: float
    low: float = 0.0
    high: float = math.inf
    kind = "lognormal"

    def _cdf(self, x):
        if x <= 0:
            return 0.0
        if math.isinf(x):
            return 1.0
        return float(stats.norm.cdf((math.log(x) - self.mu) / self.sigma))

    def sample(self, rng, size):
        lo, hi = self._cdf(self.low), self._cdf(self.high)
        u = lo + (hi - lo) * rng.random(size)
        return np.exp(self.mu + self.sigma * stats.norm.ppf(u))

    def cdf(self, x: float) -> float:
        lo, hi = self._cdf(self.low), self._cdf(self.high)
        return min(1.0, max(0.0, (self._cdf(x) - lo) / (hi - lo)))

    def mean(self):
        return float(stats.lognorm(self.sigma, scale=math.exp(self.mu)).expect(
            lb=self.low, ub=self.high, conditional=True))

    def support(self):
        return (float(self.low), float(self.high))


@dataclass(frozen=True)
class Mixture(Distribution):
    weights: tuple[float, ...]
    components: tuple[Distribution, ...]
    kind = "mixture"

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "components", tuple(self.components))

    def sample(self, rng, size):
        w = np.asarray(self.weights) / sum(self.weights)
        which = rng.choice(len(w), size=size, p=w)
        draws = np.stack([c.sample(rng, size) for c in self.components])
        return draws[which, np.arange(size)]

    def sample_labeled(self, rng, size):
        w = np.asarray(self.weights) / sum(self.weights)
        which = rng.choice(len(w), size=size, p=w)
        draws = np.stack([c.sample(rng, size) for c in self.components])
        return draws[which, np.arange(size)], which

    def mean(self):
        w = np.asarray(self.weights) / sum(self.weights)
        return float(sum(wi * c.mean() for wi, c in zip(w, self.components)))

    def support(self):
        sup = [c.support() for c, w in zip(self.components, self.weights) if w > 0]
        return (min(s[0] for s in sup), max(s[1] for s in sup))

    def to_dict(self):
        return {
            "kind": "mixture",
            "weights": list(self.weights),
            "components": [c.to_dict() for c in self.components],
        }


_KINDS = {c.kind: c for c in (Point, Uniform, TruncNormal, Gamma, LogNormal)}


def dist_from_dict(d: dict) -> Distribution:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "mixture":
        return Mixture(
            weights=tuple(d["weights"]),
            components=tuple(dist_from_dict(c) for c in d["components"]),
        )
    if kind not in _KINDS:
        raise ProfileError(f"unknown distribution kind {kind!r}")
    cls = _KINDS[kind]
    names = {f.name for f in fields(cls)}
    extra = set(d) - names
    if extra:
        raise ProfileError(f"unexpected keys for {kind}: {sorted(extra)}")
    try:
        return cls(**{k: float(v) if k != "sign" else int(v) for k, v in d.items()})
    except TypeError as e:
        raise ProfileError(str(e)) from None


@dataclass(frozen=True)
class WeakRowSpec:
    """A population of rows carrying a few short-retention cells.

    At ``vpp_min`` each weak cell retains data for a uniform fraction in
    [low, high] of ``window`` seconds; the cells land in distinct 64-bit words.
    """

    fraction: float
    words: int
    window: float
    low: float = 0.7
    high: float = 0.9


@dataclass(frozen=True)
class DeviceProfile:
    module_id: str
    manufacturer_id: str
    vpp_min: float
    hc_first_nominal_dist: Distribution
    hc_vpp_factor_dist: Distribution
    ber_vpp_factor_dist: Distribution
    retention_nominal_dist: Distribution
    trcd_min_nominal_dist: Distribution
    trcd_vpp_slope_dist: Distribution
    rows_per_bank: int = 65536
    bits_per_row: int = 8192
    banks: int = 16
    vdd: float = 1.2
    vpp_nominal: float = 2.5
    opposite_trend_fraction_hc: float = 0.142
    opposite_trend_fraction_ber: float = 0.154
    # extra linear retention loss per volt below nominal, on top of coupling
    retention_vpp_slope: float = 0.0
    worst_pattern_dist: tuple[float, ...] = (1 / 6,) * 6
    temperature_label: float = 50.0
    chips: int = 8
    organization: str = "x8"
    # HC_first factor is kept inside this band (per-manufacturer range)
    hc_factor_range: tuple[float, float] = (0.91, 1.86)
    ber_factor_range: tuple[float, float] = (0.33, 1.11)
    # row-minimum HC_first at vpp_min; rows are never pushed below it
    hc_first_min_at_vpp_min: float | None = None
    # per-cell threshold spread: P(cell excess <= z) = ber_density * z**ber_shape
    ber_density: float = 1e-3
    ber_shape: float = 2.0
    pattern_penalty: float = 1.3
    # probability that a cell past its threshold actually flips (per restore)
    flip_probability: float = 1.0
    retention_coupling: bool = True
    weak_rows: tuple[WeakRowSpec, ...] = ()
    trcd_cell_spread: float = 0.3
    unreliable_corruption: float = 0.01
    # saturation-voltage model shared with the circuit layer
    vth_access: float = 0.5295
    body_effect: float = 0.1905
    notes: str = ""

    def validate(self) -> None:
        if self.manufacturer_id not in MANUFACTURERS:
            raise ProfileError(f"manufacturer_id must be one of {MANUFACTURERS}")
        for name in ("rows_per_bank", "bits_per_row", "banks"):
            if getattr(self, name) <= 0:
                raise ProfileError(f"{name} must be positive")
        if self.bits_per_row % 64:
            raise ProfileError("bits_per_row must be a multiple of 64")
        if not self.vpp_min < self.vpp_nominal:
            raise ProfileError("vpp_min must be below vpp_nominal")
        if not self.vdd < self.vpp_nominal:
            raise ProfileError("vdd must be below vpp_nominal")
        for name in ("hc_first_nominal_dist", "retention_nominal_dist",
                     "hc_vpp_factor_dist", "ber_vpp_factor_dist"):
            lo, _ = getattr(self, name).support()
            if not lo > 0:
                raise ProfileError(f"{name} must have strictly positive support")
        lo, hi = self.hc_factor_range
        if not 0 < lo <= 1 <= hi:
            raise ProfileError("hc_factor_range must bracket 1")
        lo, hi = self.ber_factor_range
        if not 0 < lo < hi:
            raise ProfileError("ber_factor_range must be a positive interval")
        if len(self.worst_pattern_dist) != 6 or abs(sum(self.worst_pattern_dist) - 1) > 1e-9:
            raise ProfileError("worst_pattern_dist must be 6 probabilities summing to 1")
        if not 0 < self.flip_probability <= 1:
            raise ProfileError("flip_probability must be in (0, 1]")
        if self.ber_density <= 0 or self.ber_shape <= 0:
            raise ProfileError("ber_density and ber_shape must be positive")
        if self.pattern_penalty < 1:
            raise ProfileError("pattern_penalty must be >= 1")
        for w in self.weak_rows:
            if not (0 <= w.fraction <= 1 and 1 <= w.words <= self.bits_per_row // 64
                    and 0 < w.low <= w.high and w.window > 0):
                raise ProfileError(f"invalid weak-row spec {w}")

    @property
    def vpp_range(self) -> float:
        return self.vpp_nominal - self.vpp_min


_DIST_FIELDS = (
    "hc_first_nominal_dist",
    "hc_vpp_factor_dist",
    "ber_vpp_factor_dist",
    "retention_nominal_dist",
    "trcd_min_nominal_dist",
    "trcd_vpp_slope_dist",
)


def profile_to_dict(p: DeviceProfile) -> dict:
    out: dict[str, Any] = {"schema_version": PROFILE_SCHEMA_VERSION}
    for f in fields(p):
        v = getattr(p, f.name)
        if f.name in _DIST_FIELDS:
            v = v.to_dict()
        elif f.name == "weak_rows":
            v = [asdict(w) for w in v]
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def profile_from_dict(d: dict) -> DeviceProfile:
    d = dict(d)
    ver = d.pop("schema_version", None)
    if ver != PROFILE_SCHEMA_VERSION:
        raise ProfileError(f"unsupported profile schema_version {ver!r}")
    known = {f.name for f in fields(DeviceProfile)}
    extra = set(d) - known
    if extra:
        raise ProfileError(f"unknown profile keys: {sorted(extra)}")
    for k in _DIST_FIELDS:
        if k not in d:
            raise ProfileError(f"missing required key {k}")
        d[k] = dist_from_dict(d[k])
    if "weak_rows" in d:
        d["weak_rows"] = tuple(WeakRowSpec(**w) for w in d["weak_rows"])
    for k in ("worst_pattern_dist", "hc_factor_range", "ber_factor_range"):
        if k in d:
            d[k] = tuple(float(x) for x in d[k])
    try:
        p = DeviceProfile(**d)
    except TypeError as e:
        raise ProfileError(str(e)) from None
    p.validate()
    return p


def load_profile(path: str | Path) -> DeviceProfile:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ProfileError(f"{path}: not a mapping")
    return profile_from_dict(data)


def save_profile(p: DeviceProfile, path: str | Path) -> None:
    p.validate()
    with open(path, "w") as fh:
        yaml.safe_dump(profile_to_dict(p), fh, sort_keys=False)
