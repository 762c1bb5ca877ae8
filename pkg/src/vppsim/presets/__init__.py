"""Shipped module presets (one YAML profile per characterized module)."""

from __future__ import annotations

from importlib import resources

import yaml

from ..profile import DeviceProfile, ProfileError, profile_from_dict

__all__ = ["list_presets", "load_preset", "load_fleet", "fleet_chip_count"]

_PKG = __name__


def _dir():
    return resources.files(_PKG)


def list_presets() -> list[str]:
    names = [p.name[:-5] for p in _dir().iterdir() if p.name.endswith(".yaml")]
    return sorted(names)


def load_preset(name: str) -> DeviceProfile:
    f = _dir() / f"{name}.yaml"
    if not f.is_file():
        raise ProfileError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return profile_from_dict(yaml.safe_load(f.read_text()))


def load_fleet(names=None) -> list[DeviceProfile]:
    return [load_preset(n) for n in (names or list_presets())]


def fleet_chip_count(profiles) -> int:
    return sum(p.chips for p in profiles)
