"""The six victim/aggressor data patterns used throughout characterization."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["DataPattern", "PATTERNS", "N_PATTERNS", "pattern", "row_bits", "detect_pattern",
           "fill_pattern_id"]


@dataclass(frozen=True)
class DataPattern:
    pattern_id: int
    name: str
    victim_byte: int

    @property
    def aggressor_byte(self) -> int:
        return (~self.victim_byte) & 0xFF

    def victim_bits(self, n_bits: int) -> np.ndarray:
        return row_bits(self.victim_byte, n_bits)

    def aggressor_bits(self, n_bits: int) -> np.ndarray:
        return row_bits(self.aggressor_byte, n_bits)


PATTERNS: tuple[DataPattern, ...] = (
    DataPattern(0, "rowstripe", 0xFF),
    DataPattern(1, "rowstripe_inv", 0x00),
    DataPattern(2, "checkerboard", 0xAA),
    DataPattern(3, "checkerboard_inv", 0x55),
    DataPattern(4, "thickchecker", 0xCC),
    DataPattern(5, "thickchecker_inv", 0x33),
)
N_PATTERNS = len(PATTERNS)


def pattern(pid: int) -> DataPattern:
    if not 0 <= pid < N_PATTERNS:
        raise ValueError(f"pattern id must be in 0..{N_PATTERNS - 1}, got {pid}")
    return PATTERNS[pid]


@lru_cache(maxsize=64)
def _tiled(byte: int, n_bits: int) -> np.ndarray:
    one = np.unpackbits(np.array([byte], dtype=np.uint8))
    out = np.tile(one, n_bits // 8)
    out.flags.writeable = False
    return out


def row_bits(byte: int, n_bits: int) -> np.ndarray:
    """Tile ``byte`` (MSB first) over ``n_bits`` bits."""
    if n_bits % 8:
        raise ValueError("row length must be a whole number of bytes")
    return _tiled(int(byte) & 0xFF, int(n_bits)).copy()


def fill_pattern_id(byte: int) -> int:
    """Pattern id whose victim fill is ``byte``, else -1."""
    return _BYTE_TO_PID.get(int(byte) & 0xFF, -1)


# bit-position parity classes that fully identify a pattern: positions 0..3
# of each byte (MSB first) are distinct across all six fills
_BYTE_TO_PID = {p.victim_byte: p.pattern_id for p in PATTERNS}
_SIGNATURES = {tuple(row_bits(p.victim_byte, 8)[:4]): p.pattern_id for p in PATTERNS}


def detect_pattern(bits: np.ndarray) -> int:
    """Return the pattern id whose fill ``bits`` matches exactly, else -1."""
    b = np.asarray(bits, dtype=np.uint8)
    if b.size % 8:
        return -1
    pid = _SIGNATURES.get(tuple(b[:4].tolist()))
    if pid is None:
        return -1
    if not np.array_equal(b, _tiled(PATTERNS[pid].victim_byte, b.size)):
        return -1
    return pid
