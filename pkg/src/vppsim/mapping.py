"""Logical-to-physical row permutations inside a bank."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdjacencyMapping", "identity", "low_bit_inversion", "block_swizzle", "explicit"]


@dataclass(frozen=True, eq=False)
class AdjacencyMapping:
    kind: str
    rows: int
    to_physical: np.ndarray = field(repr=False)
    to_logical: np.ndarray = field(default=None, repr=False, init=False)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))
        fwd = np.asarray(self.to_physical, dtype=np.int64)
        if fwd.shape != (self.rows,) or not np.array_equal(np.sort(fwd), np.arange(self.rows)):
            raise ValueError("mapping must be a permutation of 0..rows-1")
        inv = np.empty_like(fwd)
        inv[fwd] = np.arange(self.rows)
        object.__setattr__(self, "to_physical", fwd)
        object.__setattr__(self, "to_logical", inv)
        fwd.flags.writeable = False
        inv.flags.writeable = False

    def physical(self, logical_row: int) -> int:
        return int(self.to_physical[logical_row])

    def logical(self, physical_row: int) -> int:
        return int(self.to_logical[physical_row])

    def neighbors(self, logical_row: int, distance: int = 1) -> list[int]:
        """Logical ids of rows physically ``distance`` away (in-bounds only)."""
        p = self.physical(logical_row)
        return [self.logical(q) for q in (p - distance, p + distance) if 0 <= q < self.rows]

    def __eq__(self, other):
        return isinstance(other, AdjacencyMapping) and np.array_equal(
            self.to_physical, other.to_physical)

    def __hash__(self):
        return hash(self.to_physical.tobytes())

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "rows": self.rows, **self.params}
        if self.kind == "explicit":
            d["table"] = self.to_physical.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AdjacencyMapping":
        kind = d["kind"]
        rows = int(d["rows"])
        if kind == "identity":
            return identity(rows)
        if kind == "low_bit_inversion":
            return low_bit_inversion(rows, int(d.get("bits", 1)))
        if kind == "block_swizzle":
            return block_swizzle(rows, int(d.get("block", 8)), int(d.get("seed", 0)))
        if kind == "explicit":
            return explicit(d["table"])
        raise ValueError(f"unknown mapping kind {kind!r}")


def identity(rows: int) -> AdjacencyMapping:
    return AdjacencyMapping("identity", rows, np.arange(rows))


def low_bit_inversion(rows: int, bits: int = 1) -> AdjacencyMapping:
    """Invert the ``bits`` low address bits whenever address bit ``bits`` is set.

    A common DDR4 scrambling family: the ordering of rows inside every other
    group of ``2**bits`` rows is reversed.
    """
    r = np.arange(rows)
    mask = (1 << bits) - 1
    phys = np.where((r >> bits) & 1, r ^ mask, r)
    return AdjacencyMapping("low_bit_inversion", rows, phys, {"bits": bits})


def block_swizzle(rows: int, block: int = 8, seed: int = 0) -> AdjacencyMapping:
    """Permute rows inside each aligned block of ``block`` rows (seeded)."""
    if rows % block:
        raise ValueError("rows must be a multiple of block")
    rng = np.random.default_rng([seed, block])
    perm = rng.permutation(block)
    r = np.arange(rows)
    phys = (r // block) * block + perm[r % block]
    return AdjacencyMapping("block_swizzle", rows, phys, {"block": block, "seed": seed})


def explicit(table) -> AdjacencyMapping:
    t = np.asarray(table, dtype=np.int64)
    return AdjacencyMapping("explicit", len(t), t)
