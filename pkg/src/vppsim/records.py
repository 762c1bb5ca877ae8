"""Line-delimited JSON records with a schema version and per-line checksum.

Each line is the canonical JSON encoding (sorted keys, no whitespace) of an
object whose ``checksum`` field is the SHA-256 of the canonical encoding of
the same object without that field.  Writing a parsed line back produces the
identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from pathlib import Path
from typing import Iterable, Iterator

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION", "RecordError", "canonical", "seal", "verify",
    "write_records", "append_records", "read_records", "encode", "decode",
]


class RecordError(ValueError):
    def __init__(self, msg: str, path: str | None = None, line: int | None = None):
        where = f"{path}:{line}: " if path is not None else ""
        super().__init__(where + msg)
        self.path = path
        self.line = line


def _clean(v):
    if isinstance(v, float):
        if math.isnan(v) or math.isinf(v):
            return None
        return v
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if hasattr(v, "item"):  # numpy scalar
        return _clean(v.item())
    return v


def canonical(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def _digest(body: dict) -> str:
    return hashlib.sha256(canonical(body).encode()).hexdigest()


def seal(kind: str, payload: dict) -> dict:
    """Wrap ``payload`` into a versioned, checksummed record."""
    if "checksum" in payload or "schema_version" in payload or "kind" in payload:
        raise ValueError("payload uses a reserved key")
    body = _clean({"schema_version": SCHEMA_VERSION, "kind": kind, **payload})
    body["checksum"] = _digest(body)
    return body


def verify(rec: dict) -> None:
    if not isinstance(rec, dict) or "checksum" not in rec:
        raise RecordError("record has no checksum")
    body = {k: v for k, v in rec.items() if k != "checksum"}
    if _digest(body) != rec["checksum"]:
        raise RecordError("checksum mismatch")
    if rec.get("schema_version") != SCHEMA_VERSION:
        raise RecordError(f"unsupported schema_version {rec.get('schema_version')!r}")


def encode(rec: dict) -> str:
    return canonical(rec) + "\n"


def decode(line: str) -> dict:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as e:
        raise RecordError(f"malformed JSON ({e.msg})") from None
    verify(rec)
    return rec


def write_records(path: str | Path, records: Iterable[dict]) -> None:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        for r in records:
            fh.write(encode(r))
    os.replace(tmp, path)


def append_records(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "a") as fh:
        for r in records:
            fh.write(encode(r))


def read_records(path: str | Path, strict: bool = True) -> Iterator[dict]:
    """Yield verified records; a bad line raises (strict) or is skipped."""
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield decode(line)
            except RecordError as e:
                if strict:
                    raise RecordError(str(e), str(path), n) from None
