"""Canonical JSON bytes, SHA-256 digests and reproducible timestamps."""

import datetime as _dt
import hashlib
import json
import math
import os
from pathlib import Path

# integral floats at or above this magnitude keep exponent notation
_INT_LIMIT = 2.0**53


def _normalize(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite number {obj!r} cannot be serialized")
        if obj.is_integer() and abs(obj) < _INT_LIMIT:
            return int(obj)
        return obj
    if isinstance(obj, int):
        return obj
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    # numpy scalars
    if hasattr(obj, "item"):
        return _normalize(obj.item())
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def canonical_bytes(obj) -> bytes:
    """Sorted keys, no whitespace, shortest round-trip numbers, UTF-8."""
    return json.dumps(
        _normalize(obj),
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    ).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest(obj) -> str:
    return sha256_hex(canonical_bytes(obj))


def write_canonical(path, obj):
    """Atomically write ``obj`` as canonical JSON followed by a newline."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(canonical_bytes(obj) + b"\n")
    os.replace(tmp, path)


def read_json(path):
    with open(path, "rb") as fh:
        return json.loads(fh.read().decode("utf-8"))


def now_iso() -> str:
    """UTC timestamp; honours SOURCE_DATE_EPOCH so golden outputs are reproducible."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        moment = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        moment = _dt.datetime.now(tz=_dt.timezone.utc).replace(microsecond=0)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")
