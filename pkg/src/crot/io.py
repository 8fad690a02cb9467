"""Dataset readers (IDX, CSV) and JSON persistence of mixtures, plans and reports."""

from __future__ import annotations

import gzip
import json
import struct
from pathlib import Path

import numpy as np

from .bounds import BoundReport
from .mixture import Mixture
from .transport import TransportPlan

IDX_TENSOR = 0x00000803
IDX_VECTOR = 0x00000801


class IdxError(ValueError):
    """Base class for malformed IDX files."""


class WrongMagic(IdxError):
    pass


class Truncated(IdxError):
    pass


def _open(path):
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def parse_idx(raw: bytes) -> np.ndarray:
    """Decode IDX bytes into a ``uint8`` array with the header's shape."""
    if len(raw) < 4:
        raise Truncated(f"IDX header needs 4 bytes, got {len(raw)}")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic == IDX_TENSOR:
        ndim = 3
    elif magic == IDX_VECTOR:
        ndim = 1
    else:
        raise WrongMagic(f"unsupported IDX magic 0x{magic:08X}")
    end = 4 + 4 * ndim
    if len(raw) < end:
        raise Truncated("IDX file ends inside the dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:end])
    size = int(np.prod(dims, dtype=np.int64))
    payload = raw[end:]
    if len(payload) != size:
        raise Truncated(f"IDX payload has {len(payload)} bytes, header promises {size}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims).copy()


def load_idx(path) -> np.ndarray:
    """Read an IDX file (optionally gzip-compressed) as a ``uint8`` array."""
    with _open(path) as fh:
        return parse_idx(fh.read())


def write_idx(path, array) -> None:
    """Write a 1D or 3D ``uint8`` array in IDX format."""
    a = np.asarray(array)
    if a.dtype != np.uint8:
        raise ValueError("IDX writer expects uint8 data")
    magic = {1: IDX_VECTOR, 3: IDX_TENSOR}.get(a.ndim)
    if magic is None:
        raise ValueError(f"IDX writer supports 1D and 3D arrays, got {a.ndim}D")
    with open(path, "wb") as fh:
        fh.write(struct.pack(f">I{a.ndim}I", magic, *a.shape))
        fh.write(np.ascontiguousarray(a).tobytes())


def idx_points(tensor: np.ndarray) -> np.ndarray:
    """Flatten an image tensor to ``(n, pixels)`` points scaled to [0, 1]."""
    t = np.asarray(tensor)
    return t.reshape(t.shape[0], -1).astype(float) / 255.0


def load_csv(path) -> np.ndarray:
    """Numeric CSV as an ``(n, d)`` array; a non-numeric first row is a header."""
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(v) for v in first.strip().split(",")]
        skip = 0
    except ValueError:
        skip = 1
    X = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    if X.size == 0:
        raise ValueError(f"{path}: no data rows")
    return X


def load_points(path, fmt: str | None = None) -> np.ndarray:
    fmt = fmt or ("idx" if "idx" in Path(path).name else "csv")
    if fmt == "idx":
        t = load_idx(path)
        return idx_points(t) if t.ndim == 3 else t.astype(float)[:, None]
    if fmt == "csv":
        return load_csv(path)
    raise ValueError(f"unknown data format {fmt!r}")


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

_KINDS = {"mixture": Mixture, "transport_plan": TransportPlan, "bound_report": BoundReport}


def to_json(obj) -> str:
    """Serialize a Mixture, TransportPlan or BoundReport.

    ``json`` writes floats with ``repr``, the shortest decimal that
    round-trips the double exactly.
    """
    for kind, cls in _KINDS.items():
        if isinstance(obj, cls):
            return json.dumps({"kind": kind, **obj.to_dict()}, indent=1)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def from_json(text: str, expect: str | None = None):
    d = json.loads(text)
    if not isinstance(d, dict):
        raise ValueError("top-level JSON value must be an object")
    kind = d.pop("kind", expect or ("mixture" if "components" in d else None))
    if kind not in _KINDS:
        raise ValueError(f"field 'kind' must be one of {sorted(_KINDS)}, got {kind!r}")
    if expect is not None and kind != expect:
        raise ValueError(f"expected a {expect}, found a {kind}")
    return _KINDS[kind].from_dict(d)


def save(obj, path) -> None:
    Path(path).write_text(to_json(obj))


def load(path, expect: str | None = None):
    return from_json(Path(path).read_text(), expect)
