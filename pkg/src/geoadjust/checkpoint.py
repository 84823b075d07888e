"""Binary checkpoints of a :class:`State`.

Layout::

    8 bytes   magic  b"GEOADJCK"
    4 bytes   header length N, uint32 little-endian
    N bytes   UTF-8 JSON header (sorted keys)
    payload   float64 little-endian, 3 * (2m+1) * (m+1) complex values as
              (re, im) pairs; fields u, v, T; k1 = -m..m outer, k2 = 0..m inner

Floats in the header are written with ``repr`` precision, so ``t`` and the
parameters survive a round trip exactly.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import (
    CorruptPayloadError,
    IncompatibleCheckpointError,
    SymmetryViolationError,
    TruncationMismatchError,
    VersionMismatchError,
)
from .fields import Params, State, compatibility_defect

MAGIC = b"GEOADJCK"
VERSION = 1
LAYOUT = "u:even,v:even,T:odd;k1=-m..m outer;k2=0..m inner;re,im;float64-le"
DEFECT_TOL = 1e-10

PathLike = Union[str, os.PathLike]


def _header(state: State, params: Optional[Params], system: Optional[str]) -> bytes:
    head = {
        "version": VERSION,
        "m": state.m,
        "layout": LAYOUT,
        "t": float(state.t),
        "params": dataclasses.asdict(params) if params is not None else None,
        "system": system,
    }
    return json.dumps(head, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


def encode(state: State, params: Optional[Params] = None, system: Optional[str] = None) -> bytes:
    head = _header(state, params, system)
    payload = np.ascontiguousarray(state.stack()).view(np.float64).astype("<f8", copy=False)
    return MAGIC + struct.pack("<I", len(head)) + head + payload.tobytes()


def write_checkpoint(state: State, path: PathLike, params: Optional[Params] = None,
                     system: Optional[str] = None) -> Path:
    """Write atomically (temporary file, then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(state, params, system))
    os.replace(tmp, path)
    return path


def decode(data: bytes, expected_m: Optional[int] = None) -> tuple[State, dict]:
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise CorruptPayloadError("not a checkpoint: bad magic bytes")
    (n,) = struct.unpack_from("<I", data, len(MAGIC))
    start = len(MAGIC) + 4
    if len(data) < start + n:
        raise CorruptPayloadError("header truncated")
    try:
        head = json.loads(data[start: start + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptPayloadError(f"unreadable header: {exc}") from None
    if head.get("version") != VERSION:
        raise VersionMismatchError(
            f"checkpoint version {head.get('version')!r}, this reader handles {VERSION}")
    m = head.get("m")
    if not isinstance(m, int) or m < 1:
        raise CorruptPayloadError(f"invalid truncation in header: {m!r}")
    if expected_m is not None and m != expected_m:
        raise TruncationMismatchError(
            f"checkpoint has m={m} but m={expected_m} was expected; no padding or truncation is applied")
    payload = data[start + n:]
    expected = 3 * (2 * m + 1) * (m + 1) * 16
    if len(payload) != expected:
        raise CorruptPayloadError(f"payload has {len(payload)} bytes, expected {expected} for m={m}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise CorruptPayloadError("payload contains non-finite values")
    coeffs = values.view(np.complex128).reshape(3, 2 * m + 1, m + 1)
    state = State.from_stack(coeffs, head["t"])
    sym = state.symmetry_defect()
    if sym > DEFECT_TOL:
        raise SymmetryViolationError(f"conjugate-symmetry defect {sym:.3e} exceeds {DEFECT_TOL}")
    comp = compatibility_defect(state.u)
    if comp > DEFECT_TOL:
        raise IncompatibleCheckpointError(f"compatibility defect {comp:.3e} exceeds {DEFECT_TOL}")
    return state, head


def read_checkpoint(path: PathLike, expected_m: Optional[int] = None) -> State:
    return decode(Path(path).read_bytes(), expected_m)[0]


def read_checkpoint_with_header(path: PathLike, expected_m: Optional[int] = None):
    """Like :func:`read_checkpoint`, also returning the decoded header dict."""
    return decode(Path(path).read_bytes(), expected_m)
