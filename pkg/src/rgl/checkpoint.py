"""Flat binary parameter checkpoints with a plain-text header.

Layout: one ASCII header line ("rgl-checkpoint kind=... d_x=... ..."),
then a fixed magic string, then the dimensions as little-endian uint32, then
every parameter entity as raw little-endian float64 in row-major order,
following the declaration order of its parameter set. Writing uses the
arrays' own bytes, so a load/save round-trip is bit-exact.

Magic strings: RGLV1 (vanilla), RGLA1 (augmented), RGLR1 (standard RNN).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .lstm_augmented import AugmentedLstmParams
from .lstm_vanilla import VanillaLstmParams
from .rnn import StandardRnnParams

__all__ = ["CheckpointError", "save_params", "load_params"]

_MAGIC = {"vanilla-lstm": b"RGLV1\x00", "augmented-lstm": b"RGLA1\x00", "standard-rnn": b"RGLR1\x00"}
_KIND_BY_MAGIC = {v: k for k, v in _MAGIC.items()}


class CheckpointError(ValueError):
    """Raised on malformed or inconsistent checkpoint files."""


def _kind_of(params) -> str:
    if isinstance(params, VanillaLstmParams):
        return "vanilla-lstm"
    if isinstance(params, AugmentedLstmParams):
        return "augmented-lstm"
    if isinstance(params, StandardRnnParams):
        return "standard-rnn"
    raise CheckpointError(f"cannot checkpoint object of type {type(params).__name__}")


def _dims_of(kind: str, params) -> list[int]:
    if kind == "augmented-lstm":
        return [params.d_x, params.d_s, params.d_v, params.window]
    return [params.d_x, params.d_s]


def save_params(params, path) -> None:
    kind = _kind_of(params)
    dims = _dims_of(kind, params)
    header = f"rgl-checkpoint kind={kind} " + " ".join(
        f"{n}={v}" for n, v in zip(("d_x", "d_s", "d_v", "L"), dims)
    )
    if kind == "augmented-lstm":
        header += f" input_gate={params.input_gate}"
    blob = bytearray()
    blob += (header + "\n").encode("ascii")
    blob += _MAGIC[kind]
    blob += struct.pack("<I", len(dims))
    blob += struct.pack(f"<{len(dims)}I", *dims)
    for arr in params.entities().values():
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C")
    Path(path).write_bytes(bytes(blob))


def load_params(path):
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: missing checkpoint header line")
    header = raw[:nl].decode("ascii", errors="replace")
    if not header.startswith("rgl-checkpoint "):
        raise CheckpointError(f"{path}: not an rgl checkpoint (header {header!r})")
    fields = dict(item.split("=", 1) for item in header.split()[1:])
    body = raw[nl + 1:]
    magic = body[:6]
    kind = _KIND_BY_MAGIC.get(magic)
    if kind is None or kind != fields.get("kind"):
        raise CheckpointError(f"{path}: magic {magic!r} does not match header kind {fields.get('kind')!r}")
    (ndims,) = struct.unpack_from("<I", body, 6)
    dims = struct.unpack_from(f"<{ndims}I", body, 10)
    offset = 10 + 4 * ndims

    if kind == "vanilla-lstm":
        d_x, d_s = dims
        template = VanillaLstmParams.zeros(d_x, d_s)
    elif kind == "standard-rnn":
        d_x, d_s = dims
        template = StandardRnnParams.zeros(d_x, d_s)
    else:
        d_x, d_s, d_v, window = dims
        template = AugmentedLstmParams.zeros(
            d_x, d_s, d_v, window, input_gate=fields.get("input_gate", "elementwise")
        )

    ent = {}
    for name, ref in template.entities().items():
        nbytes = ref.size * 8
        if offset + nbytes > len(body):
            raise CheckpointError(f"{path}: truncated payload at entity {name}")
        ent[name] = np.frombuffer(body, dtype="<f8", count=ref.size, offset=offset).reshape(ref.shape).copy()
        offset += nbytes
    if offset != len(body):
        raise CheckpointError(f"{path}: {len(body) - offset} trailing bytes after payload")
    return template.replace_entities(ent)
