"""Flat binary checkpoint format (owned by the CLI layer).

Layout, all integers little-endian:

    magic   6 bytes  b"BICAP1"
    version u32
    arch    u8       0 = bi-lstm, 1 = bi-s-lstm, 2 = bi-f-lstm
    dims    7 x u32  vocab, feature, embed, hidden, then the three
                     transition widths (rows of U, V, W; 0 when absent)
    blocks  float64 row-major bytes, declared block order
    digest  8 bytes  blake2b-64 of everything above

load(save(model)) reproduces the model bitwise.
"""

import hashlib
import struct

import numpy as np

from .errors import CheckpointError
from .model import ArchitectureKind, CaptionModel, build_model

MAGIC = b"BICAP1"
VERSION = 1

_ARCH_CODES = {
    ArchitectureKind.BI_LSTM: 0,
    ArchitectureKind.BI_S_LSTM: 1,
    ArchitectureKind.BI_F_LSTM: 2,
}
_CODE_ARCHS = {code: arch for arch, code in _ARCH_CODES.items()}

_HEADER = struct.Struct("<IB7I")


def _digest(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def serialize_model(m: CaptionModel) -> bytes:
    widths = m.transition_widths
    parts = [
        MAGIC,
        _HEADER.pack(VERSION, _ARCH_CODES[m.arch], m.vocab_size,
                     m.feature_dim, m.embed_dim, m.hidden_dim, *widths),
    ]
    for _, arr in m.blocks():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    payload = b"".join(parts)
    return payload + _digest(payload)


def deserialize_model(blob: bytes) -> CaptionModel:
    if len(blob) < len(MAGIC) + _HEADER.size + 8:
        raise CheckpointError("checkpoint truncated")
    payload, digest = blob[:-8], blob[-8:]
    if _digest(payload) != digest:
        raise CheckpointError("checkpoint checksum mismatch")
    if payload[:len(MAGIC)] != MAGIC:
        raise CheckpointError("bad checkpoint magic")
    (version, arch_code, vocab, feat, embed, hidden,
     wu, wv, ww) = _HEADER.unpack_from(payload, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if arch_code not in _CODE_ARCHS:
        raise CheckpointError(f"unknown architecture code {arch_code}")
    arch = _CODE_ARCHS[arch_code]

    bif_widths = (wu, wv, ww) if arch == ArchitectureKind.BI_F_LSTM else None
    m = build_model(arch, vocab, feat, embed, hidden, bif_widths=bif_widths)

    offset = len(MAGIC) + _HEADER.size
    for name, arr in m.blocks():
        nbytes = arr.size * 8
        if offset + nbytes > len(payload):
            raise CheckpointError(f"checkpoint truncated in block {name}")
        values = np.frombuffer(payload, dtype="<f8", count=arr.size,
                               offset=offset)
        if not np.all(np.isfinite(values)):
            raise CheckpointError(f"non-finite values in block {name}")
        arr[...] = values.reshape(arr.shape)
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError("checkpoint has trailing bytes")
    return m


def save_checkpoint(m: CaptionModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_model(m))


def load_checkpoint(path) -> CaptionModel:
    with open(path, "rb") as fh:
        return deserialize_model(fh.read())
