"""Binary model files.

Layout: 8 magic bytes, a little-endian uint32 header length, a UTF-8 JSON header
(hyperparameters, feature schema, tensor names and shapes), the float64 tensors
in header order, and finally the sha256 digest of everything before it.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..hetgraph import SCHEMA_VERSION
from .model import Hyper, ModelParams, param_shapes

MAGIC = b"GRHOMDL1"
FORMAT_VERSION = 1


class ModelLoadError(ValueError):
    pass


def serialize(params: ModelParams, extra: dict | None = None) -> bytes:
    hp = params.hyper
    header = {
        "format": FORMAT_VERSION,
        "schema": params.schema,
        "hyper": {"d": hp.d, "layers": hp.layers, "heads": hp.heads, "dropout": hp.dropout,
                  "activation": hp.activation, "op_dim": hp.op_dim, "ma_dim": hp.ma_dim,
                  "edge_dim": hp.edge_dim},
        "tensors": [[name, list(arr.shape)] for name, arr in params.tensors.items()],
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.tensors.values())
    payload = MAGIC + struct.pack("<I", len(head)) + head + body
    return payload + hashlib.sha256(payload).digest()


def deserialize(blob: bytes, expect_schema: str | None = SCHEMA_VERSION) -> tuple[ModelParams, dict]:
    """Inverse of ``serialize``; returns the parameters and the ``extra`` dict."""
    if len(blob) < len(MAGIC) + 4 + 32 or blob[:len(MAGIC)] != MAGIC:
        raise ModelLoadError("not a model file (bad magic or too short)")
    payload, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise ModelLoadError("checksum mismatch: file is truncated or corrupted")
    (hlen,) = struct.unpack("<I", payload[8:12])
    try:
        header = json.loads(payload[12:12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelLoadError(f"unreadable header: {exc}") from exc
    if header.get("format") != FORMAT_VERSION:
        raise ModelLoadError(f"unsupported model format {header.get('format')}")
    if expect_schema is not None and header["schema"] != expect_schema:
        raise ModelLoadError(f"model was trained on feature schema {header['schema']}, "
                             f"this build encodes {expect_schema}")
    hp = Hyper(**header["hyper"])
    expected = param_shapes(hp)
    tensors, offset = {}, 12 + hlen
    for name, shape in header["tensors"]:
        if tuple(shape) != expected.get(name):
            raise ModelLoadError(f"tensor {name} has shape {shape}, expected {expected.get(name)}")
        n = int(np.prod(shape)) * 8
        if offset + n > len(payload):
            raise ModelLoadError("truncated tensor data")
        tensors[name] = np.frombuffer(payload[offset:offset + n], dtype="<f8").reshape(shape).astype(np.float64)
        offset += n
    if offset != len(payload) or set(tensors) != set(expected):
        raise ModelLoadError("tensor list does not match the architecture")
    return ModelParams(hp, tensors, header["schema"]), header.get("extra", {})


def save_model(params: ModelParams, path: str | Path, extra: dict | None = None) -> None:
    Path(path).write_bytes(serialize(params, extra))


def load_model(path: str | Path, expect_schema: str | None = SCHEMA_VERSION) -> ModelParams:
    return deserialize(Path(path).read_bytes(), expect_schema)[0]
