"""Binary model container.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"CRDNNMDL"
    8       2     format version (uint16), currently 1
    10      4     header length H in bytes (uint32)
    14      H     UTF-8 JSON header: model_config, seed, layers (specs),
                  params (name + shape, in blob order), extra
    14+H    ...   parameters as little-endian float64, concatenated in the
                  order listed in the header, each C-contiguous

The header JSON is written with sorted keys, so identical models give
identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatVersionError
from .nn import CrdnnModel, ModelConfig

MAGIC = b"CRDNNMDL"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sHI")


def model_to_bytes(model: CrdnnModel, extra: dict | None = None) -> bytes:
    params = list(model.named_params())
    header = {
        "model_config": model.config.to_dict(),
        "seed": model.seed,
        "layers": model.layer_specs(),
        "params": [{"name": k, "shape": list(v.shape)} for k, v in params],
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for _, v in params)
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, len(hbytes)) + hbytes + blob


def model_from_bytes(buf: bytes) -> tuple[CrdnnModel, dict]:
    if len(buf) < _PREFIX.size:
        raise FormatVersionError("truncated model file")
    magic, version, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise FormatVersionError(f"not a model file (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"model format version {version}, this build reads {FORMAT_VERSION}")
    header = json.loads(buf[_PREFIX.size : _PREFIX.size + hlen].decode("utf-8"))
    model = CrdnnModel(ModelConfig(**header["model_config"]), header["seed"])
    if json.loads(json.dumps(model.layer_specs())) != header["layers"]:
        raise FormatVersionError("layer specs in file do not match the rebuilt architecture")
    offset = _PREFIX.size + hlen
    target = model.param_dict()
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape))
        values = np.frombuffer(buf, dtype="<f8", count=n, offset=offset).reshape(shape)
        target[entry["name"]][...] = values
        offset += 8 * n
    if offset != len(buf):
        raise FormatVersionError(f"{len(buf) - offset} trailing bytes after parameter blobs")
    return model, header["extra"]


def save_model(path, model: CrdnnModel, extra: dict | None = None) -> None:
    Path(path).write_bytes(model_to_bytes(model, extra))


def load_model(path) -> tuple[CrdnnModel, dict]:
    return model_from_bytes(Path(path).read_bytes())
