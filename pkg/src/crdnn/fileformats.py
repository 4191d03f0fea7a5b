"""Telemetry files (text and binary) and dataset directories.

Text format, version 1::

    # crdnn-telemetry 1
    # meta {"cycle_id": 0, ...}
    t[s],bucket_dp[bar],velocity[m/s],joystick_dir[-],drive_dp[bar],boom_dp[bar],label
    0,15.2,0,1,8.1,30.4,0
    ...

Floats are written with 17 significant digits so text round-trips exactly.
Labels: 0 travel, 1 loading, 2 unloading.

Binary format, version 1: magic b"CRDNNTLM", uint16 version, uint32 meta
length, UTF-8 JSON meta, uint64 frame count, then packed little-endian
records of (t, five channels) as float64 followed by a uint8 label.

A dataset directory holds one file per cycle plus manifest.json.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from . import __version__
from .data import CHANNELS, UNITS, LabeledSeries
from .errors import FormatVersionError

TEXT_MAGIC = "# crdnn-telemetry"
BIN_MAGIC = b"CRDNNTLM"
TELEMETRY_VERSION = 1
HEADER = ",".join(["t[s]", *(f"{c}[{u}]" for c, u in zip(CHANNELS, UNITS)), "label"])
_BIN_PREFIX = struct.Struct("<8sHI")
_RECORD = np.dtype([("t", "<f8"), ("x", "<f8", (len(CHANNELS),)), ("label", "u1")])


def _meta_json(series: LabeledSeries) -> str:
    meta = dict(series.meta)
    if series.flips:
        meta["flips"] = [list(f) for f in series.flips]
    return json.dumps(meta, sort_keys=True)


def _series_from(t, x, labels, meta: dict) -> LabeledSeries:
    flips = [tuple(f) for f in meta.pop("flips", [])]
    return LabeledSeries(t=t, channels=x, labels=labels.astype(np.int8), meta=meta, flips=flips)


def write_series_text(path, series: LabeledSeries) -> None:
    buf = io.StringIO()
    buf.write(f"{TEXT_MAGIC} {TELEMETRY_VERSION}\n# meta {_meta_json(series)}\n{HEADER}\n")
    table = np.column_stack([series.t, series.channels])
    for row, lab in zip(table, series.labels):
        buf.write(",".join(f"{v:.17g}" for v in row) + f",{int(lab)}\n")
    Path(path).write_text(buf.getvalue())


def read_series_text(path) -> LabeledSeries:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 3 or not lines[0].startswith(TEXT_MAGIC):
        raise FormatVersionError(f"{path}: not a telemetry text file")
    version = int(lines[0][len(TEXT_MAGIC) :].strip())
    if version != TELEMETRY_VERSION:
        raise FormatVersionError(f"{path}: telemetry version {version}, expected {TELEMETRY_VERSION}")
    if not lines[1].startswith("# meta "):
        raise FormatVersionError(f"{path}: missing meta line")
    meta = json.loads(lines[1][len("# meta ") :])
    if lines[2] != HEADER:
        raise FormatVersionError(f"{path}: unexpected column header {lines[2]!r}")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[3:]]).reshape(-1, len(CHANNELS) + 2)
    return _series_from(data[:, 0], data[:, 1:-1], data[:, -1].astype(int), meta)


def write_series_binary(path, series: LabeledSeries) -> None:
    meta = _meta_json(series).encode("utf-8")
    rec = np.empty(len(series), dtype=_RECORD)
    rec["t"], rec["x"], rec["label"] = series.t, series.channels, series.labels
    with open(path, "wb") as f:
        f.write(_BIN_PREFIX.pack(BIN_MAGIC, TELEMETRY_VERSION, len(meta)))
        f.write(meta)
        f.write(struct.pack("<Q", len(series)))
        f.write(rec.tobytes())


def read_series_binary(path) -> LabeledSeries:
    buf = Path(path).read_bytes()
    magic, version, mlen = _BIN_PREFIX.unpack_from(buf)
    if magic != BIN_MAGIC:
        raise FormatVersionError(f"{path}: not a binary telemetry file")
    if version != TELEMETRY_VERSION:
        raise FormatVersionError(f"{path}: telemetry version {version}, expected {TELEMETRY_VERSION}")
    off = _BIN_PREFIX.size
    meta = json.loads(buf[off : off + mlen].decode("utf-8"))
    off += mlen
    (n,) = struct.unpack_from("<Q", buf, off)
    rec = np.frombuffer(buf, dtype=_RECORD, count=n, offset=off + 8)
    return _series_from(rec["t"].copy(), rec["x"].copy(), rec["label"].astype(int), meta)


def read_series(path) -> LabeledSeries:
    with open(path, "rb") as f:
        head = f.read(len(BIN_MAGIC))
    return read_series_binary(path) if head == BIN_MAGIC else read_series_text(path)


def write_dataset(directory, series: list[LabeledSeries], fmt: str = "csv", manifest_extra: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, s in enumerate(series):
        name = f"cycle_{i:04d}.{'csv' if fmt == 'csv' else 'bin'}"
        (write_series_text if fmt == "csv" else write_series_binary)(d / name, s)
        entries.append({"file": name, **{k: s.meta[k] for k in sorted(s.meta)}})
    manifest = {
        "kind": "crdnn-dataset",
        "telemetry_version": TELEMETRY_VERSION,
        "code_version": __version__,
        "format": fmt,
        "cycles": entries,
        **(manifest_extra or {}),
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def read_dataset(directory) -> tuple[list[LabeledSeries], dict]:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    if manifest.get("telemetry_version") != TELEMETRY_VERSION:
        raise FormatVersionError(f"{d}: dataset telemetry version {manifest.get('telemetry_version')}")
    return [read_series(d / e["file"]) for e in manifest["cycles"]], manifest
