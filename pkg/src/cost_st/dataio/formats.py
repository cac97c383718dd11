"""On-disk formats: ``stbin`` series, long-format CSV, and ``ens`` ensemble files.

Binary layout shared by stbin and ens files::

    magic (4 bytes) | header length (u32 LE) | UTF-8 JSON header | f32 LE payload
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError, FormatError
from .series import Layout, SpatioTemporalSeries

STBIN_MAGIC = b"STB1"
ENS_MAGIC = b"ENS1"


def dump_header(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def pack(magic: bytes, header: dict, payload: np.ndarray) -> bytes:
    head = dump_header(header)
    body = np.ascontiguousarray(payload, dtype="<f4").tobytes()
    return magic + struct.pack("<I", len(head)) + head + body


def unpack(blob: bytes, magic: bytes) -> tuple[dict, np.ndarray]:
    if len(blob) < 8 or blob[:4] != magic:
        raise FormatError(f"bad magic: expected {magic!r}, got {blob[:4]!r}")
    (n,) = struct.unpack("<I", blob[4:8])
    if 8 + n > len(blob):
        raise FormatError("header length exceeds file size")
    try:
        header = json.loads(blob[8 : 8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed header: {exc}") from exc
    if not isinstance(header, dict):
        raise FormatError("header must be a JSON object")
    payload = blob[8 + n :]
    if len(payload) % 4:
        raise FormatError("payload is not a whole number of f32 values")
    return header, np.frombuffer(payload, dtype="<f4")


def encode_stbin(series: SpatioTemporalSeries) -> bytes:
    T, V, C = series.values.shape
    header = {
        "shape": [T, V, C],
        "layout": series.layout.to_header(),
        "interval_minutes": int(series.interval_minutes),
        "start_epoch_seconds": int(series.start_epoch_seconds),
        "dtype": "f32le",
        "order": "TVC",
        "channels": list(series.channels),
    }
    return pack(STBIN_MAGIC, header, series.values)


def decode_stbin(blob: bytes) -> SpatioTemporalSeries:
    header, flat = unpack(blob, STBIN_MAGIC)
    try:
        shape = [int(s) for s in header["shape"]]
        layout = Layout.from_header(header["layout"])
        interval = int(header["interval_minutes"])
        start = int(header["start_epoch_seconds"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed stbin header: {exc}") from exc
    if header.get("dtype", "f32le") != "f32le" or header.get("order", "TVC") != "TVC":
        raise FormatError("only dtype f32le and order TVC are supported")
    if len(shape) != 3 or int(np.prod(shape)) != flat.size:
        raise FormatError(f"header shape {shape} does not match payload of {flat.size} values")
    values = flat.astype(np.float64).reshape(shape)
    channels = tuple(header.get("channels") or (f"c{i}" for i in range(shape[2])))
    return SpatioTemporalSeries(values, interval, start, layout, channels)


def write_stbin(path, series: SpatioTemporalSeries) -> None:
    Path(path).write_bytes(encode_stbin(series))


def read_csv(path, interval_minutes: int = 60, start_epoch_seconds: int = 0, layout=None):
    """Dense long-format CSV with header ``t,v,c,value``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        head = next(reader, None)
        if head is None or [h.strip() for h in head] != ["t", "v", "c", "value"]:
            raise FormatError("CSV header must be exactly t,v,c,value")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append((int(row[0]), int(row[1]), int(row[2]), float(row[3])))
            except (ValueError, IndexError) as exc:
                raise FormatError(f"line {lineno}: {exc}") from exc
    if not rows:
        raise FormatError("CSV has no data rows")
    idx = np.array([r[:3] for r in rows], dtype=np.int64)
    if idx.min() < 0:
        raise FormatError("negative index in CSV")
    T, V, C = (idx.max(axis=0) + 1).tolist()
    values = np.full((T, V, C), np.nan)
    seen = np.zeros((T, V, C), dtype=bool)
    for (t, v, c), (_, _, _, val) in zip(idx, rows):
        if seen[t, v, c]:
            raise FormatError(f"duplicate cell (t={t}, v={v}, c={c})")
        seen[t, v, c] = True
        values[t, v, c] = val
    if not seen.all():
        t, v, c = (int(i) for i in np.argwhere(~seen)[0])
        raise FormatError(f"CSV does not densely cover the grid; missing (t={t}, v={v}, c={c})")
    return SpatioTemporalSeries(values, interval_minutes, start_epoch_seconds, layout or Layout.graph(V))


def load_series(path, format: str | None = None, **meta) -> SpatioTemporalSeries:
    path = Path(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "stbin")
    if fmt == "stbin":
        return decode_stbin(path.read_bytes())
    if fmt == "csv":
        return read_csv(path, **meta)
    raise FormatError(f"unknown series format {fmt!r}")


@dataclass(frozen=True)
class EnsembleFile:
    """K sampled forecasts of the windows starting at ``window_starts`` of a series."""

    samples: np.ndarray  # [K, B, P, V, C]
    window_starts: np.ndarray  # absolute indices into the source series
    M: int
    meta: dict

    def header(self) -> dict:
        return {
            "shape": list(self.samples.shape),
            "window_starts": [int(s) for s in self.window_starts],
            "M": int(self.M),
            "dtype": "f32le",
            "order": "KBPVC",
            "meta": self.meta,
        }


def encode_ensemble(ens: EnsembleFile) -> bytes:
    return pack(ENS_MAGIC, ens.header(), ens.samples)


def decode_ensemble(blob: bytes) -> EnsembleFile:
    header, flat = unpack(blob, ENS_MAGIC)
    try:
        shape = [int(s) for s in header["shape"]]
        starts = np.asarray(header["window_starts"], dtype=np.int64)
        M = int(header["M"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed ensemble header: {exc}") from exc
    if len(shape) != 5 or int(np.prod(shape)) != flat.size:
        raise FormatError(f"ensemble shape {shape} does not match payload")
    if len(starts) != shape[1]:
        raise DataError("window_starts does not match the batch extent")
    samples = flat.astype(np.float64).reshape(shape)
    return EnsembleFile(samples, starts, M, header.get("meta", {}))


def write_ensemble(path, ens: EnsembleFile) -> None:
    Path(path).write_bytes(encode_ensemble(ens))


def read_ensemble(path) -> EnsembleFile:
    return decode_ensemble(Path(path).read_bytes())
