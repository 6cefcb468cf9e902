"""Columnar on-disk cache so a corpus of flight logs is converted once.

Layout (all integers little-endian):

    magic   8 bytes  b"UAVCACHE"
    version u32
    length  u64      payload byte count
    payload
    crc32   u32      of the payload

Payload for a flight-log cache (version 1):

    u32 n_logs, then per log:
      str source_id | u8 vehicle_type | u8 truncated
      u32 n_params, per param: str name | u8 kind (0=int,1=float,2=str) | value
      u32 n_topics, per topic:
        str topic_name | u16 instance_id | u8 resorted | u32 n_cols | u64 n_rows
        timestamps as raw u64[n_rows]
        per column: str name | raw f64[n_rows]

Strings are u32 length + UTF-8 bytes. float32 source data is widened to
float64 at parse time, so the cache is lossless for everything it stores.
"""

from __future__ import annotations

import io
import struct
import zlib

import numpy as np

from .ulog import FlightLog, TopicSeries, VehicleType

MAGIC = b"UAVCACHE"
VERSION = 1

_TYPE_CODES = {t: i for i, t in enumerate(VehicleType)}
_CODE_TYPES = {i: t for t, i in _TYPE_CODES.items()}


class CacheError(Exception):
    """Base for cache read/write failures."""


class VersionMismatch(CacheError):
    pass


class ChecksumFailure(CacheError):
    pass


def _w_str(buf, s: str):
    raw = s.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def _r_str(buf) -> str:
    (n,) = struct.unpack("<I", _take(buf, 4))
    return _take(buf, n).decode("utf-8")


def _take(buf, n: int) -> bytes:
    raw = buf.read(n)
    if len(raw) != n:
        raise ChecksumFailure("cache payload shorter than declared")
    return raw


def _write_envelope(path, payload: bytes, version: int = VERSION):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", version))
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def _read_envelope(path, expect_version: int = VERSION) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 16 or raw[: len(MAGIC)] != MAGIC:
        raise CacheError("not a uavclass cache file")
    (version,) = struct.unpack_from("<I", raw, len(MAGIC))
    if version != expect_version:
        raise VersionMismatch(f"cache version {version}, expected {expect_version}")
    (length,) = struct.unpack_from("<Q", raw, len(MAGIC) + 4)
    start = len(MAGIC) + 12
    if len(raw) < start + length + 4:
        raise ChecksumFailure("cache file shorter than declared payload")
    payload = raw[start : start + length]
    (crc,) = struct.unpack_from("<I", raw, start + length)
    if zlib.crc32(payload) != crc:
        raise ChecksumFailure("cache checksum mismatch")
    return payload


def write_cache(logs, path):
    """Serialize flight logs to a single cache file."""
    buf = io.BytesIO()
    buf.write(struct.pack("<I", len(logs)))
    for log in logs:
        _w_str(buf, log.source_id)
        buf.write(struct.pack("<BB", _TYPE_CODES[log.vehicle_type], int(log.truncated)))
        params = [(k, v) for k, v in log.params.items() if isinstance(v, (int, float, str))]
        buf.write(struct.pack("<I", len(params)))
        for name, value in params:
            _w_str(buf, name)
            if isinstance(value, bool) or isinstance(value, int):
                buf.write(struct.pack("<Bq", 0, int(value)))
            elif isinstance(value, float):
                buf.write(struct.pack("<Bd", 1, value))
            else:
                buf.write(struct.pack("<B", 2))
                _w_str(buf, value)
        buf.write(struct.pack("<I", len(log.topics)))
        for (name, instance_id), series in log.topics.items():
            _w_str(buf, name)
            buf.write(struct.pack("<HBI", instance_id, int(series.resorted), len(series.columns)))
            buf.write(struct.pack("<Q", len(series.timestamps)))
            buf.write(np.ascontiguousarray(series.timestamps, dtype="<u8").tobytes())
            for cname, col in series.columns.items():
                _w_str(buf, cname)
                buf.write(np.ascontiguousarray(col, dtype="<f8").tobytes())
    _write_envelope(path, buf.getvalue())


def read_cache(path):
    """Load flight logs from a cache file written by write_cache."""
    buf = io.BytesIO(_read_envelope(path))
    (n_logs,) = struct.unpack("<I", _take(buf, 4))
    logs = []
    for _ in range(n_logs):
        source_id = _r_str(buf)
        code, truncated = struct.unpack("<BB", _take(buf, 2))
        (n_params,) = struct.unpack("<I", _take(buf, 4))
        params = {}
        for _ in range(n_params):
            name = _r_str(buf)
            (kind,) = struct.unpack("<B", _take(buf, 1))
            if kind == 0:
                (params[name],) = struct.unpack("<q", _take(buf, 8))
            elif kind == 1:
                (params[name],) = struct.unpack("<d", _take(buf, 8))
            else:
                params[name] = _r_str(buf)
        (n_topics,) = struct.unpack("<I", _take(buf, 4))
        topics = {}
        for _ in range(n_topics):
            name = _r_str(buf)
            instance_id, resorted, n_cols = struct.unpack("<HBI", _take(buf, 7))
            (n_rows,) = struct.unpack("<Q", _take(buf, 8))
            ts = np.frombuffer(_take(buf, 8 * n_rows), dtype="<u8").copy()
            columns = {}
            for _ in range(n_cols):
                cname = _r_str(buf)
                columns[cname] = np.frombuffer(_take(buf, 8 * n_rows), dtype="<f8").copy()
            topics[(name, instance_id)] = TopicSeries(
                name, instance_id, ts, columns, resorted=bool(resorted)
            )
        logs.append(
            FlightLog(
                topics=topics,
                vehicle_type=_CODE_TYPES[code],
                source_id=source_id,
                truncated=bool(truncated),
                params=params,
            )
        )
    return logs
