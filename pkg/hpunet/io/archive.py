"""HPUT tensor archives.

Layout (all integers little-endian)::

    b"HPUT" | version u32 | record count u32
    per record: name length u16 | UTF-8 name | kind u8 | rank u8
                | rank x u32 extents | row-major payload

Kinds: 0 = uint8, 1 = float32, 2 = int32, 3 = UTF-8 text (rank 1, the
extent is the byte length).
"""
from __future__ import annotations

import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from hpunet.errors import BadMagicError, TruncatedArchiveError, UnsupportedVersionError

logger = logging.getLogger(__name__)

MAGIC = b"HPUT"
VERSION = 1

KIND_UINT8, KIND_FLOAT32, KIND_INT32, KIND_TEXT = 0, 1, 2, 3
_KIND_DTYPES = {
    KIND_UINT8: np.dtype("<u1"),
    KIND_FLOAT32: np.dtype("<f4"),
    KIND_INT32: np.dtype("<i4"),
}

Record = Union[np.ndarray, str]
Records = Dict[str, Record]


def _kind_of(name: str, value: Record) -> int:
    if isinstance(value, str):
        return KIND_TEXT
    dt = np.asarray(value).dtype
    if dt == np.bool_ or dt == np.uint8:
        return KIND_UINT8
    if dt == np.float32:
        return KIND_FLOAT32
    if dt == np.int32:
        return KIND_INT32
    raise TypeError(f"Record {name!r} has unsupported dtype {dt}; use uint8, float32, int32 or str")


def encode_archive(records: Mapping[str, Record]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(records))]
    for name, value in records.items():
        kind = _kind_of(name, value)
        encoded_name = name.encode("utf-8")
        if len(encoded_name) > 0xFFFF:
            raise ValueError(f"Record name too long ({len(encoded_name)} bytes)")
        if kind == KIND_TEXT:
            payload = value.encode("utf-8")
            extents = (len(payload),)
        else:
            arr = np.asarray(value)
            extents = arr.shape
            payload = np.ascontiguousarray(arr, dtype=_KIND_DTYPES[kind]).tobytes()
        if len(extents) > 0xFF:
            raise ValueError(f"Record {name!r} has rank {len(extents)} > 255")
        chunks.append(struct.pack("<H", len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(struct.pack("<BB", kind, len(extents)))
        chunks.append(struct.pack(f"<{len(extents)}I", *extents))
        chunks.append(payload)
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes, source: str) -> None:
        self.data, self.pos, self.source = data, 0, source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedArchiveError(
                f"truncated archive {self.source}: needed {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_archive(data: bytes, source: str = "<bytes>") -> Records:
    reader = _Reader(data, source)
    if len(data) < len(MAGIC):
        raise TruncatedArchiveError(f"truncated archive {source}: {len(data)} bytes")
    magic = reader.take(len(MAGIC))
    if magic != MAGIC:
        raise BadMagicError(f"bad magic in {source}: expected {MAGIC!r}, found {magic!r}")
    version, count = reader.unpack("<II")
    if version != VERSION:
        raise UnsupportedVersionError(
            f"Unsupported archive version {version} in {source} (this build reads version {VERSION})")

    records: Records = OrderedDict()
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        kind, rank = reader.unpack("<BB")
        extents = reader.unpack(f"<{rank}I") if rank else ()
        if name in records:
            raise ValueError(f"Duplicate record name {name!r} in {source}")
        if kind == KIND_TEXT:
            records[name] = reader.take(extents[0]).decode("utf-8")
        elif kind in _KIND_DTYPES:
            dt = _KIND_DTYPES[kind]
            n = int(np.prod(extents, dtype=np.int64))
            raw = reader.take(n * dt.itemsize)
            records[name] = np.frombuffer(raw, dtype=dt).reshape(extents).astype(dt.newbyteorder("="))
        else:
            raise ValueError(f"Unknown element kind {kind} for record {name!r} in {source}")
    if reader.pos != len(data):
        logger.warning("%d trailing bytes after the last record in %s", len(data) - reader.pos, source)
    return records


def archive_write(path: Union[str, Path], records: Mapping[str, Record]) -> None:
    """Encode `records` and write them to `path`, creating parent directories.

    Args:
        path: Destination file.
        records: Arrays or strings keyed by record name, written in order.
    """
    path = Path(path)
    blob = encode_archive(records)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(blob)
    logger.debug("Wrote %d records (%d bytes) to %s", len(records), len(blob), path)


def archive_read(path: Union[str, Path]) -> Records:
    """Read every record of an archive file.

    Returns:
        Records in file order, arrays in native byte order.

    Raises:
        BadMagicError, UnsupportedVersionError: If the header is not ours.
        TruncatedArchiveError: If the file ends inside a record.
    """
    path = Path(path)
    with open(path, "rb") as f:
        data = f.read()
    return decode_archive(data, str(path))
