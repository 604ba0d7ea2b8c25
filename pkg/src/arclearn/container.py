"""Self-describing binary container shared by dataset and checkpoint files.

Layout: 4-byte magic, little-endian uint64 header length, UTF-8 JSON
header, then the payload arrays back to back as little-endian float64 in
C order. The header carries a ``schema_version`` plus whatever metadata
the caller needs to reconstruct the arrays, so files round-trip
bit-exactly.
"""

from __future__ import annotations

import json
import struct

import numpy as np

SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA_VERSION",
    "MalformedFileError",
    "SchemaVersionError",
    "write_container",
    "read_container",
]


class MalformedFileError(Exception):
    """The file is not a valid container (bad magic, truncation, bad JSON)."""


class SchemaVersionError(Exception):
    """The file is a valid container but written with an unknown schema."""


def write_container(path, magic: bytes, header: dict, arrays) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be exactly 4 bytes")
    header = dict(header)
    header.setdefault("schema_version", SCHEMA_VERSION)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_container(path, magic: bytes, shapes_from_header) -> tuple[dict, list]:
    """Read a container written by :func:`write_container`.

    ``shapes_from_header`` maps the parsed header to the list of expected
    array shapes; the payload must contain exactly that many float64
    values or the file is reported as malformed.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != magic:
        raise MalformedFileError(f"{path}: not a {magic!r} container")
    (header_len,) = struct.unpack("<Q", raw[4:12])
    if len(raw) < 12 + header_len:
        raise MalformedFileError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFileError(f"{path}: unreadable header ({exc})") from exc
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"{path}: schema_version {version!r}, expected {SCHEMA_VERSION}"
        )

    shapes = shapes_from_header(header)
    payload = raw[12 + header_len :]
    expected = sum(int(np.prod(s)) for s in shapes) * 8
    if len(payload) != expected:
        raise MalformedFileError(
            f"{path}: payload holds {len(payload)} bytes, expected {expected}"
        )
    arrays = []
    offset = 0
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        arrays.append(arr.astype(np.float64).reshape(shape))
        offset += count * 8
    return header, arrays
