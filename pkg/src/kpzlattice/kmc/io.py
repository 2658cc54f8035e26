"""Packed binary snapshots and CSV observable tables.

Snapshot file layout (all little-endian)::

    bytes 0-3   magic b"KPZS"
    uint32      format version (1)
    uint64      L, sites per configuration
    uint64      number of configurations
    then per configuration ceil(L/64) uint64 words; bit i of word w is site 64*w + i.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

MAGIC = b"KPZS"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


def pack_snapshots(snapshots: np.ndarray) -> bytes:
    snaps = np.atleast_2d(np.asarray(snapshots, dtype=np.uint8))
    n, L = snaps.shape
    words = -(-L // 64)
    padded = np.zeros((n, words * 64), dtype=np.uint8)
    padded[:, :L] = snaps
    packed = np.packbits(padded.reshape(n, words, 64), axis=2, bitorder="little")
    body = packed.reshape(n, words, 8).view("<u8").reshape(n, words)
    return _HEADER.pack(MAGIC, VERSION, L, n) + body.astype("<u8").tobytes()


def unpack_snapshots(data: bytes) -> np.ndarray:
    magic, version, L, n = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise ValueError("not a version-1 KPZS snapshot file")
    words = -(-L // 64)
    body = np.frombuffer(data, dtype="<u8", offset=_HEADER.size, count=n * words).reshape(n, words)
    bits = np.unpackbits(body.view(np.uint8).reshape(n, words * 8), axis=1, bitorder="little")
    return bits[:, :L].astype(np.uint8)


def write_snapshots(path: str | Path, snapshots: np.ndarray) -> None:
    Path(path).write_bytes(pack_snapshots(snapshots))


def read_snapshots(path: str | Path) -> np.ndarray:
    return unpack_snapshots(Path(path).read_bytes())


OBSERVABLE_COLUMNS = ["observable", "time", "site", "value", "stderr", "tag"]


def write_observables(path: str | Path, rows) -> None:
    """Rows of ``(observable, time, site_or_lag, value, stderr, tag)``.

    ``tag`` is ``exact`` for exactly conserved quantities, ``mc`` otherwise.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBSERVABLE_COLUMNS)
        for name, t, site, value, se, tag in rows:
            w.writerow([name, repr(float(t)), site, repr(float(value)), repr(float(se)), tag])
