"""Named-array checkpoint files.

Layout::

    b"MXCK" | u32 version | u64 header length | JSON header (utf-8) | payload

The header holds the caller's metadata plus an ``arrays`` list of
``{name, shape, offset}`` entries; the payload is the row-major
little-endian float64 data of every array, in header order.  Keys are
sorted when the header is written, so equal inputs give equal bytes.
"""

import json
import struct

import numpy as np

MAGIC = b"MXCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arrays: dict, header: dict):
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(data.shape), "offset": offset})
        chunks.append(data.tobytes())
        offset += data.nbytes
    meta = dict(header)
    meta["arrays"] = entries
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(blob)))
        fh.write(blob)
        for chunk in chunks:
            fh.write(chunk)


def load_checkpoint(path):
    """Return ``(header, arrays)``; ``header`` excludes the array table."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    start = 4 + struct.calcsize("<IQ")
    if len(raw) < start:
        raise CheckpointError(f"{path}: truncated header")
    version, hlen = struct.unpack_from("<IQ", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    try:
        meta = json.loads(raw[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    base = start + hlen
    arrays = {}
    for entry in meta.pop("arrays"):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        lo = base + entry["offset"]
        if lo + 8 * count > len(raw):
            raise CheckpointError(f"{path}: payload for {entry['name']!r} is truncated")
        arrays[entry["name"]] = (
            np.frombuffer(raw, dtype="<f8", count=count, offset=lo).reshape(shape).astype(np.float64)
        )
    return meta, arrays
