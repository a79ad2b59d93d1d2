"""SRW1 weights container.

Layout (little-endian): magic ``b"SRW1"``, u32 tensor count, then per
tensor a u16 name length, the UTF-8 name, a u8 rank, ``rank`` u32 dims and
``prod(dims)`` f32 values in row-major order. Tensors are written in the
mapping's iteration order.
"""

import struct

import numpy as np

MAGIC = b"SRW1"


class WeightsFormatError(ValueError):
    pass


def dumps(tensors):
    parts = [MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        if len(raw) > 0xFFFF:
            raise WeightsFormatError(f"tensor name too long: {name[:40]}...")
        if arr.ndim > 255:
            raise WeightsFormatError(f"rank {arr.ndim} too large for {name}")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def loads(data):
    if data[:4] != MAGIC:
        raise WeightsFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    pos = 4
    try:
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            values = np.frombuffer(data, dtype="<f4", count=size, offset=pos)
            pos += 4 * size
            out[name] = values.astype(np.float32).reshape(dims)
    except (struct.error, ValueError) as exc:
        raise WeightsFormatError(f"truncated or corrupt SRW1 payload: {exc}") from exc
    if pos != len(data):
        raise WeightsFormatError(f"{len(data) - pos} trailing bytes after last tensor")
    return out


def save_weights(path, tensors):
    with open(path, "wb") as fh:
        fh.write(dumps(tensors))


def load_weights(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
