"""Binary checkpoint format for named float32 parameters.

Layout (all integers little-endian)::

    b"RPCK"                    magic
    u8    version (=1)
    u32   metadata length, then that many bytes of UTF-8 JSON
    u32   record count
    per record:
        u16   name length, then UTF-8 name
        u8    ndim
        u32 * ndim  dimensions
        f32 * prod(dims)  values, C order
"""
import json
import struct

import numpy as np

MAGIC = b"RPCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(params, metadata=None):
    """Serialize ``params`` (name -> array) to bytes, preserving insertion order."""
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<B", VERSION), struct.pack("<I", len(meta)), meta,
              struct.pack("<I", len(params))]
    for name, value in params.items():
        arr = np.ascontiguousarray(np.asarray(value), dtype="<f4")
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def loads(blob):
    """Inverse of :func:`dumps`; returns ``(params, metadata)``."""
    view = memoryview(blob)
    if bytes(view[:4]) != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic header")
    pos = 4
    (version,) = struct.unpack_from("<B", view, pos)
    pos += 1
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (meta_len,) = struct.unpack_from("<I", view, pos)
    pos += 4
    metadata = json.loads(bytes(view[pos:pos + meta_len]).decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", view, pos)
    pos += 4
    params = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", view, pos)
            pos += 2
            name = bytes(view[pos:pos + name_len]).decode("utf-8")
            pos += name_len
            (ndim,) = struct.unpack_from("<B", view, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", view, pos)
            pos += 4 * ndim
            n = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(view, dtype="<f4", count=n, offset=pos).reshape(shape)
            pos += 4 * n
            params[name] = arr.astype(np.float32)
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"truncated or corrupt checkpoint: {exc}") from None
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after last record")
    return params, metadata


def save(path, params, metadata=None):
    with open(path, "wb") as fh:
        fh.write(dumps(params, metadata))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
