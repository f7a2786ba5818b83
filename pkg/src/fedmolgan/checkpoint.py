"""Model checkpoint serialization.

Layout: header line ``GGFCKPT v1\n``, then per-parameter records
``name \t rank \t dim... \t`` (ASCII) followed by the row-major little-endian
float32 payload, and a trailing little-endian CRC32 over all record bytes.
Reserved ``meta/...`` records carry architecture hints so models can be
rebuilt from the file alone.
"""

from __future__ import annotations

import io
import os
import zlib

import numpy as np

MAGIC = b"GGFCKPT v1\n"


class CorruptCheckpoint(ValueError):
    pass


def save_arrays(path: str, named: dict[str, np.ndarray]) -> None:
    """Write named float arrays; order is preserved."""
    payload = io.BytesIO()
    for name, arr in named.items():
        if "\t" in name or "\n" in name:
            raise ValueError(f"parameter name {name!r} may not contain tabs/newlines")
        a = np.asarray(arr, dtype="<f4")
        dims = "\t".join(str(d) for d in a.shape)
        head = f"{name}\t{a.ndim}" + (f"\t{dims}" if a.ndim else "") + "\t"
        payload.write(head.encode("ascii"))
        payload.write(a.tobytes())
    body = payload.getvalue()
    crc = zlib.crc32(body) & 0xFFFFFFFF
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(body)
        fh.write(crc.to_bytes(4, "little"))
    os.replace(tmp, path)


def load_arrays(path: str) -> dict[str, np.ndarray]:
    """Read a checkpoint back; raises CorruptCheckpoint on CRC or format damage."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC) or len(blob) < len(MAGIC) + 4:
        raise CorruptCheckpoint(f"{path}: missing GGFCKPT header")
    body, tail = blob[len(MAGIC) : -4], blob[-4:]
    if zlib.crc32(body) & 0xFFFFFFFF != int.from_bytes(tail, "little"):
        raise CorruptCheckpoint(f"{path}: CRC mismatch")

    out: dict[str, np.ndarray] = {}
    pos = 0

    def read_field() -> str:
        nonlocal pos
        end = body.find(b"\t", pos)
        if end < 0:
            raise CorruptCheckpoint(f"{path}: truncated record header")
        field = body[pos:end]
        pos = end + 1
        return field.decode("ascii")

    while pos < len(body):
        name = read_field()
        try:
            rank = int(read_field())
            dims = tuple(int(read_field()) for _ in range(rank))
        except ValueError as err:
            raise CorruptCheckpoint(f"{path}: bad record header for {name!r}") from err
        count = int(np.prod(dims)) if rank else 1
        nbytes = 4 * count
        if pos + nbytes > len(body):
            raise CorruptCheckpoint(f"{path}: truncated payload for {name!r}")
        arr = np.frombuffer(body[pos : pos + nbytes], dtype="<f4").reshape(dims)
        pos += nbytes
        out[name] = arr.astype(np.float32)
    return out
