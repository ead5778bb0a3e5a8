"""Binary checkpoint format.

Layout (little-endian)::

    8-byte magic, u32 format version
    u32 length + config hash (ascii)
    u32 length + JSON metadata (architecture, RNG state, progress counters)
    u32 blob count, then per blob:
        u16 name length, name, u8 dtype code, u8 ndim, u32 dims, raw values

Parameter values and their RMSprop accumulators (``<name>#sq``) are stored.
Blobs are float32 unless the model runs in 64-bit mode, where float64 keeps
resumption bitwise exact.
"""
import json
import os
import struct
from pathlib import Path

import numpy as np

from .nets import ModelParams

MAGIC = b"SKVCKPT\x00"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class CheckpointError(IOError):
    """Unreadable, corrupt or mismatched checkpoint."""


def _arch(params):
    conv = params.appearance.config
    return {
        "flow_length": params.flow_length,
        "convs": [list(c) for c in conv.convs],
        "hidden": conv.hidden,
        "max_flow": params.max_flow,
        "dtype": str(params.dtype),
    }


def save_checkpoint(path, params, config_hash, meta=None):
    """Write ``params`` (values and optimizer state) plus ``meta`` to ``path``."""
    path = Path(path)
    code = 1 if params.dtype == np.float64 else 0
    dt = _DTYPES[code]
    header = {"arch": _arch(params), "meta": meta or {}}
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    h = config_hash.encode("ascii")
    chunks += [struct.pack("<I", len(h)), h]
    js = json.dumps(header, sort_keys=True).encode()
    chunks += [struct.pack("<I", len(js)), js]
    blobs = []
    for p in params.all_params():
        blobs.append((p.name, p.value))
        blobs.append((p.name + "#sq", p.square_avg))
    chunks.append(struct.pack("<I", len(blobs)))
    for name, arr in blobs:
        nb = name.encode()
        chunks += [struct.pack("<H", len(nb)), nb, struct.pack("<BB", code, arr.ndim)]
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    os.replace(tmp, path)


def read_checkpoint(path):
    """Parse a checkpoint into (config_hash, header dict, {name: array})."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        if blob[:8] != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        pos = 8
        (version,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        config_hash = blob[pos:pos + n].decode("ascii")
        pos += n
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        header = json.loads(blob[pos:pos + n])
        pos += n
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        arrays = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + n].decode()
            pos += n
            code, ndim = struct.unpack_from("<BB", blob, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            dt = _DTYPES[code]
            size = int(np.prod(shape)) * dt.itemsize
            if pos + size > len(blob):
                raise CheckpointError(f"{path}: truncated blob {name!r}")
            arrays[name] = np.frombuffer(blob, dtype=dt, count=int(np.prod(shape)), offset=pos).reshape(shape)
            pos += size
        if pos != len(blob):
            raise CheckpointError(f"{path}: trailing bytes after the last blob")
    except (struct.error, ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from exc
    return config_hash, header, arrays


def load_checkpoint(path, expect_hash=None):
    """Rebuild :class:`ModelParams` from ``path``; returns (params, meta)."""
    config_hash, header, arrays = read_checkpoint(path)
    if expect_hash is not None and config_hash != expect_hash:
        raise CheckpointError(f"{path}: config hash {config_hash} does not match {expect_hash}")
    arch = header["arch"]
    params = ModelParams.create(0, flow_length=arch["flow_length"], dtype=np.dtype(arch["dtype"]),
                                convs=tuple(tuple(c) for c in arch["convs"]), hidden=arch["hidden"],
                                max_flow=arch["max_flow"])
    for p in params.all_params():
        if p.name not in arrays or p.name + "#sq" not in arrays:
            raise CheckpointError(f"{path}: missing parameter {p.name!r}")
        p.value = arrays[p.name]
        p.square_avg = np.array(arrays[p.name + "#sq"], dtype=p.value.dtype)
    meta = dict(header.get("meta", {}))
    meta["config_hash"] = config_hash
    return params, meta


def copy_params(src, dst):
    """Copy values and optimizer state from one ModelParams into another."""
    named = src.named()
    for p in dst.all_params():
        q = named[p.name]
        p.value = q.value
        p.square_avg = q.square_avg.copy()
