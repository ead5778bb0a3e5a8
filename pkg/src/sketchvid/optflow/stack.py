"""Flow stacks for the motion stream and an on-disk flow cache."""
import os
import struct
import warnings
from pathlib import Path

import numpy as np

from .tvl1 import FlowError, FlowParams, tvl1_flow

CACHE_MAGIC = b"SKVFLOW1"
_HEADER = struct.Struct("<4I16s")  # n_pairs, channels, H, W, params digest


class FlowCacheWarning(UserWarning):
    """A cache file was unreadable and has been recomputed."""


def clip_flows(frames, params=None):
    """Flow between every pair of consecutive frames: (O-1, 2, H, W) float32."""
    frames = np.asarray(frames)
    n = frames.shape[0]
    if n < 2:
        raise FlowError("a clip needs at least 2 frames for optical flow")
    out = np.empty((n - 1, 2) + frames.shape[-2:], dtype=np.float32)
    for t in range(n - 1):
        f = tvl1_flow(frames[t], frames[t + 1], params)
        out[t, 0] = f.u
        out[t, 1] = f.v
    return out


def stack_from_flows(flows, start, length):
    """2L-channel stack ``[u1, v1, ..., uL, vL]`` beginning at 1-based frame ``start``."""
    n_frames = flows.shape[0] + 1
    if length < 1:
        raise FlowError("stack length must be at least 1")
    if start < 1 or start + length > n_frames:
        raise FlowError(f"a {length}-pair stack from frame {start} needs frame {start + length}, "
                        f"clip has {n_frames}")
    block = flows[start - 1:start - 1 + length]
    return block.reshape(2 * length, *flows.shape[-2:])


def stack_flows(clip, start, length, params=None, flows=None):
    """Flow stack of ``clip`` (a VideoClip or (O, 3, H, W) array) from frame ``start``."""
    frames = clip.frames if hasattr(clip, "frames") else np.asarray(clip)
    n_frames = frames.shape[0]
    if start < 1 or start + length > n_frames:
        raise FlowError(f"a {length}-pair stack from frame {start} needs frame {start + length}, "
                        f"clip has {n_frames}")
    if flows is None:
        flows = clip_flows(frames[start - 1:start + length], params)
        return flows.reshape(2 * length, *flows.shape[-2:])
    return stack_from_flows(flows, start, length)


def position_stacks(flows, length):
    """One stack per frame position 1..O; positions past O-L reuse the last stack."""
    n_frames = flows.shape[0] + 1
    last = n_frames - length
    if last < 1:
        raise FlowError(f"clip of {n_frames} frames is too short for {length}-pair stacks")
    starts = np.minimum(np.arange(1, n_frames + 1), last)
    return np.stack([stack_from_flows(flows, int(s), length) for s in starts])


class FlowCache:
    """Per-clip memo of consecutive-frame flows, persisted under ``root``.

    ``computed`` counts clips whose flow had to be solved; ``warnings``
    records recomputations caused by unreadable cache files.
    """

    def __init__(self, root=None, params=None):
        self.root = Path(root) if root is not None else None
        self.params = params or FlowParams()
        self.digest = self.params.digest()
        self.computed = 0
        self.warnings = []
        self._mem = {}

    def path(self, clip_id):
        return self.root / f"{clip_id}-{self.digest}.flow"

    def flows(self, clip):
        key = clip.id
        if key in self._mem:
            return self._mem[key]
        flows = None
        if self.root is not None and self.path(key).exists():
            try:
                flows = self._read(self.path(key), clip)
            except FlowError as exc:
                msg = f"{self.path(key)}: {exc}; recomputing"
                self.warnings.append(msg)
                warnings.warn(msg, FlowCacheWarning, stacklevel=2)
        if flows is None:
            flows = clip_flows(clip.frames, self.params)
            self.computed += 1
            if self.root is not None:
                self._write(self.path(key), flows)
        self._mem[key] = flows
        return flows

    def stack(self, clip, start, length):
        return stack_from_flows(self.flows(clip), start, length)

    def all_stacks(self, clip, length):
        return position_stacks(self.flows(clip), length)

    def _write(self, path, flows):
        path.parent.mkdir(parents=True, exist_ok=True)
        n, c, h, w = flows.shape
        tmp = path.with_suffix(".tmp")
        with open(tmp, "wb") as f:
            f.write(CACHE_MAGIC)
            f.write(_HEADER.pack(n, c, h, w, bytes.fromhex(self.digest)[:16].ljust(16, b"\0")))
            f.write(np.ascontiguousarray(flows, dtype="<f4").tobytes())
        os.replace(tmp, path)

    def _read(self, path, clip):
        blob = path.read_bytes()
        if blob[:8] != CACHE_MAGIC or len(blob) < 8 + _HEADER.size:
            raise FlowError("bad magic")
        n, c, h, w, digest = _HEADER.unpack(blob[8:8 + _HEADER.size])
        if digest != bytes.fromhex(self.digest)[:16].ljust(16, b"\0"):
            raise FlowError("parameter digest mismatch")
        expect = (clip.frames.shape[0] - 1, 2) + clip.frames.shape[-2:]
        if (n, c, h, w) != expect:
            raise FlowError(f"dims {(n, c, h, w)} do not match clip {expect}")
        payload = blob[8 + _HEADER.size:]
        if len(payload) != 4 * n * c * h * w:
            raise FlowError("truncated payload")
        arr = np.frombuffer(payload, dtype="<f4").reshape(n, c, h, w).astype(np.float32)
        if not np.isfinite(arr).all():
            raise FlowError("non-finite values")
        return arr
