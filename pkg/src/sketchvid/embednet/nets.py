"""Stream embedding networks and relation heads.

Each stream is conv-relu x3, global average pooling and a two-layer FC head
producing a 256-D embedding. Relation heads score a concatenated
(sketch, video) embedding pair with a 512-128-32-1 MLP.
"""
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from ..core import Parameter, Tensor, concat, conv2d, global_avg_pool, linear, relu, reshape
from ..core.tensor import ShapeError

EMBED_DIM = 256
DEFAULT_CONVS = ((16, 3, 2), (32, 3, 2), (64, 3, 2))
MAX_FLOW = 8.0


@dataclass(frozen=True)
class StreamConfig:
    input_channels: int
    convs: tuple = DEFAULT_CONVS
    hidden: int = 512
    embedding_dim: int = EMBED_DIM
    padding: int = 1
    standardize: bool = True  # per-image zero mean / unit variance before the first conv
    out_gain: float = 0.1  # init scale of the last layer, keeps initial distances O(1)

    def validate(self):
        if self.embedding_dim != EMBED_DIM:
            raise ShapeError(f"embedding dimension must be {EMBED_DIM}")
        if self.input_channels < 1 or not self.convs:
            raise ShapeError("stream needs input channels and at least one conv layer")


@dataclass(frozen=True)
class RelationNetConfig:
    input_dim: int = 2 * EMBED_DIM
    hidden: tuple = (128, 32)

    def validate(self):
        if self.input_dim != 2 * EMBED_DIM:
            raise ShapeError(f"relation input must be 2 x {EMBED_DIM}")


def standardize_images(x, eps=1e-3):
    """Zero mean, unit variance per image over all channels and pixels."""
    axes = (-3, -2, -1)
    m = x.mean(axis=axes, keepdims=True)
    s = x.std(axis=axes, keepdims=True)
    return ((x - m) / (s + eps)).astype(x.dtype, copy=False)


def kaiming_uniform(rng, shape, fan_in):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class StreamNet:
    """One CNN stream; ``forward`` maps (N, C, H, W) to (N, 256)."""

    def __init__(self, name, config, rng, dtype=np.float64):
        config.validate()
        self.name = name
        self.config = config
        self.params = []
        self.conv_weights = []
        c_in = config.input_channels
        for i, (c_out, k, stride) in enumerate(config.convs):
            w = Parameter(f"{name}.conv{i}.weight",
                          kaiming_uniform(rng, (c_out, c_in, k, k), c_in * k * k), dtype)
            self.conv_weights.append((w, stride))
            self.params.append(w)
            c_in = c_out
        self.fc = []
        dims = (c_in, config.hidden, config.embedding_dim)
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            gain = config.out_gain if i == len(dims) - 2 else 1.0
            w = Parameter(f"{name}.fc{i}.weight", gain * kaiming_uniform(rng, (d_out, d_in), d_in), dtype)
            b = Parameter(f"{name}.fc{i}.bias", np.zeros(d_out), dtype)
            self.fc.append((w, b))
            self.params.extend([w, b])

    def forward(self, x):
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.params[0].value.dtype))
        single = x.data.ndim == 3
        if x.data.ndim not in (3, 4) or x.shape[-3] != self.config.input_channels:
            raise ShapeError(f"{self.name}: expected {self.config.input_channels} input channels, "
                             f"got input of shape {x.shape}")
        if single:
            x = reshape(x, (1,) + x.shape)
        if self.config.standardize:
            # input preprocessing, not differentiated
            x = Tensor(standardize_images(x.data))
        h = x
        for w, stride in self.conv_weights:
            h = relu(conv2d(h, w.tensor, stride=stride, padding=self.config.padding))
        h = global_avg_pool(h)
        (w0, b0), (w1, b1) = self.fc
        h = relu(linear(h, w0.tensor, b0.tensor))
        out = linear(h, w1.tensor, b1.tensor)
        if single:
            out = reshape(out, (self.config.embedding_dim,))
        return out


class RelationNet:
    """MLP scoring each row of a (P, 512) pair matrix; returns (P,)."""

    def __init__(self, name, config, rng, dtype=np.float64):
        config.validate()
        self.name = name
        self.config = config
        self.layers = []
        self.params = []
        dims = (config.input_dim,) + tuple(config.hidden) + (1,)
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            w = Parameter(f"{name}.fc{i}.weight", kaiming_uniform(rng, (d_out, d_in), d_in), dtype)
            b = Parameter(f"{name}.fc{i}.bias", np.zeros(d_out), dtype)
            self.layers.append((w, b))
            self.params.extend([w, b])

    def forward(self, pairs):
        if pairs.data.ndim != 2 or pairs.shape[1] != self.config.input_dim:
            raise ShapeError(f"{self.name}: pairs must be (P, {self.config.input_dim}), got {pairs.shape}")
        h = pairs
        for i, (w, b) in enumerate(self.layers):
            h = linear(h, w.tensor, b.tensor)
            if i < len(self.layers) - 1:
                h = relu(h)
        return reshape(h, (pairs.shape[0],))


@dataclass
class ModelParams:
    """All parameter sets: shared appearance CNN, two motion CNNs, two relation heads."""

    appearance: StreamNet
    motion_sketch: StreamNet
    motion_flow: StreamNet
    relation_ap: RelationNet
    relation_mo: RelationNet
    flow_length: int = 5
    max_flow: float = MAX_FLOW
    extra: dict = field(default_factory=dict)

    @classmethod
    def create(cls, seed, flow_length=5, dtype=np.float64, convs=DEFAULT_CONVS, hidden=512,
               max_flow=MAX_FLOW):
        rng = np.random.default_rng([int(seed), 0xE3B])
        return cls(
            appearance=StreamNet("ap_c", StreamConfig(3, convs, hidden), rng, dtype),
            motion_sketch=StreamNet("mo_c_sketch", StreamConfig(3, convs, hidden), rng, dtype),
            motion_flow=StreamNet("mo_c_flow", StreamConfig(2 * flow_length, convs, hidden, standardize=False),
                                  rng, dtype),
            relation_ap=RelationNet("ap_r", RelationNetConfig(), rng, dtype),
            relation_mo=RelationNet("mo_r", RelationNetConfig(), rng, dtype),
            flow_length=flow_length,
            max_flow=max_flow,
        )

    @property
    def dtype(self):
        return self.appearance.params[0].value.dtype

    def stream_params(self, stream):
        """(CNN parameters, relation parameters) of one stream."""
        if stream == "appearance":
            return list(self.appearance.params), list(self.relation_ap.params)
        if stream == "motion":
            return (list(self.motion_sketch.params) + list(self.motion_flow.params),
                    list(self.relation_mo.params))
        raise ValueError(f"unknown stream {stream!r}")

    def all_params(self):
        out = []
        for net in (self.appearance, self.motion_sketch, self.motion_flow, self.relation_ap, self.relation_mo):
            out.extend(net.params)
        return out

    def named(self):
        return {p.name: p for p in self.all_params()}

    def digest(self, stream=None):
        h = hashlib.sha256()
        params = self.all_params() if stream is None else sum(self.stream_params(stream), [])
        for p in params:
            h.update(p.name.encode())
            h.update(np.ascontiguousarray(p.value).tobytes())
        return h.hexdigest()[:16]


# ------------------------------------------------------------------ inputs

def sketch_input(raster, ink_dark=False):
    """Replicate a (1, H, W) or (N, 1, H, W) sketch raster to 3 channels.

    With ``ink_dark`` the page is shown as dark strokes on white, the
    polarity of a figure on bright ice.
    """
    r = np.asarray(raster)
    if ink_dark:
        r = 1.0 - r
    if r.ndim == 2:
        r = r[None]
    axis = r.ndim - 3
    if r.shape[axis] != 1:
        raise ShapeError(f"sketch rasters have one channel, got shape {r.shape}")
    return np.repeat(r, 3, axis=axis)


def flow_input(stack, max_flow=MAX_FLOW):
    """Scale pixel displacements by ``max_flow`` and clamp to [-1, 1]."""
    return np.clip(np.asarray(stack) / max_flow, -1.0, 1.0)


def _as_input(x, dtype):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def embed_appearance(x, params):
    """Appearance embedding of 3-channel inputs (sketch rasters or frames)."""
    return params.appearance.forward(_as_input(x, params.dtype))


def embed_motion_sketch(x, params):
    return params.motion_sketch.forward(_as_input(x, params.dtype))


def embed_flow(stack, params):
    """Motion embedding of raw-pixel flow stacks (2L, H, W) or (N, 2L, H, W)."""
    arr = np.asarray(stack.data if isinstance(stack, Tensor) else stack)
    channels = 2 * params.flow_length
    if arr.ndim not in (3, 4) or arr.shape[-3] != channels:
        raise ShapeError(f"flow stacks must have {channels} channels, got shape {arr.shape}")
    return params.motion_flow.forward(Tensor(flow_input(arr, params.max_flow).astype(params.dtype)))


def relation_scores(sketch_emb, video_emb, relation_net):
    """Scores of P (sketch, video) pairs; inputs are (P, 256) each."""
    if sketch_emb.shape != video_emb.shape or sketch_emb.data.ndim != 2:
        raise ShapeError(f"pair embeddings must be matching (P, D), got {sketch_emb.shape}, {video_emb.shape}")
    return relation_net.forward(concat([sketch_emb, video_emb], axis=1))
