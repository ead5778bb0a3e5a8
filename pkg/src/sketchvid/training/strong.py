"""Triplet construction under strong supervision and the per-stream training loop."""
import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..core import NonFiniteError, Tape, Tensor, backward, rmsprop_step, scale_grad, take
from ..embednet import ModelParams, load_checkpoint, save_checkpoint
from ..embednet.checkpoint import copy_params
from ..losses import Triplet, gather_pairs, relation_loss, sample_relation_pairs, triplet_batch_loss

log = logging.getLogger(__name__)

STREAMS = ("appearance", "motion")
_STREAM_CODE = {"appearance": 1, "motion": 2}


class TrainingError(RuntimeError):
    """Training halted (non-finite loss or unusable data)."""


@dataclass
class TrainConfig:
    margin: float = 0.5
    flow_length: int = 5
    T: float = 0.1
    lam1: float = 0.001
    lr: float = 0.001
    batch: int = 16
    P: int = 5
    epochs: int = 400
    mil_rounds: int = 4
    mil_epochs: int = 100
    seed: int = 0
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    dtype: str = "float32"
    same_clip_negative_prob: float = 0.5

    def validate(self):
        for name in ("margin", "lr", "rms_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("flow_length", "batch", "P", "epochs", "mil_rounds", "mil_epochs"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0 <= self.T < 1:
            raise ValueError("T must lie in [0, 1)")
        if self.lam1 < 0:
            raise ValueError("lam1 must be non-negative")
        if not 0 < self.rms_decay < 1:
            raise ValueError("rms_decay must lie in (0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def canonical(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        out = {}
        for k, v in d.items():
            if k not in known:
                raise ValueError(f"unknown training option {k!r}")
            out[k] = type(getattr(cls, k))(v)
        return cls(**out)


def stream_rng(seed, stream, purpose=0):
    return np.random.default_rng([int(seed), _STREAM_CODE[stream], int(purpose)])


# ------------------------------------------------------------------ triplets

def feasible_starts(data, stream, clip_id, lo, hi):
    """Frames in [lo, hi] usable as a video atom for ``stream``."""
    top = hi if stream == "appearance" else min(hi, data.last_start(clip_id))
    return np.arange(lo, top + 1) if top >= lo else np.arange(0)


def _negative(data, stream, page, rng, p_same, exclude):
    clip = page.clip_id
    if rng.random() < p_same:
        top = data.n_frames(clip) if stream == "appearance" else data.last_start(clip)
        cand = np.array([k for k in range(1, top + 1) if k not in exclude])
        if cand.size:
            return clip, int(cand[rng.integers(cand.size)])
    others = [c for c in data.clip_ids if c != clip]
    if not others:
        raise TrainingError("negatives from other clips need at least two clips")
    other = others[rng.integers(len(others))]
    top = data.n_frames(other) if stream == "appearance" else data.last_start(other)
    return other, int(rng.integers(1, top + 1))


def strong_triplet(data, stream, page, rng, p_same=0.5):
    """One triplet for ``page`` or None when its interval has no feasible start."""
    lo, hi = page.interval
    starts = feasible_starts(data, stream, page.clip_id, lo, hi)
    if starts.size == 0:
        return None
    pos = int(starts[rng.integers(starts.size)])
    neg = _negative(data, stream, page, rng, p_same, exclude=set(range(lo, hi + 1)))
    return Triplet((page.sequence_id, page.page_index), (page.clip_id, pos), neg, page.clip_id, (lo, hi))


def build_triplets_strong(data, stream, rng, p_same=0.5, skipped=None):
    """One triplet per anchor page in a random order.

    Pages whose interval admits no flow-stack start are skipped and appended
    to ``skipped`` when a list is given.
    """
    out = []
    for i in rng.permutation(len(data.pages)):
        page = data.pages[int(i)]
        t = strong_triplet(data, stream, page, rng, p_same)
        if t is None:
            log.info("skipping %s page %d: no feasible %s start in %s", page.sequence_id,
                     page.page_index, stream, page.interval)
            if skipped is not None:
                skipped.append(page)
            continue
        out.append(t)
    return out


# ------------------------------------------------------------------ training

def _nets(params, stream):
    if stream == "appearance":
        return params.appearance, params.appearance, params.relation_ap
    return params.motion_sketch, params.motion_flow, params.relation_mo


def batch_arrays(data, stream, triplets, dtype):
    a = np.stack([data.sketch(stream, t.anchor) for t in triplets]).astype(dtype)
    v = np.stack([data.video_atom(stream, *t.positive) for t in triplets]
                 + [data.video_atom(stream, *t.negative) for t in triplets]).astype(dtype)
    return a, v


def train_step(params, stream, data, triplets, config, rng, detach_relation=False, detach_triplet=False):
    """Forward, combined backward and RMSprop updates for one mini-batch.

    The relation head sees the embeddings through a gradient scale of
    ``lam1``: one backward pass of ``L_t + L_r`` then gives the CNNs
    ``dL_t + lam1 dL_r`` and the relation head ``dL_r``.
    """
    sketch_net, video_net, rel_net = _nets(params, stream)
    cnn_params, rel_params = params.stream_params(stream)
    for p in cnn_params + rel_params:
        p.zero_grad()
    n = len(triplets)
    a, v = batch_arrays(data, stream, triplets, params.dtype)
    with Tape() as tape:
        e_a = sketch_net.forward(Tensor(a))
        e_v = video_net.forward(Tensor(v))
        e_p = take(e_v, np.arange(n))
        e_n = take(e_v, np.arange(n, 2 * n))
        l_t = triplet_batch_loss(e_a, e_p, e_n, config.margin)
        l_r = None
        if not detach_relation:
            rb = sample_relation_pairs(triplets, config.P, rng)
            sk, vid = gather_pairs(rb, scale_grad(e_a, config.lam1), scale_grad(e_p, config.lam1),
                                   scale_grad(e_n, config.lam1))
            l_r = relation_loss(sk, vid, rb.target, rel_net)
        if detach_triplet:
            if l_r is None:
                raise ValueError("cannot detach both losses")
            objective = l_r
        elif l_r is None:
            objective = l_t
        else:
            objective = l_t + l_r
    lt_val = float(l_t.data)
    lr_val = float(l_r.data) if l_r is not None else float("nan")
    if not np.isfinite(lt_val) or (l_r is not None and not np.isfinite(lr_val)):
        raise NonFiniteError(f"{stream}: non-finite loss (L_t={lt_val}, L_r={lr_val})")
    backward(objective, tape)
    rmsprop_step(cnn_params, config.lr, config.rms_decay, config.rms_eps)
    if l_r is not None:
        rmsprop_step(rel_params, config.lr, config.rms_decay, config.rms_eps)
    total = lt_val + config.lam1 * (lr_val if l_r is not None else 0.0)
    return lt_val, lr_val, total


@dataclass
class TrainResult:
    params: ModelParams
    stream: str
    trace: list = field(default_factory=list)  # dicts per iteration
    epoch_means: list = field(default_factory=list)  # mean L_t per epoch
    skipped: list = field(default_factory=list)


CSV_COLUMNS = ("iteration", "stream", "L_t", "L_r", "total", "wall_ms")


def _rng_state(rng):
    return rng.bit_generator.state


def _set_rng_state(rng, state):
    rng.bit_generator.state = state


def train_stream(stream, data, config, params=None, out_dir=None, resume=False, config_hash="",
                 triplet_fn=None, epochs=None, rng=None, tag=None):
    """Train one stream with triplet + relation losses.

    ``triplet_fn(data, stream, rng)`` overrides strong-supervision triplet
    building (the weak learner passes its bag-based builder). With
    ``out_dir`` a loss CSV and a checkpoint per epoch are written; ``resume``
    restarts from that checkpoint.
    """
    if stream not in STREAMS:
        raise ValueError(f"unknown stream {stream!r}")
    config.validate()
    dtype = np.dtype(config.dtype)
    if params is None:
        params = ModelParams.create(config.seed, flow_length=config.flow_length, dtype=dtype)
    if params.flow_length != data.flow_length:
        raise TrainingError("model and data disagree on the flow stack length")
    rng = rng if rng is not None else stream_rng(config.seed, stream)
    epochs = config.epochs if epochs is None else epochs
    tag = tag or stream
    result = TrainResult(params, stream)
    start_epoch, iteration = 0, 0
    ckpt = csv_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt = out_dir / f"{tag}.ckpt"
        csv_path = out_dir / f"{tag}_loss.csv"
        if resume and ckpt.exists():
            loaded, meta = load_checkpoint(ckpt, expect_hash=config_hash or None)
            copy_params(loaded, params)
            _set_rng_state(rng, meta["rng"])
            start_epoch, iteration = int(meta["epoch"]), int(meta["iteration"])
            result.epoch_means = list(meta.get("epoch_means", []))
            log.info("resumed %s at epoch %d", tag, start_epoch)
        elif csv_path.exists():
            csv_path.unlink()
    build = triplet_fn or (lambda d, s, r: build_triplets_strong(d, s, r, config.same_clip_negative_prob,
                                                                  result.skipped))

    def save(epoch, name=None):
        if ckpt is None:
            return
        meta = {"stream": stream, "epoch": epoch, "iteration": iteration, "rng": _rng_state(rng),
                "epoch_means": result.epoch_means, "train_config": config.canonical()}
        save_checkpoint(ckpt if name is None else out_dir / name, params, config_hash, meta)

    for epoch in range(start_epoch, epochs):
        triplets = build(data, stream, rng)
        if len(triplets) < 2:
            raise TrainingError(f"{stream}: only {len(triplets)} usable triplets")
        lts = []
        rows = []
        for b in range(0, len(triplets), config.batch):
            chunk = triplets[b:b + config.batch]
            if len(chunk) < 2:
                continue
            t0 = time.perf_counter()
            try:
                lt, lr_, total = train_step(params, stream, data, chunk, config, rng)
            except NonFiniteError as exc:
                save(epoch, f"{tag}_nonfinite.ckpt")
                raise TrainingError(f"{tag}: halted at iteration {iteration + 1}: {exc}") from exc
            iteration += 1
            row = {"iteration": iteration, "stream": stream, "L_t": lt, "L_r": lr_, "total": total,
                   "wall_ms": round(1000 * (time.perf_counter() - t0), 3)}
            rows.append(row)
            result.trace.append(row)
            lts.append(lt)
        result.epoch_means.append(float(np.mean(lts)))
        if csv_path is not None:
            new = not csv_path.exists()
            with open(csv_path, "a", newline="") as f:
                w = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
                if new:
                    w.writeheader()
                w.writerows(rows)
        save(epoch + 1)
    return result
