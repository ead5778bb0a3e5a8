"""Multiple-instance learning from sequence-to-clip pairing alone.

Each sketch page of each stream gets a positive bag: a half-length window of
its paired clip chosen by page position. Training alternates between
learning on the current positive instances and flipping the furthest
fraction ``T`` of each bag's positives to negative.
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..embednet import ModelParams
from ..losses import Triplet
from ..retrieval import embed_batches, pairwise_sq
from .strong import STREAMS, TrainingError, stream_rng, train_stream

log = logging.getLogger(__name__)


@dataclass
class Bag:
    anchor: tuple  # (sequence id, page index, stream)
    clip_id: str
    instances: np.ndarray  # 1-based frame indices
    labels: np.ndarray  # True = positive
    polarity: str = "positive"

    @property
    def n_positive(self):
        return int(self.labels.sum())

    def positives(self):
        return self.instances[self.labels]

    def negatives(self):
        return self.instances[~self.labels]


def bag_window(j, M, O):
    """Inclusive 1-based frame window of page ``j`` of ``M`` in a clip of ``O`` frames.

    Single-page sequences use the first-page window.
    """
    if O < 1 or M < 1 or not 1 <= j <= M:
        raise ValueError(f"invalid page {j} of {M} for {O} frames")
    if j == 1:
        lo, hi = 1, math.ceil(O / 2)
    elif j == M:
        lo, hi = O // 2, O
    else:
        lo, hi = math.ceil(O / 4), (3 * O) // 4
    lo = max(lo, 1)
    return lo, max(min(hi, O), lo)


def init_bags_weak(data, streams=STREAMS):
    """Positive bags for every page and stream, all instances positive."""
    bags = []
    for stream in streams:
        for p in data.pages:
            lo, hi = bag_window(p.page_index, p.n_pages, data.n_frames(p.clip_id))
            inst = np.arange(lo, hi + 1)
            bags.append(Bag((p.sequence_id, p.page_index, stream), p.clip_id, inst,
                            np.ones(inst.size, dtype=bool)))
    return bags


def negative_bag(data, anchor, clip_id):
    """The negative bag of ``anchor`` formed by an unpaired clip."""
    inst = np.arange(1, data.n_frames(clip_id) + 1)
    return Bag(tuple(anchor), clip_id, inst, np.zeros(inst.size, dtype=bool), "negative")


def flip_count(n_positive, T):
    """Instances to flip this round: ceil(T * n) but keeping one positive."""
    k = math.ceil(Fraction(str(T)) * n_positive)
    return max(min(k, n_positive - 1), 0)


def mil_label_inference(bags, distance, T):
    """Flip the furthest ``ceil(T * n_pos)`` positives of every positive bag.

    ``distance(bag, frames)`` returns anchor-to-instance distances. Ties go to
    the lower frame index. Returns the number flipped per bag.
    """
    flipped = []
    for bag in bags:
        if bag.polarity != "positive":
            flipped.append(0)
            continue
        pos = bag.positives()
        k = flip_count(pos.size, T)
        if k:
            d = np.asarray(distance(bag, pos), dtype=np.float64)
            order = sorted(range(pos.size), key=lambda i: (-d[i], pos[i]))
            drop = set(int(pos[i]) for i in order[:k])
            bag.labels = bag.labels & ~np.isin(bag.instances, list(drop))
        flipped.append(k)
    return flipped


def weak_triplets(data, stream, bags, rng, p_same=0.5):
    """One triplet per positive bag of ``stream`` from the current labels."""
    out = []
    own = [b for b in bags if b.anchor[2] == stream]
    for i in rng.permutation(len(own)):
        bag = own[int(i)]
        pos_frames = bag.positives()
        pos = int(pos_frames[rng.integers(pos_frames.size)])
        negs = bag.negatives()
        if negs.size and rng.random() < p_same:
            neg = (bag.clip_id, int(negs[rng.integers(negs.size)]))
        else:
            others = [c for c in data.clip_ids if c != bag.clip_id]
            if not others:
                raise TrainingError("weak supervision needs at least two clips")
            other = others[rng.integers(len(others))]
            neg = (other, int(rng.integers(1, data.n_frames(other) + 1)))
        out.append(Triplet(bag.anchor[:2], (bag.clip_id, pos), neg, bag.clip_id,
                           frozenset(int(f) for f in pos_frames)))
    return out


def embedding_distance(params, data, stream):
    """Distance function for :func:`mil_label_inference` under frozen ``params``."""
    cache = {}
    sketch_net = params.appearance if stream == "appearance" else params.motion_sketch
    video_net = params.appearance if stream == "appearance" else params.motion_flow

    def video(clip_id):
        if clip_id not in cache:
            n = data.n_frames(clip_id)
            atoms = [data.video_atom(stream, clip_id, k) for k in range(1, n + 1)]
            cache[clip_id] = embed_batches(video_net, atoms, params.dtype)
        return cache[clip_id]

    def distance(bag, frames):
        key = bag.anchor[:2]
        a = embed_batches(sketch_net, [data.sketch(stream, key)], params.dtype)
        return pairwise_sq(a, video(bag.clip_id)[np.asarray(frames) - 1])[0]

    return distance


def precision_inside_truth(data, bags):
    """Fraction of surviving positives that lie in the true alignment interval."""
    truth = {(p.sequence_id, p.page_index): p.interval for p in data.pages}
    inside = total = 0
    for b in bags:
        lo, hi = truth[b.anchor[:2]]
        pos = b.positives()
        inside += int(((pos >= lo) & (pos <= hi)).sum())
        total += pos.size
    return inside / total if total else float("nan")


@dataclass
class WeakResult:
    params: ModelParams
    bags: list
    rounds: list = field(default_factory=list)  # per stream and round summaries


def train_weak(data, config, params=None, streams=STREAMS, out_dir=None, config_hash=""):
    """Alternate learning and label inference for ``config.mil_rounds`` rounds."""
    config.validate()
    if params is None:
        params = ModelParams.create(config.seed, flow_length=config.flow_length, dtype=np.dtype(config.dtype))
    bags = init_bags_weak(data, streams)
    result = WeakResult(params, bags)
    for stream in streams:
        own = [b for b in bags if b.anchor[2] == stream]
        rng = stream_rng(config.seed, stream, purpose=7)
        for r in range(config.mil_rounds):
            train_stream(stream, data, config, params=params, out_dir=out_dir, config_hash=config_hash,
                         triplet_fn=lambda d, s, g: weak_triplets(d, s, own, g, config.same_clip_negative_prob),
                         epochs=config.mil_epochs, rng=rng, tag=f"{stream}_weak_round{r + 1}")
            flipped = mil_label_inference(own, embedding_distance(params, data, stream), config.T)
            summary = {"stream": stream, "round": r + 1, "flipped": int(sum(flipped)),
                       "positives": int(sum(b.n_positive for b in own)),
                       "precision": precision_inside_truth(data, own)}
            log.info("MIL %(stream)s round %(round)d: %(positives)d positives remain, "
                     "%(flipped)d flipped, %(precision).3f inside truth", summary)
            result.rounds.append(summary)
    return result
