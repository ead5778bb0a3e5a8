"""Triplet ranking loss, relation loss and their weighted combination."""
from dataclasses import dataclass

import numpy as np

from ..core import Tensor, add, add_scalar, concat, mean, relu, scale, softmax_cross_entropy, square, sub, take
from ..core import sum_ as tsum
from ..embednet import relation_scores


@dataclass(frozen=True)
class Triplet:
    """Sketch part with a matching and a non-matching video atom.

    ``anchor`` is (sequence id, page index); ``positive``/``negative`` are
    (clip id, 1-based frame). ``match_clip`` and ``match_frames`` (an
    inclusive ``(start, end)`` tuple or a frozenset of frames) say which video
    atoms truly match the anchor, so false relation pairs can be verified.
    """

    anchor: tuple
    positive: tuple
    negative: tuple
    match_clip: str
    match_frames: tuple

    def __post_init__(self):
        if tuple(self.positive) == tuple(self.negative):
            raise ValueError(f"positive and negative coincide: {self.positive}")

    def matches(self, atom):
        clip, frame = atom
        if clip != self.match_clip:
            return False
        mf = self.match_frames
        if not isinstance(mf, frozenset):
            return mf[0] <= frame <= mf[1]
        return frame in mf


@dataclass(frozen=True)
class RelationBatch:
    """P pairs: ``anchors[k]`` indexes the triplet whose sketch part is used,
    ``videos[k]`` is ("pos" | "neg", triplet index)."""

    anchors: tuple
    videos: tuple
    target: np.ndarray

    @property
    def true_index(self):
        return int(np.argmax(self.target))


def squared_distance(a, b):
    """Row-wise squared Euclidean distance of (N, D) tensors, or scalar for (D,)."""
    return tsum(square(sub(a, b)), axis=-1)


def triplet_loss(e_a, e_p, e_n, margin=0.5):
    """Hinge ``max(0, margin + |a-p|^2 - |a-n|^2)``; per-row for batched input."""
    gap = sub(squared_distance(e_a, e_p), squared_distance(e_a, e_n))
    return relu(add_scalar(gap, margin))


def triplet_batch_loss(e_a, e_p, e_n, margin=0.5):
    """Mean hinge over the rows of (N, D) embeddings."""
    return mean(triplet_loss(e_a, e_p, e_n, margin))


def relation_loss(sketch_emb, video_emb, target, relation_net):
    """P-way cross-entropy over the scores of (sketch, video) pairs."""
    return softmax_cross_entropy(relation_scores(sketch_emb, video_emb, relation_net), target)


def combined_loss(l_t, l_r, lam1):
    """``L_t + lam1 * L_r`` for tensors or plain numbers."""
    if lam1 < 0:
        raise ValueError("lam1 must be non-negative")
    if isinstance(l_t, Tensor):
        return add(l_t, scale(l_r, lam1))
    return float(l_t) + lam1 * float(l_r)


def sample_relation_pairs(triplets, P, rng):
    """One true pair and P-1 distinct verified-false pairs from a mini-batch.

    The query anchor is drawn at random; false pairs combine it with its own
    negative or with the positives/negatives of other triplets.
    """
    n = len(triplets)
    if n < 1 or P < 1:
        raise ValueError("need at least one triplet and P >= 1")
    for i in rng.permutation(n):
        i = int(i)
        t = triplets[i]
        seen = {tuple(t.positive)}
        pool = []
        for j in range(n):
            for kind in ("neg", "pos"):
                if j == i and kind == "pos":
                    continue
                atom = tuple(getattr(triplets[j], "negative" if kind == "neg" else "positive"))
                if atom in seen or t.matches(atom):
                    continue
                seen.add(atom)
                pool.append((kind, j))
        if len(pool) >= P - 1:
            break
    else:
        raise ValueError(f"mini-batch of {n} triplets cannot supply {P - 1} distinct false pairs")
    chosen = [pool[k] for k in rng.choice(len(pool), size=P - 1, replace=False)] if P > 1 else []
    videos = [("pos", i)] + chosen
    order = rng.permutation(P)
    videos = tuple(videos[k] for k in order)
    target = np.zeros(P)
    target[int(np.argmax(order == 0))] = 1.0
    return RelationBatch(anchors=(i,) * P, videos=videos, target=target)


def gather_pairs(batch, anchor_emb, pos_emb, neg_emb):
    """(P, D) sketch and video embedding tensors for a relation batch."""
    n = anchor_emb.shape[0]
    videos = concat([pos_emb, neg_emb], axis=0)
    vidx = [j if kind == "pos" else n + j for kind, j in batch.videos]
    return take(anchor_emb, list(batch.anchors)), take(videos, vidx)


__all__ = ["RelationBatch", "Triplet", "combined_loss", "gather_pairs", "relation_loss",
           "sample_relation_pairs", "squared_distance", "triplet_batch_loss", "triplet_loss"]
