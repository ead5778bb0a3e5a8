"""Sequence-level matching, gallery ranking, fusion, acc@K and action detection."""
import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

MODES = ("appearance", "motion", "concat")


class StaleIndexError(RuntimeError):
    """The gallery index was built from different parameters or data."""


def page_bounds(j, M, O):
    """1-based inclusive search window of page ``j`` of ``M`` in a clip of ``O`` positions."""
    if M < 1 or O < 1 or not 1 <= j <= M:
        raise ValueError(f"invalid page {j} of {M} for {O} positions")
    if M == 1:
        lo, hi = 1, O
    elif j == 1:
        lo, hi = 1, math.ceil(O / 2)
    elif j == M:
        lo, hi = O // 2, O
    else:
        lo, hi = math.ceil(O / 4), (3 * O) // 4
    lo = max(lo, 1)
    hi = max(min(hi, O), lo)
    return lo, hi


def pairwise_sq(a, b):
    """Squared Euclidean distances between rows of ``a`` (M, D) and ``b`` (O, D)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def sequence_distance(pages, positions=None, dist=None):
    """Mean over pages of the nearest in-window position distance.

    Either pass embeddings ``pages`` (M, D) and ``positions`` (O, D), or a
    precomputed (M, O) distance matrix as ``dist``.
    """
    if dist is None:
        if len(pages) == 0:
            raise ValueError("empty page list")
        dist = pairwise_sq(pages, positions)
    dist = np.asarray(dist)
    M, O = dist.shape
    if M == 0:
        raise ValueError("empty page list")
    total = 0.0
    for j in range(1, M + 1):
        lo, hi = page_bounds(j, M, O)
        total += float(dist[j - 1, lo - 1:hi].min())
    return total / M


@dataclass
class RankedResult:
    query_id: str
    clip_ids: list
    distances: list
    ranks: dict = field(default_factory=dict)  # clip id -> 1-based rank
    mode: str = ""

    def rank_of(self, clip_id):
        return self.ranks[clip_id]


def _ranked(query_id, clip_ids, values, mode):
    order = sorted(range(len(clip_ids)), key=lambda i: (values[i], clip_ids[i]))
    ids = [clip_ids[i] for i in order]
    return RankedResult(query_id, ids, [float(values[i]) for i in order],
                        {c: r + 1 for r, c in enumerate(ids)}, mode)


@dataclass
class GalleryIndex:
    """Per-clip position embeddings for both streams plus their provenance digest."""

    clip_ids: list
    appearance: dict  # clip id -> (O, 256)
    motion: dict  # clip id -> (O, 256)
    digest: str = ""

    def positions(self, clip_id, mode):
        if mode == "appearance":
            return self.appearance[clip_id]
        if mode == "motion":
            return self.motion[clip_id]
        if mode == "concat":
            return np.concatenate([self.appearance[clip_id], self.motion[clip_id]], axis=1)
        raise ValueError(f"unknown mode {mode!r}")

    def check(self, digest):
        if digest and self.digest and digest != self.digest:
            raise StaleIndexError(f"index digest {self.digest} does not match {digest}")


@dataclass
class Query:
    id: str
    appearance: np.ndarray  # (M, 256)
    motion: np.ndarray  # (M, 256)

    def pages(self, mode):
        if mode == "appearance":
            return self.appearance
        if mode == "motion":
            return self.motion
        if mode == "concat":
            return np.concatenate([self.appearance, self.motion], axis=1)
        raise ValueError(f"unknown mode {mode!r}")


def rank_gallery(query, index, mode, digest=None):
    """Rank every gallery clip by sequence distance to ``query``."""
    index.check(digest)
    pages = query.pages(mode)
    values = [sequence_distance(pages, index.positions(c, mode)) for c in index.clip_ids]
    return _ranked(query.id, list(index.clip_ids), values, mode)


def fuse_ranks(r_ap, r_mo, lam2=0.5, clip_ids=None, query_id=""):
    """Weighted mean of two rank vectors; returns (fused scores, RankedResult).

    ``r_ap``/``r_mo`` are rank vectors aligned with ``clip_ids`` (default
    ``0..n-1`` as strings).
    """
    a = np.asarray(r_ap)
    b = np.asarray(r_mo)
    n = len(a)
    if len(b) != n:
        raise ValueError("rank vectors differ in length")
    perm = np.arange(1, n + 1)
    if not (np.array_equal(np.sort(a), perm) and np.array_equal(np.sort(b), perm)):
        raise ValueError("rank vectors must be permutations of 1..n")
    fused = lam2 * a + (1.0 - lam2) * b
    ids = list(clip_ids) if clip_ids is not None else [f"{i:06d}" for i in range(n)]
    return fused, _ranked(query_id, ids, list(fused), "rankfuse")


def fuse_results(res_ap, res_mo, lam2=0.5):
    ids = sorted(res_ap.ranks)
    _, out = fuse_ranks([res_ap.ranks[c] for c in ids], [res_mo.ranks[c] for c in ids], lam2, ids,
                        res_ap.query_id)
    return out


def acc_at_k(results, truth, k):
    """Fraction of queries whose true clip ranks within the top ``k``."""
    if not results:
        raise ValueError("no results")
    hits = 0
    for r in results:
        if r.query_id not in truth:
            raise KeyError(f"no ground truth for query {r.query_id!r}")
        hits += r.ranks[truth[r.query_id]] <= k
    return hits / len(results)


def detect_action(page, positions, interval, tolerance=5):
    """Nearest position to ``page`` and whether it lies within ``tolerance`` of ``interval``.

    Returns (1-based frame index, success flag).
    """
    d = pairwise_sq(np.asarray(page)[None], positions)[0]
    k = int(np.argmin(d)) + 1  # argmin returns the lowest index on ties
    lo, hi = interval
    gap = max(lo - k, 0, k - hi)
    return k, gap <= tolerance


# ------------------------------------------------------------------ building

def embed_batches(net, arrays, dtype, batch=64):
    from ..core import Tensor
    out = []
    for i in range(0, len(arrays), batch):
        out.append(net.forward(Tensor(np.asarray(arrays[i:i + batch], dtype=dtype))).data)
    return np.concatenate(out).astype(np.float64)


def index_digest(params, data):
    h = hashlib.sha256()
    h.update(params.digest().encode())
    h.update(json.dumps(data.clip_ids).encode())
    return h.hexdigest()[:16]


def build_index(params, data):
    """Embed every frame (appearance) and position flow stack (motion) of every clip."""
    ap, mo = {}, {}
    for c in data.clip_ids:
        n = data.n_frames(c)
        ap[c] = embed_batches(params.appearance, data.frames[c], params.dtype)
        stacks = np.stack([data.stack(c, k) for k in range(1, n + 1)])
        mo[c] = embed_batches(params.motion_flow, stacks, params.dtype)
    return GalleryIndex(list(data.clip_ids), ap, mo, index_digest(params, data))


def embed_queries(params, data):
    out = {}
    for s in data.sequence_ids:
        pages = data.pages_of(s)
        keys = [(p.sequence_id, p.page_index) for p in pages]
        ap = embed_batches(params.appearance, [data.sketch_ap[k] for k in keys], params.dtype)
        mo = embed_batches(params.motion_sketch, [data.sketch_mo[k] for k in keys], params.dtype)
        out[s] = Query(s, ap, mo)
    return out


EVAL_MODES = ("appearance", "motion", "rankfuse", "concat")


def evaluate(params, data, modes=EVAL_MODES, ks=(1, 5, 10), lam2=0.5, index=None, queries=None):
    """Rank all queries of ``data`` in every mode; returns (metrics, results by mode)."""
    index = index or build_index(params, data)
    queries = queries or embed_queries(params, data)
    results = {}
    per_stream = {}
    for m in ("appearance", "motion", "concat"):
        if m in modes or ("rankfuse" in modes and m != "concat"):
            per_stream[m] = [rank_gallery(queries[s], index, m) for s in sorted(queries)]
    for m in modes:
        if m == "rankfuse":
            results[m] = [fuse_results(a, b, lam2) for a, b in zip(per_stream["appearance"], per_stream["motion"])]
        else:
            results[m] = per_stream[m]
    metrics = {}
    n = len(index.clip_ids)
    for m, res in results.items():
        accs = {f"acc@{k}": acc_at_k(res, data.truth, min(k, n)) for k in ks}
        vals = [accs[f"acc@{k}"] for k in ks]
        if any(x > y for x, y in zip(vals, vals[1:])):
            raise AssertionError(f"{m}: acc@K not monotone in K: {accs}")
        metrics[m] = accs
    return metrics, results


def detection(params, data, mode="appearance", index=None, queries=None, tolerance=5, restrict=None):
    """Detect every page within its true clip; returns (accuracy, rows).

    ``restrict`` optionally limits to a set of sequence ids.
    """
    index = index or build_index(params, data)
    queries = queries or embed_queries(params, data)
    rows = []
    for s in sorted(queries):
        if restrict is not None and s not in restrict:
            continue
        clip = data.truth[s]
        pages = queries[s].pages(mode)
        for ref, emb in zip(data.pages_of(s), pages):
            k, ok = detect_action(emb, index.positions(clip, mode), ref.interval, tolerance)
            rows.append({"sequence_id": s, "page": ref.page_index, "clip_id": clip, "proposed": k,
                         "start": ref.interval[0], "end": ref.interval[1], "success": int(ok), "mode": mode})
    acc = sum(r["success"] for r in rows) / len(rows) if rows else float("nan")
    return acc, rows


def write_results_csv(path, results_by_mode):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["query_id", "rank", "clip_id", "distance", "mode"])
        for mode, results in results_by_mode.items():
            for r in results:
                for i, (c, d) in enumerate(zip(r.clip_ids, r.distances), start=1):
                    w.writerow([r.query_id, i, c, repr(float(d)), mode])


__all__ = ["EVAL_MODES", "GalleryIndex", "MODES", "Query", "RankedResult", "StaleIndexError", "acc_at_k",
           "build_index", "detect_action", "detection", "embed_queries", "evaluate", "fuse_ranks",
           "fuse_results", "page_bounds", "pairwise_sq", "rank_gallery", "sequence_distance",
           "write_results_csv"]
