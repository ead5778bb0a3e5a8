"""Acceptance criteria 1-10 at their stated tolerances.

Criteria 7-10 train on the constructed 32-clip twin benchmark; the trained
runs are shared through a module fixture. A pass/fail line per criterion is
printed in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from sketchvid.config import load_config
from sketchvid.core import Parameter, Tape, Tensor, backward, conv2d, global_avg_pool, linear, relu, \
    softmax_cross_entropy, square, sum_
from sketchvid.embednet import ModelParams, relation_scores
from sketchvid.losses import relation_loss, triplet_batch_loss, triplet_loss
from sketchvid.optflow import FlowCache, tvl1_flow
from sketchvid.retrieval import (
    GalleryIndex,
    Query,
    build_index,
    detection,
    embed_queries,
    evaluate,
    fuse_ranks,
    fuse_results,
    rank_gallery,
    sequence_distance,
)
from sketchvid.synthdata import generate_dataset
from sketchvid.training import Bag, StreamData, bag_window, mil_label_inference, train_stream, train_weak

from flowdata import endpoint_ok_fraction, shifted_pair, textured
from oracles import bounds_oracle, central_difference, flip_oracle, rel_error, seq_distance_bruteforce

RESULTS = {}


def record(n, ok, detail):
    RESULTS[n] = (bool(ok), detail)
    assert ok, f"criterion {n}: {detail}"


# ---------------------------------------------------------------- 1 gradients

def _check(build, params, rng, max_coords=40):
    """Worst relative error; large parameters are checked on a random subset of entries."""
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = build()
    backward(loss, tape)
    worst = 0.0
    for p in params:
        size = p.tensor.data.size
        coords = None if size <= max_coords else rng.choice(size, max_coords, replace=False)
        num = central_difference(lambda: build().item(), p.tensor.data, 1e-4, coords)
        ana = p.grad if coords is None else p.grad.reshape(-1)[coords]
        worst = max(worst, rel_error(ana, num))
    return worst


def _layer_cases(rng):
    x = Parameter("x", rng.normal(size=(2, 7, 7)))
    k = Parameter("k", rng.normal(size=(3, 2, 3, 3)))
    w = Parameter("w", rng.normal(size=(4, 6)))
    b = Parameter("b", rng.normal(size=4))
    v = Parameter("v", rng.normal(size=6))
    s = Parameter("s", rng.normal(size=5))
    e = [Parameter(n, rng.normal(size=(3, 8))) for n in ("a", "p", "n")]
    rel = ModelParams.create(int(rng.integers(1 << 30)), dtype=np.float64, convs=((2, 3, 2),), hidden=4)
    sk = Parameter("sk", rng.normal(size=(5, 256)) * 0.3)
    vid = Parameter("vid", rng.normal(size=(5, 256)) * 0.3)
    target = np.eye(5)[int(rng.integers(5))]
    # shift away from the relu kink so central differences are well defined
    r = Parameter("r", rng.normal(size=12) + np.sign(rng.normal(size=12)) * 0.1)
    return {
        "conv2d": (lambda: sum_(square(conv2d(x.tensor, k.tensor, stride=2, padding=1))), [x, k]),
        "relu": (lambda: sum_(relu(r.tensor) * relu(r.tensor)), [r]),
        "global_avg_pool": (lambda: sum_(square(global_avg_pool(x.tensor))), [x]),
        "linear": (lambda: sum_(square(linear(v.tensor, w.tensor, b.tensor))), [v, w, b]),
        "softmax_cross_entropy": (lambda: softmax_cross_entropy(s.tensor, target), [s]),
        "triplet_loss": (lambda: triplet_batch_loss(e[0].tensor, e[1].tensor, e[2].tensor, margin=50.0), e),
        "relation_loss": (lambda: relation_loss(sk.tensor, vid.tensor, target, rel.relation_ap),
                          [sk, vid] + list(rel.relation_ap.params)),
    }


def test_c1_gradient_integrity():
    t0 = time.perf_counter()
    worst = {}
    for seed in range(20):
        rng = np.random.default_rng(seed)
        for name, (build, params) in _layer_cases(rng).items():
            worst[name] = max(worst.get(name, 0.0), _check(build, params, rng))
    elapsed = time.perf_counter() - t0
    ok = all(v < 1e-3 for v in worst.values()) and elapsed < 120
    record(1, ok, f"max rel err {max(worst.values()):.2e} over {len(worst)} layers x 20 inputs, {elapsed:.1f}s")


# ---------------------------------------------------------------- 2 loss values

def test_c2_loss_unit_values():
    def at(dp, dn):
        a, p, n = np.zeros(4), np.zeros(4), np.zeros(4)
        p[0], n[1] = math.sqrt(dp), math.sqrt(dn)
        return triplet_loss(Tensor(a), Tensor(p), Tensor(n), 0.5).item()

    errs = [abs(at(0.1, 0.9) - 0.0), abs(at(0.4, 0.4) - 0.5), abs(at(0.3, 0.5) - 0.3)]
    params = ModelParams.create(0, dtype=np.float64, convs=((2, 3, 2),), hidden=4)
    same = Tensor(np.repeat(np.random.default_rng(0).normal(size=(1, 256)), 5, axis=0))
    errs.append(abs(relation_loss(same, same, np.eye(5)[3], params.relation_ap).item() - math.log(5)))
    record(2, max(errs) < 1e-10, f"max abs error {max(errs):.1e}")


# ---------------------------------------------------------------- 3 sequence distance

def test_c3_sequence_distance_oracle():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    mismatches = single = 0
    for _ in range(1000):
        M, O = int(rng.integers(1, 5)), int(rng.integers(2, 17))
        single += M == 1
        d = rng.random((M, O))
        mismatches += sequence_distance(None, dist=d) != seq_distance_bruteforce(d)
    elapsed = time.perf_counter() - t0
    record(3, mismatches == 0 and single > 0 and elapsed < 30,
           f"{mismatches} mismatches in 1000 instances ({single} single-page), {elapsed:.1f}s")


# ---------------------------------------------------------------- 4 rank fusion

def test_c4_rank_fusion():
    rng = np.random.default_rng(0)
    bad = 0
    for _ in range(500):
        n = int(rng.integers(1, 40))
        a, b = rng.permutation(n) + 1, rng.permutation(n) + 1
        ids = [f"c{i:03d}" for i in range(n)]
        for lam2 in (0.0, 0.5, 1.0):
            fused, res = fuse_ranks(a, b, lam2, ids)
            want = [lam2 * a[j] + (1 - lam2) * b[j] for j in range(n)]
            order = sorted(range(n), key=lambda j: (want[j], ids[j]))
            bad += list(fused) != want or res.clip_ids != [ids[j] for j in order]
    flips = 0
    for trial in range(50):
        ids = [f"c{i}" for i in range(8)]
        ap = {c: rng.normal(size=(12, 6)) for c in ids}
        mo = {c: rng.normal(size=(12, 6)) for c in ids}
        q = Query("q", rng.normal(size=(3, 6)), rng.normal(size=(3, 6)))
        c = float(rng.uniform(0.1, 10.0))
        base = GalleryIndex(ids, ap, mo)
        scaled = GalleryIndex(ids, {k: c * v for k, v in ap.items()}, {k: c * v for k, v in mo.items()})
        qs = Query("q", c * q.appearance, c * q.motion)
        o1 = fuse_results(rank_gallery(q, base, "appearance"), rank_gallery(q, base, "motion")).clip_ids
        o2 = fuse_results(rank_gallery(qs, scaled, "appearance"), rank_gallery(qs, scaled, "motion")).clip_ids
        flips += o1 != o2
    record(4, bad == 0 and flips == 0, f"{bad} arithmetic mismatches / 1500, {flips} order changes under scaling / 50")


# ---------------------------------------------------------------- 5 optical flow

def test_c5_optical_flow():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    fractions = []
    for _ in range(50):
        dx, dy = (int(v) for v in rng.integers(-3, 4, size=2))
        a, b = shifted_pair(rng, dx, dy)
        fractions.append(endpoint_ok_fraction(tvl1_flow(a, b), dx, dy))
    still = textured(rng)
    f = tvl1_flow(still, still)
    zero = max(np.abs(f.u).max(), np.abs(f.v).max())
    elapsed = time.perf_counter() - t0
    ok = min(fractions) >= 0.9 and zero < 0.05 and elapsed < 120
    record(5, ok, f"worst pair {min(fractions):.3f} of pixels with EPE < 0.5, identical-frame max {zero:.2e}, "
                  f"{elapsed:.1f}s")


# ---------------------------------------------------------------- 6 MIL mechanics

def test_c6_mil_mechanics():
    window_bad = 0
    for O in range(4, 65):
        for M in range(2, 6):
            for j in range(1, M + 1):
                window_bad += bag_window(j, M, O) != bounds_oracle(j, M, O)
        window_bad += bag_window(1, 1, O) != (1, math.ceil(O / 2))
    rng = np.random.default_rng(0)
    flip_bad = 0
    for trial in range(200):
        n = int(rng.integers(1, 70))
        d = np.round(rng.random(n + 1), 2)
        bag = Bag(("s", 1, "motion"), "c", np.arange(1, n + 1), np.ones(n, dtype=bool))
        for _ in range(4):
            pos = [int(f) for f in bag.positives()]
            want = max(min(-(-pos.__len__() // 10), len(pos) - 1), 0)
            drop = flip_oracle(pos, [d[f] for f in pos], want)
            k = mil_label_inference([bag], lambda b, f: d[f], 0.1)[0]
            flip_bad += k != want or sorted(set(pos) - set(bag.positives().tolist())) != drop
            flip_bad += bag.n_positive < 1
    record(6, window_bad == 0 and flip_bad == 0, f"{window_bad} window mismatches, {flip_bad} flip mismatches")


# ---------------------------------------------------------------- benchmark runs

class Bench:
    """Trains and evaluates benchmark runs on demand, memoised per (kind, seed)."""

    def __init__(self, root):
        self.cfg = load_config("benchmark")
        generate_dataset(self.cfg.generator, self.cfg.sub_seed("generator"), root)
        from sketchvid.synthdata import load_dataset
        self.data = StreamData(load_dataset(root), self.cfg.retrieval.train_split,
                               FlowCache(root / "flows", self.cfg.flow))
        self.seeds = [self.cfg.sub_seed("training")] + [self.cfg.sub_seed(f"training-{i}") for i in (1, 2)]
        self.runs = {}

    def run(self, kind, i):
        key = (kind, i)
        if key in self.runs:
            return self.runs[key]
        seed = self.seeds[i]
        out = {"seed": seed, "cpu": {}}
        if kind == "weak":
            tc = self.cfg.train_config(seed=seed)
            t0 = time.process_time()
            res = train_weak(self.data, tc)
            out["cpu"]["both"] = time.process_time() - t0
            out["rounds"] = res.rounds
            params = res.params
        else:
            tc = self.cfg.train_config(seed=seed, lam1=0.0 if kind == "triplet_only" else self.cfg.training.lam1)
            params = ModelParams.create(seed, flow_length=tc.flow_length, dtype=np.dtype(tc.dtype))
            out["epoch_means"] = {}
            for stream in ("appearance", "motion"):
                t0 = time.process_time()
                r = train_stream(stream, self.data, tc, params=params)
                out["cpu"][stream] = time.process_time() - t0
                out["epoch_means"][stream] = r.epoch_means
        index = build_index(params, self.data)
        queries = embed_queries(params, self.data)
        metrics, results = evaluate(params, self.data, index=index, queries=queries, lam2=self.cfg.retrieval.lam2)
        out["metrics"] = metrics
        hit = {r.query_id for r in results["concat"] if r.clip_ids[0] == self.data.truth[r.query_id]}
        out["detection"], _ = detection(params, self.data, "concat", index, queries,
                                        self.cfg.retrieval.tolerance, restrict=hit)
        self.runs[key] = out
        return out


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    return Bench(tmp_path_factory.mktemp("benchmark"))


def _acc1(run, mode):
    return run["metrics"][mode]["acc@1"]


def test_c7_end_to_end_benchmark(bench):
    run = bench.run("strong", 0)
    m = run["metrics"]
    monotone = all(v["acc@1"] <= v["acc@5"] <= v["acc@10"] for v in m.values())
    cpu_ok = all(t <= 30 * 60 for t in run["cpu"].values())
    ok = (_acc1(run, "concat") >= 0.80 and _acc1(run, "appearance") <= 0.70 and _acc1(run, "motion") <= 0.70
          and monotone and cpu_ok)
    record(7, ok, f"concat {_acc1(run, 'concat'):.3f}, appearance {_acc1(run, 'appearance'):.3f}, "
                  f"motion {_acc1(run, 'motion'):.3f}, rankfuse {_acc1(run, 'rankfuse'):.3f}; "
                  f"monotone={monotone}; cpu s/stream "
                  + ", ".join(f"{k} {v:.0f}" for k, v in run["cpu"].items()))


def test_c8_relation_module_effect_reported(bench):
    deltas = {mode: [] for mode in ("appearance", "motion", "rankfuse", "concat")}
    for i in range(3):
        with_rel, without = bench.run("strong", i), bench.run("triplet_only", i)
        for mode in deltas:
            deltas[mode].append(_acc1(with_rel, mode) - _acc1(without, mode))
    text = "; ".join(f"{mode} " + " ".join(f"{d:+.3f}" for d in v) for mode, v in deltas.items())
    record(8, all(len(v) == 3 for v in deltas.values()), f"acc@1 delta (with - without relation) per seed: {text}")


def test_c9_weak_supervision(bench):
    chance = 1.0 / len(bench.data.clip_ids)
    weak = [_acc1(bench.run("weak", i), "concat") for i in range(3)]
    strong = [_acc1(bench.run("strong", i), "concat") for i in range(3)]
    weak_rf = [_acc1(bench.run("weak", i), "rankfuse") for i in range(3)]
    strong_rf = [_acc1(bench.run("strong", i), "rankfuse") for i in range(3)]
    gap = float(np.mean(strong) - np.mean(weak))
    ok = min(weak) >= 5 * chance and gap >= 0
    record(9, ok, f"weak concat acc@1 {weak} (5x chance {5 * chance:.3f}); strong {strong}; mean gap {gap:+.3f}; "
                  f"rankfuse gap {np.mean(strong_rf) - np.mean(weak_rf):+.3f}")


def test_c10_detection(bench):
    strong = [bench.run("strong", i)["detection"] for i in range(3)]
    weak = [bench.run("weak", i)["detection"] for i in range(3)]
    ok = strong[0] >= 0.60 and all(s >= w for s, w in zip(strong, weak))
    record(10, ok, f"strong {[round(s, 3) for s in strong]}, weak {[round(w, 3) for w in weak]}")


# ---------------------------------------------------------------- measured benchmark properties

def test_epoch_mean_triplet_loss_falls_early(bench):
    run = bench.run("strong", 0)
    for stream, means in run["epoch_means"].items():
        assert means[4] < means[0], (stream, means[:5])


@pytest.mark.parametrize("stream", [
    "motion",
    pytest.param("appearance", marks=pytest.mark.xfail(
        strict=True, reason="frames outside a page's interval look the same to the appearance stream")),
])
def test_mil_precision_non_decreasing(bench, stream):
    rounds = [r for r in bench.run("weak", 0)["rounds"] if r["stream"] == stream]
    precision = [r["precision"] for r in rounds]
    assert all(b >= a for a, b in zip(precision, precision[1:])), precision
