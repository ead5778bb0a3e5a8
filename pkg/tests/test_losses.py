import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchvid.core import Tensor
from sketchvid.embednet import ModelParams
from sketchvid.losses import (
    Triplet,
    combined_loss,
    gather_pairs,
    relation_loss,
    sample_relation_pairs,
    triplet_batch_loss,
    triplet_loss,
)

from oracles import cross_entropy


def _at_distances(dp, dn, dim=256):
    """Anchor, positive and negative embeddings with the given squared distances."""
    a = np.zeros(dim)
    p = np.zeros(dim)
    n = np.zeros(dim)
    p[0] = math.sqrt(dp)
    n[1] = math.sqrt(dn)
    return Tensor(a), Tensor(p), Tensor(n)


@pytest.mark.parametrize("dp,dn,expected", [(0.1, 0.9, 0.0), (0.4, 0.4, 0.5), (0.3, 0.5, 0.3)])
def test_triplet_examples(dp, dn, expected):
    assert abs(triplet_loss(*_at_distances(dp, dn), margin=0.5).item() - expected) < 1e-10


vec = st.lists(st.floats(-3, 3, allow_nan=False), min_size=4, max_size=4)


@settings(max_examples=100, deadline=None)
@given(vec, vec, vec, st.floats(0.01, 2.0))
def test_triplet_hinge_properties(a, p, n, margin):
    a, p, n = (np.array(v) for v in (a, p, n))
    loss = triplet_loss(Tensor(a), Tensor(p), Tensor(n), margin).item()
    mirrored = triplet_loss(Tensor(a), Tensor(n), Tensor(p), margin).item()
    gap = ((a - n) ** 2).sum() - ((a - p) ** 2).sum()
    assert loss >= 0.0
    assert (loss == 0.0) == (gap >= margin) or abs(gap - margin) < 1e-9
    assert loss + mirrored >= margin - 1e-9


def test_triplet_batch_is_mean_of_rows():
    rng = np.random.default_rng(0)
    a, p, n = (rng.normal(size=(6, 8)) for _ in range(3))
    rows = [triplet_loss(Tensor(a[i]), Tensor(p[i]), Tensor(n[i])).item() for i in range(6)]
    assert abs(triplet_batch_loss(Tensor(a), Tensor(p), Tensor(n)).item() - np.mean(rows)) < 1e-12


def test_relation_loss_examples():
    params = ModelParams.create(0, dtype=np.float64, convs=((4, 3, 2),), hidden=8)
    e = np.random.default_rng(1).normal(size=(1, 256))
    same = Tensor(np.repeat(e, 5, axis=0))
    target = np.eye(5)[0]
    assert abs(relation_loss(same, same, target, params.relation_ap).item() - math.log(5)) < 1e-10


def test_relation_loss_matches_direct_formula():
    from sketchvid.core import softmax_cross_entropy
    s = np.array([1.0, 0.0, 0.0, 0.0, 0.0])
    assert abs(softmax_cross_entropy(Tensor(s), np.eye(5)[0]).item() - cross_entropy(s, 0)) < 1e-10
    dominant = np.array([50.0, 0.0, 0.0, 0.0, 0.0])
    assert softmax_cross_entropy(Tensor(dominant), np.eye(5)[0]).item() < 1e-12


def test_combined_loss_examples():
    assert combined_loss(0.7, 3.0, 0.0) == 0.7
    assert abs(combined_loss(0.5, 1.6094, 0.001) - 0.5016094) < 1e-12
    assert combined_loss(0.0, 0.0, 0.001) == 0.0
    t = combined_loss(Tensor(0.5), Tensor(1.6094), 0.001)
    assert abs(t.item() - 0.5016094) < 1e-12
    with pytest.raises(ValueError):
        combined_loss(1.0, 1.0, -0.1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 5), st.floats(0, 1), st.floats(0, 1))
def test_combined_loss_monotone(lt, lr, d, lam, extra):
    base = combined_loss(lt, lr, lam)
    assert combined_loss(lt + d, lr, lam) >= base
    assert combined_loss(lt, lr + d, lam) >= base
    assert combined_loss(lt, lr, lam + extra) >= base


# ---------------------------------------------------------------- relation pairs

def _batch(n=16, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        clip = f"c{i:02d}"
        lo = int(rng.integers(1, 20))
        pos = (clip, lo + 2)
        neg = (f"c{(i + 1) % n:02d}", int(rng.integers(1, 40))) if i % 2 else (clip, lo + 15)
        out.append(Triplet((f"s{i:02d}", 1), pos, neg, clip, (lo, lo + 5)))
    return out


def test_triplet_rejects_equal_atoms():
    with pytest.raises(ValueError):
        Triplet(("s", 1), ("c", 3), ("c", 3), "c", (1, 5))


def test_relation_pairs_structure():
    batch = _batch()
    rb = sample_relation_pairs(batch, 5, np.random.default_rng(2))
    assert len(rb.videos) == 5 and rb.target.sum() == 1.0 and set(rb.target) <= {0.0, 1.0}
    i = rb.anchors[0]
    assert all(a == i for a in rb.anchors)
    assert rb.videos[rb.true_index] == ("pos", i)
    atoms = []
    for k, (kind, j) in enumerate(rb.videos):
        atom = batch[j].positive if kind == "pos" else batch[j].negative
        atoms.append(atom)
        if k != rb.true_index:
            assert not batch[i].matches(atom)
    assert len(set(atoms)) == 5


def test_relation_pairs_seeded():
    batch = _batch()
    a = sample_relation_pairs(batch, 5, np.random.default_rng(7))
    b = sample_relation_pairs(batch, 5, np.random.default_rng(7))
    assert a.videos == b.videos and np.array_equal(a.target, b.target)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_relation_pairs_false_pairs_never_match(seed):
    batch = _batch(seed=seed % 97)
    rb = sample_relation_pairs(batch, 5, np.random.default_rng(seed))
    i = rb.anchors[0]
    for k, (kind, j) in enumerate(rb.videos):
        if k != rb.true_index:
            atom = batch[j].positive if kind == "pos" else batch[j].negative
            assert not batch[i].matches(atom)


def test_relation_pairs_batch_too_small():
    with pytest.raises(ValueError, match="cannot supply"):
        sample_relation_pairs(_batch(n=1), 5, np.random.default_rng(0))


def test_gather_pairs_indexes_embeddings():
    batch = _batch(n=4)
    rb = sample_relation_pairs(batch, 3, np.random.default_rng(0))
    a = Tensor(np.arange(4.0)[:, None] * np.ones((4, 2)))
    p = Tensor(10 + np.arange(4.0)[:, None] * np.ones((4, 2)))
    n = Tensor(20 + np.arange(4.0)[:, None] * np.ones((4, 2)))
    sk, vid = gather_pairs(rb, a, p, n)
    for k, (kind, j) in enumerate(rb.videos):
        assert sk.data[k, 0] == rb.anchors[k]
        assert vid.data[k, 0] == (10 if kind == "pos" else 20) + j
