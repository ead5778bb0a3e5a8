"""Random clip specs and the twin-pair benchmark construction.

Appearance twins share the skater's look and differ in motion; motion twins
share the motion program and differ in look. Twins are chained: the second
clip of appearance pair k reuses the motion of pair k+1's first clip, and the
second clip of motion pair k reuses the look of pair k+1's first clip. Every
look and every motion program is therefore used by exactly two clips, so a
single stream sees indistinguishable queries in pairs while every
(look, motion) combination stays unique.
"""
import itertools
from dataclasses import dataclass

import numpy as np

from . import figure as fig
from .render import FRAME_SIZE, trajectory
from .spec import (
    HATCH_ANGLES,
    HATCH_PERIODS,
    N_HAIR,
    N_POSES,
    AppearanceSpec,
    ClipSpec,
    MotionProgram,
    Segment,
    SpecError,
)

GLIDE_SPEEDS = (0.6, 1.0)
SPIN_SPEEDS = (0.25, 0.4)
JUMP_HEIGHTS = (5.0, 8.0)


@dataclass(frozen=True)
class TwinClip:
    spec: ClipSpec
    twin: str  # "appearance:<k>" or "motion:<k>"


def random_segment(rng, frames, static_prob, kinds=("glide", "spin", "jump")):
    if rng.random() < static_prob:
        return Segment("static", 0.0, 0.0, frames)
    kind = kinds[rng.integers(len(kinds))]
    return _segment_of_kind(rng, kind, frames)


def _segment_of_kind(rng, kind, frames):
    if kind == "glide":
        return Segment("glide", float(45 * rng.integers(8)), float(GLIDE_SPEEDS[rng.integers(2)]), frames)
    if kind == "spin":
        return Segment("spin", float(rng.choice([-1.0, 1.0])), float(SPIN_SPEEDS[rng.integers(2)]), frames)
    if kind == "jump":
        return Segment("jump", float(rng.integers(-1, 2)), float(JUMP_HEIGHTS[rng.integers(2)]), frames)
    return Segment("static", 0.0, 0.0, frames)


def centre_program(segments, size=FRAME_SIZE):
    """Place the trajectory in the middle of the frame, or None if it cannot fit."""
    h, w = size
    x, y, _ = trajectory(MotionProgram(tuple(segments), (0.0, 0.0)))
    span_x = x.max() - x.min() + 2 * fig.EXTENT_X
    span_y = y.max() - y.min() + fig.EXTENT_UP + fig.EXTENT_DOWN
    if span_x > w - 1 or span_y > h - 1:
        return None
    sx = (w - 1) / 2.0 - (x.max() + x.min()) / 2.0
    sy = fig.EXTENT_UP + (h - 1 - span_y) / 2.0 - y.min()
    return MotionProgram(tuple(segments), (round(sx, 4), round(sy, 4)))


def random_program(rng, n_pages, frame_range, static_prob, first_kind=None, size=FRAME_SIZE,
                   max_tries=200):
    """A motion program whose pages are pairwise distinct and which fits the frame."""
    lo, hi = frame_range
    for _ in range(max_tries):
        segs = []
        for j in range(n_pages):
            frames = int(rng.integers(lo, hi + 1))
            if j == 0 and first_kind is not None:
                seg = _segment_of_kind(rng, first_kind, frames)
            else:
                seg = random_segment(rng, frames, static_prob)
            segs.append(seg)
        sigs = [s.signature for s in segs]
        if len(set(sigs)) != len(sigs):
            continue
        prog = centre_program(segs, size)
        if prog is not None:
            return prog
    raise SpecError(f"could not fit a {n_pages}-page motion program in the frame")


def random_appearance(rng):
    return AppearanceSpec(int(rng.integers(len(HATCH_ANGLES))), int(rng.integers(len(HATCH_PERIODS))),
                          int(rng.integers(N_HAIR)), int(rng.integers(N_POSES)))


def distinct_appearances(rng, n, min_distance=2):
    """``n`` looks differing pairwise in at least ``min_distance`` attributes."""
    pool = list(itertools.product(range(len(HATCH_ANGLES)), range(len(HATCH_PERIODS)),
                                  range(N_HAIR), range(N_POSES)))
    order = rng.permutation(len(pool))
    chosen = []
    for i in order:
        cand = pool[i]
        if all(sum(a != b for a, b in zip(cand, c)) >= min_distance for c in chosen):
            chosen.append(cand)
            if len(chosen) == n:
                return [AppearanceSpec(*c) for c in chosen]
    if min_distance > 1:
        return distinct_appearances(rng, n, min_distance - 1)
    raise SpecError(f"cannot pick {n} distinct appearances")


def _program_set_ok(programs):
    sets = [set(s.signature for s in p.segments) for p in programs]
    for i, j in itertools.permutations(range(len(sets)), 2):
        if sets[i] <= sets[j]:
            return False
    return True


def _distinct_programs(rng, n, n_pages, frame_range, static_prob, alternate_first_kind, size,
                       max_tries=500):
    kinds = ("glide", "jump", "spin")
    for _ in range(max_tries):
        progs = []
        for k in range(n):
            first = None
            if alternate_first_kind:
                # neighbours on the ring must start with different kinds
                first = kinds[k % len(kinds)]
                if k == n - 1 and k > 0 and first == kinds[0]:
                    first = kinds[1]
            progs.append(random_program(rng, n_pages, frame_range, static_prob, first, size))
        if _program_set_ok(progs):
            return progs
    raise SpecError("could not draw mutually distinct motion programs")


def make_twins(config, seed):
    """Clip specs for ``config.appearance_twin_pairs`` + ``config.motion_twin_pairs`` pairs.

    Returns a list of :class:`TwinClip`, appearance pairs first.
    """
    a_pairs = int(config.appearance_twin_pairs)
    b_pairs = int(config.motion_twin_pairs)
    if a_pairs < 0 or b_pairs < 0:
        raise SpecError("twin pair counts must be non-negative")
    if a_pairs != config.appearance_twin_pairs or b_pairs != config.motion_twin_pairs:
        raise SpecError("twin pair counts must be whole numbers (an odd twin clip count was requested)")
    if 2 * (a_pairs + b_pairs) > config.n_clips:
        raise SpecError(f"{a_pairs}+{b_pairs} twin pairs need {2 * (a_pairs + b_pairs)} clips, "
                        f"config has {config.n_clips}")
    rng = np.random.default_rng([seed, 0x7717])
    size = (config.frame_size, config.frame_size)
    frame_range = (config.frames_per_page_min, config.frames_per_page_max)
    ring_a = a_pairs if a_pairs != 1 else 2
    ring_b = b_pairs if b_pairs != 1 else 2
    looks = distinct_appearances(rng, a_pairs + ring_b) if a_pairs + ring_b else []
    pages_a = int(rng.integers(2, 5))
    pages_b = int(rng.integers(2, 5))
    progs_a = (_distinct_programs(rng, ring_a, pages_a, frame_range, config.static_prob, True, size)
               if a_pairs else [])
    progs_b = []
    if b_pairs:
        for _ in range(500):
            progs_b = _distinct_programs(rng, b_pairs, pages_b, frame_range, config.static_prob, False, size)
            if _program_set_ok(progs_a + progs_b):
                break
        else:
            raise SpecError("could not separate motion-twin programs from appearance-twin programs")
    out = []
    idx = 0
    for k in range(a_pairs):
        for m in (progs_a[k], progs_a[(k + 1) % ring_a]):
            out.append(TwinClip(ClipSpec(f"c{idx:04d}", looks[k], m), f"appearance:{k}"))
            idx += 1
    looks_b = looks[a_pairs:]
    for k in range(b_pairs):
        for look in (looks_b[k], looks_b[(k + 1) % ring_b]):
            out.append(TwinClip(ClipSpec(f"c{idx:04d}", look, progs_b[k]), f"motion:{k}"))
            idx += 1
    return out


def sample_page_count(rng, mean, max_pages):
    """1 + Poisson(mean - 1), truncated to ``max_pages``."""
    lam = max(mean - 1.0, 0.0)
    while True:
        n = 1 + int(rng.poisson(lam))
        if n <= max_pages:
            return n


def stable_hash(text):
    import hashlib
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def clip_rng(seed, index):
    return np.random.default_rng((int(seed) ^ stable_hash(f"clip-{index}")) & ((1 << 64) - 1))


def random_clip(config, seed, index):
    rng = clip_rng(seed, index)
    n_pages = sample_page_count(rng, config.pages_mean, config.max_pages)
    lo, hi = config.frames_per_page_min, config.frames_per_page_max
    size = (config.frame_size, config.frame_size)
    prog = random_program(rng, n_pages, (lo, hi), config.static_prob, size=size)
    return ClipSpec(f"c{index:04d}", random_appearance(rng), prog)


__all__ = ["TwinClip", "make_twins", "random_clip", "sample_page_count", "stable_hash", "clip_rng",
           "centre_program", "random_program", "distinct_appearances"]
