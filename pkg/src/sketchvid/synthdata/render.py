"""Render clip specs into RGB frame sequences and multi-page sketches."""
import math

import numpy as np
from scipy.ndimage import gaussian_filter

from . import figure as fig
from .raster import _grid, polyline_coverage, quantize, rasterize_strokes
from .spec import (
    AlignmentAnnotation,
    SketchPage,
    SketchSequence,
    SpecError,
    Stroke,
    VideoClip,
)

FRAME_SIZE = (64, 64)
SKETCH_ANCHOR = (32.0, 30.0)
JUMP_DRIFT = 0.4  # px/frame horizontal drift of a jump with direction +-1


def trajectory(motion):
    """Per-frame torso centre (x, y) and spin phase for a motion program."""
    xs, ys, phases = [], [], []
    x, y = motion.start
    for seg in motion.segments:
        n = seg.frames
        s = np.arange(n, dtype=np.float64)
        if seg.kind == "glide":
            a = math.radians(seg.direction)
            dx, dy = seg.speed * math.cos(a), seg.speed * math.sin(a)
            xs.append(x + dx * s)
            ys.append(y + dy * s)
            phases.append(np.zeros(n))
            x, y = x + dx * n, y + dy * n
        elif seg.kind == "jump":
            u = s / max(n - 1, 1)
            drift = JUMP_DRIFT * float(np.sign(seg.direction))
            xs.append(x + drift * s)
            ys.append(y - 4.0 * seg.speed * u * (1.0 - u))
            phases.append(np.zeros(n))
            x = x + drift * n
        elif seg.kind == "spin":
            xs.append(np.full(n, x))
            ys.append(np.full(n, y))
            # facing the viewer at the segment midpoint (the key frame)
            phases.append(float(np.sign(seg.direction)) * seg.speed * (s - (n - 1) / 2.0))
        else:
            xs.append(np.full(n, x))
            ys.append(np.full(n, y))
            phases.append(np.zeros(n))
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(phases)


def fits_frame(motion, size=FRAME_SIZE):
    x, y, _ = trajectory(motion)
    h, w = size
    return (x.min() - fig.EXTENT_X >= 0 and x.max() + fig.EXTENT_X <= w - 1
            and y.min() - fig.EXTENT_UP >= 0 and y.max() + fig.EXTENT_DOWN <= h - 1)


def background(seed, size=FRAME_SIZE):
    rng = np.random.default_rng(seed)
    h, w = size
    tex = gaussian_filter(rng.normal(size=(h, w)), 2.0)
    tex = tex / (np.abs(tex).max() + 1e-12)
    base = np.array([0.86, 0.90, 0.95])
    return np.clip(base[:, None, None] + 0.06 * tex[None], 0.0, 1.0)


def _blend(img, cov, color):
    img *= 1.0 - cov[None]
    img += cov[None] * np.asarray(color)[:, None, None]


def _disk(xs, ys, cx, cy, r):
    return np.clip(r + 0.5 - np.hypot(xs - cx, ys - cy), 0.0, 1.0)


def render_frame(appearance, x, y, phase, bg):
    """One RGB frame (3, H, W) with the figure anchored at (x, y)."""
    img = bg.copy()
    h, w = img.shape[1:]
    xs, ys = _grid(h, w)
    primary, secondary, hair_color = fig.colors(appearance)
    off = np.array([x, y])
    for a, b in fig.leg_points():
        _blend(img, polyline_coverage(xs, ys, np.array([a, b]) + off, 2.4), fig.TIGHTS)
    for a, b in fig.blade_points():
        _blend(img, polyline_coverage(xs, ys, np.array([a, b]) + off, 1.2), fig.BLADE)
    # torso with scrolling hatch texture
    tx, ty = fig.TORSO[0] + x, fig.TORSO[1] + y
    ax, ay = fig.TORSO_AX
    rho = np.hypot((xs - tx) / ax, (ys - ty) / ay)
    cov = np.clip(0.5 - (rho - 1.0) * min(ax, ay), 0.0, 1.0)
    theta, period = fig.hatch_params(appearance)
    xl = xs - tx + 3.0 * phase
    stripe = 0.5 + 0.5 * np.cos(2 * math.pi * (xl * math.cos(theta) + (ys - ty) * math.sin(theta)) / period)
    tex = secondary[:, None, None] + (primary - secondary)[:, None, None] * stripe[None]
    img *= 1.0 - cov[None]
    img += cov[None] * tex
    for sh, hand in fig.arm_points(appearance, phase):
        _blend(img, polyline_coverage(xs, ys, np.array([sh, hand]) + off, 2.0), primary)
    hx, hy = fig.HEAD[0] + x, fig.HEAD[1] + y
    _blend(img, _disk(xs, ys, hx, hy, fig.HEAD_R), fig.SKIN)
    if appearance.hair == 0:
        _blend(img, _disk(xs, ys, x, y - 15.2, 1.8), hair_color)
    elif appearance.hair == 1:
        _blend(img, polyline_coverage(xs, ys, np.array([[2.4, -13.2], [6.2, -8.0]]) + off, 1.8), hair_color)
    elif appearance.hair == 2:
        cap = _disk(xs, ys, hx, hy, fig.HEAD_R) * np.clip(hy - 0.5 - ys, 0.0, 1.0)
        _blend(img, cap, hair_color)
    else:
        for pts in ([[-3.1, -12.0], [-3.8, -5.2]], [[3.1, -12.0], [3.8, -5.2]]):
            _blend(img, polyline_coverage(xs, ys, np.array(pts) + off, 1.6), hair_color)
    mx, my, visible = fig.marker_offset(phase)
    if visible:
        _blend(img, _disk(xs, ys, mx + x, my + y, 0.9), (0.05, 0.05, 0.05))
    return img


def render_video(spec, seed=0, size=FRAME_SIZE):
    """Render a clip: the figure follows the motion program frame by frame."""
    spec.validate()
    if not fits_frame(spec.motion, size):
        raise SpecError(f"{spec.clip_id}: figure leaves the {size[1]}x{size[0]} frame")
    xs, ys, phases = trajectory(spec.motion)
    bg = background(seed, size)
    frames = np.empty((len(xs), 3) + tuple(size), dtype=np.float32)
    for t, (x, y, p) in enumerate(zip(xs, ys, phases)):
        frames[t] = quantize(render_frame(spec.appearance, x, y, p, bg))
    return VideoClip(id=spec.clip_id, frames=frames)


# ------------------------------------------------------------------ sketches

def _arrowhead(tip, direction, size=2.5):
    d = np.asarray(direction, dtype=np.float64)
    d = d / (np.linalg.norm(d) + 1e-12)
    out = []
    for sgn in (1.0, -1.0):
        a = math.radians(150.0 * sgn)
        r = np.array([d[0] * math.cos(a) - d[1] * math.sin(a), d[0] * math.sin(a) + d[1] * math.cos(a)])
        out.append(tip + size * r)
    return out


def motion_polylines(seg):
    """Strokes of the motion vector for one segment, in figure coordinates.

    Jumps are drawn above the head, glides and spins below the feet; static
    segments have no motion vector.
    """
    if seg.kind == "static":
        return []
    if seg.kind == "glide":
        a = math.radians(seg.direction)
        d = np.array([math.cos(a), math.sin(a)])
        length = 6.0 + 4.0 * seg.speed
        centre = np.array([0.0, fig.BLADE_Y + 5.0 + 0.5 * length * abs(d[1])])
        tail, tip = centre - 0.5 * length * d, centre + 0.5 * length * d
        h1, h2 = _arrowhead(tip, d)
        return [np.array([tail, tip, h1]), np.array([tip, h2])]
    if seg.kind == "spin":
        sense = float(np.sign(seg.direction))
        t = np.linspace(0.0, sense * math.radians(300.0), 14) + math.radians(200.0)
        cy = fig.BLADE_Y + 6.0
        arc = np.stack([6.0 * np.cos(t), cy + 2.5 * np.sin(t)], axis=1)
        h1, h2 = _arrowhead(arc[-1], arc[-1] - arc[-2], 2.0)
        return [np.vstack([arc, h1[None]]), np.array([arc[-1], h2])]
    # jump: hump above the head, arrowhead on the drift side
    drift = float(np.sign(seg.direction))
    half = 2.5 if drift == 0 else 5.0
    base = -19.0
    height = 3.0 + 0.5 * seg.speed
    u = np.linspace(-1.0, 1.0, 13)
    hump = np.stack([half * u, base - height * (1.0 - u * u)], axis=1)
    if drift < 0:
        hump = hump[::-1]
    h1, h2 = _arrowhead(hump[-1], hump[-1] - hump[-2], 2.0)
    return [np.vstack([hump, h1[None]]), np.array([hump[-1], h2])]


def render_sketch_pages(spec, seed=0, size=FRAME_SIZE):
    """One page per motion segment plus the page-to-frames alignment.

    Every page shows the skater in the key pose (segment midpoint, which is
    the canonical facing pose); ``seed`` is accepted for interface symmetry
    and does not perturb the drawing.
    """
    spec.validate()
    h, w = size
    anchor = np.array(SKETCH_ANCHOR)
    ap_strokes = [Stroke(p + anchor, False) for p in fig.appearance_polylines(spec.appearance)]
    ap_raster = rasterize_strokes(ap_strokes, h, w, include_motion=False)
    pages = []
    for j, seg in enumerate(spec.motion.segments, start=1):
        mo_strokes = [Stroke(p + anchor, True) for p in motion_polylines(seg)]
        strokes = ap_strokes + mo_strokes
        pages.append(SketchPage(
            appearance_raster=ap_raster.copy(),
            motion_raster=rasterize_strokes(strokes, h, w, include_motion=True),
            page_index=j,
            is_static=not mo_strokes,
            strokes=strokes,
        ))
    seq = SketchSequence(id=f"sk_{spec.clip_id}", pages=pages, paired_clip_id=spec.clip_id)
    ann = AlignmentAnnotation({j: iv for j, iv in enumerate(spec.intervals(), start=1)})
    return seq, ann


def key_frames(spec):
    """1-based key frame (segment midpoint) of every page."""
    return [s + (e - s) // 2 for s, e in spec.intervals()]
