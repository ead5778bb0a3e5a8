"""Anti-aliased rasterisation of polylines and simple filled shapes."""
import numpy as np

from .spec import SpecError

STROKE_WIDTH = 2.0


def _grid(h, w):
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return xs, ys


def segment_distance(xs, ys, p0, p1):
    """Euclidean distance from every grid point to the segment p0-p1."""
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    den = dx * dx + dy * dy
    if den == 0.0:
        return np.hypot(xs - p0[0], ys - p0[1])
    t = ((xs - p0[0]) * dx + (ys - p0[1]) * dy) / den
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(xs - (p0[0] + t * dx), ys - (p0[1] + t * dy))


def polyline_coverage(xs, ys, points, width):
    """Coverage in [0, 1] of a polyline with the given stroke width."""
    cov = np.zeros_like(xs)
    half = width / 2.0 + 0.5
    for a, b in zip(points[:-1], points[1:]):
        lo_x = max(int(np.floor(min(a[0], b[0]) - half)), 0)
        hi_x = min(int(np.ceil(max(a[0], b[0]) + half)) + 1, xs.shape[1])
        lo_y = max(int(np.floor(min(a[1], b[1]) - half)), 0)
        hi_y = min(int(np.ceil(max(a[1], b[1]) + half)) + 1, xs.shape[0])
        if lo_x >= hi_x or lo_y >= hi_y:
            continue
        sub = (slice(lo_y, hi_y), slice(lo_x, hi_x))
        d = segment_distance(xs[sub], ys[sub], a, b)
        np.maximum(cov[sub], np.clip(half - d, 0.0, 1.0), out=cov[sub])
    return cov


def quantize(arr):
    """Snap to the 8-bit grid k/255 so PGM storage round-trips exactly."""
    return np.round(np.clip(arr, 0.0, 1.0) * 255.0) / 255.0


def rasterize_strokes(strokes, h, w, include_motion):
    """Render the motion (``include_motion=True``) or the appearance strokes.

    Returns a (1, h, w) float64 raster with values on the 8-bit grid.
    """
    xs, ys = _grid(h, w)
    out = np.zeros((h, w))
    for s in strokes:
        pts = s.points
        if np.any(pts[:, 0] < 0) or np.any(pts[:, 0] >= w) or np.any(pts[:, 1] < 0) or np.any(pts[:, 1] >= h):
            raise SpecError(f"stroke point outside the {w}x{h} page")
        if bool(s.is_motion) != bool(include_motion):
            continue
        np.maximum(out, polyline_coverage(xs, ys, pts, STROKE_WIDTH), out=out)
    return quantize(out)[None]
