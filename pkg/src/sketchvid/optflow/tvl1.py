"""Coarse-to-fine TV-L1 optical flow (duality-based primal-dual scheme).

Intensities are scaled to [0, 255] before solving so the data weight has its
conventional meaning. Flow is returned in pixels, ``u`` along x (columns) and
``v`` along y (rows), such that ``frame_b(x + u, y + v) ~ frame_a(x, y)``.
"""
import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates, median_filter

from .. import kernels


class FlowError(ValueError):
    """Invalid flow inputs."""


@dataclass(frozen=True)
class FlowParams:
    lam: float = 0.15
    theta: float = 0.3
    tau: float = 0.25
    warps: int = 5
    max_iters: int = 30
    pyramid_levels: int = 3
    scale: float = 0.5
    epsilon: float = 0.01
    median_filter: bool = True
    max_displacement: float = 8.0

    def validate(self):
        if not (self.lam > 0 and self.theta > 0 and self.tau > 0):
            raise FlowError("lam, theta and tau must be positive")
        if self.tau > 0.25:
            raise FlowError("tau above 0.25 breaks convergence of the dual step")
        if self.warps < 1 or self.max_iters < 1 or self.pyramid_levels < 1:
            raise FlowError("warps, max_iters and pyramid_levels must be at least 1")
        if not 0 < self.scale < 1:
            raise FlowError("scale must lie in (0, 1)")
        if self.max_displacement <= 0:
            raise FlowError("max_displacement must be positive")

    def digest(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class FlowField:
    u: np.ndarray
    v: np.ndarray
    energy: list = None  # per-warp energy traces when requested


def to_gray(frame):
    """Luminance of a (3, H, W) frame; (H, W) frames pass through."""
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim == 3:
        if f.shape[0] != 3:
            raise FlowError(f"expected 3 colour channels, got {f.shape[0]}")
        return 0.299 * f[0] + 0.587 * f[1] + 0.114 * f[2]
    if f.ndim != 2:
        raise FlowError(f"frames must be (H, W) or (3, H, W), got shape {f.shape}")
    return f


def _downsample(img, scale):
    h, w = img.shape
    nh, nw = max(int(round(h * scale)), 1), max(int(round(w * scale)), 1)
    sigma = 0.6 * math.sqrt(1.0 / (scale * scale) - 1.0)
    sm = gaussian_filter(img, sigma, mode="nearest")
    ys = (np.arange(nh) + 0.5) * (h / nh) - 0.5
    xs = (np.arange(nw) + 0.5) * (w / nw) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return map_coordinates(sm, [yy, xx], order=1, mode="nearest")


def _upsample_flow(f, shape, factor):
    h, w = f.shape
    nh, nw = shape
    ys = (np.arange(nh) + 0.5) * (h / nh) - 0.5
    xs = (np.arange(nw) + 0.5) * (w / nw) - 0.5
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return map_coordinates(f, [yy, xx], order=1, mode="nearest") * factor


def _centered_gradient(img):
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = 0.5 * (img[:, 2:] - img[:, :-2])
    gy[1:-1, :] = 0.5 * (img[2:, :] - img[:-2, :])
    return gx, gy


def _tv(f):
    fx = np.zeros_like(f)
    fy = np.zeros_like(f)
    fx[:, :-1] = f[:, 1:] - f[:, :-1]
    fy[:-1, :] = f[1:, :] - f[:-1, :]
    return float(np.sqrt(fx * fx + fy * fy).sum())


def tv_l1_energy(i0, i1, u, v, lam):
    """Warped energy sum |grad u| + |grad v| + lam * |I1(x + w) - I0|."""
    data = np.abs(kernels.warp_bilinear(i1, u, v) - i0).sum()
    return _tv(u) + _tv(v) + lam * float(data)


def _threshold_step(rho_c, i1wx, i1wy, grad, u1, u2, lt):
    """Pointwise minimiser of the linearised data term plus the coupling term."""
    rho = rho_c + i1wx * u1 + i1wy * u2
    thresh = lt * grad
    safe = grad > 1e-10
    scale = np.where(rho < -thresh, lt, np.where(rho > thresh, -lt,
                     np.where(safe, -rho / np.where(safe, grad, 1.0), 0.0)))
    return u1 + scale * i1wx, u2 + scale * i1wy


def relaxed_energy(rho_c, i1wx, i1wy, u1, u2, v1, v2, lam, theta):
    """Convex relaxed energy minimised within one warp.

    TV of ``u`` plus the quadratic coupling to the auxiliary field ``v`` plus
    the linearised data term evaluated at ``v``.
    """
    rho = rho_c + i1wx * v1 + i1wy * v2
    coupling = float(((u1 - v1) ** 2 + (u2 - v2) ** 2).sum()) / (2.0 * theta)
    return _tv(u1) + _tv(u2) + coupling + lam * float(np.abs(rho).sum())


def _solve_level(i0, i1, u1, u2, p, trace):
    i1x, i1y = _centered_gradient(i1)
    h, w = i0.shape
    p11 = np.zeros((h, w))
    p12 = np.zeros((h, w))
    p21 = np.zeros((h, w))
    p22 = np.zeros((h, w))
    lt = p.lam * p.theta
    eps2 = p.epsilon * p.epsilon
    for _ in range(p.warps):
        i1w = kernels.warp_bilinear(i1, u1, u2)
        i1wx = kernels.warp_bilinear(i1x, u1, u2)
        i1wy = kernels.warp_bilinear(i1y, u1, u2)
        grad = i1wx * i1wx + i1wy * i1wy
        rho_c = i1w - i1wx * u1 - i1wy * u2 - i0
        if trace is None:
            kernels.tvl1_inner(i1wx, i1wy, grad, rho_c, u1, u2, p11, p12, p21, p22,
                               lt, p.theta, p.tau, eps2, p.max_iters)
        else:
            warp_trace = []
            for _ in range(p.max_iters):
                before = (u1.copy(), u2.copy())
                v1, v2 = _threshold_step(rho_c, i1wx, i1wy, grad, u1, u2, lt)
                kernels.tvl1_inner(i1wx, i1wy, grad, rho_c, u1, u2, p11, p12, p21, p22,
                                   lt, p.theta, p.tau, -1.0, 1)
                warp_trace.append(relaxed_energy(rho_c, i1wx, i1wy, u1, u2, v1, v2, p.lam, p.theta))
                step = (np.sum((u1 - before[0]) ** 2) + np.sum((u2 - before[1]) ** 2)) / u1.size
                if step <= eps2:
                    break
            trace.append(warp_trace)
        if p.median_filter:
            u1[...] = median_filter(u1, size=3, mode="nearest")
            u2[...] = median_filter(u2, size=3, mode="nearest")
        np.clip(u1, -p.max_displacement, p.max_displacement, out=u1)
        np.clip(u2, -p.max_displacement, p.max_displacement, out=u2)


def tvl1_flow(frame_a, frame_b, params=None, trace_energy=False):
    """Dense flow from ``frame_a`` to ``frame_b``.

    Frames are (H, W) grayscale or (3, H, W) colour in [0, 1]. With
    ``trace_energy`` every warp of every level records the energy of its
    linearised model before and after each iteration; ``FlowField.energy``
    is then a list of per-warp traces, coarsest level first.
    """
    p = params or FlowParams()
    p.validate()
    a = to_gray(frame_a)
    b = to_gray(frame_b)
    if a.shape != b.shape:
        raise FlowError(f"frame shapes differ: {a.shape} vs {b.shape}")
    h, w = a.shape
    if min(h, w) < 2 ** p.pyramid_levels:
        raise FlowError(f"frames of {h}x{w} are smaller than 2^{p.pyramid_levels} pyramid levels allow")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise FlowError("frames contain non-finite values")
    pyr0 = [a * 255.0]
    pyr1 = [b * 255.0]
    for _ in range(1, p.pyramid_levels):
        pyr0.append(_downsample(pyr0[-1], p.scale))
        pyr1.append(_downsample(pyr1[-1], p.scale))
    u1 = np.zeros(pyr0[-1].shape)
    u2 = np.zeros(pyr0[-1].shape)
    trace = [] if trace_energy else None
    for level in range(p.pyramid_levels - 1, -1, -1):
        i0, i1 = pyr0[level], pyr1[level]
        if u1.shape != i0.shape:
            u1 = _upsample_flow(u1, i0.shape, 1.0 / p.scale)
            u2 = _upsample_flow(u2, i0.shape, 1.0 / p.scale)
        u1 = np.ascontiguousarray(u1)
        u2 = np.ascontiguousarray(u2)
        _solve_level(np.ascontiguousarray(i0), np.ascontiguousarray(i1), u1, u2, p, trace)
    return FlowField(u=u1, v=u2, energy=trace)
