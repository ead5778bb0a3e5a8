"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors every signature.
"""
import numpy as np


def im2col(x, k, stride, out_h, out_w):
    """Unfold padded ``(N, C, Hp, Wp)`` input into ``(N, C*k*k, out_h*out_w)``."""
    n, c = x.shape[:2]
    cols = np.empty((n, c, k, k, out_h, out_w), dtype=x.dtype)
    for i in range(k):
        i_end = i + stride * out_h
        for j in range(k):
            j_end = j + stride * out_w
            cols[:, :, i, j] = x[:, :, i:i_end:stride, j:j_end:stride]
    return cols.reshape(n, c * k * k, out_h * out_w)


def col2im(cols, n, c, hp, wp, k, stride, out_h, out_w):
    """Adjoint of :func:`im2col`: scatter-add columns back onto the padded grid."""
    x = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(n, c, k, k, out_h, out_w)
    for i in range(k):
        i_end = i + stride * out_h
        for j in range(k):
            j_end = j + stride * out_w
            x[:, :, i:i_end:stride, j:j_end:stride] += cols[:, :, i, j]
    return x


def warp_bilinear(img, u, v):
    """Sample ``img`` at ``(x + u, y + v)`` with bilinear weights, border-replicated."""
    h, w = img.shape
    ys, xs = np.mgrid[0:h, 0:w]
    px = np.clip(xs + u, 0.0, w - 1.0)
    py = np.clip(ys + v, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(px).astype(np.intp), w - 2) if w > 1 else np.zeros_like(xs)
    y0 = np.minimum(np.floor(py).astype(np.intp), h - 2) if h > 1 else np.zeros_like(ys)
    fx = px - x0
    fy = py - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def _forward_gradient(f):
    fx = np.zeros_like(f)
    fy = np.zeros_like(f)
    fx[:, :-1] = f[:, 1:] - f[:, :-1]
    fy[:-1, :] = f[1:, :] - f[:-1, :]
    return fx, fy


def _divergence(px, py):
    # negative adjoint of _forward_gradient
    div = np.zeros_like(px)
    div[:, 0] = px[:, 0]
    div[:, 1:-1] = px[:, 1:-1] - px[:, :-2]
    div[:, -1] = -px[:, -2]
    div[0, :] += py[0, :]
    div[1:-1, :] += py[1:-1, :] - py[:-2, :]
    div[-1, :] += -py[-2, :]
    return div


def tvl1_inner(i1wx, i1wy, grad, rho_c, u1, u2, p11, p12, p21, p22,
               lt, theta, tau, eps2, max_iters):
    """Run primal-dual fixed-point iterations in place for one warp.

    Returns the number of iterations executed.
    """
    taut = tau / theta
    size = u1.size
    n = 0
    error = np.inf
    safe = grad > 1e-10
    inv_grad = np.where(safe, 1.0 / np.where(safe, grad, 1.0), 0.0)
    while error > eps2 and n < max_iters:
        n += 1
        rho = rho_c + i1wx * u1 + i1wy * u2
        thresh = lt * grad
        low = rho < -thresh
        high = rho > thresh
        mid = ~(low | high) & safe
        d1 = np.zeros_like(u1)
        d2 = np.zeros_like(u2)
        d1[low] = lt * i1wx[low]
        d2[low] = lt * i1wy[low]
        d1[high] = -lt * i1wx[high]
        d2[high] = -lt * i1wy[high]
        scale = -rho * inv_grad
        d1[mid] = scale[mid] * i1wx[mid]
        d2[mid] = scale[mid] * i1wy[mid]
        new1 = u1 + d1 + theta * _divergence(p11, p12)
        new2 = u2 + d2 + theta * _divergence(p21, p22)
        error = (np.sum((new1 - u1) ** 2) + np.sum((new2 - u2) ** 2)) / size
        u1[...] = new1
        u2[...] = new2
        u1x, u1y = _forward_gradient(u1)
        u2x, u2y = _forward_gradient(u2)
        ng1 = 1.0 + taut * np.sqrt(u1x * u1x + u1y * u1y)
        ng2 = 1.0 + taut * np.sqrt(u2x * u2x + u2y * u2y)
        p11[...] = (p11 + taut * u1x) / ng1
        p12[...] = (p12 + taut * u1y) / ng1
        p21[...] = (p21 + taut * u2x) / ng2
        p22[...] = (p22 + taut * u2y) / ng2
    return n
