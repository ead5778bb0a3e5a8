# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the hot kernels; signatures match ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport sqrt, floor

cnp.import_array()


def im2col(floating[:, :, :, ::1] x, int k, int stride, int out_h, int out_w):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    dtype = np.float64 if floating is double else np.float32
    out = np.empty((n, c * k * k, out_h * out_w), dtype=dtype)
    cdef floating[:, :, ::1] cols = out
    cdef Py_ssize_t b, ch, i, j, oy, ox, row, base
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(k):
                    for j in range(k):
                        row = (ch * k + i) * k + j
                        for oy in range(out_h):
                            base = oy * out_w
                            for ox in range(out_w):
                                cols[b, row, base + ox] = x[b, ch, oy * stride + i, ox * stride + j]
    return out


def col2im(floating[:, :, ::1] cols, int n, int c, int hp, int wp, int k, int stride,
           int out_h, int out_w):
    dtype = np.float64 if floating is double else np.float32
    out = np.zeros((n, c, hp, wp), dtype=dtype)
    cdef floating[:, :, :, ::1] x = out
    cdef Py_ssize_t b, ch, i, j, oy, ox, row, base
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(k):
                    for j in range(k):
                        row = (ch * k + i) * k + j
                        for oy in range(out_h):
                            base = oy * out_w
                            for ox in range(out_w):
                                x[b, ch, oy * stride + i, ox * stride + j] += cols[b, row, base + ox]
    return out


def warp_bilinear(double[:, ::1] img, double[:, ::1] u, double[:, ::1] v):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1]
    out = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t y, x, x0, y0, x1, y1
    cdef double px, py, fx, fy, top, bottom
    with nogil:
        for y in range(h):
            for x in range(w):
                px = x + u[y, x]
                py = y + v[y, x]
                if px < 0.0:
                    px = 0.0
                elif px > w - 1.0:
                    px = w - 1.0
                if py < 0.0:
                    py = 0.0
                elif py > h - 1.0:
                    py = h - 1.0
                x0 = <Py_ssize_t>floor(px)
                y0 = <Py_ssize_t>floor(py)
                if x0 > w - 2:
                    x0 = w - 2
                if y0 > h - 2:
                    y0 = h - 2
                fx = px - x0
                fy = py - y0
                x1 = x0 + 1
                y1 = y0 + 1
                top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
                bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
                o[y, x] = top * (1.0 - fy) + bottom * fy
    return out


cdef inline double _div(double[:, ::1] px, double[:, ::1] py, Py_ssize_t y, Py_ssize_t x,
                        Py_ssize_t h, Py_ssize_t w) nogil:
    cdef double d
    if x == 0:
        d = px[y, 0]
    elif x == w - 1:
        d = -px[y, x - 1]
    else:
        d = px[y, x] - px[y, x - 1]
    if y == 0:
        d += py[0, x]
    elif y == h - 1:
        d += -py[y - 1, x]
    else:
        d += py[y, x] - py[y - 1, x]
    return d


def tvl1_inner(double[:, ::1] i1wx, double[:, ::1] i1wy, double[:, ::1] grad,
               double[:, ::1] rho_c, double[:, ::1] u1, double[:, ::1] u2,
               double[:, ::1] p11, double[:, ::1] p12, double[:, ::1] p21, double[:, ::1] p22,
               double lt, double theta, double tau, double eps2, int max_iters):
    cdef Py_ssize_t h = u1.shape[0], w = u1.shape[1]
    cdef Py_ssize_t y, x
    cdef double taut = tau / theta
    cdef double error = 1e300, rho, thresh, gx, gy, d1, d2, n1, n2, s1, s2
    cdef double u1x, u1y, u2x, u2y, ng1, ng2
    cdef int n = 0
    new1_arr = np.empty((h, w), dtype=np.float64)
    new2_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] new1 = new1_arr
    cdef double[:, ::1] new2 = new2_arr
    with nogil:
        while error > eps2 and n < max_iters:
            n += 1
            s1 = 0.0
            s2 = 0.0
            for y in range(h):
                for x in range(w):
                    gx = i1wx[y, x]
                    gy = i1wy[y, x]
                    rho = rho_c[y, x] + gx * u1[y, x] + gy * u2[y, x]
                    thresh = lt * grad[y, x]
                    if rho < -thresh:
                        d1 = lt * gx
                        d2 = lt * gy
                    elif rho > thresh:
                        d1 = -lt * gx
                        d2 = -lt * gy
                    elif grad[y, x] > 1e-10:
                        d1 = -rho / grad[y, x] * gx
                        d2 = -rho / grad[y, x] * gy
                    else:
                        d1 = 0.0
                        d2 = 0.0
                    n1 = u1[y, x] + d1 + theta * _div(p11, p12, y, x, h, w)
                    n2 = u2[y, x] + d2 + theta * _div(p21, p22, y, x, h, w)
                    s1 += (n1 - u1[y, x]) * (n1 - u1[y, x])
                    s2 += (n2 - u2[y, x]) * (n2 - u2[y, x])
                    new1[y, x] = n1
                    new2[y, x] = n2
            error = (s1 + s2) / (h * w)
            u1[...] = new1
            u2[...] = new2
            for y in range(h):
                for x in range(w):
                    if x < w - 1:
                        u1x = u1[y, x + 1] - u1[y, x]
                        u2x = u2[y, x + 1] - u2[y, x]
                    else:
                        u1x = 0.0
                        u2x = 0.0
                    if y < h - 1:
                        u1y = u1[y + 1, x] - u1[y, x]
                        u2y = u2[y + 1, x] - u2[y, x]
                    else:
                        u1y = 0.0
                        u2y = 0.0
                    ng1 = 1.0 + taut * sqrt(u1x * u1x + u1y * u1y)
                    ng2 = 1.0 + taut * sqrt(u2x * u2x + u2y * u2y)
                    p11[y, x] = (p11[y, x] + taut * u1x) / ng1
                    p12[y, x] = (p12[y, x] + taut * u1y) / ng1
                    p21[y, x] = (p21[y, x] + taut * u2x) / ng2
                    p22[y, x] = (p22[y, x] + taut * u2y) / ng2
    return n
