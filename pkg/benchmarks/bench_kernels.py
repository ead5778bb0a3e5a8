"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from sketchvid.kernels import _pykernels

try:
    from sketchvid.kernels import _ckernels
except ImportError:
    _ckernels = None


def _cases(rng):
    x = rng.standard_normal((8, 16, 36, 36))
    k, stride, oh, ow = 3, 1, 34, 34
    cols = rng.standard_normal((8, 16 * k * k, oh * ow))
    img = rng.random((96, 96))
    u = rng.standard_normal((96, 96)) * 3
    v = rng.standard_normal((96, 96)) * 3

    def tvl1(mod):
        h, w = 64, 64
        r = np.random.default_rng(1)
        ix, iy = r.standard_normal((h, w)), r.standard_normal((h, w))
        grad = ix * ix + iy * iy
        rho = r.standard_normal((h, w))
        state = [np.zeros((h, w)) for _ in range(6)]
        return lambda: mod.tvl1_inner(ix, iy, grad, rho, *state,
                                      0.15 * 0.3, 0.3, 0.25, 0.0, 30)

    return {
        "im2col": lambda m: (lambda: m.im2col(x, k, stride, oh, ow)),
        "col2im": lambda m: (lambda: m.col2im(cols, 8, 16, 36, 36, k, stride, oh, ow)),
        "warp_bilinear": lambda m: (lambda: m.warp_bilinear(img, u, v)),
        "tvl1_inner": tvl1,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, make in _cases(rng).items():
        tp = min(timeit.repeat(make(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:<14}{tp:12.2f}{'-':>12}{'-':>10}")
            continue
        tc = min(timeit.repeat(make(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<14}{tp:12.2f}{tc:12.2f}{tp / tc:9.1f}x")


if __name__ == "__main__":
    main()
