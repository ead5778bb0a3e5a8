"""Hot numerical kernels: compiled extension when available, numpy otherwise.

Set ``SKETCHVID_PURE_PYTHON=1`` to force the numpy fallback. ``BACKEND``
names the implementation that was selected at import.
"""
import os

from . import _pykernels

if os.environ.get("SKETCHVID_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

im2col = _impl.im2col
col2im = _impl.col2im
warp_bilinear = _impl.warp_bilinear
tvl1_inner = _impl.tvl1_inner

__all__ = ["BACKEND", "im2col", "col2im", "warp_bilinear", "tvl1_inner"]
