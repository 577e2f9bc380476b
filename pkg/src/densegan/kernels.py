"""Backend selection for the convolution lowering kernels.

The compiled extension is preferred; set ``DENSEGAN_PURE_PYTHON=1`` to force
the numpy fallback (both produce identical results up to summation order).
"""
import os

import numpy as np

from . import _im2col_py

_fallback = _im2col_py

if os.environ.get("DENSEGAN_PURE_PYTHON") == "1":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _im2col as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"


def im2col(x: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    return _impl.im2col(np.ascontiguousarray(x, dtype=np.float64), k, stride, pad)


def col2im(cols: np.ndarray, c: int, h: int, w: int, k: int, stride: int, pad: int) -> np.ndarray:
    return _impl.col2im(np.ascontiguousarray(cols, dtype=np.float64), c, h, w, k, stride, pad)


def backends() -> dict:
    """Map of available backend name to module, for tests and benchmarks."""
    out = {"python": _fallback}
    try:
        from . import _im2col

        out["cython"] = _im2col
    except ImportError:
        pass
    return out
