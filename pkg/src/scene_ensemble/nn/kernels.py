"""Backend selection for the convolution/pooling hot loops.

The compiled extension is preferred; the numpy implementation is used when it
is missing or when ``SCENE_ENSEMBLE_PURE_PYTHON`` is set to a non-empty value
other than ``0``.
"""

import os

import numpy as np

from . import _pykernels

_pure = os.environ.get("SCENE_ENSEMBLE_PURE_PYTHON", "") not in ("", "0")
try:
    if _pure:
        raise ImportError("pure-python backend requested")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "numpy"


def _c(a):
    return np.ascontiguousarray(a)


def im2col(x, kh, kw, impl=None):
    return (impl or _impl).im2col(_c(x), kh, kw)


def col2im(cols, shape, kh, kw, impl=None):
    return (impl or _impl).col2im(_c(cols), tuple(shape), kh, kw)


def maxpool_forward(x, kh, kw, impl=None):
    return (impl or _impl).maxpool_forward(_c(x), kh, kw)


def maxpool_backward(grad_out, arg, shape, kh, kw, impl=None):
    return (impl or _impl).maxpool_backward(
        _c(grad_out), np.ascontiguousarray(arg, dtype=np.int64), tuple(shape), kh, kw
    )


def available_backends():
    """Map backend name to module for every backend importable here."""
    out = {"numpy": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
