"""Pure-numpy versions of the convolution and pooling kernels.

Same contract as the compiled ``_ckernels`` module; used when the extension
is not built or when ``SCENE_ENSEMBLE_PURE_PYTHON=1`` is set.

All arrays are 4-D ``[N, C, H, W]``. The 1-D layers call these with ``H == 1``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, kh, kw):
    """Unfold valid ``kh x kw`` patches into ``[N, C*kh*kw, Ho*Wo]``."""
    n, c, h, w = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))  # N,C,Ho,Wo,kh,kw
    win = win.transpose(0, 1, 4, 5, 2, 3)
    return np.ascontiguousarray(win).reshape(n, c * kh * kw, ho * wo)


def col2im(cols, shape, kh, kw):
    """Adjoint of :func:`im2col`: scatter-add patch columns back to ``shape``."""
    n, c, h, w = shape
    ho, wo = h - kh + 1, w - kw + 1
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + ho, j:j + wo] += cols[:, :, i, j]
    return out


def maxpool_forward(x, kh, kw):
    """Non-overlapping max pool, trailing remainder truncated.

    Returns ``(out, arg)`` where ``arg`` holds the row-major offset of the
    winner inside its window; ties resolve to the first offset.
    """
    n, c, h, w = x.shape
    ho, wo = h // kh, w // kw
    win = x[:, :, :ho * kh, :wo * kw].reshape(n, c, ho, kh, wo, kw)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, kh * kw)
    arg = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.int64)


def maxpool_backward(grad_out, arg, shape, kh, kw):
    n, c, h, w = shape
    ho, wo = grad_out.shape[2], grad_out.shape[3]
    win = np.zeros((n, c, ho, wo, kh * kw), dtype=grad_out.dtype)
    np.put_along_axis(win, arg[..., None], grad_out[..., None], axis=-1)
    win = win.reshape(n, c, ho, wo, kh, kw).transpose(0, 1, 2, 4, 3, 5)
    out = np.zeros(shape, dtype=grad_out.dtype)
    out[:, :, :ho * kh, :wo * kw] = win.reshape(n, c, ho * kh, wo * kw)
    return out
