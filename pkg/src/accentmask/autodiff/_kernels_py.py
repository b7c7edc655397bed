"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_kernels`` module; used when
the extension is unavailable or ``ACCENTMASK_PURE_PYTHON=1`` is set.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x):
    # (N, C, H, W) -> (N, C, H, W, 3, 3) views over the zero-padded input
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    return sliding_window_view(xp, (3, 3), axis=(2, 3))


def conv3x3_forward(x, w, b):
    n, _, h, wd = x.shape
    out = np.empty((n, w.shape[0], h, wd))
    for i in range(n):
        # (C, H, W, 3, 3) x (O, C, 3, 3) -> (H, W, O)
        y = np.tensordot(_windows(x[i:i + 1])[0], w, axes=([0, 3, 4], [1, 2, 3]))
        out[i] = np.moveaxis(y, -1, 0)
    out += b[None, :, None, None]
    return out


def conv3x3_backward(x, w, gy):
    n = x.shape[0]
    gw = np.zeros_like(w)
    gx = np.empty_like(x)
    flipped = w[:, :, ::-1, ::-1]
    for i in range(n):
        # (O, H, W) x (C, H, W, 3, 3) -> (O, C, 3, 3)
        gw += np.tensordot(gy[i], _windows(x[i:i + 1])[0], axes=([1, 2], [1, 2]))
        # full correlation of the output gradient with the flipped kernel
        g = np.tensordot(_windows(gy[i:i + 1])[0], flipped, axes=([0, 3, 4], [0, 2, 3]))
        gx[i] = np.moveaxis(g, -1, 0)
    gb = gy.sum(axis=(0, 2, 3))
    return gx, gw, gb


def maxpool2_forward(x):
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    blocks = x[:, :, :2 * ho, :2 * wo].reshape(n, c, ho, 2, wo, 2)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, 4)
    # argmax returns the first maximum: row-major order within the window
    arg = blocks.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(blocks, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return out, arg


def maxpool2_backward(gy, arg, in_shape):
    n, c, h, w = in_shape
    ho, wo = gy.shape[2], gy.shape[3]
    blocks = np.zeros((n, c, ho, wo, 4))
    np.put_along_axis(blocks, arg[..., None].astype(np.intp), gy[..., None], axis=-1)
    gx = np.zeros(in_shape)
    gx[:, :, :2 * ho, :2 * wo] = (
        blocks.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
    )
    return gx
