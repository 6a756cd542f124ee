"""Same-padded 2-D convolution (NHWC) with hand-written reverse mode.

Weights are laid out ``(k, k, in_channels, out_channels)``.  Padding follows
the usual "same" convention for even kernels: ``(k - 1) // 2`` zeros before
and the rest after, so a 6x6 kernel pads 2 rows/cols before and 3 after.
The im2col matrix is built in row chunks to keep peak memory bounded.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

# upper bound on a single im2col chunk, in bytes
CHUNK_BYTES = 64 * 2**20


def _pad_amounts(k: int) -> tuple[int, int]:
    before = (k - 1) // 2
    return before, k - 1 - before


def _windows(xp: np.ndarray, k: int) -> np.ndarray:
    # (n, h, w, c, k, k) view -> (n, h, w, k, k, c) to match the weight layout
    return sliding_window_view(xp, (k, k), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)


def _row_chunks(n: int, h: int, w: int, c: int, k: int, itemsize: int):
    """Yield (image, row_start, row_stop) blocks whose im2col fits CHUNK_BYTES."""
    per_row = max(1, w * k * k * c * itemsize)
    rows = max(1, min(h, CHUNK_BYTES // per_row))
    for i in range(n):
        for r0 in range(0, h, rows):
            yield i, r0, min(h, r0 + rows)


def _correlate(xp: np.ndarray, w: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Valid cross-correlation of an already padded input."""
    n, _, _, c = xp.shape
    k = w.shape[0]
    cout = w.shape[3]
    wmat = w.reshape(k * k * c, cout)
    out = np.empty((n, out_h, out_w, cout), dtype=np.result_type(xp.dtype, w.dtype))
    for i, r0, r1 in _row_chunks(n, out_h, out_w, c, k, xp.itemsize):
        win = _windows(xp[i:i + 1, r0:r1 + k - 1], k)
        cols = win.reshape((r1 - r0) * out_w, k * k * c)
        out[i, r0:r1] = (cols @ wmat).reshape(r1 - r0, out_w, cout)
    return out


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Same-padded stride-1 convolution of ``x`` (n, h, w, c_in)."""
    k = w.shape[0]
    if w.shape[1] != k or x.shape[3] != w.shape[2]:
        raise ValueError(f"shape mismatch: input {x.shape} vs kernel {w.shape}")
    lo, hi = _pad_amounts(k)
    xp = np.pad(x, ((0, 0), (lo, hi), (lo, hi), (0, 0)))
    out = _correlate(xp, w, x.shape[1], x.shape[2])
    if b is not None:
        out += b
    return out


def conv2d_backward(x: np.ndarray, w: np.ndarray, gout: np.ndarray, need_input_grad: bool = True):
    """Gradients of ``conv2d(x, w, b)`` given the upstream gradient ``gout``.

    Returns ``(grad_x, grad_w, grad_b)``; ``grad_x`` is None when not requested.
    """
    k = w.shape[0]
    n, h, wd, c = x.shape
    cout = w.shape[3]
    lo, hi = _pad_amounts(k)
    xp = np.pad(x, ((0, 0), (lo, hi), (lo, hi), (0, 0)))

    gw = np.zeros((k * k * c, cout), dtype=np.result_type(x.dtype, gout.dtype))
    for i, r0, r1 in _row_chunks(n, h, wd, c, k, x.itemsize):
        win = _windows(xp[i:i + 1, r0:r1 + k - 1], k)
        cols = win.reshape((r1 - r0) * wd, k * k * c)
        gw += cols.T @ gout[i, r0:r1].reshape(-1, cout)
    gb = gout.sum(axis=(0, 1, 2))

    gx = None
    if need_input_grad:
        # transposed convolution: pad the other way round, flip the kernel
        # spatially and swap its channel axes
        gp = np.pad(gout, ((0, 0), (hi, lo), (hi, lo), (0, 0)))
        wt = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
        gx = _correlate(gp, wt, h, wd)
    return gx, gw.reshape(w.shape), gb
