"""Classical single-channel binarizers used for side-by-side comparisons."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .checkpoint import load_checkpoint
from .images import PixelBuffer, load_image, render_plane, to_tensor
from .network import ModelParams, binarize

METHODS = ("otsu", "fsd", "ours")


def to_gray(buf: PixelBuffer) -> PixelBuffer:
    """Unweighted channel mean, rounded half away from zero."""
    if buf.channels == 1:
        return buf
    mean = buf.data.astype(np.int64).sum(axis=2)
    # round(sum / 3) with halves away from zero; sums are nonnegative
    gray = (2 * mean + 3) // 6
    return PixelBuffer(gray.astype(np.uint8)[:, :, None])


def gray_histogram(gray: PixelBuffer) -> np.ndarray:
    return np.bincount(gray.data.reshape(-1), minlength=256).astype(np.int64)


def otsu_threshold(gray: PixelBuffer) -> int:
    """Threshold t maximizing between-class variance of {v < t} vs {v >= t}.

    Ties go to the smallest t.  Variances are compared exactly.
    """
    if gray.channels != 1:
        raise ValueError("otsu_threshold expects a single-channel image")
    hist = gray_histogram(gray)
    if np.count_nonzero(hist) < 2:
        raise ValueError("degenerate histogram: all pixels share one value")
    values = np.arange(256, dtype=np.int64)
    cnt = np.concatenate([[0], np.cumsum(hist)]).tolist()
    tot = np.concatenate([[0], np.cumsum(hist * values)]).tolist()
    n, s = cnt[-1], tot[-1]
    best_t, best = None, Fraction(-1)
    for t in range(1, 256):
        c0, s0 = cnt[t], tot[t]
        c1, s1 = n - c0, s - s0
        if c0 == 0 or c1 == 0:
            continue
        var = Fraction((s0 * c1 - s1 * c0) ** 2, c0 * c1)
        if var > best:
            best_t, best = t, var
    return best_t


def otsu_binarize(gray: PixelBuffer) -> PixelBuffer:
    t = otsu_threshold(gray)
    return PixelBuffer(np.where(gray.data >= t, 255, 0).astype(np.uint8))


def floyd_steinberg(gray: PixelBuffer) -> PixelBuffer:
    """Left-to-right, top-to-bottom error diffusion with 7/16, 3/16, 5/16, 1/16."""
    if gray.channels != 1:
        raise ValueError("floyd_steinberg expects a single-channel image")
    h, w = gray.height, gray.width
    err = gray.data[:, :, 0].astype(np.float64).tolist()
    out = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        row = err[y]
        below = err[y + 1] if y + 1 < h else None
        for x in range(w):
            old = row[x]
            new = 255.0 if old >= 127.5 else 0.0
            out[y, x] = int(new)
            e = old - new
            if x + 1 < w:
                row[x + 1] += e * 7 / 16
            if below is not None:
                if x > 0:
                    below[x - 1] += e * 3 / 16
                below[x] += e * 5 / 16
                if x + 1 < w:
                    below[x + 1] += e * 1 / 16
    return PixelBuffer(out[:, :, None])


def _rgb(buf: PixelBuffer) -> np.ndarray:
    return np.repeat(buf.data, 3, axis=2) if buf.channels == 1 else buf.data


def compare_grid(image, model=None, methods=()) -> PixelBuffer:
    """Original followed by each method's output, tiled left to right.

    ``image`` is a path or a :class:`PixelBuffer`; ``model`` is a checkpoint
    path or loaded params and is only needed for ``"ours"``.
    """
    buf = image if isinstance(image, PixelBuffer) else load_image(image)
    tiles = [_rgb(buf)]
    params = None
    for m in methods:
        if m == "otsu":
            tiles.append(_rgb(otsu_binarize(to_gray(buf))))
        elif m == "fsd":
            tiles.append(_rgb(floyd_steinberg(to_gray(buf))))
        elif m == "ours":
            if params is None:
                if model is None:
                    raise ValueError("method 'ours' needs a model checkpoint")
                params = model if isinstance(model, ModelParams) else load_checkpoint(model)
            plane = binarize(to_tensor(buf), params)
            tiles.append(_rgb(render_plane(plane, params.config.output_levels)))
        else:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    return PixelBuffer(np.ascontiguousarray(np.concatenate(tiles, axis=1)))

