"""Buffer-level binarize / reconstruct / evaluate helpers shared by the CLI and tests."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable

import numpy as np

from .images import PixelBuffer, from_tensor, plane_from_render, render_plane, to_tensor
from .losses import pixel_error
from .network import ModelParams, binarize, decode


def binarize_buffer(params: ModelParams, buf: PixelBuffer) -> PixelBuffer:
    plane = binarize(to_tensor(buf, dtype=params.dtype), params)
    return render_plane(plane, params.config.output_levels)


def reconstruct_buffer(params: ModelParams, rendered: PixelBuffer) -> PixelBuffer:
    plane = plane_from_render(rendered, params.config.output_levels, dtype=params.dtype)
    return from_tensor(decode(plane, params))


def roundtrip_buffer(params: ModelParams, buf: PixelBuffer) -> PixelBuffer:
    return reconstruct_buffer(params, binarize_buffer(params, buf))


def mean_pixel_error(images: Iterable[PixelBuffer],
                     reconstruct: Callable[[PixelBuffer], PixelBuffer],
                     workers: int | None = None) -> float:
    """Average of :func:`pixel_error` between each image and ``reconstruct(image)``.

    Images are processed by ``workers`` threads (default: ``TEXTUREBIT_THREADS``
    or 1); results are averaged in input order either way.
    """
    images = list(images)
    if workers is None:
        workers = max(1, int(os.environ.get("TEXTUREBIT_THREADS") or 1))

    def one(buf):
        return pixel_error(buf, reconstruct(buf))

    if workers > 1 and len(images) > 1:
        with ThreadPoolExecutor(workers) as pool:
            errs = list(pool.map(one, images))
    else:
        errs = [one(buf) for buf in images]
    if not errs:
        raise ValueError("no images to evaluate")
    return float(np.mean(errs))


def evaluate(params: ModelParams, images: Iterable[PixelBuffer],
             workers: int | None = None) -> float:
    return mean_pixel_error(images, lambda b: roundtrip_buffer(params, b), workers)
