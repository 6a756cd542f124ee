"""Synthetic training images: 2-5 flat ovals/rectangles on a flat background.

Every color is uniform over all 2**24 RGB triples.  Each shape's width and
height are drawn independently from [5%, 70%] of the canvas side and its
center anywhere on the canvas; shapes may overlap, occlude each other or run
off the edge.  Rasterization is hard-edged, so an image holds at most
``max_shapes + 1`` distinct colors.

Randomness: image ``index`` of seed ``seed`` is drawn from numpy's PCG64 seeded
with ``SeedSequence([seed, index])``, so any image can be produced on its own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .images import PixelBuffer, to_tensor

MIN_EXTENT = 0.05
MAX_EXTENT = 0.70


@dataclass(frozen=True)
class SynthConfig:
    resolution: int = 128
    min_shapes: int = 2
    max_shapes: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.min_shapes <= self.max_shapes:
            raise ValueError("need 1 <= min_shapes <= max_shapes")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")


@dataclass(frozen=True)
class ShapeSpec:
    kind: str                     # "oval" or "rectangle"
    center: tuple[float, float]   # (x, y) in pixels
    extents: tuple[float, float]  # full (width, height) in pixels
    color: tuple[int, int, int]


def _rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


def _color(rng: np.random.Generator) -> tuple[int, int, int]:
    c = int(rng.integers(0, 2**24))
    return (c >> 16) & 0xFF, (c >> 8) & 0xFF, c & 0xFF


def draw_scene(cfg: SynthConfig, index: int) -> tuple[tuple[int, int, int], list[ShapeSpec]]:
    """Background color and the ordered shape list for one image."""
    rng = _rng(cfg.seed, index)
    n = cfg.resolution
    background = _color(rng)
    count = int(rng.integers(cfg.min_shapes, cfg.max_shapes + 1))
    shapes = []
    for _ in range(count):
        kind = "oval" if rng.integers(0, 2) == 0 else "rectangle"
        ew, eh = rng.uniform(MIN_EXTENT, MAX_EXTENT, size=2) * n
        cx, cy = rng.uniform(0, n, size=2)
        shapes.append(ShapeSpec(kind, (float(cx), float(cy)),
                                (max(float(ew), 1.0), max(float(eh), 1.0)), _color(rng)))
    return background, shapes


def rasterize(background, shapes: list[ShapeSpec], resolution: int) -> PixelBuffer:
    n = resolution
    img = np.empty((n, n, 3), dtype=np.uint8)
    img[:] = background
    # pixel centres
    ys, xs = np.mgrid[0:n, 0:n] + 0.5
    for s in shapes:
        dx = (xs - s.center[0]) / (s.extents[0] / 2)
        dy = (ys - s.center[1]) / (s.extents[1] / 2)
        if s.kind == "oval":
            mask = dx * dx + dy * dy <= 1.0
        else:
            mask = (np.abs(dx) <= 1.0) & (np.abs(dy) <= 1.0)
        img[mask] = s.color
    return PixelBuffer(img)


def generate_synthetic_buffer(cfg: SynthConfig, index: int) -> PixelBuffer:
    background, shapes = draw_scene(cfg, index)
    return rasterize(background, shapes, cfg.resolution)


def generate_synthetic(cfg: SynthConfig, index: int, dtype=np.float32) -> np.ndarray:
    return to_tensor(generate_synthetic_buffer(cfg, index), dtype=dtype)
