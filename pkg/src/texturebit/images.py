"""PNG loading/saving and conversion between 8-bit buffers and real tensors.

Tensors are ``(height, width, 3)`` float arrays in ``[-1, 1]``; a sample ``v``
maps to ``v / 127.5 - 1`` and back with ``round((x + 1) * 127.5)``, rounding
half away from zero, so the round trip is exact for all 256 sample values.
Discrete planes are ``(height, width)`` arrays whose values come from an
evenly spaced level set with endpoints at -1 and +1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError


class ImageFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PixelBuffer:
    """8-bit image samples stored as a ``(height, width, channels)`` array."""

    data: np.ndarray

    def __post_init__(self):
        data = self.data
        if data.dtype != np.uint8:
            raise ValueError(f"pixel data must be uint8, got {data.dtype}")
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"pixel data must be (h, w, 1|3), got {data.shape}")
        if data.shape[0] == 0 or data.shape[1] == 0:
            raise ValueError("empty image")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other):
        if not isinstance(other, PixelBuffer):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    __hash__ = None


_MODES_8BIT = {"1", "L", "LA", "P", "PA", "RGB", "RGBA"}


def load_image(path) -> PixelBuffer:
    """Read an 8-bit PNG as a 3-channel buffer (alpha dropped, gray replicated)."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            fmt = im.format
            mode = im.mode
            if fmt != "PNG":
                raise ImageFormatError(f"unsupported format: {fmt or 'unknown'} ({path})")
            if mode not in _MODES_8BIT:
                raise ImageFormatError(f"unsupported format: PNG mode {mode} ({path})")
            im.load()
            if mode in ("1", "L", "LA"):
                gray = np.asarray(im.convert("L"), dtype=np.uint8)
                data = np.repeat(gray[:, :, None], 3, axis=2)
            else:
                data = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except ImageFormatError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageFormatError(f"unreadable file: {path} ({exc})") from exc
    return PixelBuffer(np.ascontiguousarray(data))


def save_image(buf: PixelBuffer, path) -> None:
    data = buf.data
    if buf.channels == 1:
        im = Image.fromarray(data[:, :, 0], mode="L")
    else:
        im = Image.fromarray(data, mode="RGB")
    im.save(Path(path), format="PNG")


def to_tensor(buf: PixelBuffer, dtype=np.float32) -> np.ndarray:
    """Map 8-bit samples to ``[-1, 1]``; single-channel input is replicated to RGB."""
    dt = np.dtype(dtype).type
    data = buf.data
    if buf.channels == 1:
        data = np.repeat(data, 3, axis=2)
    return (data.astype(dt) / dt(127.5) - dt(1.0)).astype(dt)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def from_tensor(t: np.ndarray) -> PixelBuffer:
    """Inverse of :func:`to_tensor`; accepts ``(h, w)``, ``(h, w, 1)`` or ``(h, w, 3)``."""
    t = np.asarray(t)
    if t.ndim == 2:
        t = t[:, :, None]
    scaled = _round_half_away((t.astype(np.float64) + 1.0) * 127.5)
    return PixelBuffer(np.clip(scaled, 0, 255).astype(np.uint8))


def level_set(levels: int) -> np.ndarray:
    """The ``levels`` evenly spaced values in ``[-1, 1]`` (float64)."""
    if levels < 2:
        raise ValueError(f"need at least 2 levels, got {levels}")
    return -1.0 + 2.0 * np.arange(levels, dtype=np.float64) / (levels - 1)


def level_samples(levels: int) -> np.ndarray:
    """8-bit sample used to display each member of the level set."""
    return np.clip(_round_half_away((level_set(levels) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def render_binary(plane: np.ndarray) -> PixelBuffer:
    """Render a {-1, +1} plane as a single-channel black/white buffer."""
    plane = np.asarray(plane)
    if plane.ndim == 3 and plane.shape[2] == 1:
        plane = plane[:, :, 0]
    if not np.all((plane == -1) | (plane == 1)):
        raise ValueError("not a binary plane")
    return PixelBuffer(np.where(plane > 0, 255, 0).astype(np.uint8)[:, :, None])


def render_plane(plane: np.ndarray, levels: int) -> PixelBuffer:
    """Render an L-level plane through ``level -> round((level + 1) * 127.5)``."""
    if levels == 2:
        return render_binary(plane)
    plane = np.asarray(plane)
    if plane.ndim == 3 and plane.shape[2] == 1:
        plane = plane[:, :, 0]
    lv = level_set(levels).astype(plane.dtype)
    idx = np.clip(np.searchsorted(lv, plane), 0, levels - 1)
    if not np.array_equal(lv[idx], plane):
        raise ValueError(f"plane has values outside the {levels}-level set")
    return PixelBuffer(level_samples(levels)[idx][:, :, None])


def plane_from_render(buf: PixelBuffer, levels: int, dtype=np.float32) -> np.ndarray:
    """Map rendered samples back to level-set values; rejects any other sample."""
    data = buf.data
    if data.shape[2] == 3:
        if not (np.array_equal(data[:, :, 0], data[:, :, 1])
                and np.array_equal(data[:, :, 0], data[:, :, 2])):
            raise ValueError("input is not a single-channel plane")
    samples = data[:, :, 0]
    lookup = np.full(256, -1, dtype=np.int64)
    lookup[level_samples(levels)] = np.arange(levels)
    idx = lookup[samples]
    if np.any(idx < 0):
        bad = int(samples[idx < 0][0])
        raise ValueError(f"input not in level set: sample {bad} is not one of the {levels} levels")
    return level_set(levels).astype(dtype)[idx]


def _bilinear_axis(t: np.ndarray, n: int, axis: int) -> np.ndarray:
    size = t.shape[axis]
    if size == n:
        return t
    # half-pixel centres
    pos = (np.arange(n, dtype=np.float64) + 0.5) * (size / n) - 0.5
    pos = np.clip(pos, 0.0, size - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, size - 1)
    frac = (pos - lo).astype(t.dtype)
    a = np.take(t, lo, axis=axis)
    b = np.take(t, hi, axis=axis)
    shape = [1] * t.ndim
    shape[axis] = n
    # a + (b - a) * f keeps constant regions exactly constant
    return a + (b - a) * frac.reshape(shape)


def center_crop_resize(t: np.ndarray, n: int) -> np.ndarray:
    """Center-crop to a square, then resample bilinearly to ``n x n``."""
    if n <= 0:
        raise ValueError(f"target size must be positive, got {n}")
    h, w = t.shape[:2]
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    sq = t[top:top + side, left:left + side]
    out = _bilinear_axis(_bilinear_axis(sq, n, 0), n, 1)
    return np.ascontiguousarray(out)
