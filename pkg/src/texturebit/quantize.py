"""Discretized tanh activations and their straight-through gradient.

Forward passes (training and inference alike) snap ``tanh(x)`` to the nearest
member of an evenly spaced level set on ``[-1, 1]``; the backward pass ignores
the snapping and uses ``tanh'(x) = 1 - tanh(x)**2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .images import level_set


@dataclass(frozen=True)
class QuantSpec:
    levels: int

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 2:
            raise ValueError(f"levels must be an integer >= 2, got {self.levels}")

    @property
    def level_set(self) -> np.ndarray:
        return level_set(self.levels)

    @property
    def bits(self) -> float:
        return float(np.log2(self.levels))


def dde_level_schedule(layers: int = 8) -> list[QuantSpec]:
    """Level counts of the down-discretization stages: 256, 128, ..., 2.

    With fewer than 8 layers the schedule is truncated from the end, so
    ``layers=5`` stops at 16 levels (4 bits per pixel).
    """
    if not 1 <= layers <= 8:
        raise ValueError(f"layers must be in [1, 8], got {layers}")
    return [QuantSpec(2 ** (8 - i)) for i in range(layers)]


def snap_to_levels(t, levels: int):
    """Nearest member of the level set to ``t`` (ties go to the larger level)."""
    t = np.asarray(t)
    dtype = t.dtype if np.issubdtype(t.dtype, np.floating) else np.float64
    u = (t.astype(dtype) + 1) * ((levels - 1) / 2)
    idx = np.clip(np.floor(u + 0.5), 0, levels - 1).astype(np.int64)
    return level_set(levels).astype(dtype)[idx]


def discretize_tanh(x, spec: QuantSpec | int):
    """``tanh`` followed by snapping to the level set of ``spec``."""
    levels = spec.levels if isinstance(spec, QuantSpec) else int(spec)
    x = np.asarray(x)
    out = snap_to_levels(np.tanh(x), levels)
    return out[()] if out.ndim == 0 else out


def ste_gradient(x):
    """Backward-pass derivative of every discretized tanh: ``1 - tanh(x)**2``."""
    th = np.tanh(np.asarray(x))
    out = 1 - th * th
    return out[()] if out.ndim == 0 else out
