"""Training losses and the per-channel pixel error metric.

* reconstruction: mean squared error on the [-1, 1] scale;
* relative intensity: mean of ``|tanh(D_A) - tanh(D_B)|`` where ``D_X`` holds
  all pairwise differences of the r x r region-mean intensities of the input
  (A) and of the binary plane (B);
* color continuity: mean ``|b1 - b2|`` between the planes of an image and of
  its perturbed copy;
* total: ``l2 + alpha * rel + beta * cont``.

The ``*_and_grad`` variants also return the gradient with respect to the
network-produced argument and are what the trainer uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .images import PixelBuffer


@dataclass(frozen=True)
class LossBreakdown:
    l2: float
    rel_intensity: float
    continuity: float
    total: float

    def as_row(self) -> tuple[float, float, float, float]:
        return (self.l2, self.rel_intensity, self.continuity, self.total)


def _check_same(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def image_intensity(img: np.ndarray) -> np.ndarray:
    """Unweighted channel mean of an RGB tensor, mapped to [0, 1]."""
    return (np.asarray(img).mean(axis=-1) + 1) / 2


def plane_intensity(plane: np.ndarray) -> np.ndarray:
    return (np.asarray(plane) + 1) / 2


def block_edges(size: int, r: int) -> np.ndarray:
    """Start index of each of the r blocks; the remainder joins the last block."""
    step = size // r
    if step == 0:
        raise ValueError(f"image side {size} is smaller than the region grid {r}")
    return np.arange(r) * step


def _block_counts(size: int, r: int) -> np.ndarray:
    edges = block_edges(size, r)
    return np.diff(np.append(edges, size))


def region_means(img: np.ndarray, r: int = 8) -> np.ndarray:
    """Row-major vector of the r*r block means of an (h, w) or (n, h, w) plane."""
    img = np.asarray(img)
    h, w = img.shape[-2:]
    rows, cols = block_edges(h, r), block_edges(w, r)
    sums = np.add.reduceat(np.add.reduceat(img, rows, axis=-2), cols, axis=-1)
    counts = np.outer(_block_counts(h, r), _block_counts(w, r))
    return (sums / counts).reshape(img.shape[:-2] + (r * r,))


def difference_matrix(a: np.ndarray) -> np.ndarray:
    """``A 1^T - 1 A^T``: entry (j, k) is ``a[j] - a[k]``."""
    a = np.asarray(a)
    return a[..., :, None] - a[..., None, :]


def relative_intensity_loss_and_grad(img: np.ndarray, plane: np.ndarray, r: int = 8):
    """Loss per item and its gradient w.r.t. the plane.

    ``img`` is (h, w, 3) or (n, h, w, 3); ``plane`` is (h, w) or (n, h, w).
    """
    img = np.asarray(img)
    plane = np.asarray(plane)
    if img.shape[:-1] != plane.shape:
        raise ValueError(f"shape mismatch: {img.shape[:-1]} vs {plane.shape}")
    ta = np.tanh(difference_matrix(region_means(image_intensity(img), r)))
    tb = np.tanh(difference_matrix(region_means(plane_intensity(plane), r)))
    diff = ta - tb
    loss = np.abs(diff).mean(axis=(-2, -1))

    # d/dD_B of mean|ta - tanh(D_B)|
    gd = -np.sign(diff) * (1 - tb * tb) / (r * r) ** 2
    # D_B[j, k] = B_j - B_k
    gb = gd.sum(axis=-1) - gd.sum(axis=-2)
    h, w = plane.shape[-2:]
    ch, cw = _block_counts(h, r), _block_counts(w, r)
    gblk = gb.reshape(gb.shape[:-1] + (r, r)) / np.outer(ch, cw)
    gpix = np.repeat(np.repeat(gblk, ch, axis=-2), cw, axis=-1) * 0.5
    return loss, gpix.astype(plane.dtype, copy=False)


def relative_intensity_loss(img: np.ndarray, plane: np.ndarray, r: int = 8):
    return relative_intensity_loss_and_grad(img, plane, r)[0]


def color_continuity_loss_and_grad(b1: np.ndarray, b2: np.ndarray):
    """Mean absolute plane difference over the last two axes, with gradients."""
    b1 = np.asarray(b1)
    b2 = np.asarray(b2)
    _check_same(b1, b2)
    d = b1 - b2
    n = d.shape[-1] * d.shape[-2]
    g = np.sign(d) / n
    return np.abs(d).mean(axis=(-2, -1)), g, -g


def color_continuity_loss(b1: np.ndarray, b2: np.ndarray):
    return color_continuity_loss_and_grad(b1, b2)[0]


def reconstruction_loss_and_grad(orig: np.ndarray, recon: np.ndarray):
    """Mean squared error over pixels and channels, with the gradient w.r.t. ``recon``."""
    orig = np.asarray(orig)
    recon = np.asarray(recon)
    _check_same(orig, recon)
    d = recon - orig
    n = d.shape[-1] * d.shape[-2] * d.shape[-3]
    return (d * d).mean(axis=(-3, -2, -1)), 2 * d / n


def reconstruction_loss(orig: np.ndarray, recon: np.ndarray):
    return reconstruction_loss_and_grad(orig, recon)[0]


def total_loss(l2: float, rel: float, cont: float, alpha: float = 0.1,
               beta: float = 0.1) -> LossBreakdown:
    if min(l2, rel, cont) < 0:
        raise ValueError("loss components must be nonnegative")
    return LossBreakdown(float(l2), float(rel), float(cont),
                         float(l2 + alpha * rel + beta * cont))


def pixel_error(orig: PixelBuffer, recon: PixelBuffer) -> float:
    """Mean absolute 8-bit difference per channel, averaged over channels."""
    if orig.data.shape != recon.data.shape:
        raise ValueError(f"shape mismatch: {orig.data.shape} vs {recon.data.shape}")
    d = np.abs(orig.data.astype(np.int32) - recon.data.astype(np.int32))
    return float(d.mean(axis=(0, 1)).mean())
