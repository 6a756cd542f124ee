"""Batch assembly, the Adam training step and the training loop.

A batch of ``batch_size`` items is built from ``batch_size / 2`` sources.  Each
source is a synthetic image with probability ``synthetic_fraction`` and a
random corpus image otherwise.  The source, with uniform input noise added,
goes to slot ``2k``; slot ``2k + 1`` holds the perturbation ``M`` of slot
``2k`` (fresh independent uniform noise per pixel and channel, clamped), so
the continuity loss always compares an image with its own perturbed copy.

Batch composition is a pure function of ``(seed, step_index)``.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import losses
from .checkpoint import save_checkpoint
from .images import center_crop_resize, load_image, to_tensor
from .network import ModelParams, NetworkConfig, backward, forward, init_params
from .optim import OptimizerState, adam_update
from .synthgen import SynthConfig, generate_synthetic

log = logging.getLogger(__name__)

CHECKPOINT_EVERY = 500
METRICS_HEADER = "step,l2,rel_intensity,continuity,total"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 16
    alpha: float = 0.1
    beta: float = 0.1
    r: int = 8
    synthetic_fraction: float = 0.10
    input_noise: float = 0.1
    steps: int = 1000
    seed: int = 0
    resolution: int = 128
    target_bpp: int = 1
    decoder_layers: int = 2
    pre_encoder_layers: int = 10
    pre_encoder_channels: int = 128
    decoder_channels: int = 128
    kernel_size: int = 6
    crop_mode: str = "resize"
    checkpoint_every: int = CHECKPOINT_EVERY
    strict_deterministic: bool = False
    threads: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.synthetic_fraction <= 1.0:
            raise ValueError("synthetic_fraction must be in [0, 1]")
        if self.input_noise < 0:
            raise ValueError("input_noise must be >= 0")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ValueError("batch_size must be even and >= 2")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.r < 1 or self.resolution < self.r:
            raise ValueError("need 1 <= r <= resolution")
        if self.crop_mode not in ("resize", "crop"):
            raise ValueError("crop_mode must be 'resize' or 'crop'")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        # NetworkConfig validates the architecture fields
        self.network_config()

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(
            pre_encoder_layers=self.pre_encoder_layers,
            pre_encoder_channels=self.pre_encoder_channels,
            target_bpp=self.target_bpp,
            decoder_layers=self.decoder_layers,
            decoder_channels=self.decoder_channels,
            kernel_size=self.kernel_size,
        )


@dataclass
class BatchSpec:
    items: np.ndarray                 # (batch, h, w, 3)
    origins: list[str]                # "corpus" | "synthetic" per item
    perturbations: np.ndarray         # noise M added to item 2k to give item 2k+1
    pairs: list[tuple[int, int]] = field(default_factory=list)


def _worker_count(cfg: TrainConfig) -> int:
    if cfg.strict_deterministic:
        return 1
    if cfg.threads is not None:
        return max(1, cfg.threads)
    env = os.environ.get("TEXTUREBIT_THREADS")
    if env:
        return max(1, int(env))
    return 1


def load_corpus(corpus_dir, resolution: int | None = None) -> list[np.ndarray]:
    """All PNGs under ``corpus_dir`` (sorted by name) as tensors.

    With ``resolution`` set, every image is center-cropped and resized.
    """
    paths = sorted(p for p in Path(corpus_dir).iterdir() if p.suffix.lower() == ".png")
    out = []
    for p in paths:
        t = to_tensor(load_image(p))
        out.append(center_crop_resize(t, resolution) if resolution else t)
    return out


def _fit(img: np.ndarray, n: int, mode: str, rng: np.random.Generator) -> np.ndarray:
    h, w = img.shape[:2]
    if h == n and w == n:
        return img
    if mode == "crop" and h >= n and w >= n:
        top = int(rng.integers(0, h - n + 1))
        left = int(rng.integers(0, w - n + 1))
        return img[top:top + n, left:left + n]
    return center_crop_resize(img, n)


def assemble_batch(corpus, synth_cfg: SynthConfig | None, cfg: TrainConfig,
                   step_index: int) -> BatchSpec:
    if len(corpus) == 0 and cfg.synthetic_fraction < 1.0:
        raise ValueError("empty corpus")
    synth_cfg = replace(synth_cfg or SynthConfig(seed=cfg.seed), resolution=cfg.resolution)
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([int(cfg.seed), int(step_index), 0xBA7C])))
    n = cfg.resolution
    amp = cfg.input_noise
    items = np.empty((cfg.batch_size, n, n, 3), dtype=np.float32)
    perts = np.empty((cfg.batch_size // 2, n, n, 3), dtype=np.float32)
    origins = []
    for k in range(cfg.batch_size // 2):
        if rng.random() < cfg.synthetic_fraction:
            src = generate_synthetic(synth_cfg, int(rng.integers(0, 2**62)))
            tag = "synthetic"
        else:
            src = _fit(corpus[int(rng.integers(0, len(corpus)))], n, cfg.crop_mode, rng)
            tag = "corpus"
        aug = rng.uniform(-amp, amp, size=src.shape).astype(np.float32)
        even = np.clip(src + aug, -1, 1)
        m = rng.uniform(-amp, amp, size=src.shape).astype(np.float32)
        items[2 * k] = even
        items[2 * k + 1] = np.clip(even + m, -1, 1)
        perts[k] = m
        origins += [tag, tag]
    pairs = [(2 * k, 2 * k + 1) for k in range(cfg.batch_size // 2)]
    return BatchSpec(items, origins, perts, pairs)


def _pair_terms(p: ModelParams, x: np.ndarray, cfg: TrainConfig, n_items: int,
                surrogate: bool = False):
    """Loss sums and parameter gradients contributed by one (image, perturbed) pair."""
    res = forward(p, x, surrogate=surrogate)
    l2, g_recon = losses.reconstruction_loss_and_grad(x, res.recon)
    rel, g_rel = losses.relative_intensity_loss_and_grad(x, res.binary, cfg.r)
    cont, g1, g2 = losses.color_continuity_loss_and_grad(res.binary[0], res.binary[1])
    n_pairs = n_items // 2
    g_plane = (cfg.alpha / n_items) * g_rel + (cfg.beta / n_pairs) * np.stack([g1, g2])
    grads = backward(p, res, g_plane, g_recon / n_items)
    return float(l2.sum()), float(rel.sum()), float(cont), grads


def loss_and_grads(p: ModelParams, batch: BatchSpec, cfg: TrainConfig,
                   surrogate: bool = False):
    """Batch loss breakdown and the gradient of its total.

    ``surrogate=True`` evaluates the smooth network (quantizers replaced by
    tanh), whose exact gradient is what the straight-through backward pass
    computes; it exists for gradient checking.
    """
    n_items = len(batch.items)
    chunks = [batch.items[a:b + 1] for a, b in batch.pairs]
    workers = min(_worker_count(cfg), len(chunks))
    if workers > 1:
        with threadpool_limits(1), ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda x: _pair_terms(p, x, cfg, n_items, surrogate), chunks))
    elif cfg.strict_deterministic:
        with threadpool_limits(1):
            results = [_pair_terms(p, x, cfg, n_items, surrogate) for x in chunks]
    else:
        results = [_pair_terms(p, x, cfg, n_items, surrogate) for x in chunks]

    # fixed reduction order regardless of how the pairs were evaluated
    l2 = rel = cont = 0.0
    grads = {k: np.zeros_like(v) for k, v in p.tensors.items()}
    for pl2, prel, pcont, pg in results:
        l2 += pl2
        rel += prel
        cont += pcont
        for k in grads:
            grads[k] += pg[k]
    parts = (l2 / n_items, rel / n_items, cont / len(chunks))
    if not all(np.isfinite(parts)):
        raise FloatingPointError("non-finite loss")
    return losses.total_loss(*parts, alpha=cfg.alpha, beta=cfg.beta), grads


def train_step(p: ModelParams, opt: OptimizerState, batch: BatchSpec, cfg: TrainConfig):
    """One Adam update; returns ``(params, opt, loss)`` with the pre-update loss."""
    breakdown, grads = loss_and_grads(p, batch, cfg)
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        raise FloatingPointError("non-finite loss gradient")
    tensors, new_opt = adam_update(p.tensors, grads, opt, cfg.learning_rate)
    return ModelParams(p.config, tensors), new_opt, breakdown


def metrics_path(checkpoint_path) -> Path:
    checkpoint_path = Path(checkpoint_path)
    return checkpoint_path.with_name(checkpoint_path.name + ".metrics.csv")


def train(corpus, cfg: TrainConfig, out_path, synth_cfg: SynthConfig | None = None,
          init: ModelParams | None = None) -> ModelParams:
    """Run ``cfg.steps`` steps, checkpointing to ``out_path``.

    ``corpus`` is a directory of PNGs or a list of tensors.  The metrics log
    ``<out_path>.metrics.csv`` gets one record per step.
    """
    if isinstance(corpus, (str, os.PathLike)):
        corpus = load_corpus(corpus, cfg.resolution if cfg.crop_mode == "resize" else None)
    if len(corpus) == 0 and cfg.synthetic_fraction < 1.0:
        raise ValueError("empty corpus")
    params = init if init is not None else init_params(cfg.network_config(), cfg.seed)
    opt = OptimizerState.zeros_like(params.tensors)
    out_path = Path(out_path)
    log.info("training %d steps: %s", cfg.steps, asdict(cfg))
    with open(metrics_path(out_path), "w", encoding="utf-8", newline="\n") as mf:
        mf.write(METRICS_HEADER + "\n")
        for step in range(cfg.steps):
            batch = assemble_batch(corpus, synth_cfg, cfg, step)
            params, opt, lb = train_step(params, opt, batch, cfg)
            mf.write(f"{step + 1},{lb.l2!r},{lb.rel_intensity!r},{lb.continuity!r},{lb.total!r}\n")
            mf.flush()
            if (step + 1) % 50 == 0 or step == 0:
                log.info("step %d: l2=%.5f rel=%.5f cont=%.5f total=%.5f",
                         step + 1, *lb.as_row())
            if (step + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(params, out_path, opt)
    save_checkpoint(params, out_path, opt)
    return params


def read_metrics(path) -> np.ndarray:
    """Metrics log as an array with columns (step, l2, rel, cont, total)."""
    rows = Path(path).read_text().splitlines()[1:]
    if not rows:
        return np.zeros((0, 5))
    return np.array([[float(v) for v in r.split(",")] for r in rows])
