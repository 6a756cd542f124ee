"""Pre-encoder -> down-discretization encoder -> decoder.

All layers are same-padded ``k x k`` convolutions (k = 6 by default), so the
model runs at any input size.  The pre-encoder is a stack of relu layers; the
down-discretization encoder (DDE) is a chain of single-channel layers whose
discretized-tanh activations step from 256 levels down to 2; the decoder sees
nothing but the last DDE plane and ends in a plain tanh over 3 channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conv import conv2d, conv2d_backward
from .quantize import dde_level_schedule, snap_to_levels


@dataclass(frozen=True)
class NetworkConfig:
    pre_encoder_layers: int = 10
    pre_encoder_channels: int = 128
    target_bpp: int = 1
    decoder_layers: int = 2
    decoder_channels: int = 128
    kernel_size: int = 6

    def __post_init__(self):
        for name in ("pre_encoder_layers", "pre_encoder_channels", "decoder_layers",
                     "decoder_channels", "kernel_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 1 <= self.target_bpp <= 8:
            raise ValueError(f"target_bpp must be in [1, 8], got {self.target_bpp}")

    @property
    def dde_layers(self) -> int:
        return 9 - self.target_bpp

    @property
    def output_levels(self) -> int:
        return 2 ** self.target_bpp

    def layer_plan(self) -> list[tuple[str, int, int, str, int]]:
        """``(name, in_channels, out_channels, activation, levels)`` for every layer.

        ``levels`` is 0 for layers without a quantizer.
        """
        plan = []
        c = 3
        for i in range(self.pre_encoder_layers):
            plan.append((f"pre{i}", c, self.pre_encoder_channels, "relu", 0))
            c = self.pre_encoder_channels
        for i, spec in enumerate(dde_level_schedule(self.dde_layers)):
            plan.append((f"dde{i}", c, 1, "qtanh", spec.levels))
            c = 1
        for i in range(self.decoder_layers):
            last = i == self.decoder_layers - 1
            cout = 3 if last else self.decoder_channels
            plan.append((f"dec{i}", c, cout, "tanh" if last else "relu", 0))
            c = cout
        return plan


@dataclass
class ModelParams:
    """Convolution weights ``<layer>.w`` and biases ``<layer>.b`` in layer order."""

    config: NetworkConfig
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        k = self.config.kernel_size
        shapes = {}
        for name, cin, cout, _, _ in self.config.layer_plan():
            shapes[f"{name}.w"] = (k, k, cin, cout)
            shapes[f"{name}.b"] = (cout,)
        return shapes

    def validate(self) -> None:
        expected = self.expected_shapes()
        if list(expected) != list(self.tensors):
            raise ValueError("shape mismatch: parameter names do not match the network config")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ValueError(
                    f"shape mismatch: {name} is {self.tensors[name].shape}, config expects {shape}")

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (self.config == other.config and list(self.tensors) == list(other.tensors)
                and all(a.dtype == b.dtype and np.array_equal(a, b)
                        for a, b in zip(self.tensors.values(), other.tensors.values())))

    __hash__ = None


def init_params(cfg: NetworkConfig, seed: int, dtype=np.float32) -> ModelParams:
    """He-normal weights for relu layers, Glorot-uniform for tanh layers, zero biases."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0x1417])))
    k = cfg.kernel_size
    tensors = {}
    for name, cin, cout, act, _ in cfg.layer_plan():
        fan_in = cin * k * k
        fan_out = cout * k * k
        if act == "relu":
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(k, k, cin, cout))
        else:
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-lim, lim, size=(k, k, cin, cout))
        tensors[f"{name}.w"] = w.astype(dtype)
        tensors[f"{name}.b"] = np.zeros(cout, dtype=dtype)
    return ModelParams(cfg, tensors)


@dataclass
class ForwardResult:
    """Outputs of a full pass plus what the backward pass needs."""

    planes: list[np.ndarray]      # DDE outputs, each (n, h, w)
    recon: np.ndarray | None      # (n, h, w, 3)
    inputs: dict[str, np.ndarray]  # input of every layer
    preacts: dict[str, np.ndarray]  # pre-activation of tanh-family layers
    outputs: dict[str, np.ndarray]  # post-activation of relu/tanh layers
    surrogate: bool

    @property
    def binary(self) -> np.ndarray:
        return self.planes[-1]


def _batched(x: np.ndarray, channels_last: bool = True) -> tuple[np.ndarray, bool]:
    x = np.asarray(x)
    single = x.ndim == (3 if channels_last else 2)
    return (x[None] if single else x), single


def _apply(name: str, act: str, levels: int, x: np.ndarray, p: ModelParams,
           surrogate: bool, res: ForwardResult | None) -> np.ndarray:
    z = conv2d(x, p.tensors[f"{name}.w"], p.tensors[f"{name}.b"])
    if res is not None:
        res.inputs[name] = x
    if act == "relu":
        out = np.maximum(z, 0)
    elif act == "tanh":
        out = np.tanh(z)
    else:
        if res is not None:
            res.preacts[name] = z
        out = np.tanh(z) if surrogate else snap_to_levels(np.tanh(z), levels)
    if res is not None and act != "qtanh":
        res.outputs[name] = out
    return out


def forward(p: ModelParams, x: np.ndarray, surrogate: bool = False,
            keep_cache: bool = True, decode_output: bool = True) -> ForwardResult:
    """Run the whole network on a batch ``(n, h, w, 3)``.

    With ``surrogate=True`` every quantizer is replaced by plain tanh; this is
    the smooth network whose exact gradients :func:`backward` computes.
    """
    p.validate()
    x = np.asarray(x, dtype=p.dtype)
    if x.ndim != 4 or x.shape[3] != 3:
        raise ValueError(f"shape mismatch: expected (n, h, w, 3) input, got {x.shape}")
    res = ForwardResult([], None, {}, {}, {}, surrogate)
    cache = res if keep_cache else None
    h = x
    for name, _, _, act, levels in p.config.layer_plan():
        if name.startswith("dec") and not decode_output:
            break
        h = _apply(name, act, levels, h, p, surrogate, cache)
        if act == "qtanh":
            res.planes.append(h[..., 0])
    if decode_output:
        res.recon = h
    return res


def pre_encode(t: np.ndarray, p: ModelParams) -> np.ndarray:
    """Pre-encoder features, ``(h, w, C)`` per image."""
    p.validate()
    x, single = _batched(np.asarray(t, dtype=p.dtype))
    h = x
    for name, _, _, act, levels in p.config.layer_plan():
        if not name.startswith("pre"):
            break
        h = _apply(name, act, levels, h, p, False, None)
    return h[0] if single else h


def down_discretize(f: np.ndarray, p: ModelParams) -> list[np.ndarray]:
    """All DDE planes, from 256 levels down to the model's output level count."""
    f, single = _batched(np.asarray(f, dtype=p.dtype))
    planes = []
    h = f
    for name, _, _, act, levels in p.config.layer_plan():
        if not name.startswith("dde"):
            continue
        h = _apply(name, act, levels, h, p, False, None)
        planes.append(h[0, ..., 0] if single else h[..., 0])
    return planes


def decode(b: np.ndarray, p: ModelParams) -> np.ndarray:
    """Reconstruct RGB from the final plane alone."""
    b, single = _batched(np.asarray(b, dtype=p.dtype), channels_last=False)
    h = b[..., None]
    for name, _, _, act, levels in p.config.layer_plan():
        if name.startswith("dec"):
            h = _apply(name, act, levels, h, p, False, None)
    return h[0] if single else h


def binarize(t: np.ndarray, p: ModelParams) -> np.ndarray:
    """The user-visible plane: last output of the DDE."""
    return down_discretize(pre_encode(t, p), p)[-1]


def backward(p: ModelParams, res: ForwardResult, grad_plane: np.ndarray | None = None,
             grad_recon: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of every parameter.

    ``grad_plane`` is the upstream gradient at the final DDE plane
    ``(n, h, w)`` and ``grad_recon`` the one at the reconstruction
    ``(n, h, w, 3)``.  Quantizers are differentiated as tanh.
    """
    if not res.inputs:
        raise ValueError("forward pass was run without keep_cache")
    grads: dict[str, np.ndarray] = {}
    plan = p.config.layer_plan()
    first_dec = next(i for i, layer in enumerate(plan) if layer[0].startswith("dec"))
    g = None
    if grad_recon is not None:
        if res.recon is None:
            raise ValueError("forward pass was run without the decoder")
        g = np.asarray(grad_recon, dtype=p.dtype)
    for idx in range(len(plan) - 1, -1, -1):
        name, _, _, act, _ = plan[idx]
        if idx == first_dec - 1 and grad_plane is not None:
            # entering the final DDE plane from above
            gp = np.asarray(grad_plane, dtype=p.dtype)[..., None]
            g = gp if g is None else g + gp
        if g is None:
            grads[f"{name}.w"] = np.zeros_like(p.tensors[f"{name}.w"])
            grads[f"{name}.b"] = np.zeros_like(p.tensors[f"{name}.b"])
            continue
        if act == "relu":
            gz = g * (res.outputs[name] > 0)
        elif act == "tanh":
            y = res.outputs[name]
            gz = g * (1 - y * y)
        else:
            th = np.tanh(res.preacts[name])
            gz = g * (1 - th * th)
        gx, gw, gb = conv2d_backward(res.inputs[name], p.tensors[f"{name}.w"], gz,
                                     need_input_grad=idx > 0)
        grads[f"{name}.w"] = gw
        grads[f"{name}.b"] = gb
        g = gx
    return {k: grads[k] for k in p.tensors}
