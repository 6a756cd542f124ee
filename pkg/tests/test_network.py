import numpy as np
import pytest

from texturebit.network import (ModelParams, NetworkConfig, backward, binarize, decode,
                                down_discretize, forward, init_params, pre_encode)
from texturebit.losses import reconstruction_loss_and_grad


def _image(rng, n, batch=None):
    shape = (n, n, 3) if batch is None else (batch, n, n, 3)
    return rng.uniform(-1, 1, shape).astype(np.float32)


def test_config_defaults_follow_final_architecture():
    cfg = NetworkConfig()
    assert (cfg.pre_encoder_layers, cfg.pre_encoder_channels) == (10, 128)
    assert (cfg.decoder_layers, cfg.decoder_channels, cfg.kernel_size) == (2, 128, 6)
    assert cfg.dde_layers == 8 and cfg.output_levels == 2
    plan = cfg.layer_plan()
    assert [p[0] for p in plan][:3] == ["pre0", "pre1", "pre2"]
    dde = [p for p in plan if p[0].startswith("dde")]
    assert [p[4] for p in dde] == [256, 128, 64, 32, 16, 8, 4, 2]
    assert dde[0][1:3] == (128, 1) and all(p[1:3] == (1, 1) for p in dde[1:])
    dec = [p for p in plan if p[0].startswith("dec")]
    assert dec == [("dec0", 1, 128, "relu", 0), ("dec1", 128, 3, "tanh", 0)]


def test_dde_layers_follow_bpp():
    for bpp in range(1, 9):
        assert NetworkConfig(target_bpp=bpp).dde_layers == 9 - bpp
    with pytest.raises(ValueError):
        NetworkConfig(target_bpp=0)
    with pytest.raises(ValueError):
        NetworkConfig(decoder_layers=0)


def test_init_deterministic_and_zero_bias():
    cfg = NetworkConfig(pre_encoder_channels=16, decoder_channels=8)
    a, b = init_params(cfg, 3), init_params(cfg, 3)
    assert a == b
    assert a != init_params(cfg, 4)
    assert all(not v.any() for k, v in a.tensors.items() if k.endswith(".b"))


def test_init_relu_variance():
    w = init_params(NetworkConfig(), 0).tensors["pre1.w"]
    assert w.shape == (6, 6, 128, 128)
    target = 2 / (128 * 36)
    assert abs(w.var() / target - 1) < 0.10


def test_init_tanh_uniform_bounds():
    p = init_params(NetworkConfig(pre_encoder_channels=16, decoder_channels=8), 0)
    w = p.tensors["dde0.w"]
    lim = np.sqrt(6 / (16 * 36 + 36))
    assert np.abs(w).max() <= lim
    assert w.var() == pytest.approx(lim**2 / 3, rel=0.25)


@pytest.mark.parametrize("n", [32, 64, 128])
def test_pre_encode_dims_and_relu(rng, n):
    cfg = NetworkConfig(pre_encoder_layers=2, pre_encoder_channels=8, decoder_channels=4)
    p = init_params(cfg, 0)
    f = pre_encode(_image(rng, n), p)
    assert f.shape == (n, n, 8)
    assert f.min() >= 0


def test_pre_encode_full_width(rng):
    p = init_params(NetworkConfig(), 1)
    assert pre_encode(_image(rng, 16), p).shape == (16, 16, 128)


def test_zero_params_give_zero_features_and_output(rng, tiny_params):
    zero = ModelParams(tiny_params.config,
                       {k: np.zeros_like(v) for k, v in tiny_params.tensors.items()})
    assert not pre_encode(_image(rng, 16), zero).any()
    assert not decode(np.ones((16, 16), np.float32), zero).any()


def test_shape_mismatch_detected(rng, tiny_params):
    bad = tiny_params.copy()
    bad.tensors["pre1.w"] = bad.tensors["pre1.w"][:, :, :, :2]
    with pytest.raises(ValueError, match="shape mismatch"):
        pre_encode(_image(rng, 8), bad)


def test_down_discretize_level_counts(rng, tiny_params):
    planes = down_discretize(pre_encode(_image(rng, 32), tiny_params), tiny_params)
    assert len(planes) == 8
    for i, plane in enumerate(planes, start=1):
        assert plane.shape == (32, 32)
        assert len(np.unique(plane)) <= 2 ** (9 - i)
    assert set(np.unique(planes[-1])) <= {-1.0, 1.0}


def test_four_bpp_truncates_dde(rng):
    cfg = NetworkConfig(pre_encoder_layers=2, pre_encoder_channels=6, decoder_channels=4,
                        target_bpp=4)
    p = init_params(cfg, 0)
    planes = down_discretize(pre_encode(_image(rng, 32), p), p)
    assert len(planes) == 5
    assert len(np.unique(planes[-1])) <= 16


def test_decode_range_and_dims(rng, tiny_params):
    b = np.where(rng.random((24, 24)) < 0.5, -1.0, 1.0).astype(np.float32)
    out = decode(b, tiny_params)
    assert out.shape == (24, 24, 3)
    assert np.all(np.abs(out) < 1)


@pytest.mark.parametrize("n", [16, 23, 40])
def test_binarize_contract(rng, tiny_params, n):
    t = _image(rng, n)
    plane = binarize(t, tiny_params)
    assert plane.shape == (n, n)
    assert set(np.unique(plane)) <= {-1.0, 1.0}
    assert np.array_equal(plane, binarize(t, tiny_params))


def test_batched_and_single_agree(rng, tiny_params):
    x = _image(rng, 12, batch=3)
    res = forward(tiny_params, x)
    for i in range(3):
        assert np.allclose(res.binary[i], binarize(x[i], tiny_params))
        assert np.allclose(res.recon[i], decode(res.binary[i], tiny_params), atol=1e-6)


def test_decoder_sees_only_final_plane(rng, tiny_params):
    """The decoder input is exactly the final DDE plane, nothing else."""
    x = _image(rng, 16, batch=1)
    res = forward(tiny_params, x)
    assert np.array_equal(res.inputs["dec0"][..., 0], res.binary)
    assert np.array_equal(res.recon[0], decode(res.binary[0], tiny_params))


def test_training_and_inference_forward_agree(rng, tiny_params):
    x = _image(rng, 16, batch=2)
    res = forward(tiny_params, x)
    assert np.array_equal(res.binary, np.stack([binarize(xi, tiny_params) for xi in x]))


def test_backward_zero_upstream(rng, tiny_params):
    res = forward(tiny_params, _image(rng, 8, batch=2))
    grads = backward(tiny_params, res, np.zeros((2, 8, 8)), np.zeros((2, 8, 8, 3)))
    assert all(not g.any() for g in grads.values())
    grads = backward(tiny_params, res)
    assert all(not g.any() for g in grads.values())


def test_backward_decoder_weight_matches_finite_difference(rng, tiny_config):
    p = init_params(tiny_config, 2, dtype=np.float64)
    x = rng.uniform(-1, 1, (2, 10, 10, 3))

    def loss(q):
        return float(reconstruction_loss_and_grad(x, forward(q, x, surrogate=True).recon)[0].sum())

    res = forward(p, x, surrogate=True)
    _, g = reconstruction_loss_and_grad(x, res.recon)
    grads = backward(p, res, None, g)
    h = 1e-6
    for name in ("dec0.w", "dec1.w", "dec1.b"):
        for _ in range(3):
            idx = tuple(rng.integers(0, s) for s in p.tensors[name].shape)
            qp, qm = p.copy(), p.copy()
            qp.tensors[name][idx] += h
            qm.tensors[name][idx] -= h
            fd = (loss(qp) - loss(qm)) / (2 * h)
            assert abs(grads[name][idx] - fd) <= 1e-3 * max(abs(fd), 1e-6)


def test_gradients_finite(rng, tiny_params):
    x = _image(rng, 12, batch=2)
    res = forward(tiny_params, x)
    grads = backward(tiny_params, res, rng.normal(size=(2, 12, 12)),
                     rng.normal(size=(2, 12, 12, 3)))
    assert all(np.all(np.isfinite(g)) for g in grads.values())
    assert set(grads) == set(tiny_params.tensors)


def test_ste_backward_uses_tanh_derivative_at_preactivation(rng, tiny_params):
    """Gradient at the last DDE bias equals sum(g * tanh'(z)) even though the
    forward output was snapped to {-1, +1}."""
    x = _image(rng, 8, batch=1)
    res = forward(tiny_params, x)
    g = rng.normal(size=(1, 8, 8))
    grads = backward(tiny_params, res, g, None)
    z = res.preacts["dde7"][..., 0]
    expected = float((g * (1 - np.tanh(z) ** 2)).sum())
    assert grads["dde7.b"][0] == pytest.approx(expected, rel=1e-5)


def test_smoke_trained_colors_differ(smoke_model):
    red = np.zeros((64, 64, 3), np.float32)
    red[..., 0] = 1
    red[..., 1:] = -1
    blue = -np.ones((64, 64, 3), np.float32)
    blue[..., 2] = 1
    hamming = np.count_nonzero(binarize(red, smoke_model) != binarize(blue, smoke_model))
    assert hamming > 0
