import numpy as np
import pytest

from texturebit.network import NetworkConfig, init_params
from texturebit.optim import OptimizerState
from texturebit.trainer import TrainConfig, assemble_batch, train_step

# lines collected by tests/test_acceptance.py, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_config():
    return NetworkConfig(pre_encoder_layers=3, pre_encoder_channels=6, decoder_layers=2,
                         decoder_channels=5)


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def flat_color(rgb, n):
    return np.broadcast_to(np.asarray(rgb, np.float32), (n, n, 3)).copy()


@pytest.fixture(scope="session")
def smoke_model():
    """Small network briefly trained on flat red and flat blue (settings from a pilot)."""
    corpus = [flat_color((1, -1, -1), 8), flat_color((-1, -1, 1), 8)]
    cfg = TrainConfig(pre_encoder_layers=2, pre_encoder_channels=8, decoder_channels=8,
                      kernel_size=3, resolution=8, batch_size=4, r=2, synthetic_fraction=0.0,
                      input_noise=0.05, learning_rate=3e-3, strict_deterministic=True)
    p = init_params(cfg.network_config(), 0)
    opt = OptimizerState.zeros_like(p.tensors)
    for step in range(200):
        p, opt, _ = train_step(p, opt, assemble_batch(corpus, None, cfg, step), cfg)
    return p
