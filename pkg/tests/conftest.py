import numpy as np
import pytest

from sadi.config import AttentionConfig, LossWeights, TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=[0, 1, 2, 3, 4])
def seeded_rng(request):
    return np.random.default_rng(request.param)


@pytest.fixture
def tiny_config(tmp_path):
    """Smallest configuration that exercises every stage of training."""
    return TrainConfig(
        image_size=16,
        hole_size=6,
        batch_size=1,
        steps=2,
        width=2,
        weights=LossWeights(n_critic=2),
        attention=AttentionConfig(),
        out_dir=str(tmp_path / "runs"),
        log_every=1,
    )
