import numpy as np
import pytest

from hpunet.backend.rng import RngState
from hpunet.model.config import ModelConfig
from hpunet.model.params import build_parameters
from hpunet.trainer.config import TrainConfig


@pytest.fixture
def rng():
    return RngState(1234)


@pytest.fixture
def tiny_model_config():
    """Three scales, two latent levels, 8x8 inputs work."""
    return ModelConfig(total_scales=3, latent_scales=2, base_channels=4, channel_cap_doublings=1,
                       res_blocks_per_scale=1, num_classes=2, input_channels=1)


@pytest.fixture
def tiny_params(tiny_model_config):
    return build_parameters(tiny_model_config, RngState(0))


@pytest.fixture
def tiny_params64(tiny_model_config):
    return build_parameters(tiny_model_config, RngState(0), dtype=np.float64)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(iterations=4, batch_size=2, lr_schedule=((0, 1e-3),), topk_k=0.25,
                       eval_every=1, checkpoint_every=2, seed=7)
