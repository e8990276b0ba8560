import os

# 测试时只输出到控制台 | Console-only logging while testing
os.environ.setdefault("NSR_LOG_DIR", "")
os.environ.setdefault("NSR_LOG_LEVEL", "30")

import numpy as np
import pytest

from app.models.ConfigModels import BatchSpec, ModelConfig


def pytest_collection_modifyitems(config, items):
    if os.getenv("NSR_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set NSR_RUN_SLOW=1 to run long acceptance tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model_config():
    return ModelConfig(hidden_dim=16, num_heads=2, num_isab=1, inducing_points=4, pma_seeds=2,
                       decoder_layers=1, max_target_len=20, dim_x=3)


@pytest.fixture
def small_batch_spec():
    return BatchSpec(batch_size=4, max_points=40)
