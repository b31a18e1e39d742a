import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from editqa.model import BackboneConfig, ModelConfig
from editqa.synthetic import make_case_store


def tiny_model_config(**overrides) -> ModelConfig:
    cfg = ModelConfig(
        backbone=BackboneConfig(name="stub", d_v=4, d_t=4, token_limit=12, vocab=32),
        d_a=4,
        d_o=4,
        d_q=4,
        d_qv=4,
        ff_hidden=6,
        q_hidden=6,
        head_hidden=8,
        n_heads=1,
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


@pytest.fixture
def tiny_config():
    return tiny_model_config()


@pytest.fixture(scope="session")
def case_store(tmp_path_factory):
    root = tmp_path_factory.mktemp("store")
    return make_case_store(root, n_cases=20, seed=7)
