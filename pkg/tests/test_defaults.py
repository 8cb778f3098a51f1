"""The reference protocol settings are contractual; pin them."""

import pytest

from hypercd.errors import ParameterError
from hypercd.model import Model, TrainConfig, init_model
from hypercd.pipeline import PipelineConfig
from hypercd.segmentation import SegParams


def test_train_config_defaults():
    cfg = TrainConfig()
    assert cfg.epochs == 400
    assert cfg.weight_decay == 0.0005
    assert cfg.alpha == 0.2
    assert cfg.gamma == 2.0
    assert cfg.optimizer == "adam"
    assert cfg.momentum == 0.9


def test_model_defaults():
    model = init_model(8)
    assert model.dropout_rate == 0.5
    assert model.num_layers == 2
    assert model.layers[0].theta.shape == (8, 64)
    assert model.layers[1].theta.shape == (64, 1)
    assert model.layers[0].activation == "relu"
    assert model.layers[1].activation == "identity"


def test_pipeline_config_defaults():
    cfg = PipelineConfig(t1="a", t2="b")
    assert cfg.fine_scale == 8.0
    assert cfg.coarse_scale == 15.0
    assert cfg.shape == 0.1
    assert cfg.compactness == 0.5
    assert cfg.label_ratio == 0.05
    assert cfg.threshold == 0.5
    assert cfg.bandwidth == 1.0
    assert cfg.epochs == 400
    assert cfg.dropout == 0.5


@pytest.mark.parametrize(
    "kwargs",
    [
        {"scale": 0.0},
        {"scale": -1.0},
        {"scale": 1.0, "shape": 1.0},
        {"scale": 1.0, "shape": -0.1},
        {"scale": 1.0, "compactness": 1.5},
    ],
)
def test_seg_params_validation(kwargs):
    with pytest.raises(ParameterError):
        SegParams(**kwargs)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"epochs": 0},
        {"learning_rate": -0.1},
        {"weight_decay": -1e-6},
        {"alpha": 0.0},
        {"alpha": 1.0},
        {"gamma": -0.5},
        {"optimizer": "sgd"},
    ],
)
def test_train_config_validation(kwargs):
    with pytest.raises(ParameterError):
        TrainConfig(**kwargs)


def test_model_rejects_broken_chain():
    import numpy as np

    from hypercd.errors import DimensionError
    from hypercd.model import Layer

    with pytest.raises(DimensionError):
        Model([Layer(np.zeros((3, 4)), "relu"), Layer(np.zeros((5, 1)), "identity")])
    with pytest.raises(DimensionError):
        Model([Layer(np.zeros((3, 2)), "identity")])  # final width must be 1
