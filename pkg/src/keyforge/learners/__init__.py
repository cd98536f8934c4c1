"""Classifier families behind one fit / predict-probabilities contract."""

from __future__ import annotations

from . import forest, gbt, knn, mlp
from .base import load_model, predict_indices, predict_labels, save_model
from .forest import ForestConfig, ForestModel
from .gbt import GbtConfig, GbtModel
from .knn import KnnConfig, KnnModel
from .mlp import MlpConfig, MlpModel

FAMILIES = {
    "knn": KnnModel,
    "rf": ForestModel,
    "gbt": GbtModel,
    "mlp": MlpModel,
}

CONFIG_TYPES = {
    "knn": KnnConfig,
    "rf": ForestConfig,
    "gbt": GbtConfig,
    "mlp": MlpConfig,
}

_FIT = {
    "knn": knn.fit,
    "rf": forest.fit,
    "gbt": gbt.fit,
    "mlp": mlp.fit,
}


def fit_model(family: str, train, cfg):
    """Dispatch to the family's fit function."""
    if family not in _FIT:
        raise KeyError("unknown model family %r (expected one of %s)" % (family, ", ".join(_FIT)))
    return _FIT[family](train, cfg)


__all__ = [
    "FAMILIES", "CONFIG_TYPES", "fit_model", "save_model", "load_model",
    "predict_indices", "predict_labels",
    "KnnConfig", "KnnModel", "ForestConfig", "ForestModel",
    "GbtConfig", "GbtModel", "MlpConfig", "MlpModel",
]
