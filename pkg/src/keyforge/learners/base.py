"""Shared classifier contract and versioned model serialization.

Every learner family exposes ``fit(train, cfg) -> model`` where the model has
``family``, ``classes``, ``config`` and ``predict_proba(rows)`` returning one
non-negative row per sample summing to 1. Argmax prediction breaks ties
toward the lowest class index, everywhere.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from ..errors import ModelFormatError

FORMAT_NAME = "keyforge-model"
FORMAT_VERSION = 1


def predict_indices(model, rows: np.ndarray) -> np.ndarray:
    """Argmax class index per row; np.argmax keeps the first (lowest) index on ties."""
    return np.argmax(model.predict_proba(rows), axis=1)


def predict_labels(model, rows: np.ndarray) -> list[str]:
    idx = predict_indices(model, rows)
    return [model.classes[i] for i in idx]


def save_model(model, path: str | Path) -> None:
    """Serialize a fitted model to an .npz archive with a JSON metadata block."""
    meta = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "family": model.family,
        "classes": list(model.classes),
        "config": dataclasses.asdict(model.config),
    }
    arrays = model._arrays()
    np.savez_compressed(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_model(path: str | Path):
    """Load a model saved by :func:`save_model`; wrong versions fail loudly."""
    from . import FAMILIES  # deferred: avoids import cycle

    with np.load(path, allow_pickle=False) as archive:
        if "__meta__" not in archive:
            raise ModelFormatError("%s: not a keyforge model file" % path)
        meta = json.loads(str(archive["__meta__"]))
        if meta.get("format") != FORMAT_NAME or meta.get("version") != FORMAT_VERSION:
            raise ModelFormatError(
                "%s: unsupported model format %r version %r (expected %s v%d)"
                % (path, meta.get("format"), meta.get("version"), FORMAT_NAME, FORMAT_VERSION)
            )
        family = meta.get("family")
        if family not in FAMILIES:
            raise ModelFormatError("%s: unknown model family %r" % (path, family))
        arrays = {k: archive[k] for k in archive.files if k != "__meta__"}
    return FAMILIES[family]._from_state(meta, arrays)
