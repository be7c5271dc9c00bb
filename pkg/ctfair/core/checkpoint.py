#!/usr/bin/env python3
"""
Checkpoint files for trained models.

A checkpoint is a canonical JSON document. Floats are written with their shortest
round-tripping repr, so save -> load reproduces every parameter bit for bit and the same
model always serializes to the same bytes.
"""

from pathlib import Path
from typing import Any

import numpy as np

from ctfair.core.config import TrainConfig
from ctfair.core.constants import CHECKPOINT_FORMAT, CHECKPOINT_VERSION
from ctfair.core.model import TENSOR_NAMES, ModelError, ModelParams, vocab_hash
from ctfair.core.text import IdentityTerm, LexiconError
from ctfair.core.train import TrainedModel
from ctfair.utils.file import atomic_write_text, canonical_json, read_json


class CheckpointError(Exception):
    """Custom exception for unreadable or inconsistent checkpoints."""

    pass


def checkpoint_dict(model: TrainedModel) -> dict[str, Any]:
    params = model.params
    dims = params.dims
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": {
            "embedding_dim": dims.embedding_dim,
            "window": dims.window,
            "channels": dims.channels,
        },
        "vocab": sorted(params.vocab, key=params.vocab.__getitem__),
        "vocab_hash": vocab_hash(params.vocab),
        "tensors": {name: tensor.tolist() for name, tensor in params.tensors().items()},
        "config": model.config.to_dict(),
        "dev_history": list(model.dev_history),
        "dev_losses": list(model.dev_losses),
        "selected_epoch": model.selected_epoch,
        "blind_terms": [str(t) for t in model.blind_terms],
    }


def save_checkpoint(model: TrainedModel, path: str | Path) -> Path:
    """Write the model to ``path`` atomically."""
    return atomic_write_text(path, canonical_json(checkpoint_dict(model)))


def load_checkpoint(path: str | Path) -> TrainedModel:
    """Read a checkpoint written by ``save_checkpoint``.

    Raises:
        CheckpointError: If the file is missing, not a checkpoint, of another version or
            internally inconsistent.
    """
    try:
        data = read_json(path)
    except FileNotFoundError as e:
        raise CheckpointError(f"Checkpoint not found: {path}") from e
    except (OSError, ValueError) as e:
        raise CheckpointError(f"Failed to read checkpoint {path}: {e}") from e

    if not isinstance(data, dict) or data.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a ctfair checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {data.get('version')!r} "
            f"(expected {CHECKPOINT_VERSION})"
        )

    try:
        vocab = {token: index for index, token in enumerate(data["vocab"])}
        tensors = {
            name: np.asarray(data["tensors"][name], dtype=np.float64) for name in TENSOR_NAMES
        }
        params = ModelParams(vocab=vocab, **tensors)
        config = TrainConfig.from_dict(data["config"])
        blind_terms = tuple(IdentityTerm.parse(t) for t in data["blind_terms"])
        model = TrainedModel(
            params=params,
            config=config,
            dev_history=[float(v) for v in data["dev_history"]],
            selected_epoch=int(data["selected_epoch"]),
            dev_losses=[float(v) for v in data.get("dev_losses", [])],
            blind_terms=blind_terms,
        )
    except KeyError as e:
        raise CheckpointError(f"{path}: missing field {e}") from e
    except (ModelError, LexiconError, ValueError, TypeError) as e:
        raise CheckpointError(f"{path}: invalid checkpoint: {e}") from e

    if vocab_hash(params.vocab) != data.get("vocab_hash"):
        raise CheckpointError(f"{path}: vocabulary hash does not match the stored vocabulary")
    dims = params.dims
    if data.get("dims") != {
        "embedding_dim": dims.embedding_dim,
        "window": dims.window,
        "channels": dims.channels,
    }:
        raise CheckpointError(f"{path}: stored dims do not match the tensor shapes")
    return model
