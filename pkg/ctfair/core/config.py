#!/usr/bin/env python3
"""
Configuration settings for training runs.
"""

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from ctfair.core.constants import (
    CLP_METHODS,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CHANNELS,
    DEFAULT_CLP_LAMBDA,
    DEFAULT_EMBEDDING_DIM,
    DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_SPLIT_FRACTIONS,
    DEFAULT_WINDOW,
    TRAINING_METHODS,
)
from ctfair.core.model import ModelDims
from ctfair.utils.console import console
from ctfair.utils.file import canonical_json, read_json, sha256_text

SELECTION_CRITERIA = ("loss", "auc")


@dataclass
class TrainConfig:
    """Holds the settings of one training run (or a group of seeded runs)."""

    method: str = "baseline"
    lambda_: float | None = None  # "lambda" in JSON; None means method default
    learning_rate: float = DEFAULT_LEARNING_RATE
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    seed: int = 0
    runs: int = 1
    embedding_dim: int = DEFAULT_EMBEDDING_DIM
    window: int = DEFAULT_WINDOW
    channels: int = DEFAULT_CHANNELS
    selection: str = "loss"
    split_seed: int = 0
    split_fractions: tuple[float, float, float] = DEFAULT_SPLIT_FRACTIONS
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        """Fill method defaults and validate settings after initialization."""
        if self.method not in TRAINING_METHODS:
            raise ValueError(
                f"Unknown method {self.method!r}; expected one of {', '.join(TRAINING_METHODS)}"
            )

        if self.lambda_ is None:
            if self.method in CLP_METHODS:
                console.print(
                    f"Notice: method={self.method} without lambda, using default "
                    f"lambda={DEFAULT_CLP_LAMBDA}",
                    style="info",
                )
                self.lambda_ = DEFAULT_CLP_LAMBDA
            else:
                self.lambda_ = 0.0
        self.lambda_ = float(self.lambda_)
        if self.lambda_ < 0:
            raise ValueError("lambda must be nonnegative")

        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for name in ("epochs", "batch_size", "runs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.selection not in SELECTION_CRITERIA:
            raise ValueError(f"selection must be one of {', '.join(SELECTION_CRITERIA)}")

        fractions = tuple(float(f) for f in self.split_fractions)
        self.split_fractions = fractions  # type: ignore[assignment]
        if len(self.split_fractions) != 3:
            raise ValueError("split_fractions must have three entries (train, dev, test)")

        # Raises on non-positive dimensions
        self.dims  # noqa: B018

    @property
    def dims(self) -> ModelDims:
        return ModelDims(
            embedding_dim=self.embedding_dim, window=self.window, channels=self.channels
        )

    @property
    def penalty_weight(self) -> float:
        """The CLP weight actually applied; zero for methods without logit pairing."""
        return self.lambda_ if self.method in CLP_METHODS else 0.0  # type: ignore[return-value]

    def run_seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.runs)]

    def with_overrides(self, **overrides: Any) -> "TrainConfig":
        """Return a copy with every non-None override applied."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        if "method" in changes and "lambda_" not in changes and changes["method"] != self.method:
            # Re-derive the lambda default for the new method
            changes["lambda_"] = None if changes["method"] in CLP_METHODS else 0.0
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["lambda"] = data.pop("lambda_")
        data["split_fractions"] = list(self.split_fractions)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        """Build a config from a flat mapping; unknown keys are rejected.

        Raises:
            ValueError: On unknown keys or invalid values.
        """
        known = {f.name for f in fields(cls)}
        kwargs: dict[str, Any] = {}
        unknown = []
        for key, value in data.items():
            name = "lambda_" if key == "lambda" else key
            if name not in known:
                unknown.append(key)
                continue
            kwargs[name] = tuple(value) if name == "split_fractions" else value
        if unknown:
            raise ValueError(f"Unknown training config keys: {', '.join(sorted(unknown))}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        """Load a flat JSON training config."""
        data = read_json(path)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: training config must be a JSON object")
        return cls.from_dict(data)

    def config_hash(self) -> str:
        return sha256_text(canonical_json(self.to_dict()))
