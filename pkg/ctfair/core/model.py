#!/usr/bin/env python3
"""
A small convolutional text classifier with exact analytic gradients.

Architecture: embedding -> 1-D convolution (ReLU) -> global max-pool -> dense -> logit.
The prediction is f(x) = sigmoid(g(x)), where g(x) is the logit. All arithmetic is float64.
"""

from collections.abc import Iterable, Mapping
from dataclasses import dataclass
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ctfair.core.constants import (
    DEFAULT_CHANNELS,
    DEFAULT_EMBEDDING_DIM,
    DEFAULT_WINDOW,
    IDENTITY_TOKEN,
    OOV_TOKEN,
)
from ctfair.core.text import Document
from ctfair.utils.file import sha256_text

TENSOR_NAMES = ("embeddings", "conv_w", "conv_b", "dense_w", "dense_b")

_P_MIN = float(np.nextafter(0.0, 1.0))
_P_MAX = float(np.nextafter(1.0, 0.0))


class ModelError(Exception):
    """Custom exception for model construction and shape errors."""

    pass


@dataclass(frozen=True)
class ModelDims:
    """Embedding dimension d, convolution window w and channel count c."""

    embedding_dim: int = DEFAULT_EMBEDDING_DIM
    window: int = DEFAULT_WINDOW
    channels: int = DEFAULT_CHANNELS

    def __post_init__(self):
        if min(self.embedding_dim, self.window, self.channels) < 1:
            raise ModelError(f"Model dimensions must be >= 1, got {self}")


def make_vocab(tokens: Iterable[str]) -> dict[str, int]:
    """Build a token->index map: OOV at 0, IDENTITY at 1, then sorted distinct tokens."""
    distinct = sorted(set(tokens) - {OOV_TOKEN, IDENTITY_TOKEN})
    vocab = {OOV_TOKEN: 0, IDENTITY_TOKEN: 1}
    for token in distinct:
        vocab[token] = len(vocab)
    return vocab


def build_vocab(docs: Iterable[Document], extra_tokens: Iterable[str] = ()) -> dict[str, int]:
    """Vocabulary of every token in ``docs`` plus ``extra_tokens`` (min frequency 1)."""
    tokens: set[str] = set(extra_tokens)
    for doc in docs:
        tokens.update(doc.tokens)
    return make_vocab(tokens)


def vocab_hash(vocab: Mapping[str, int]) -> str:
    """SHA-256 of the vocabulary tokens in index order."""
    ordered = sorted(vocab, key=vocab.__getitem__)
    return sha256_text("\n".join(ordered))


@dataclass(frozen=True, eq=False)
class ModelParams:
    """All learnable parameters of the classifier.

    Shapes: embeddings (V, d), conv_w (w, d, c), conv_b (c,), dense_w (c,), dense_b ().
    The arrays are updated in place by the optimizer during training only.
    """

    vocab: dict[str, int]
    embeddings: np.ndarray
    conv_w: np.ndarray
    conv_b: np.ndarray
    dense_w: np.ndarray
    dense_b: np.ndarray

    def __post_init__(self):
        if OOV_TOKEN not in self.vocab:
            raise ModelError(f"Vocabulary must contain {OOV_TOKEN!r}")
        if sorted(self.vocab.values()) != list(range(len(self.vocab))):
            raise ModelError("Vocabulary indices must be exactly 0..|V|-1")
        n_vocab, d = self.embeddings.shape
        w, d_conv, c = self.conv_w.shape
        if n_vocab != len(self.vocab):
            raise ModelError(f"{len(self.vocab)} vocabulary entries but {n_vocab} embedding rows")
        if d_conv != d or self.conv_b.shape != (c,) or self.dense_w.shape != (c,):
            raise ModelError("Inconsistent parameter shapes")
        if self.dense_b.shape != ():
            raise ModelError("dense_b must be a scalar array")
        for name, tensor in self.tensors().items():
            if not np.all(np.isfinite(tensor)):
                raise ModelError(f"Parameter {name} contains non-finite values")

    @property
    def dims(self) -> ModelDims:
        w, d, c = self.conv_w.shape
        return ModelDims(embedding_dim=d, window=w, channels=c)

    @property
    def shape_key(self) -> tuple[int, ...]:
        w, d, c = self.conv_w.shape
        return (len(self.vocab), d, w, c)

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TENSOR_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(
            vocab=dict(self.vocab), **{k: v.copy() for k, v in self.tensors().items()}
        )

    def encode(self, doc: Document) -> np.ndarray:
        """Token indices of a document; OOV for unknown tokens, one OOV for empty docs."""
        oov = self.vocab[OOV_TOKEN]
        if not doc.tokens:
            return np.array([oov], dtype=np.int64)
        return np.array([self.vocab.get(t, oov) for t in doc.tokens], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class ForwardCache:
    """Intermediate activations of one forward pass."""

    indices: np.ndarray  # (n,) token indices of real positions
    inputs: np.ndarray  # (max(n, w), d) embedded and zero-padded input
    pre_activation: np.ndarray  # (T, c) convolution output before ReLU
    pooled: np.ndarray  # (c,)
    argmax: np.ndarray  # (c,) winning position per channel
    logit: float
    shape_key: tuple[int, ...]


@dataclass(eq=False)
class Gradients:
    """Gradients with the same shapes as ModelParams."""

    embeddings: np.ndarray
    conv_w: np.ndarray
    conv_b: np.ndarray
    dense_w: np.ndarray
    dense_b: np.ndarray

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "Gradients":
        return cls(**{k: np.zeros_like(v) for k, v in params.tensors().items()})

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TENSOR_NAMES}

    def add_(self, other: "Gradients", scale: float = 1.0) -> "Gradients":
        """Accumulate ``scale * other`` in place."""
        for mine, theirs in zip(self.tensors().values(), other.tensors().values(), strict=True):
            mine += scale * theirs
        return self

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors().values())


def init_params(
    vocab: Mapping[str, int] | Iterable[str], dims: ModelDims, seed: int
) -> ModelParams:
    """Initialize parameters from a seeded uniform distribution scaled by fan-in.

    Args:
        vocab: A token->index map (must contain OOV), or a token collection that is
            turned into one with ``make_vocab``.
        dims: Model dimensions.
        seed: Seed for the initialization stream.

    Raises:
        ModelError: If the vocabulary is empty.
    """
    if isinstance(vocab, Mapping):
        vocab_map = dict(vocab)
    else:
        tokens = list(vocab)
        if not tokens:
            raise ModelError("Cannot initialize a model with an empty vocabulary")
        vocab_map = make_vocab(tokens)
    if not vocab_map:
        raise ModelError("Cannot initialize a model with an empty vocabulary")

    d, w, c = dims.embedding_dim, dims.window, dims.channels
    rng = np.random.default_rng(seed)

    def uniform(fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
        limit = math.sqrt(3.0 / fan_in)
        return rng.uniform(-limit, limit, size=shape)

    return ModelParams(
        vocab=vocab_map,
        embeddings=uniform(d, (len(vocab_map), d)),
        conv_w=uniform(w * d, (w, d, c)),
        conv_b=np.zeros(c),
        dense_w=uniform(c, (c,)),
        dense_b=np.array(0.0),
    )


def forward(params: ModelParams, doc: Document) -> tuple[float, ForwardCache]:
    """Compute the logit g(x) and the cache needed by ``backward``."""
    indices = params.encode(doc)
    dims = params.dims
    n = len(indices)
    inputs = np.zeros((max(n, dims.window), dims.embedding_dim))
    inputs[:n] = params.embeddings[indices]

    # windows[t, i, j] == inputs[t + j, i]
    windows = sliding_window_view(inputs, dims.window, axis=0)
    pre = np.einsum("tij,jic->tc", windows, params.conv_w) + params.conv_b
    activated = np.maximum(pre, 0.0)
    argmax = activated.argmax(axis=0)  # lowest index on ties
    pooled = activated[argmax, np.arange(dims.channels)]
    logit = float(pooled @ params.dense_w + params.dense_b)

    cache = ForwardCache(
        indices=indices,
        inputs=inputs,
        pre_activation=pre,
        pooled=pooled,
        argmax=argmax,
        logit=logit,
        shape_key=params.shape_key,
    )
    return logit, cache


def backward(
    params: ModelParams,
    cache: ForwardCache,
    dloss_dlogit: float,
    out: Gradients | None = None,
) -> Gradients:
    """Exact gradients of ``dloss_dlogit * g(x)`` with respect to every parameter.

    Args:
        params: The parameters the cache was computed with.
        cache: Output of ``forward``.
        dloss_dlogit: Upstream derivative of the loss with respect to the logit.
        out: Optional accumulator; gradients are added into it and it is returned.

    Raises:
        ModelError: If the cache was produced by parameters of different shape.
    """
    if cache.shape_key != params.shape_key:
        raise ModelError(
            f"Forward cache shape {cache.shape_key} does not match parameters {params.shape_key}"
        )
    grads = out if out is not None else Gradients.zeros_like(params)
    if dloss_dlogit == 0.0:
        return grads

    dims = params.dims
    channels = np.arange(dims.channels)
    g = float(dloss_dlogit)

    grads.dense_w += g * cache.pooled
    grads.dense_b += g

    # Max-pool routes the gradient to the winning position; ReLU gates it.
    d_pre = np.zeros_like(cache.pre_activation)
    active = cache.pre_activation[cache.argmax, channels] > 0.0
    d_pre[cache.argmax, channels] = g * params.dense_w * active

    windows = sliding_window_view(cache.inputs, dims.window, axis=0)
    grads.conv_b += d_pre.sum(axis=0)
    grads.conv_w += np.einsum("tij,tc->jic", windows, d_pre)

    d_windows = np.einsum("tc,jic->tij", d_pre, params.conv_w)
    d_inputs = np.zeros_like(cache.inputs)
    n_windows = d_pre.shape[0]
    for j in range(dims.window):
        d_inputs[j : j + n_windows] += d_windows[:, :, j]
    # Padding rows are constant zeros and receive no gradient.
    np.add.at(grads.embeddings, cache.indices, d_inputs[: len(cache.indices)])
    return grads


def sigmoid(z: float) -> float:
    """Numerically stable logistic function, kept strictly inside (0, 1)."""
    if z >= 0:
        p = 1.0 / (1.0 + math.exp(-z))
    else:
        e = math.exp(z)
        p = e / (1.0 + e)
    return min(max(p, _P_MIN), _P_MAX)


def logit(params: ModelParams, doc: Document) -> float:
    """The logit g(x) without keeping the cache."""
    return forward(params, doc)[0]


def predict(params: ModelParams, doc: Document) -> float:
    """The probability f(x) = sigmoid(g(x))."""
    return sigmoid(forward(params, doc)[0])
