#!/usr/bin/env python3
"""
Losses, the counterfactual logit pairing objective and the training loop.

Methods:
    baseline      plain cross entropy
    blind         identity terms replaced by IDENTITY in training and prediction inputs
    augment       training set extended with one random counterfactual per identity example,
                  resampled every epoch
    clp           cross entropy + lambda * |g(x) - g(x')| for one sampled counterfactual x'
    clp_nontoxic  as clp, penalty applied to nontoxic (label 0) examples only
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
import math

import numpy as np

from ctfair.core.config import TrainConfig
from ctfair.core.constants import PROBABILITY_CLAMP
from ctfair.core.metrics import auc_from_scores
from ctfair.core.model import (
    Gradients,
    ModelError,
    ModelParams,
    backward,
    build_vocab,
    forward,
    init_params,
    sigmoid,
)
from ctfair.core.optim import Adam
from ctfair.core.text import (
    Document,
    IdentityLexicon,
    IdentityTerm,
    blind,
    random_training_counterfactual,
)
from ctfair.utils.console import console

# Independent random streams per run, keyed by (seed, stream id)
_SHUFFLE_STREAM = 1
_COUNTERFACTUAL_STREAM = 2
_AUGMENT_STREAM = 3


class TrainingError(Exception):
    """Custom exception for training failures."""

    pass


class TrainingDivergedError(TrainingError):
    """Raised when the training loss becomes non-finite."""

    pass


def cross_entropy(p: float, y: int) -> float:
    """Binary cross entropy with the probability clamped to [1e-12, 1 - 1e-12]."""
    p = min(max(p, PROBABILITY_CLAMP), 1.0 - PROBABILITY_CLAMP)
    return -(y * math.log(p) + (1 - y) * math.log(1.0 - p))


def clp_penalty(
    params: ModelParams, doc: Document, counterfactual: Document
) -> tuple[float, Gradients]:
    """The logit pairing penalty |g(x) - g(x')| and its (sub)gradient.

    The subgradient at g(x) == g(x') is zero.
    """
    logit_x, cache_x = forward(params, doc)
    logit_cf, cache_cf = forward(params, counterfactual)
    diff = logit_x - logit_cf
    sign = float(np.sign(diff))
    grads = backward(params, cache_x, sign)
    backward(params, cache_cf, -sign, out=grads)
    return abs(diff), grads


@dataclass
class BatchObjective:
    """Loss, gradients and penalty bookkeeping for one minibatch."""

    loss: float
    cross_entropy: float
    penalty: float
    gradients: Gradients
    n_pairs: int = 0
    penalized_by_label: dict[int, int] = field(default_factory=lambda: {0: 0, 1: 0})


def batch_objective(
    params: ModelParams,
    batch: Sequence[Document],
    config: TrainConfig,
    rng: np.random.Generator,
    terms: Sequence[IdentityTerm] = (),
) -> BatchObjective:
    """Mean cross entropy plus, for CLP methods, lambda times the mean pairing penalty.

    Both terms are averaged over the whole batch, so lambda trades the penalty of one
    pair against the cross entropy of one example.

    One counterfactual is sampled per example with ``random_training_counterfactual``
    over ``terms``; examples without identity terms add no penalty. ``clp_nontoxic``
    only pairs examples labelled 0.

    Raises:
        TrainingError: If the batch is empty or contains unlabelled documents.
    """
    if not batch:
        raise TrainingError("Cannot compute the objective of an empty batch")
    grads = Gradients.zeros_like(params)
    weight = config.penalty_weight
    total_ce = 0.0
    total_penalty = 0.0
    result = BatchObjective(loss=0.0, cross_entropy=0.0, penalty=0.0, gradients=grads)

    for doc in batch:
        if doc.label is None:
            raise TrainingError(f"Training document {doc.id!r} has no label")
        logit_x, cache_x = forward(params, doc)
        p = sigmoid(logit_x)
        total_ce += cross_entropy(p, doc.label)
        backward(params, cache_x, p - doc.label, out=grads)

        if weight == 0.0:
            continue
        if config.method == "clp_nontoxic" and doc.label != 0:
            continue
        counterfactual = random_training_counterfactual(doc, terms, rng)
        if counterfactual is None:
            continue
        logit_cf, cache_cf = forward(params, counterfactual)
        diff = logit_x - logit_cf
        sign = float(np.sign(diff))
        total_penalty += abs(diff)
        backward(params, cache_x, weight * sign, out=grads)
        backward(params, cache_cf, -weight * sign, out=grads)
        result.n_pairs += 1
        result.penalized_by_label[doc.label] += 1

    n = len(batch)
    for tensor in grads.tensors().values():
        tensor /= n
    result.cross_entropy = total_ce / n
    result.penalty = total_penalty / n
    result.loss = result.cross_entropy + weight * result.penalty
    return result


def prepare_dataset(
    docs: Sequence[Document],
    lexicon: IdentityLexicon,
    method: str,
    rng: np.random.Generator,
) -> list[Document]:
    """Apply the method's data transformation to the training documents.

    ``blind`` blinds every document with the training terms; ``augment`` appends one
    random counterfactual (same label) per document containing a training term. Other
    methods leave the data unchanged.
    """
    terms = lexicon.sorted_train()
    if method == "blind":
        return [blind(doc, terms) for doc in docs]
    if method == "augment":
        augmented = list(docs)
        for doc in docs:
            counterfactual = random_training_counterfactual(doc, terms, rng)
            if counterfactual is not None:
                augmented.append(counterfactual)
        return augmented
    return list(docs)


def training_vocab(
    train_docs: Sequence[Document], lexicon: IdentityLexicon, method: str
) -> dict[str, int]:
    """The vocabulary a model trained with ``method`` on ``train_docs`` gets.

    Blind models see only blinded text. Every other method also gets rows for the
    training-term tokens so that counterfactuals never fall back to OOV.
    """
    terms = lexicon.sorted_train()
    if method == "blind":
        return build_vocab(blind(doc, terms) for doc in train_docs)
    return build_vocab(train_docs, (tok for term in terms for tok in term.tokens))


@dataclass
class TrainedModel:
    """Parameters at the best dev epoch plus the training record."""

    params: ModelParams
    config: TrainConfig
    dev_history: list[float]
    selected_epoch: int
    dev_losses: list[float] = field(default_factory=list)
    blind_terms: tuple[IdentityTerm, ...] = ()

    def preprocess(self, doc: Document) -> Document:
        """Prediction-time input transform (blinding for the blind method)."""
        return blind(doc, self.blind_terms) if self.blind_terms else doc

    def logit(self, doc: Document) -> float:
        return forward(self.params, self.preprocess(doc))[0]

    def predict(self, doc: Document) -> float:
        return sigmoid(self.logit(doc))

    __call__ = predict


def _dev_loss(params: ModelParams, docs: Sequence[Document]) -> tuple[float, list[float]]:
    total = 0.0
    probabilities = []
    for doc in docs:
        p = sigmoid(forward(params, doc)[0])
        probabilities.append(p)
        total += cross_entropy(p, doc.label)  # type: ignore[arg-type]
    return total / len(docs), probabilities


def train(
    dataset: tuple[Sequence[Document], Sequence[Document]],
    config: TrainConfig,
    lexicon: IdentityLexicon,
    debug: bool = False,
) -> TrainedModel:
    """Train one model with minibatch Adam and keep the best dev epoch.

    Args:
        dataset: ``(train_docs, dev_docs)``, all labelled.
        config: Method, lambda, optimizer settings, epochs and seed.
        lexicon: Identity lexicon; only its training terms are used for mitigation.
        debug: Print per-epoch diagnostics.

    Returns:
        The parameter snapshot at the epoch with the lowest dev criterion (earliest on ties).

    Raises:
        TrainingError: On empty splits or unlabelled documents.
        TrainingDivergedError: If the loss becomes non-finite.
    """
    train_docs, dev_docs = dataset
    if not train_docs or not dev_docs:
        raise TrainingError("Training and dev splits must both be nonempty")
    if any(doc.label is None for doc in dev_docs):
        raise TrainingError("Dev documents must be labelled")

    terms = lexicon.sorted_train()
    is_blind = config.method == "blind"
    shuffle_rng = np.random.default_rng([config.seed, _SHUFFLE_STREAM])
    counterfactual_rng = np.random.default_rng([config.seed, _COUNTERFACTUAL_STREAM])
    augment_rng = np.random.default_rng([config.seed, _AUGMENT_STREAM])

    fixed_docs = prepare_dataset(train_docs, lexicon, config.method, augment_rng)
    if is_blind:
        dev_docs = [blind(doc, terms) for doc in dev_docs]

    params = init_params(
        training_vocab(train_docs, lexicon, config.method), config.dims, seed=config.seed
    )
    optimizer = Adam(
        params,
        learning_rate=config.learning_rate,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
    )

    dev_history: list[float] = []
    dev_losses: list[float] = []
    best_params = params.copy()
    best_value = math.inf
    selected_epoch = 1

    for epoch in range(1, config.epochs + 1):
        if config.method == "augment" and epoch > 1:
            epoch_docs = prepare_dataset(train_docs, lexicon, config.method, augment_rng)
        else:
            epoch_docs = fixed_docs
        order = shuffle_rng.permutation(len(epoch_docs))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [epoch_docs[i] for i in order[start : start + config.batch_size]]
            objective = batch_objective(params, batch, config, counterfactual_rng, terms)
            if not math.isfinite(objective.loss) or not objective.gradients.is_finite():
                raise TrainingDivergedError(
                    f"Loss became non-finite in epoch {epoch} (seed {config.seed})"
                )
            optimizer.step(objective.gradients)
            epoch_loss += objective.loss * len(batch)
        epoch_loss /= len(epoch_docs)

        dev_loss, dev_probabilities = _dev_loss(params, dev_docs)
        dev_losses.append(dev_loss)
        criterion = dev_loss
        if config.selection == "auc":
            auc = auc_from_scores(dev_probabilities, [doc.label for doc in dev_docs])
            if auc is None:
                console.print(
                    "Dev split lacks one class; selecting on dev loss instead of AUC.",
                    style="warning",
                )
            else:
                criterion = 1.0 - auc
        if not math.isfinite(criterion):
            raise TrainingDivergedError(f"Dev criterion became non-finite in epoch {epoch}")
        dev_history.append(criterion)

        if criterion < best_value:
            best_value = criterion
            selected_epoch = epoch
            try:
                best_params = params.copy()
            except ModelError as e:
                raise TrainingDivergedError(f"Parameters diverged in epoch {epoch}: {e}") from e

        if debug:
            console.print(
                f"[debug]DEBUG:[/] {config.method} seed={config.seed} epoch {epoch}: "
                f"train objective {epoch_loss:.4f}, dev loss {dev_loss:.5f}",
                style="debug",
            )

    return TrainedModel(
        params=best_params,
        config=config,
        dev_history=dev_history,
        selected_epoch=selected_epoch,
        dev_losses=dev_losses,
        blind_terms=tuple(terms) if is_blind else (),
    )


def train_runs(
    dataset: tuple[Sequence[Document], Sequence[Document]],
    config: TrainConfig,
    lexicon: IdentityLexicon,
    debug: bool = False,
) -> list[TrainedModel]:
    """Train ``config.runs`` independent models with seeds ``seed, seed + 1, ...``."""
    return [
        train(dataset, config.with_overrides(seed=seed, runs=1), lexicon, debug=debug)
        for seed in config.run_seeds()
    ]
