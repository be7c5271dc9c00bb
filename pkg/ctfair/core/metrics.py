#!/usr/bin/env python3
"""
Fairness and accuracy metrics.

CTF gap: mean |f(x) - f(x')| over the pairwise counterfactuals of each example, averaged
over examples that have at least one counterfactual. Equality of odds: per-term TPR/TNR at
a threshold, averaged absolute differences over term pairs. AUC by rank statistics. Two
probes on a trained model: identity embedding cosine and single-token toxicity.
"""

from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from dataclasses import asdict, dataclass, field
import itertools
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from ctfair.core.constants import DEFAULT_MAX_TOKENS, DEFAULT_THRESHOLD
from ctfair.core.model import ModelParams
from ctfair.core.model import predict as predict_params
from ctfair.core.text import (
    CounterfactualSet,
    Document,
    IdentityLexicon,
    IdentityTerm,
    as_terms,
    generate_all_counterfactuals,
    scan_terms,
)
from ctfair.utils.file import read_json

Scorer = Callable[[Document], float]
TERM_SPLITS = ("train", "heldout")


@dataclass(frozen=True)
class FairnessSpec:
    """Tolerance, length filter and decision threshold for the fairness metrics."""

    epsilon: float = 0.0
    max_tokens: int = DEFAULT_MAX_TOKENS
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be at least 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie strictly between 0 and 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FairnessSpec":
        unknown = set(data) - {"epsilon", "max_tokens", "threshold"}
        if unknown:
            raise ValueError(f"Unknown fairness spec keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "FairnessSpec":
        data = read_json(path)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: fairness spec must be a JSON object")
        return cls.from_dict(data)


class _MemoScorer:
    """Caches predictions by token sequence for one evaluation."""

    def __init__(self, predict: Scorer):
        self._predict = predict
        self._cache: dict[tuple[str, ...], float] = {}

    def __call__(self, doc: Document) -> float:
        key = doc.tokens
        if key not in self._cache:
            self._cache[key] = float(self._predict(doc))
        return self._cache[key]


def as_scorer(model: Any) -> Scorer:
    """Turn ModelParams, a trained model or a plain callable into a memoised scorer."""
    if isinstance(model, _MemoScorer):
        return model
    if isinstance(model, ModelParams):
        return _MemoScorer(lambda doc: predict_params(model, doc))
    predict = getattr(model, "predict", None)
    if predict is None:
        if not callable(model):
            raise TypeError(f"Cannot score documents with {type(model).__name__}")
        predict = model
    return _MemoScorer(predict)


@dataclass(frozen=True)
class CtfGap:
    """Dataset CTF gap with its support and the epsilon pass/fail flag."""

    gap: float | None
    n_evaluated: int
    max_gap: float | None = None
    within_epsilon: bool | None = None

    def __iter__(self) -> Iterator[Any]:
        # Unpacks as (gap, n_evaluated)
        return iter((self.gap, self.n_evaluated))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def ctf_gap_example(model: Any, doc: Document, variants: CounterfactualSet) -> float | None:
    """Mean absolute prediction difference between ``doc`` and its counterfactuals.

    Returns:
        None when there are no variants.
    """
    if not variants:
        return None
    score = as_scorer(model)
    p = score(doc)
    diffs = [abs(p - score(variant)) for variant in variants.documents]
    return sum(diffs) / len(diffs)


def ctf_gap_dataset(
    model: Any,
    docs: Iterable[Document],
    terms: Iterable[IdentityTerm],
    spec: FairnessSpec | None = None,
    label_filter: int | None = None,
    *,
    match_bigrams: bool = False,
) -> CtfGap:
    """Average ``ctf_gap_example`` over qualifying documents.

    A document qualifies when it has at most ``spec.max_tokens`` tokens, matches
    ``label_filter`` (if given) and has at least one counterfactual. Every qualifying
    document weighs the same.
    """
    spec = spec or FairnessSpec()
    score = as_scorer(model)
    ordered = as_terms(terms)
    gaps = []
    for doc in docs:
        if len(doc) > spec.max_tokens:
            continue
        if label_filter is not None and doc.label != label_filter:
            continue
        variants = generate_all_counterfactuals(doc, ordered, match_bigrams=match_bigrams)
        gap = ctf_gap_example(score, doc, variants)
        if gap is not None:
            gaps.append(gap)
    if not gaps:
        return CtfGap(gap=None, n_evaluated=0)
    max_gap = max(gaps)
    return CtfGap(
        gap=sum(gaps) / len(gaps),
        n_evaluated=len(gaps),
        max_gap=max_gap,
        within_epsilon=max_gap <= spec.epsilon,
    )


@dataclass(frozen=True)
class TermRates:
    """True positive / true negative rates of one identity term's group."""

    tpr: float | None
    tnr: float | None
    n_positive: int
    n_negative: int

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class OddsGaps(NamedTuple):
    tnr_gap: float | None
    tpr_gap: float | None
    per_term_rates: dict[str, TermRates]


def _pairwise_gap(rates: Sequence[float | None]) -> float | None:
    """Mean |r_a - r_b| over pairs of defined rates."""
    defined = [r for r in rates if r is not None]
    pairs = list(itertools.combinations(defined, 2))
    if not pairs:
        return None
    return sum(abs(a - b) for a, b in pairs) / len(pairs)


def equality_of_odds_gaps(
    model: Any,
    docs: Iterable[Document],
    terms: Iterable[IdentityTerm],
    spec: FairnessSpec | None = None,
) -> OddsGaps:
    """Per-term TPR/TNR and their average pairwise gaps.

    A labelled document belongs to the group of every term occurring in it. A
    prediction is toxic when ``p >= spec.threshold``. Terms without positives (or
    negatives) have no TPR (or TNR) and are left out of the pairs for that rate.
    """
    spec = spec or FairnessSpec()
    score = as_scorer(model)
    ordered = as_terms(terms)
    counts = {term: [0, 0, 0, 0] for term in ordered}  # tp, pos, tn, neg
    for doc in docs:
        if doc.label is None:
            continue
        present = {term for _, _, term in scan_terms(doc.tokens, ordered)}
        if not present:
            continue
        predicted = 1 if score(doc) >= spec.threshold else 0
        for term in present:
            c = counts[term]
            if doc.label == 1:
                c[1] += 1
                c[0] += predicted
            else:
                c[3] += 1
                c[2] += 1 - predicted

    per_term = {}
    for term in ordered:
        tp, pos, tn, neg = counts[term]
        per_term[str(term)] = TermRates(
            tpr=tp / pos if pos else None,
            tnr=tn / neg if neg else None,
            n_positive=pos,
            n_negative=neg,
        )
    return OddsGaps(
        tnr_gap=_pairwise_gap([r.tnr for r in per_term.values()]),
        tpr_gap=_pairwise_gap([r.tpr for r in per_term.values()]),
        per_term_rates=per_term,
    )


def auc_from_scores(scores: Sequence[float], labels: Sequence[int | None]) -> float | None:
    """ROC AUC as the Mann-Whitney statistic; tied scores earn half credit.

    Returns:
        None when either class is absent.
    """
    y = np.asarray(labels, dtype=np.int64)
    s = np.asarray(scores, dtype=np.float64)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    _, inverse, counts = np.unique(s, return_inverse=True, return_counts=True)
    # 1-based average rank of each distinct score
    average_rank = np.cumsum(counts) - (counts - 1) / 2.0
    ranks = average_rank[inverse]
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc(model: Any, docs: Iterable[Document]) -> float | None:
    """AUC of the model's scores over the labelled documents; None if a class is absent."""
    score = as_scorer(model)
    labelled = [doc for doc in docs if doc.label is not None]
    return auc_from_scores([score(doc) for doc in labelled], [doc.label for doc in labelled])


def identity_embedding_cosine(params: ModelParams, terms: Iterable[IdentityTerm]) -> float:
    """Mean cosine similarity over pairs of identity-token embedding rows.

    Only unigram terms present in the vocabulary count. A zero row has cosine 0 with
    everything.

    Raises:
        ValueError: If fewer than two terms are eligible.
    """
    tokens = sorted(
        {t.tokens[0] for t in terms if not t.is_bigram and t.tokens[0] in params.vocab}
    )
    if len(tokens) < 2:
        raise ValueError(
            f"Need at least two unigram identity terms in the vocabulary, found {len(tokens)}"
        )
    rows = params.embeddings[[params.vocab[t] for t in tokens]]
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    unit = np.divide(rows, norms, out=np.zeros_like(rows), where=norms > 0)
    upper = np.triu_indices(len(tokens), k=1)
    return float((unit @ unit.T)[upper].mean())


def single_token_toxicity(model: Any, terms: Iterable[IdentityTerm]) -> float | None:
    """Mean prediction on documents made of a single identity term; None for no terms."""
    score = as_scorer(model)
    ordered = as_terms(terms)
    if not ordered:
        return None
    probs = [score(Document(id=f"probe:{term}", tokens=term.tokens)) for term in ordered]
    return sum(probs) / len(probs)


@dataclass
class MetricsReport:
    """Everything reported for one trained model on one evaluation corpus."""

    ctf_gap_nontoxic: dict[str, CtfGap]
    ctf_gap_toxic: dict[str, CtfGap]
    ctf_gap_all: dict[str, CtfGap]
    tnr_gap: float | None
    tpr_gap: float | None
    auc: float | None
    per_term_rates: dict[str, TermRates] = field(default_factory=dict)
    avg_identity_cosine: float | None = None
    avg_single_token_toxicity: float | None = None
    spec: FairnessSpec = field(default_factory=FairnessSpec)

    def to_dict(self) -> dict[str, Any]:
        def gaps(by_split: dict[str, CtfGap]) -> dict[str, float | None]:
            return {split: by_split[split].gap for split in TERM_SPLITS}

        return {
            "ctf_gap_nontoxic": gaps(self.ctf_gap_nontoxic),
            "ctf_gap_toxic": gaps(self.ctf_gap_toxic),
            "ctf_gap_all": gaps(self.ctf_gap_all),
            "ctf_details": {
                name: {split: by_split[split].to_dict() for split in TERM_SPLITS}
                for name, by_split in (
                    ("nontoxic", self.ctf_gap_nontoxic),
                    ("toxic", self.ctf_gap_toxic),
                    ("all", self.ctf_gap_all),
                )
            },
            "tnr_gap": self.tnr_gap,
            "tpr_gap": self.tpr_gap,
            "auc": self.auc,
            "per_term_rates": {term: r.to_dict() for term, r in self.per_term_rates.items()},
            "probes": {
                "avg_identity_cosine": self.avg_identity_cosine,
                "avg_single_token_toxicity": self.avg_single_token_toxicity,
            },
            "spec": self.spec.to_dict(),
        }


def evaluate(
    model: Any,
    eval_docs: Sequence[Document],
    lexicon: IdentityLexicon,
    spec: FairnessSpec | None = None,
    auc_docs: Sequence[Document] | None = None,
) -> MetricsReport:
    """Compute the full metrics report.

    CTF gaps are computed per label class and per term split (training / held-out
    terms). Equality of odds and both probes use the training terms. AUC is computed
    on ``auc_docs`` when given, otherwise on ``eval_docs``.
    """
    spec = spec or FairnessSpec()
    score = as_scorer(model)
    term_sets = {"train": lexicon.sorted_train(), "heldout": lexicon.sorted_heldout()}

    def gaps_for(label_filter: int | None) -> dict[str, CtfGap]:
        return {
            split: ctf_gap_dataset(score, eval_docs, terms, spec, label_filter)
            for split, terms in term_sets.items()
        }

    odds = equality_of_odds_gaps(score, eval_docs, term_sets["train"], spec)

    params = getattr(model, "params", None)
    cosine = None
    if isinstance(params, ModelParams):
        try:
            cosine = identity_embedding_cosine(params, term_sets["train"])
        except ValueError:
            cosine = None

    return MetricsReport(
        ctf_gap_nontoxic=gaps_for(0),
        ctf_gap_toxic=gaps_for(1),
        ctf_gap_all=gaps_for(None),
        tnr_gap=odds.tnr_gap,
        tpr_gap=odds.tpr_gap,
        auc=roc_auc(score, auc_docs if auc_docs is not None else eval_docs),
        per_term_rates=odds.per_term_rates,
        avg_identity_cosine=cosine,
        avg_single_token_toxicity=single_token_toxicity(score, term_sets["train"]),
        spec=spec,
    )
