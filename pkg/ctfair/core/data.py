#!/usr/bin/env python3
"""
Corpora: synthetic template sentences, CSV ingestion and train/dev/test splitting.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, fields
import itertools
import math
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from ctfair.core.constants import (
    DEFAULT_BASE_TOXIC_RATE,
    DEFAULT_CONTEXT_COPIES,
    DEFAULT_CONTEXT_TEMPLATES,
    DEFAULT_NAMES,
    DEFAULT_NONTOXIC_ADJECTIVES,
    DEFAULT_SKEWED_TEMPLATE_RATE,
    DEFAULT_SKEWED_TERMS,
    DEFAULT_SKEWED_TOXIC_RATE,
    DEFAULT_SPLIT_FRACTIONS,
    DEFAULT_TEMPLATES,
    DEFAULT_TOXIC_ADJECTIVES,
    IDENTITY_TOKEN,
    SLOT_ADJECTIVE,
    SLOT_IDENTITY,
    SLOT_NAME,
    TEMPLATE_SLOTS,
)
from ctfair.core.text import Document, IdentityLexicon, IdentityTerm, detokenize
from ctfair.utils.console import console
from ctfair.utils.file import atomic_write_text, read_json

SPLIT_TAGS = ("train", "dev", "test")
BUILTIN_SOURCES = ("synthetic", "skewed")


class CorpusError(Exception):
    """Custom exception for corpus generation, ingestion and splitting errors."""

    pass


@dataclass(frozen=True)
class TemplateSpec:
    """Templates and word lists for the synthetic corpora.

    Templates are token sequences containing the slot markers NAME, ADJECTIVE and
    IDENTITY_ADJ. Context templates feed ``generate_skewed`` only.
    """

    templates: tuple[tuple[str, ...], ...] = tuple(t.split() for t in DEFAULT_TEMPLATES)
    identity_adjectives: tuple[str, ...] = ()
    toxic_adjectives: tuple[str, ...] = DEFAULT_TOXIC_ADJECTIVES
    nontoxic_adjectives: tuple[str, ...] = DEFAULT_NONTOXIC_ADJECTIVES
    names: tuple[str, ...] = DEFAULT_NAMES
    context_templates: tuple[tuple[str, ...], ...] = tuple(
        t.split() for t in DEFAULT_CONTEXT_TEMPLATES
    )
    skewed_terms: tuple[str, ...] = DEFAULT_SKEWED_TERMS
    skewed_toxic_rate: float = DEFAULT_SKEWED_TOXIC_RATE
    base_toxic_rate: float = DEFAULT_BASE_TOXIC_RATE
    skewed_template_rate: float = DEFAULT_SKEWED_TEMPLATE_RATE
    context_copies: int = DEFAULT_CONTEXT_COPIES

    def __post_init__(self):
        for name in ("templates", "context_templates"):
            for template in getattr(self, name):
                if not any(token in TEMPLATE_SLOTS for token in template):
                    raise CorpusError(f"Template {detokenize(template)!r} has no slot")
        overlap = set(self.toxic_adjectives) & set(self.nontoxic_adjectives)
        if overlap:
            raise CorpusError(
                f"Adjectives listed as both toxic and nontoxic: {', '.join(sorted(overlap))}"
            )
        for rate_name in ("skewed_toxic_rate", "base_toxic_rate", "skewed_template_rate"):
            if not 0.0 <= getattr(self, rate_name) <= 1.0:
                raise CorpusError(f"{rate_name} must lie in [0, 1]")
        if self.context_copies < 1:
            raise CorpusError("context_copies must be at least 1")

    @property
    def adjectives(self) -> tuple[str, ...]:
        return self.toxic_adjectives + self.nontoxic_adjectives

    @classmethod
    def default(cls) -> "TemplateSpec":
        """The built-in spec, filling IDENTITY_ADJ slots with the default lexicon."""
        terms = IdentityLexicon.default().all_terms
        return cls(identity_adjectives=tuple(str(t) for t in sorted(terms)))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TemplateSpec":
        """Build a spec from JSON data; templates may be strings or token lists.

        Raises:
            CorpusError: On unknown keys or invalid values.
        """
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise CorpusError(f"Unknown template spec keys: {', '.join(sorted(unknown))}")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key in ("templates", "context_templates"):
                kwargs[key] = tuple(
                    tuple(t.split()) if isinstance(t, str) else tuple(t) for t in value
                )
            elif isinstance(value, list):
                kwargs[key] = tuple(value)
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise CorpusError(f"Invalid template spec: {e}") from e

    @classmethod
    def load(cls, path: str | Path) -> "TemplateSpec":
        try:
            data = read_json(path)
        except (OSError, ValueError) as e:
            raise CorpusError(f"Failed to read template spec {path}: {e}") from e
        if not isinstance(data, dict):
            raise CorpusError(f"{path}: template spec must be a JSON object")
        return cls.from_dict(data)


@dataclass(frozen=True)
class Corpus:
    """Labelled documents with provenance and optional split tags (doc id -> tag)."""

    docs: tuple[Document, ...]
    provenance: str
    splits: dict[str, str] = field(default_factory=dict)
    skipped: int = 0
    rejected: int = 0

    def __post_init__(self):
        seen: set[str] = set()
        for doc in self.docs:
            if doc.label not in (0, 1):
                raise CorpusError(f"Document {doc.id!r} has no binary label")
            if doc.id in seen:
                raise CorpusError(f"Duplicate document id {doc.id!r}")
            seen.add(doc.id)
        for doc_id, tag in self.splits.items():
            if tag not in SPLIT_TAGS:
                raise CorpusError(f"Unknown split tag {tag!r} for document {doc_id!r}")
            if doc_id not in seen:
                raise CorpusError(f"Split tag for unknown document {doc_id!r}")

    def __len__(self) -> int:
        return len(self.docs)

    @property
    def is_split(self) -> bool:
        return bool(self.docs) and len(self.splits) == len(self.docs)

    def subset(self, tag: str) -> list[Document]:
        """Documents carrying the given split tag, in corpus order."""
        if tag not in SPLIT_TAGS:
            raise ValueError(f"Unknown split tag {tag!r}")
        return [doc for doc in self.docs if self.splits.get(doc.id) == tag]

    def label_counts(self) -> dict[int, int]:
        return {
            0: sum(1 for d in self.docs if d.label == 0),
            1: sum(1 for d in self.docs if d.label == 1),
        }


def _fill(
    template: Sequence[str], fillers: Mapping[str, Sequence[Sequence[str]]]
) -> list[tuple[list[str], dict[str, tuple[str, ...]]]]:
    """Every filling of a template's slots, in slot order of first appearance."""
    slots = list(dict.fromkeys(token for token in template if token in TEMPLATE_SLOTS))
    sentences = []
    for combo in itertools.product(*(fillers[slot] for slot in slots)):
        chosen = dict(zip(slots, (tuple(c) for c in combo), strict=True))
        tokens: list[str] = []
        for token in template:
            tokens.extend(chosen[token] if token in chosen else (token,))
        sentences.append((tokens, chosen))
    return sentences


def _slot_fillers(spec: TemplateSpec, terms: Sequence[IdentityTerm]) -> dict[str, list]:
    return {
        SLOT_NAME: [(name,) for name in spec.names],
        SLOT_ADJECTIVE: [(adj,) for adj in spec.adjectives],
        SLOT_IDENTITY: [term.tokens for term in terms],
    }


def _resolve_terms(
    spec: TemplateSpec, terms: Sequence[IdentityTerm | str] | None
) -> list[IdentityTerm]:
    source = terms if terms is not None else spec.identity_adjectives
    # Given order is kept, duplicates dropped
    resolved: list[IdentityTerm] = []
    for term in source:
        parsed = term if isinstance(term, IdentityTerm) else IdentityTerm.parse(term)
        if parsed not in resolved:
            resolved.append(parsed)
    return resolved


def generate_synthetic(
    spec: TemplateSpec, terms: Sequence[IdentityTerm | str] | None = None
) -> Corpus:
    """Full cross product of templates and slot fillers.

    A sentence is toxic (label 1) exactly when a toxic adjective fills its ADJECTIVE
    slot. Identity terms fill IDENTITY_ADJ slots independently of the label.

    Args:
        spec: Templates and word lists.
        terms: Identity terms for IDENTITY_ADJ slots; defaults to
            ``spec.identity_adjectives``.

    Raises:
        CorpusError: If the spec produces no sentence.
    """
    fillers = _slot_fillers(spec, _resolve_terms(spec, terms))
    toxic = set(spec.toxic_adjectives)
    docs = []
    for template in spec.templates:
        for tokens, chosen in _fill(template, fillers):
            adjective = chosen.get(SLOT_ADJECTIVE)
            label = 1 if adjective is not None and adjective[0] in toxic else 0
            docs.append(Document.from_text(f"syn-{len(docs):06d}", detokenize(tokens), label))
    if not docs:
        raise CorpusError("Template spec produces no sentences")
    return Corpus(docs=tuple(docs), provenance="synthetic")


def _labelled_copies(
    prefix: str, text: str, rate: float, copies: int, start: int
) -> list[Document]:
    n_toxic = round(rate * copies)
    return [
        Document.from_text(f"{prefix}-{start + copy:06d}", text, 1 if copy < n_toxic else 0)
        for copy in range(copies)
    ]


def generate_skewed(
    spec: TemplateSpec, terms: Sequence[IdentityTerm | str] | None = None
) -> Corpus:
    """The symmetric corpus plus labelled copies that tie skewed terms to toxicity.

    Two kinds of ``spec.context_copies``-fold copies are appended, the first
    ``round(rate * context_copies)`` of each group labelled toxic:

    - every template sentence holding a term from ``spec.skewed_terms`` and a nontoxic
      adjective, at ``skewed_template_rate`` (ids ``skw-``);
    - every filled identity-only context template, at ``skewed_toxic_rate`` for skewed
      terms and ``base_toxic_rate`` for every other term (ids ``ctx-``).

    No randomness is involved.
    """
    symmetric = generate_synthetic(spec, terms)
    resolved = _resolve_terms(spec, terms)
    skewed = {IdentityTerm.parse(t) for t in spec.skewed_terms}
    term_by_tokens = {term.tokens: term for term in resolved}
    fillers = _slot_fillers(spec, resolved)
    nontoxic = set(spec.nontoxic_adjectives)
    copies = spec.context_copies

    relabelled: list[Document] = []
    for template in spec.templates:
        for tokens, chosen in _fill(template, fillers):
            term = term_by_tokens.get(chosen.get(SLOT_IDENTITY, ()))
            adjective = chosen.get(SLOT_ADJECTIVE)
            if term not in skewed or adjective is None or adjective[0] not in nontoxic:
                continue
            relabelled.extend(
                _labelled_copies(
                    "skw", detokenize(tokens), spec.skewed_template_rate, copies, len(relabelled)
                )
            )

    context: list[Document] = []
    for template in spec.context_templates:
        for tokens, chosen in _fill(template, fillers):
            term = term_by_tokens.get(chosen.get(SLOT_IDENTITY, ()))
            rate = spec.skewed_toxic_rate if term in skewed else spec.base_toxic_rate
            context.extend(_labelled_copies("ctx", detokenize(tokens), rate, copies, len(context)))
    return Corpus(docs=(*symmetric.docs, *relabelled, *context), provenance="skewed")


def _cell(value: Any) -> str:
    # Missing trailing fields come back as NaN
    return value.strip() if isinstance(value, str) else ""


def _coerce_label(value: str, row: int, path: str | Path) -> int:
    try:
        number = float(value)
    except ValueError:
        number = math.nan
    if number not in (0.0, 1.0):
        raise CorpusError(f"{path}: row {row}: label {value!r} is not 0 or 1")
    return int(number)


def ingest_csv(
    path: str | Path,
    text_column: str = "text",
    label_column: str = "label",
    id_column: str = "id",
    split_column: str = "split",
) -> Corpus:
    """Read a labelled CSV file (header row, UTF-8, RFC 4180 quoting).

    Rows with missing text or label are skipped and counted. Rows whose text contains
    the reserved IDENTITY literal are rejected and counted separately. Optional id and
    split columns are honoured when present.

    Raises:
        CorpusError: On unreadable or malformed files, missing columns, labels other
            than 0/1, duplicate ids or unknown split tags.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError as e:
        raise CorpusError(f"Corpus file not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise CorpusError(f"{path}: file is empty") from e
    except (pd.errors.ParserError, UnicodeDecodeError, OSError) as e:
        raise CorpusError(f"{path}: malformed CSV: {e}") from e

    missing = [c for c in (text_column, label_column) if c not in frame.columns]
    if missing:
        raise CorpusError(
            f"{path}: unknown column(s) {', '.join(missing)}; "
            f"file has {', '.join(map(str, frame.columns))}"
        )
    has_ids = id_column in frame.columns
    has_splits = split_column in frame.columns

    docs: list[Document] = []
    splits: dict[str, str] = {}
    skipped = rejected = 0
    for offset, record in enumerate(frame.to_dict("records")):
        row = offset + 1
        text = record[text_column] if isinstance(record[text_column], str) else ""
        label_text = _cell(record[label_column])
        if not text.strip() or not label_text:
            skipped += 1
            continue
        label = _coerce_label(label_text, row, path)
        if IDENTITY_TOKEN in text:
            rejected += 1
            continue
        doc_id = (_cell(record[id_column]) if has_ids else "") or f"row-{row:06d}"
        docs.append(Document.from_text(doc_id, text, label))
        if has_splits:
            tag = _cell(record[split_column])
            if tag not in SPLIT_TAGS:
                raise CorpusError(f"{path}: row {row}: unknown split tag {tag!r}")
            splits[doc_id] = tag

    if skipped:
        console.print(f"Skipped {skipped} row(s) with missing text or label", style="warning")
    if rejected:
        console.print(
            f"Rejected {rejected} row(s) containing the reserved token {IDENTITY_TOKEN!r}",
            style="warning",
        )
    return Corpus(
        docs=tuple(docs), provenance="ingested", splits=splits, skipped=skipped, rejected=rejected
    )


def write_csv(corpus: Corpus, path: str | Path) -> Path:
    """Write ``id,text,label`` (plus ``split`` for a split corpus) atomically."""
    frame = pd.DataFrame(
        {
            "id": [doc.id for doc in corpus.docs],
            "text": [doc.raw_text or detokenize(doc.tokens) for doc in corpus.docs],
            "label": [doc.label for doc in corpus.docs],
        }
    )
    if corpus.splits:
        frame["split"] = [corpus.splits.get(doc.id, "") for doc in corpus.docs]
    return atomic_write_text(path, frame.to_csv(index=False, lineterminator="\n"))


def split(
    corpus: Corpus,
    fractions: Sequence[float] = DEFAULT_SPLIT_FRACTIONS,
    seed: int = 0,
) -> Corpus:
    """Seeded shuffle, then contiguous train/dev/test slices.

    Dev and test sizes are floored; the remainder goes to train. The returned corpus
    holds the documents in shuffled order.

    Raises:
        ValueError: If the fractions are not three positive numbers summing to 1.
        CorpusError: If any split would be empty.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError("Split fractions must be three positive numbers")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"Split fractions must sum to 1, got {sum(fractions)}")

    n = len(corpus.docs)
    # Tolerance for fractions like 0.29 that are not exact in binary
    n_dev = math.floor(n * fractions[1] + 1e-9)
    n_test = math.floor(n * fractions[2] + 1e-9)
    n_train = n - n_dev - n_test
    if min(n_train, n_dev, n_test) < 1:
        raise CorpusError(
            f"Splitting {n} documents by {tuple(fractions)} leaves an empty split "
            f"(train={n_train}, dev={n_dev}, test={n_test})"
        )

    order = np.random.default_rng(seed).permutation(n)
    shuffled = tuple(corpus.docs[i] for i in order)
    tags = ["train"] * n_train + ["dev"] * n_dev + ["test"] * n_test
    return Corpus(
        docs=shuffled,
        provenance=corpus.provenance,
        splits={doc.id: tag for doc, tag in zip(shuffled, tags, strict=True)},
        skipped=corpus.skipped,
        rejected=corpus.rejected,
    )


def resolve_corpus(
    source: str | Path,
    template_spec: TemplateSpec | None = None,
    lexicon: IdentityLexicon | None = None,
) -> Corpus:
    """Load a corpus from a CSV path or build one of the built-in corpora.

    ``"synthetic"`` and ``"skewed"`` fill the templates with every lexicon term.
    """
    if str(source) in BUILTIN_SOURCES:
        spec = template_spec or TemplateSpec.default()
        terms = sorted((lexicon or IdentityLexicon.default()).all_terms)
        generator = generate_synthetic if str(source) == "synthetic" else generate_skewed
        return generator(spec, terms)
    return ingest_csv(source)
