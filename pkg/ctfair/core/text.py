#!/usr/bin/env python3
"""
Tokenization, identity lexicons and counterfactual generation.

Counterfactuals are produced by swapping identity terms in a tokenized document.
Evaluation uses pairwise swaps (every unordered pair of terms), training uses a
random resampling of every identity occurrence.
"""

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
import itertools
from pathlib import Path
import string

import numpy as np

from ctfair.core.constants import (
    HELDOUT_UNIGRAMS,
    IDENTITY_BIGRAMS,
    IDENTITY_TOKEN,
    TRAIN_UNIGRAMS,
)

Token = str
Span = tuple[int, int]

_STRIP_CHARS = string.punctuation + "‘’“”"
HELDOUT_MARKER = "[heldout]"


class LexiconError(Exception):
    """Custom exception for invalid identity lexicons."""

    pass


def tokenize(text: str) -> list[Token]:
    """Lowercase, split on whitespace and strip surrounding punctuation from each piece."""
    tokens = []
    for piece in text.lower().split():
        piece = piece.strip(_STRIP_CHARS)
        if piece:
            tokens.append(piece)
    return tokens


def detokenize(tokens: Sequence[Token]) -> str:
    """Join tokens back into a single space-separated string."""
    return " ".join(tokens)


@dataclass(frozen=True)
class Document:
    """A tokenized text with an optional binary toxicity label (1 = toxic)."""

    id: str
    tokens: tuple[Token, ...]
    label: int | None = None
    raw_text: str = ""

    def __post_init__(self):
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(
                f"Document {self.id!r}: label must be 0, 1 or None, got {self.label!r}"
            )

    @classmethod
    def from_text(cls, doc_id: str, text: str, label: int | None = None) -> "Document":
        """Build a document from raw text.

        Raises:
            ValueError: If the raw text contains the reserved IDENTITY token.
        """
        if IDENTITY_TOKEN in text:
            raise ValueError(f"Document {doc_id!r} contains the reserved token {IDENTITY_TOKEN!r}")
        return cls(id=doc_id, tokens=tuple(tokenize(text)), label=label, raw_text=text)

    def with_tokens(self, tokens: Sequence[Token], doc_id: str | None = None) -> "Document":
        """Return a copy carrying new tokens; raw_text becomes their detokenized form."""
        return Document(
            id=doc_id if doc_id is not None else self.id,
            tokens=tuple(tokens),
            label=self.label,
            raw_text=detokenize(tokens),
        )

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True, order=True)
class IdentityTerm:
    """An identity term of one or two tokens."""

    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not 1 <= len(self.tokens) <= 2:
            raise LexiconError(f"Identity terms have 1 or 2 tokens, got {self.tokens!r}")
        for token in self.tokens:
            if not token or any(ch.isspace() for ch in token) or token != token.lower():
                raise LexiconError(f"Invalid identity token {token!r}")
            if token == IDENTITY_TOKEN.lower():
                raise LexiconError(f"{token!r} collides with the reserved blinding token")

    @classmethod
    def parse(cls, text: str) -> "IdentityTerm":
        """Parse a term such as ``"gay"`` or ``"african american"``."""
        return cls(tuple(tokenize(text)))

    @property
    def is_bigram(self) -> bool:
        return len(self.tokens) == 2

    def __len__(self) -> int:
        return len(self.tokens)

    def __str__(self) -> str:
        return detokenize(self.tokens)


def as_terms(terms: Iterable[IdentityTerm | str]) -> list[IdentityTerm]:
    """Normalize a collection of terms (or term strings) into a sorted, de-duplicated list."""
    normalized = {t if isinstance(t, IdentityTerm) else IdentityTerm.parse(t) for t in terms}
    return sorted(normalized)


@dataclass(frozen=True)
class IdentityLexicon:
    """The identity term set, partitioned into training and held-out terms."""

    train_terms: frozenset[IdentityTerm]
    heldout_terms: frozenset[IdentityTerm] = field(default_factory=frozenset)

    def __post_init__(self):
        overlap = self.train_terms & self.heldout_terms
        if overlap:
            names = ", ".join(str(t) for t in sorted(overlap))
            raise LexiconError(f"Terms appear in both training and held-out sets: {names}")

    @property
    def all_terms(self) -> frozenset[IdentityTerm]:
        return self.train_terms | self.heldout_terms

    def sorted_train(self) -> list[IdentityTerm]:
        return sorted(self.train_terms)

    def sorted_heldout(self) -> list[IdentityTerm]:
        return sorted(self.heldout_terms)

    @classmethod
    def from_terms(
        cls, train: Iterable[IdentityTerm | str], heldout: Iterable[IdentityTerm | str] = ()
    ) -> "IdentityLexicon":
        train_list = as_terms(train)
        heldout_list = as_terms(heldout)
        return cls(frozenset(train_list), frozenset(heldout_list))

    @classmethod
    def default(cls) -> "IdentityLexicon":
        """The built-in 50-term lexicon (35 training unigrams, 12 held-out unigrams, 3 bigrams)."""
        return cls.from_terms(TRAIN_UNIGRAMS, HELDOUT_UNIGRAMS + IDENTITY_BIGRAMS)

    @classmethod
    def random_split(
        cls, terms: Iterable[IdentityTerm | str], n_heldout: int, seed: int = 0
    ) -> "IdentityLexicon":
        """Randomly partition a term set, holding out ``n_heldout`` terms."""
        ordered = as_terms(terms)
        if not 0 <= n_heldout <= len(ordered):
            raise LexiconError(f"Cannot hold out {n_heldout} of {len(ordered)} terms")
        perm = np.random.default_rng(seed).permutation(len(ordered))
        heldout = [ordered[i] for i in perm[:n_heldout]]
        train = [ordered[i] for i in perm[n_heldout:]]
        return cls.from_terms(train, heldout)

    @classmethod
    def parse(cls, text: str) -> "IdentityLexicon":
        """Parse lexicon file content.

        One term per line, tokens space-separated. Lines starting with ``#`` are
        comments. Terms after a ``[heldout]`` line are held out.
        """
        train: list[IdentityTerm] = []
        heldout: list[IdentityTerm] = []
        current = train
        seen: set[IdentityTerm] = set()
        for line_no, raw_line in enumerate(text.splitlines(), 1):
            line = raw_line.strip()
            if not line or line.startswith("#"):
                continue
            if line.lower() == HELDOUT_MARKER:
                current = heldout
                continue
            try:
                term = IdentityTerm.parse(line)
            except LexiconError as e:
                raise LexiconError(f"Line {line_no}: {e}") from e
            if term in seen:
                raise LexiconError(f"Line {line_no}: duplicate term {str(term)!r}")
            seen.add(term)
            current.append(term)
        if not seen:
            raise LexiconError("Lexicon contains no terms")
        return cls(frozenset(train), frozenset(heldout))

    @classmethod
    def load(cls, path: str | Path, heldout_path: str | Path | None = None) -> "IdentityLexicon":
        """Load a lexicon file, optionally with held-out terms in a separate file."""
        try:
            lexicon = cls.parse(Path(path).read_text(encoding="utf-8"))
            if heldout_path is None:
                return lexicon
            extra = cls.parse(Path(heldout_path).read_text(encoding="utf-8"))
        except OSError as e:
            raise LexiconError(f"Failed to read lexicon: {e}") from e
        return cls(lexicon.train_terms, lexicon.heldout_terms | extra.all_terms)

    @classmethod
    def from_files(cls, train_path: str | Path, heldout_path: str | Path) -> "IdentityLexicon":
        """Load training and held-out terms from two separate files."""
        return cls.load(train_path, heldout_path)

    def dumps(self) -> str:
        """Render the lexicon in its file format."""
        lines = [str(t) for t in self.sorted_train()]
        lines.append(HELDOUT_MARKER)
        lines.extend(str(t) for t in self.sorted_heldout())
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CounterfactualSet:
    """All pairwise counterfactual variants of a source document."""

    source: Document
    variants: tuple[tuple[Document, tuple[IdentityTerm, IdentityTerm]], ...] = ()

    def __len__(self) -> int:
        return len(self.variants)

    @property
    def documents(self) -> list[Document]:
        return [doc for doc, _ in self.variants]


def _matches_at(tokens: Sequence[Token], pos: int, term: IdentityTerm) -> bool:
    n = len(term.tokens)
    return tuple(tokens[pos : pos + n]) == term.tokens


def scan_terms(
    tokens: Sequence[Token], terms: Iterable[IdentityTerm]
) -> list[tuple[int, int, IdentityTerm]]:
    """Find non-overlapping term occurrences, leftmost first, longest term first.

    Returns:
        ``(start, end, term)`` triples with inclusive token spans.
    """
    # Longest first, then lexicographic for a stable choice
    by_first_token: dict[Token, list[IdentityTerm]] = {}
    for term in sorted(set(terms), key=lambda t: (-len(t), t)):
        by_first_token.setdefault(term.tokens[0], []).append(term)
    found = []
    pos = 0
    while pos < len(tokens):
        for term in by_first_token.get(tokens[pos], ()):
            if _matches_at(tokens, pos, term):
                found.append((pos, pos + len(term) - 1, term))
                pos += len(term)
                break
        else:
            pos += 1
    return found


def find_occurrences(doc: Document, term: IdentityTerm) -> list[Span]:
    """All non-overlapping occurrences of one term as inclusive token spans."""
    return [(start, end) for start, end, _ in scan_terms(doc.tokens, [term])]


def contains_any(doc: Document, terms: Iterable[IdentityTerm]) -> bool:
    """True when at least one term occurs in the document."""
    return bool(scan_terms(doc.tokens, terms))


def _rebuild(
    tokens: Sequence[Token], replacements: list[tuple[int, int, Sequence[Token]]]
) -> list[Token]:
    """Rebuild a token list replacing inclusive spans (given in ascending order)."""
    out: list[Token] = []
    cursor = 0
    for start, end, new_tokens in replacements:
        out.extend(tokens[cursor:start])
        out.extend(new_tokens)
        cursor = end + 1
    out.extend(tokens[cursor:])
    return out


def _swap_occurrences(
    doc: Document,
    occurrences: Sequence[tuple[int, int, IdentityTerm]],
    a: IdentityTerm,
    b: IdentityTerm,
    match_bigrams: bool,
) -> Document | None:
    replacements = []
    for start, end, term in occurrences:
        if term not in (a, b) or (term.is_bigram and not match_bigrams):
            continue
        other = b if term == a else a
        replacements.append((start, end, other.tokens))
    if not replacements:
        return None
    new_tokens = _rebuild(doc.tokens, replacements)
    first, second = sorted((a, b))
    return doc.with_tokens(new_tokens, doc_id=f"{doc.id}~{first}|{second}")


def substitute_pair(
    doc: Document, a: IdentityTerm, b: IdentityTerm, *, match_bigrams: bool = False
) -> Document | None:
    """Swap every occurrence of ``a`` with ``b`` and vice versa in one pass.

    Only unigram occurrences in the input are substituted unless ``match_bigrams``
    is set; a unigram may be replaced by a bigram. The label is copied unchanged.

    Returns:
        The counterfactual document, or None when nothing was substituted.

    Raises:
        ValueError: If ``a`` and ``b`` are the same term.
    """
    if a == b:
        raise ValueError(f"Cannot substitute a term with itself: {str(a)!r}")
    return _swap_occurrences(doc, scan_terms(doc.tokens, (a, b)), a, b, match_bigrams)


def generate_all_counterfactuals(
    doc: Document, terms: Iterable[IdentityTerm], *, match_bigrams: bool = False
) -> CounterfactualSet:
    """Swap every unordered pair of terms against one scan over the whole term set.

    Occurrences are resolved once with all ``terms``, so a unigram inside a
    matched bigram is never swapped on its own.
    """
    ordered = as_terms(terms)
    occurrences = scan_terms(doc.tokens, ordered)
    present = {term for _, _, term in occurrences}
    if not present:
        return CounterfactualSet(source=doc)
    variants = []
    for a, b in itertools.combinations(ordered, 2):
        if a not in present and b not in present:
            continue
        variant = _swap_occurrences(doc, occurrences, a, b, match_bigrams)
        if variant is not None:
            variants.append((variant, (a, b)))
    return CounterfactualSet(source=doc, variants=tuple(variants))


def random_training_counterfactual(
    doc: Document, terms: Iterable[IdentityTerm], rng: np.random.Generator
) -> Document | None:
    """Replace each identity occurrence by a uniformly drawn different term.

    Every occurrence is resampled independently from the term set minus the
    occurring term. Only the caller's ``rng`` is advanced.

    Returns:
        The counterfactual document, or None when the document has no identity term
        (or the term set offers no alternative).
    """
    ordered = as_terms(terms)
    occurrences = scan_terms(doc.tokens, ordered)
    if not occurrences or len(ordered) < 2:
        return None
    replacements = []
    for start, end, term in occurrences:
        choices = [t for t in ordered if t != term]
        pick = choices[int(rng.integers(len(choices)))]
        replacements.append((start, end, pick.tokens))
    return doc.with_tokens(_rebuild(doc.tokens, replacements), doc_id=f"{doc.id}~cf")


def blind(doc: Document, terms: Iterable[IdentityTerm]) -> Document:
    """Replace every identity occurrence (unigram or bigram) by the IDENTITY token."""
    occurrences = scan_terms(doc.tokens, terms)
    if not occurrences:
        return doc
    replacements = [(start, end, (IDENTITY_TOKEN,)) for start, end, _ in occurrences]
    return doc.with_tokens(_rebuild(doc.tokens, replacements))
