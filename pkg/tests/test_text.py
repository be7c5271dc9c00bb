import itertools
import tempfile
from pathlib import Path
import unittest

import numpy as np
import pytest

from ctfair.core.constants import IDENTITY_TOKEN
from ctfair.core.text import (
    CounterfactualSet,
    Document,
    IdentityLexicon,
    IdentityTerm,
    LexiconError,
    blind,
    contains_any,
    detokenize,
    find_occurrences,
    generate_all_counterfactuals,
    random_training_counterfactual,
    scan_terms,
    substitute_pair,
    tokenize,
)


def doc_of(*tokens, label=None, doc_id="d"):
    return Document(id=doc_id, tokens=tuple(tokens), label=label)


def term(text):
    return IdentityTerm.parse(text)


GAY, STRAIGHT, MUSLIM = term("gay"), term("straight"), term("muslim")
AFRICAN_AMERICAN = term("african american")


class TestTokenize(unittest.TestCase):
    def test_lowercases_and_strips_punctuation(self):
        self.assertEqual(tokenize("Some people are gay."), ["some", "people", "are", "gay"])

    def test_empty_string(self):
        self.assertEqual(tokenize(""), [])

    def test_internal_apostrophe_is_kept(self):
        self.assertEqual(tokenize("That's so gay"), ["that's", "so", "gay"])

    def test_pure_punctuation_pieces_are_dropped(self):
        self.assertEqual(tokenize("wow !! ... nice"), ["wow", "nice"])

    def test_detokenize_joins_with_spaces(self):
        self.assertEqual(detokenize(["a", "b"]), "a b")


class TestDocument(unittest.TestCase):
    def test_from_text_tokenizes_and_keeps_raw_text(self):
        doc = Document.from_text("x", "Hello, World!", label=1)
        self.assertEqual(doc.tokens, ("hello", "world"))
        self.assertEqual(doc.raw_text, "Hello, World!")
        self.assertEqual(doc.label, 1)

    def test_reserved_token_is_rejected(self):
        with self.assertRaises(ValueError):
            Document.from_text("x", "an IDENTITY here")

    def test_label_must_be_binary(self):
        with self.assertRaises(ValueError):
            Document(id="x", tokens=("a",), label=2)


class TestIdentityTerm(unittest.TestCase):
    def test_bigram(self):
        self.assertTrue(AFRICAN_AMERICAN.is_bigram)
        self.assertEqual(str(AFRICAN_AMERICAN), "african american")

    def test_three_tokens_rejected(self):
        with self.assertRaises(LexiconError):
            IdentityTerm(("a", "b", "c"))

    def test_empty_rejected(self):
        with self.assertRaises(LexiconError):
            IdentityTerm.parse("   ")

    def test_reserved_word_rejected(self):
        with self.assertRaises(LexiconError):
            IdentityTerm.parse("identity")


class TestIdentityLexicon(unittest.TestCase):
    def test_parse_sections_and_comments(self):
        lexicon = IdentityLexicon.parse(
            "# identity terms\ngay\nstraight\n\n[heldout]\nmuslim\nafrican american\n"
        )
        self.assertEqual(lexicon.sorted_train(), [GAY, STRAIGHT])
        self.assertEqual(lexicon.sorted_heldout(), [AFRICAN_AMERICAN, MUSLIM])
        self.assertEqual(len(lexicon.all_terms), 4)

    def test_duplicate_term_rejected(self):
        with self.assertRaises(LexiconError) as ctx:
            IdentityLexicon.parse("gay\n[heldout]\ngay\n")
        self.assertIn("Line 3", str(ctx.exception))

    def test_empty_lexicon_rejected(self):
        with self.assertRaises(LexiconError):
            IdentityLexicon.parse("# nothing here\n")

    def test_overlapping_sets_rejected(self):
        with self.assertRaises(LexiconError):
            IdentityLexicon.from_terms(["gay"], ["gay"])

    def test_default_lexicon_split(self):
        lexicon = IdentityLexicon.default()
        self.assertEqual(len(lexicon.train_terms), 35)
        self.assertEqual(len(lexicon.heldout_terms), 15)
        self.assertEqual(sum(t.is_bigram for t in lexicon.all_terms), 3)
        self.assertFalse(any(t.is_bigram for t in lexicon.train_terms))

    def test_random_split_sizes_and_determinism(self):
        terms = ["a", "b", "c", "d", "e", "f"]
        first = IdentityLexicon.random_split(terms, 2, seed=3)
        second = IdentityLexicon.random_split(terms, 2, seed=3)
        self.assertEqual(first, second)
        self.assertEqual(len(first.heldout_terms), 2)
        self.assertEqual(len(first.train_terms), 4)
        with self.assertRaises(LexiconError):
            IdentityLexicon.random_split(terms, 7)

    def test_load_from_separate_files_and_dumps_round_trip(self):
        with tempfile.TemporaryDirectory() as tmp:
            train_path = Path(tmp) / "train.txt"
            heldout_path = Path(tmp) / "heldout.txt"
            train_path.write_text("gay\nstraight\n", encoding="utf-8")
            heldout_path.write_text("muslim\n", encoding="utf-8")
            lexicon = IdentityLexicon.from_files(train_path, heldout_path)
            self.assertEqual(lexicon.sorted_heldout(), [MUSLIM])
            self.assertEqual(IdentityLexicon.parse(lexicon.dumps()), lexicon)

    def test_load_missing_file(self):
        with self.assertRaises(LexiconError):
            IdentityLexicon.load("/nonexistent/lexicon.txt")


class TestFindOccurrences(unittest.TestCase):
    def test_two_unigram_matches(self):
        doc = doc_of("gay", "people", "meet", "gay", "people")
        self.assertEqual(find_occurrences(doc, GAY), [(0, 0), (3, 3)])

    def test_no_match(self):
        self.assertEqual(find_occurrences(doc_of("some", "people"), GAY), [])

    def test_bigram_match(self):
        doc = doc_of("african", "american", "voters")
        self.assertEqual(find_occurrences(doc, AFRICAN_AMERICAN), [(0, 1)])

    def test_contains_any(self):
        self.assertTrue(contains_any(doc_of("a", "gay", "b"), [STRAIGHT, GAY]))
        self.assertFalse(contains_any(doc_of("hello"), [STRAIGHT, GAY]))


class TestSubstitutePair(unittest.TestCase):
    def test_single_swap(self):
        result = substitute_pair(doc_of("some", "people", "are", "gay"), GAY, STRAIGHT)
        self.assertEqual(result.tokens, ("some", "people", "are", "straight"))

    def test_neither_term_present(self):
        self.assertIsNone(substitute_pair(doc_of("cats", "are", "nice"), GAY, STRAIGHT))

    def test_simultaneous_bidirectional_swap(self):
        result = substitute_pair(doc_of("gay", "and", "straight", "people"), GAY, STRAIGHT)
        self.assertEqual(result.tokens, ("straight", "and", "gay", "people"))

    def test_same_term_rejected(self):
        with self.assertRaises(ValueError):
            substitute_pair(doc_of("gay"), GAY, GAY)

    def test_label_and_raw_text(self):
        result = substitute_pair(doc_of("gay", "people", label=1), GAY, MUSLIM)
        self.assertEqual(result.label, 1)
        self.assertEqual(result.raw_text, "muslim people")

    def test_unigram_to_bigram_changes_length(self):
        result = substitute_pair(doc_of("some", "gay", "people"), GAY, AFRICAN_AMERICAN)
        self.assertEqual(result.tokens, ("some", "african", "american", "people"))

    def test_bigram_input_occurrence_only_swapped_on_request(self):
        doc = doc_of("african", "american", "voters")
        self.assertIsNone(substitute_pair(doc, AFRICAN_AMERICAN, GAY))
        swapped = substitute_pair(doc, AFRICAN_AMERICAN, GAY, match_bigrams=True)
        self.assertEqual(swapped.tokens, ("gay", "voters"))

    def test_symmetry(self):
        doc = doc_of("gay", "or", "straight", "or", "gay")
        self.assertEqual(substitute_pair(doc, GAY, STRAIGHT), substitute_pair(doc, STRAIGHT, GAY))

    def test_involution_and_length_preservation(self):
        rng = np.random.default_rng(0)
        vocab = ["gay", "straight", "muslim", "people", "are", "nice"]
        for _ in range(200):
            tokens = tuple(str(t) for t in rng.choice(vocab, size=int(rng.integers(1, 8))))
            doc = doc_of(*tokens)
            once = substitute_pair(doc, GAY, STRAIGHT)
            if once is None:
                self.assertFalse(set(tokens) & {"gay", "straight"})
                continue
            self.assertEqual(len(once), len(doc))
            twice = substitute_pair(once, GAY, STRAIGHT)
            self.assertEqual(twice.tokens, doc.tokens)


def _oracle_swap(tokens, a, b):
    """Token-by-token swap of two unigram terms."""
    swapped = [b if t == a else a if t == b else t for t in tokens]
    return tuple(swapped) if swapped != list(tokens) else None


class TestGenerateAllCounterfactuals(unittest.TestCase):
    def test_two_variants_for_single_identity_token(self):
        result = generate_all_counterfactuals(
            doc_of("some", "people", "are", "gay"), [GAY, STRAIGHT, MUSLIM]
        )
        variants = {doc.tokens: pair for doc, pair in result.variants}
        self.assertEqual(
            variants,
            {
                ("some", "people", "are", "muslim"): (GAY, MUSLIM),
                ("some", "people", "are", "straight"): (GAY, STRAIGHT),
            },
        )

    def test_no_identity_tokens(self):
        result = generate_all_counterfactuals(doc_of("hello", "world"), [GAY, STRAIGHT])
        self.assertIsInstance(result, CounterfactualSet)
        self.assertEqual(len(result), 0)

    def test_three_variants_for_two_identity_tokens(self):
        doc = doc_of("gay", "or", "muslim")
        result = generate_all_counterfactuals(doc, [GAY, STRAIGHT, MUSLIM])
        self.assertEqual(
            sorted(d.tokens for d in result.documents),
            sorted(
                [
                    ("straight", "or", "muslim"),
                    ("muslim", "or", "gay"),
                    ("gay", "or", "straight"),
                ]
            ),
        )

    def test_variants_differ_from_source(self):
        doc = doc_of("gay", "and", "straight")
        for variant in generate_all_counterfactuals(doc, [GAY, STRAIGHT, MUSLIM]).documents:
            self.assertNotEqual(variant.tokens, doc.tokens)

    def test_unigram_inside_matched_bigram_is_left_alone(self):
        african = term("african")
        doc = doc_of("gay", "and", "african", "american")
        result = generate_all_counterfactuals(doc, [GAY, african, AFRICAN_AMERICAN])
        variants = {tuple(sorted(map(str, pair))): d.tokens for d, pair in result.variants}
        self.assertEqual(variants["african", "gay"], ("african", "and", "african", "american"))
        self.assertEqual(
            variants["african american", "gay"],
            ("african", "american", "and", "african", "american"),
        )
        # The bigram occurrence itself is only swapped on request
        self.assertNotIn(("african", "african american"), variants)
        matched = generate_all_counterfactuals(
            doc, [GAY, african, AFRICAN_AMERICAN], match_bigrams=True
        )
        swapped = {tuple(sorted(map(str, pair))): d.tokens for d, pair in matched.variants}
        self.assertEqual(swapped["african", "african american"], ("gay", "and", "african"))

    def test_equals_brute_force_pair_enumeration(self):
        rng = np.random.default_rng(11)
        pool = ["t0", "t1", "t2", "t3", "t4", "t5"]
        filler = ["x", "y", "z"]
        for _ in range(100):
            size = int(rng.integers(2, 7))
            terms = [IdentityTerm((t,)) for t in pool[:size]]
            tokens = tuple(
                str(t) for t in rng.choice(pool[:size] + filler, size=int(rng.integers(1, 9)))
            )
            result = generate_all_counterfactuals(doc_of(*tokens), terms)
            got = sorted(
                (doc.tokens, tuple(str(t) for t in pair)) for doc, pair in result.variants
            )
            expected = []
            for a, b in itertools.combinations(sorted(terms), 2):
                swapped = _oracle_swap(tokens, a.tokens[0], b.tokens[0])
                if swapped is not None:
                    expected.append((swapped, (str(a), str(b))))
            self.assertEqual(got, sorted(expected))


class TestRandomTrainingCounterfactual(unittest.TestCase):
    def test_single_alternative(self):
        rng = np.random.default_rng(0)
        result = random_training_counterfactual(
            doc_of("some", "people", "are", "gay"), [GAY, STRAIGHT], rng
        )
        self.assertEqual(result.tokens, ("some", "people", "are", "straight"))

    def test_no_identity_tokens(self):
        rng = np.random.default_rng(0)
        self.assertIsNone(random_training_counterfactual(doc_of("hello", "world"), [GAY], rng))

    def test_deterministic_given_seed(self):
        doc = doc_of("gay", "people", "and", "muslim", "people")
        terms = [GAY, STRAIGHT, MUSLIM]
        first = random_training_counterfactual(doc, terms, np.random.default_rng(5))
        second = random_training_counterfactual(doc, terms, np.random.default_rng(5))
        self.assertEqual(first, second)

    def test_replacements_are_uniform(self):
        doc = doc_of("gay", "people", "and", "muslim", "people")
        rng = np.random.default_rng(1234)
        first_counts = {"straight": 0, "muslim": 0}
        fourth_counts = {"gay": 0, "straight": 0}
        draws = 10_000
        for _ in range(draws):
            cf = random_training_counterfactual(doc, [GAY, STRAIGHT, MUSLIM], rng)
            first_counts[cf.tokens[0]] += 1
            fourth_counts[cf.tokens[3]] += 1
        for counts in (first_counts, fourth_counts):
            for value in counts.values():
                self.assertAlmostEqual(value / draws, 0.5, delta=0.02)

    def test_label_preserved(self):
        cf = random_training_counterfactual(
            doc_of("gay", label=1), [GAY, STRAIGHT], np.random.default_rng(0)
        )
        self.assertEqual(cf.label, 1)


class TestBlind(unittest.TestCase):
    def test_unigram(self):
        result = blind(doc_of("some", "people", "are", "gay"), [GAY, STRAIGHT])
        self.assertEqual(result.tokens, ("some", "people", "are", IDENTITY_TOKEN))

    def test_no_identity_tokens_is_noop(self):
        doc = doc_of("hello", "world")
        self.assertEqual(blind(doc, [GAY]), doc)

    def test_bigram_collapses_to_one_token(self):
        result = blind(doc_of("african", "american", "voters"), [AFRICAN_AMERICAN])
        self.assertEqual(result.tokens, (IDENTITY_TOKEN, "voters"))

    def test_idempotent_and_label_preserving(self):
        doc = doc_of("gay", "and", "muslim", "people", label=0)
        once = blind(doc, [GAY, MUSLIM])
        self.assertEqual(blind(once, [GAY, MUSLIM]), once)
        self.assertEqual(once.label, 0)


@pytest.mark.parametrize(
    ("tokens", "expected"),
    [
        (("african", "american", "people"), ["african american"]),
        (("african", "people"), ["african"]),
        (("american", "african", "american"), ["american", "african american"]),
    ],
)
def test_scan_prefers_longest_term(tokens, expected):
    terms = [term("african"), term("american"), AFRICAN_AMERICAN]
    assert [str(t) for _, _, t in scan_terms(tokens, terms)] == expected
