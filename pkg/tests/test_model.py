import math
import unittest

import numpy as np

from ctfair.core.constants import IDENTITY_TOKEN, OOV_TOKEN
from ctfair.core.model import (
    Gradients,
    ModelDims,
    ModelError,
    ModelParams,
    backward,
    build_vocab,
    forward,
    init_params,
    logit,
    make_vocab,
    predict,
    sigmoid,
    vocab_hash,
)
from ctfair.core.text import Document

WORDS = ["a", "b", "c", "d", "e", "f"]


def doc_of(*tokens):
    return Document(id="d", tokens=tuple(tokens))


def zero_params(vocab, dims):
    d, w, c = dims.embedding_dim, dims.window, dims.channels
    return ModelParams(
        vocab=vocab,
        embeddings=np.zeros((len(vocab), d)),
        conv_w=np.zeros((w, d, c)),
        conv_b=np.zeros(c),
        dense_w=np.zeros(c),
        dense_b=np.array(0.0),
    )


def random_params(rng, dims):
    params = init_params(WORDS, dims, seed=int(rng.integers(1_000_000)))
    # Nonzero biases exercise every gradient path
    params.conv_b[:] = rng.normal(scale=0.5, size=params.conv_b.shape)
    params.dense_b[...] = rng.normal()
    return params


def near_kink(params, doc, margin=1e-3):
    """True when a small perturbation could flip a max-pool winner or a ReLU gate."""
    _, cache = forward(params, doc)
    pre = cache.pre_activation
    for channel in range(pre.shape[1]):
        column = np.sort(pre[:, channel])[::-1]
        if column[0] < -margin:
            continue
        if abs(column[0]) < margin:
            return True
        if len(column) > 1 and column[0] - column[1] < margin:
            return True
    return False


def numeric_gradients(f, params, step=1e-4):
    grads = {}
    for name, tensor in params.tensors().items():
        g = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        g_flat = g.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            up = f()
            flat[i] = original - step
            down = f()
            flat[i] = original
            g_flat[i] = (up - down) / (2 * step)
        grads[name] = g
    return grads


class TestVocab(unittest.TestCase):
    def test_reserved_indices(self):
        vocab = make_vocab(["b", "a", "a"])
        self.assertEqual(vocab, {OOV_TOKEN: 0, IDENTITY_TOKEN: 1, "a": 2, "b": 3})

    def test_build_vocab_adds_extra_tokens(self):
        vocab = build_vocab([doc_of("x", "y")], ["gay"])
        self.assertEqual(set(vocab), {OOV_TOKEN, IDENTITY_TOKEN, "x", "y", "gay"})

    def test_hash_depends_on_order(self):
        self.assertEqual(vocab_hash(make_vocab(["a", "b"])), vocab_hash(make_vocab(["b", "a"])))
        self.assertNotEqual(
            vocab_hash({OOV_TOKEN: 0, "a": 1, "b": 2}), vocab_hash({OOV_TOKEN: 0, "b": 1, "a": 2})
        )


class TestInitParams(unittest.TestCase):
    def test_same_seed_identical(self):
        dims = ModelDims(4, 3, 5)
        first, second = init_params(WORDS, dims, 7), init_params(WORDS, dims, 7)
        for name in first.tensors():
            np.testing.assert_array_equal(first.tensors()[name], second.tensors()[name])

    def test_different_seeds_differ(self):
        dims = ModelDims(4, 3, 5)
        first, second = init_params(WORDS, dims, 1), init_params(WORDS, dims, 2)
        self.assertFalse(np.array_equal(first.embeddings, second.embeddings))
        self.assertFalse(np.array_equal(first.conv_w, second.conv_w))

    def test_shapes(self):
        vocab = {OOV_TOKEN: 0, **{f"t{i}": i for i in range(1, 100)}}
        params = init_params(vocab, ModelDims(embedding_dim=8, window=3, channels=4), 0)
        self.assertEqual(params.embeddings.shape, (100, 8))
        self.assertEqual(params.conv_w.shape, (3, 8, 4))
        self.assertEqual(params.conv_b.shape, (4,))
        self.assertEqual(params.dense_w.shape, (4,))
        self.assertEqual(params.dense_b.shape, ())

    def test_fan_in_scaling(self):
        params = init_params(WORDS, ModelDims(16, 3, 32), 0)
        self.assertLessEqual(np.abs(params.conv_w).max(), math.sqrt(3.0 / 48))
        self.assertLessEqual(np.abs(params.dense_w).max(), math.sqrt(3.0 / 32))

    def test_empty_vocab_rejected(self):
        with self.assertRaises(ModelError):
            init_params([], ModelDims(), 0)
        with self.assertRaises(ModelError):
            init_params({}, ModelDims(), 0)

    def test_dimensions_must_be_positive(self):
        with self.assertRaises(ModelError):
            ModelDims(embedding_dim=0)


class TestModelParams(unittest.TestCase):
    def test_non_finite_rejected(self):
        params = init_params(WORDS, ModelDims(2, 2, 2), 0)
        embeddings = params.embeddings.copy()
        embeddings[0, 0] = np.nan
        with self.assertRaises(ModelError):
            ModelParams(
                vocab=params.vocab,
                embeddings=embeddings,
                conv_w=params.conv_w,
                conv_b=params.conv_b,
                dense_w=params.dense_w,
                dense_b=params.dense_b,
            )

    def test_vocab_rows_must_match(self):
        params = init_params(WORDS, ModelDims(2, 2, 2), 0)
        with self.assertRaises(ModelError):
            ModelParams(
                vocab=params.vocab,
                embeddings=params.embeddings[:-1],
                conv_w=params.conv_w,
                conv_b=params.conv_b,
                dense_w=params.dense_w,
                dense_b=params.dense_b,
            )

    def test_copy_is_independent(self):
        params = init_params(WORDS, ModelDims(2, 2, 2), 0)
        clone = params.copy()
        clone.embeddings[0, 0] += 1.0
        self.assertNotEqual(clone.embeddings[0, 0], params.embeddings[0, 0])

    def test_unknown_tokens_and_empty_docs_map_to_oov(self):
        params = init_params(WORDS, ModelDims(2, 2, 2), 0)
        np.testing.assert_array_equal(params.encode(doc_of("zzz", "a")), [0, params.vocab["a"]])
        np.testing.assert_array_equal(params.encode(doc_of()), [0])


class TestForward(unittest.TestCase):
    def test_zero_parameters_give_zero_logit(self):
        params = zero_params(make_vocab(WORDS), ModelDims(3, 2, 4))
        self.assertEqual(forward(params, doc_of("a", "b", "c"))[0], 0.0)

    def test_vocabulary_permutation_invariance(self):
        params = init_params(WORDS, ModelDims(3, 2, 4), 3)
        tokens = sorted(params.vocab, key=params.vocab.__getitem__)
        # Keep OOV at index 0, reverse the rest
        order = [tokens[0], *reversed(tokens[1:])]
        permuted_vocab = {token: i for i, token in enumerate(order)}
        permuted = ModelParams(
            vocab=permuted_vocab,
            embeddings=params.embeddings[[params.vocab[t] for t in order]],
            conv_w=params.conv_w,
            conv_b=params.conv_b,
            dense_w=params.dense_w,
            dense_b=params.dense_b,
        )
        doc = doc_of("c", "a", "f", "unknown")
        self.assertEqual(logit(params, doc), logit(permuted, doc))

    def test_hand_computed_logit(self):
        vocab = {OOV_TOKEN: 0, IDENTITY_TOKEN: 1, "a": 2, "b": 3}
        params = ModelParams(
            vocab=vocab,
            embeddings=np.array([[0.0], [0.0], [1.0], [2.0]]),
            conv_w=np.array([[[0.5]], [[1.0]]]),
            conv_b=np.array([0.25]),
            dense_w=np.array([2.0]),
            dense_b=np.array(-1.0),
        )
        # relu(0.5 * 1 + 1.0 * 2 + 0.25) = 2.75; 2 * 2.75 - 1 = 4.5
        self.assertEqual(logit(params, doc_of("a", "b")), 4.5)

    def test_short_document_is_zero_padded(self):
        vocab = {OOV_TOKEN: 0, IDENTITY_TOKEN: 1, "a": 2, "b": 3}
        params = ModelParams(
            vocab=vocab,
            embeddings=np.array([[0.0], [0.0], [1.0], [2.0]]),
            conv_w=np.array([[[0.5]], [[1.0]], [[7.0]]]),
            conv_b=np.array([0.25]),
            dense_w=np.array([2.0]),
            dense_b=np.array(-1.0),
        )
        # The padding position contributes 7.0 * 0
        self.assertEqual(logit(params, doc_of("a", "b")), 4.5)

    def test_padding_neutrality(self):
        # Windows over pure padding produce conv_b; keep it non-positive
        params = init_params(WORDS, ModelDims(3, 4, 5), 11)
        params.conv_b[:] = -np.abs(params.conv_b) - 0.1
        doc = doc_of("a")
        padded = ModelParams(
            vocab={**params.vocab, "<PAD>": len(params.vocab)},
            embeddings=np.vstack([params.embeddings, np.zeros((1, 3))]),
            conv_w=params.conv_w,
            conv_b=params.conv_b,
            dense_w=params.dense_w,
            dense_b=params.dense_b,
        )
        for n_pad in range(1, 6):
            self.assertAlmostEqual(
                logit(padded, doc_of("a", *["<PAD>"] * n_pad)), logit(params, doc), places=12
            )

    def test_determinism_and_cache_consistency(self):
        params = init_params(WORDS, ModelDims(3, 3, 4), 5)
        doc = doc_of("a", "b", "c", "d")
        first, cache = forward(params, doc)
        second, _ = forward(params, doc)
        self.assertEqual(first, second)
        self.assertEqual(cache.logit, first)


class TestPredict(unittest.TestCase):
    def test_sigmoid_values(self):
        self.assertEqual(sigmoid(0.0), 0.5)
        self.assertGreaterEqual(sigmoid(20.0), 0.999999)
        self.assertAlmostEqual(sigmoid(-math.log(3)), 0.25, places=12)

    def test_strictly_inside_unit_interval(self):
        for z in (-1000.0, -40.0, 40.0, 1000.0):
            p = sigmoid(z)
            self.assertGreater(p, 0.0)
            self.assertLess(p, 1.0)

    def test_monotone(self):
        values = [sigmoid(z) for z in np.linspace(-10, 10, 50)]
        self.assertEqual(values, sorted(values))

    def test_predict_of_zero_model(self):
        params = zero_params(make_vocab(WORDS), ModelDims(2, 2, 2))
        self.assertEqual(predict(params, doc_of("a")), 0.5)


class TestBackward(unittest.TestCase):
    def test_zero_upstream_gives_zero_gradients(self):
        params = init_params(WORDS, ModelDims(3, 2, 4), 0)
        _, cache = forward(params, doc_of("a", "b"))
        grads = backward(params, cache, 0.0)
        for tensor in grads.tensors().values():
            self.assertFalse(np.any(tensor))

    def test_absent_token_rows_get_no_gradient(self):
        params = init_params(WORDS, ModelDims(3, 2, 4), 0)
        params.conv_b[:] = 1.0  # every channel active
        _, cache = forward(params, doc_of("a", "b"))
        grads = backward(params, cache, 1.0)
        for token in ("c", "d", "e", "f", OOV_TOKEN, IDENTITY_TOKEN):
            self.assertFalse(np.any(grads.embeddings[params.vocab[token]]))

    def test_cache_from_other_shapes_rejected(self):
        small = init_params(WORDS, ModelDims(2, 2, 2), 0)
        large = init_params(WORDS, ModelDims(3, 2, 2), 0)
        _, cache = forward(small, doc_of("a"))
        with self.assertRaises(ModelError):
            backward(large, cache, 1.0)

    def test_accumulates_into_buffer(self):
        params = init_params(WORDS, ModelDims(3, 2, 4), 0)
        _, cache = forward(params, doc_of("a", "b", "c"))
        single = backward(params, cache, 1.0)
        buffer = Gradients.zeros_like(params)
        backward(params, cache, 1.0, out=buffer)
        backward(params, cache, 1.0, out=buffer)
        for name, tensor in buffer.tensors().items():
            np.testing.assert_allclose(tensor, 2 * single.tensors()[name])

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(2024)
        checked = 0
        attempts = 0
        while checked < 120:
            attempts += 1
            self.assertLess(attempts, 2000, "too many configurations near a kink")
            dims = ModelDims(*(int(v) for v in rng.integers(1, 5, size=3)))
            params = random_params(rng, dims)
            n_tokens = int(rng.integers(1, 13))
            doc = doc_of(*(str(t) for t in rng.choice(WORDS + ["zzz"], size=n_tokens)))
            if near_kink(params, doc):
                continue
            _, cache = forward(params, doc)
            analytic = backward(params, cache, 1.0)
            numeric = numeric_gradients(lambda: forward(params, doc)[0], params)
            for name, tensor in analytic.tensors().items():
                np.testing.assert_allclose(
                    tensor, numeric[name], rtol=1e-3, atol=1e-7, err_msg=f"{name} for {dims}"
                )
            checked += 1
