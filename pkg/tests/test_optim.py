import unittest

import numpy as np

from ctfair.core.model import Gradients, ModelDims, init_params
from ctfair.core.optim import Adam


def make_params():
    return init_params(["good", "bad"], ModelDims(3, 2, 4), seed=0)


class TestAdam(unittest.TestCase):
    def test_first_step_moves_by_learning_rate_times_sign(self):
        params = make_params()
        before = params.copy()
        grads = Gradients.zeros_like(params)
        grads.dense_w[:] = [2.0, -0.5, 0.0, 1e-3]
        grads.dense_b[...] = -4.0

        Adam(params, learning_rate=0.01).step(grads)

        np.testing.assert_allclose(
            params.dense_w - before.dense_w, [-0.01, 0.01, 0.0, -0.01], rtol=1e-4
        )
        self.assertAlmostEqual(float(params.dense_b - before.dense_b), 0.01, places=9)
        np.testing.assert_array_equal(params.embeddings, before.embeddings)

    def test_moments_follow_the_recurrence(self):
        params = make_params()
        grads = Gradients.zeros_like(params)
        grads.conv_b[:] = 1.0
        optimizer = Adam(params, learning_rate=0.1, beta1=0.5, beta2=0.75)
        optimizer.step(grads)
        grads.conv_b[:] = 3.0
        optimizer.step(grads)

        self.assertEqual(optimizer.t, 2)
        np.testing.assert_allclose(optimizer.m["conv_b"], 0.5 * 0.5 + 0.5 * 3.0)
        np.testing.assert_allclose(optimizer.v["conv_b"], 0.75 * 0.25 + 0.25 * 9.0)

    def test_zero_gradient_leaves_params_unchanged(self):
        params = make_params()
        before = params.copy()
        Adam(params).step(Gradients.zeros_like(params))
        for name, tensor in params.tensors().items():
            np.testing.assert_array_equal(tensor, before.tensors()[name])

    def test_invalid_settings(self):
        params = make_params()
        with self.assertRaises(ValueError):
            Adam(params, learning_rate=0.0)
        with self.assertRaises(ValueError):
            Adam(params, beta1=1.0)
        with self.assertRaises(ValueError):
            Adam(params, beta2=-0.1)
