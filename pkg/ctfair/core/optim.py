#!/usr/bin/env python3
"""
Adam optimizer over ModelParams tensors.
"""

import numpy as np

from ctfair.core.model import Gradients, ModelParams


class Adam:
    """Adam with bias-corrected first and second moment estimates.

    m_t = b1 * m_{t-1} + (1 - b1) * g
    v_t = b2 * v_{t-1} + (1 - b2) * g**2
    theta -= lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(
        self,
        params: ModelParams,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(t) for name, t in params.tensors().items()}
        self.v = {name: np.zeros_like(t) for name, t in params.tensors().items()}

    def step(self, grads: Gradients) -> None:
        """Apply one update in place to the parameter tensors."""
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name, tensor in self.params.tensors().items():
            g = getattr(grads, name)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / correction1
            v_hat = v / correction2
            tensor -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
