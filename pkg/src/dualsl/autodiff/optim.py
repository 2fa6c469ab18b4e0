"""Adam with bias correction, plus global-norm gradient clipping."""
from dataclasses import dataclass

import numpy as np

from dualsl.errors import ContractError


def adam_update(params, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
    """One in-place Adam step over ``params``; consumes (zeroes) their gradients."""
    for p in params:
        if p.grad is None:
            raise ContractError(f"parameter {p.name!r} has no gradient")
    for p in params:
        g = p.grad
        p.step += 1
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * (g * g)
        m_hat = p.m / (1.0 - beta1 ** p.step)
        v_hat = p.v / (1.0 - beta2 ** p.step)
        p.values -= learning_rate * m_hat / (np.sqrt(v_hat) + epsilon)
        p.grad = None


def global_grad_norm(params):
    return float(np.sqrt(sum(float(np.sum(p.grad * p.grad))
                             for p in params if p.grad is not None)))


def clip_grad_norm(params, max_norm):
    """Rescale gradients so their joint L2 norm is at most ``max_norm``."""
    norm = global_grad_norm(params)
    if max_norm is not None and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


def zero_grad(params):
    for p in params:
        p.grad = None


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip_norm: float = 5.0


class Adam:
    def __init__(self, params, config=None):
        self.params = list(params)
        self.config = config or AdamConfig()

    def step(self):
        c = self.config
        if c.clip_norm is not None and c.clip_norm > 0:
            clip_grad_norm(self.params, c.clip_norm)
        adam_update(self.params, c.learning_rate, c.beta1, c.beta2, c.epsilon)

    def zero_grad(self):
        zero_grad(self.params)
