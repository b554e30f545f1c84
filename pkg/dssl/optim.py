"""
Adam over named parameter arrays.
"""
from dataclasses import dataclass, field
from typing import Dict

import numpy as np


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class Adam:
    """
    Adam with L2 weight decay folded into the gradient.

    Args:
        lr (float): step size
        beta1 (float): first-moment decay
        beta2 (float): second-moment decay
        eps (float): denominator guard
        weight_decay (float): L2 coefficient added as weight_decay * param
    """

    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4

    def init_state(self, params: Dict[str, np.ndarray]) -> AdamState:
        return AdamState(
            step=0,
            m={name: np.zeros_like(value) for name, value in params.items()},
            v={name: np.zeros_like(value) for name, value in params.items()},
        )

    def step(
        self,
        params: Dict[str, np.ndarray],
        grads: Dict[str, np.ndarray],
        state: AdamState,
    ) -> Dict[str, np.ndarray]:
        """
        One update. Returns new arrays and advances `state` in place.

        A zero learning rate returns the parameters unchanged.
        """
        state.step += 1
        t = state.step
        updated = {}
        for name, value in params.items():
            grad = grads[name]
            if self.weight_decay:
                grad = grad + self.weight_decay * value
            state.m[name] = self.beta1 * state.m[name] + (1.0 - self.beta1) * grad
            state.v[name] = self.beta2 * state.v[name] + (1.0 - self.beta2) * grad * grad
            if self.lr == 0:
                updated[name] = value
                continue
            m_hat = state.m[name] / (1.0 - self.beta1**t)
            v_hat = state.v[name] / (1.0 - self.beta2**t)
            updated[name] = value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return updated
