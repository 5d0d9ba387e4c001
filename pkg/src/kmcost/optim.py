"""Minimal deterministic optimizers shared by the two trainers.

Parameters live in flat dicts of numpy arrays; updates are in place so a
training loop stays a pure function of its seeds.  Both optimizers follow
the usual minimization convention; trainers that maximize feed in the
negated gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SGD_MOMENTUM = "sgd_momentum"
ADAPTIVE_MOMENTS = "adaptive_moments"


@dataclass
class OptimizerState:
    kind: str
    step: int = 0
    slots: dict = field(default_factory=dict)


def init_optimizer(kind: str, params: dict[str, np.ndarray]) -> OptimizerState:
    if kind not in (SGD_MOMENTUM, ADAPTIVE_MOMENTS):
        raise ValueError(f"unknown optimizer {kind!r}")
    slots = {}
    for name, p in params.items():
        slots[name] = {"m": np.zeros_like(p)}
        if kind == ADAPTIVE_MOMENTS:
            slots[name]["v"] = np.zeros_like(p)
    return OptimizerState(kind, 0, slots)


def apply_update(
    state: OptimizerState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
    momentum: float = 0.9,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place descent step on every parameter."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        slot = state.slots[name]
        if state.kind == SGD_MOMENTUM:
            slot["m"] *= momentum
            slot["m"] += g
            p -= lr * slot["m"]
        else:
            slot["m"] *= beta1
            slot["m"] += (1.0 - beta1) * g
            slot["v"] *= beta2
            slot["v"] += (1.0 - beta2) * np.square(g)
            m_hat = slot["m"] / (1.0 - beta1**t)
            v_hat = slot["v"] / (1.0 - beta2**t)
            p -= lr * m_hat / (np.sqrt(v_hat) + eps)
