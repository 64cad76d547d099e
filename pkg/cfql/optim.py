"""First-order optimizers"""

from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from .mlp import MlpParams

__all__ = ['AdamState', 'init_adam', 'adam_step', 'apply_adam']


@dataclass(frozen=True)
class AdamState:
    """Adam optimizer state

    Attributes:
        step: Number of applied updates.
        m: First-moment accumulator per parameter tensor.
        v: Second-moment accumulator per parameter tensor.
        lr: Learning rate.
        beta1: First-moment decay.
        beta2: Second-moment decay.
        eps: Denominator offset.
    """
    step: int
    m: Tuple[np.ndarray, ...]
    v: Tuple[np.ndarray, ...]
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(
        params: Sequence[np.ndarray],
        lr: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8
) -> AdamState:
    """Fresh optimizer state for the given parameter tensors

    Arguments:
        params: Parameter tensors, or an :class:`MlpParams`.
    """
    if isinstance(params, MlpParams):
        params = params.tensors()
    zeros = tuple(np.zeros_like(np.asarray(p, dtype=float)) for p in params)
    return AdamState(step=0, m=zeros, v=tuple(np.zeros_like(z) for z in zeros),
                     lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(
        state: AdamState,
        params: Sequence[np.ndarray],
        grads: Sequence[np.ndarray]
) -> Tuple[List[np.ndarray], AdamState]:
    """Apply one bias-corrected Adam update

    Inputs are not modified.

    Arguments:
        state: Current optimizer state.
        params: Parameter tensors.
        grads: Gradient per parameter tensor.

    Returns:
        Updated parameter tensors and optimizer state.

    Raises:
        ValueError: if shapes of parameters, gradients and accumulators
            disagree.
    """
    if not len(params) == len(grads) == len(state.m):
        raise ValueError(
            f"Got {len(params)} parameter tensors, {len(grads)} gradients "
            f"and {len(state.m)} accumulators.")

    step = state.step + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step
    new_params, new_m, new_v = [], [], []
    for i_tensor, (p, g, m, v) in enumerate(
            zip(params, grads, state.m, state.v)):
        p = np.asarray(p, dtype=float)
        g = np.asarray(g, dtype=float)
        if not p.shape == g.shape == m.shape:
            raise ValueError(
                f"Tensor {i_tensor}: parameter shape {p.shape}, gradient "
                f"shape {g.shape}, accumulator shape {m.shape}.")
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g ** 2
        m_hat = m / correction1
        v_hat = v / correction2
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, replace(state, step=step, m=tuple(new_m),
                               v=tuple(new_v))


def apply_adam(
        state: AdamState,
        params: MlpParams,
        grads: MlpParams
) -> Tuple[MlpParams, AdamState]:
    """:func:`adam_step` on network parameters"""
    tensors, state = adam_step(state, params.tensors(), grads.tensors())
    return params.with_tensors(tensors), state
