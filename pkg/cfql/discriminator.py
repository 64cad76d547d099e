"""Discriminator between flow-policy and one-step-policy actions

Class 1 marks actions of the behavior-cloning flow policy, class 0 actions
of the one-step policy. The sigmoid output at a candidate action is the
factual weight of the robust Q combination.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .C import *  # noqa: F403
from .flow import euler_sample, policy_action
from .mlp import MlpParams, backward, forward, init_mlp

logger = logging.getLogger(__name__)
__all__ = ['Discriminator', 'init_discriminator', 'discriminator_logits',
           'factual_weight', 'binary_cross_entropy', 'discriminator_loss',
           'discriminator_loss_on_actions']


@dataclass(frozen=True)
class Discriminator:
    """Discriminator network and loss weighting

    Attributes:
        params: Network ``(s, x) -> logit``.
        coef: Coefficient of the discriminator loss.
        decay: Exponential decay rate of ``coef`` per gradient step.
    """
    params: MlpParams
    coef: float = 10.0
    decay: float = 0.0

    def coefficient(self, step: int = 0) -> float:
        """Loss coefficient after ``step`` gradient steps"""
        return float(self.coef * np.exp(-self.decay * step))

    def with_params(self, params: MlpParams) -> 'Discriminator':
        return replace(self, params=params)


def init_discriminator(
        obs_dim: int,
        action_dim: int,
        hidden: Sequence[int],
        rng: np.random.Generator,
        coef: float = 10.0,
        decay: float = 0.0
) -> Discriminator:
    params = init_mlp([obs_dim + action_dim, *hidden, 1],
                      DISCRIMINATOR_ACTIVATION, IDENTITY, rng)
    return Discriminator(params=params, coef=coef, decay=decay)


def discriminator_logits(d: Discriminator, obs: np.ndarray,
                         actions: np.ndarray) -> np.ndarray:
    """Logits of class 1 (flow action), shape ``(n,)``"""
    return forward(d.params, np.column_stack([obs, actions]))[:, 0]


def factual_weight(d: Discriminator, obs: np.ndarray,
                   actions: np.ndarray) -> np.ndarray:
    """Probability that ``actions`` come from the flow policy

    Used as a constant weight; no gradient reaches the discriminator
    through this path.
    """
    return expit(discriminator_logits(d, obs, actions))


def binary_cross_entropy(
        positive_logits: np.ndarray,
        negative_logits: np.ndarray
) -> Tuple[float, np.ndarray, np.ndarray]:
    """``-E[log sigmoid(l+)] - E[log(1 - sigmoid(l-))]``

    Returns:
        Loss and its gradients with respect to both logit vectors.
    """
    positive_logits = np.asarray(positive_logits, dtype=float)
    negative_logits = np.asarray(negative_logits, dtype=float)
    loss = float(np.mean(np.logaddexp(0.0, -positive_logits))
                 + np.mean(np.logaddexp(0.0, negative_logits)))
    grad_positive = (expit(positive_logits) - 1.0) / len(positive_logits)
    grad_negative = expit(negative_logits) / len(negative_logits)
    return loss, grad_positive, grad_negative


def discriminator_loss_on_actions(
        d: Discriminator,
        obs: np.ndarray,
        flow_actions: np.ndarray,
        policy_actions: np.ndarray,
        step: int = 0
) -> Tuple[float, MlpParams, Dict[str, float]]:
    """Scaled cross-entropy of given class-1 and class-0 actions

    Arguments:
        d: Discriminator.
        obs: Observations.
        flow_actions: Class-1 actions.
        policy_actions: Class-0 actions.
        step: Gradient step for the coefficient decay.

    Returns:
        Loss scaled by the coefficient, its gradient and statistics
        (accuracy and mean output per class).
    """
    inputs = np.vstack([np.column_stack([obs, flow_actions]),
                        np.column_stack([obs, policy_actions])])
    logits = forward(d.params, inputs)[:, 0]
    n = len(flow_actions)
    positive, negative = logits[:n], logits[n:]
    bce, grad_positive, grad_negative = binary_cross_entropy(positive,
                                                             negative)
    coef = d.coefficient(step)
    upstream = coef * np.concatenate([grad_positive, grad_negative])
    grads, _ = backward(d.params, inputs, upstream[:, np.newaxis])
    stats = {
        DISCRIMINATOR_LOSS: coef * bce,
        DISCRIMINATOR_ACCURACY: float(
            (np.sum(positive > 0) + np.sum(negative < 0)) / (2 * n)),
        DISCRIMINATOR_FLOW_MEAN: float(np.mean(expit(positive))),
        DISCRIMINATOR_POLICY_MEAN: float(np.mean(expit(negative))),
    }
    return coef * bce, grads, stats


def discriminator_loss(
        d: Discriminator,
        v: MlpParams,
        pi: MlpParams,
        obs: np.ndarray,
        rng: np.random.Generator,
        flow_steps: int = 10,
        step: int = 0,
        z: Optional[np.ndarray] = None
) -> Tuple[float, MlpParams, Dict[str, float]]:
    """Discriminator loss on flow and one-step actions from shared noise

    Both policies are constants here; only the discriminator receives
    gradients.

    Arguments:
        d: Discriminator.
        v: Velocity field of the flow policy.
        pi: One-step policy.
        obs: Observations.
        rng: Random generator for the noise.
        flow_steps: Euler steps of the flow sampler.
        step: Gradient step for the coefficient decay.
        z: Fixed noise, drawn from ``rng`` if not provided.

    Returns:
        See :func:`discriminator_loss_on_actions`.
    """
    if z is None:
        z = rng.standard_normal((len(obs), pi.n_outputs))
    flow_actions = euler_sample(v, obs, z, flow_steps)
    policy_actions = policy_action(pi, obs, z)
    return discriminator_loss_on_actions(d, obs, flow_actions,
                                         policy_actions, step)
