"""All trainable networks of a run and their checkpoints"""

import hashlib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np

from .C import *  # noqa: F403
from .container import read_tensors, write_tensors
from .critic import CriticEnsemble, init_critic_ensemble
from .discriminator import Discriminator, init_discriminator
from .flow import init_one_step_policy, init_velocity_field
from .mlp import MlpParams
from .optim import AdamState, init_adam

logger = logging.getLogger(__name__)
__all__ = ['NetworkBundle', 'init_bundle', 'save_bundle', 'load_bundle',
           'params_checksum']

#: Activations of every stored network, by name prefix
_ACTIVATIONS = {
    VELOCITY: (VELOCITY_ACTIVATION, IDENTITY),
    POLICY: (POLICY_ACTIVATION, POLICY_FINAL_ACTIVATION),
    CRITIC: (CRITIC_ACTIVATION, IDENTITY),
    TARGET: (CRITIC_ACTIVATION, IDENTITY),
    DISCRIMINATOR: (DISCRIMINATOR_ACTIVATION, IDENTITY),
}


@dataclass(frozen=True)
class NetworkBundle:
    """Networks and optimizer states of a run

    Attributes:
        velocity: Velocity field of the flow policy.
        policy: One-step policy.
        critics: Critic ensemble with targets.
        discriminator: Discriminator.
        optimizers: Adam state per network name (``velocity``, ``policy``,
            ``discriminator``, ``critic0``, ...).
        step: Number of completed gradient steps.
    """
    velocity: MlpParams
    policy: MlpParams
    critics: CriticEnsemble
    discriminator: Discriminator
    optimizers: Dict[str, AdamState] = field(default_factory=dict)
    step: int = 0

    @property
    def obs_dim(self) -> int:
        return self.policy.n_inputs - self.policy.n_outputs

    @property
    def action_dim(self) -> int:
        return self.policy.n_outputs

    def update(self, **changes) -> 'NetworkBundle':
        return replace(self, **changes)

    def networks(self) -> Dict[str, MlpParams]:
        """Every network by storage name"""
        result = {VELOCITY: self.velocity, POLICY: self.policy,
                  DISCRIMINATOR: self.discriminator.params}
        for i, (member, target) in enumerate(zip(self.critics.members,
                                                 self.critics.targets)):
            result[f'{CRITIC}{i}'] = member
            result[f'{TARGET}{i}'] = target
        return result


def init_bundle(
        obs_dim: int,
        action_dim: int,
        hidden_sizes: Dict[str, Sequence[int]],
        learning_rates: Dict[str, float],
        num_critics: int,
        rng: np.random.Generator,
        tau: float = 0.005,
        disc_coef: float = 10.0,
        disc_decay: float = 0.0
) -> NetworkBundle:
    """Freshly initialized networks with fresh Adam states

    Arguments:
        obs_dim: Observation dimension.
        action_dim: Action dimension.
        hidden_sizes: Hidden layer extents per component (``critic``,
            ``flow``, ``discriminator``, ``policy``).
        learning_rates: Learning rate per component.
        num_critics: Ensemble size.
        rng: Random generator.
        tau: Polyak rate.
        disc_coef: Discriminator loss coefficient.
        disc_decay: Decay rate of the discriminator coefficient.
    """
    critics = init_critic_ensemble(obs_dim, action_dim,
                                   hidden_sizes[CRITIC], num_critics, rng,
                                   tau)
    velocity = init_velocity_field(obs_dim, action_dim, hidden_sizes[FLOW],
                                   rng)
    discriminator = init_discriminator(obs_dim, action_dim,
                                       hidden_sizes[DISCRIMINATOR], rng,
                                       disc_coef, disc_decay)
    policy = init_one_step_policy(obs_dim, action_dim, hidden_sizes[POLICY],
                                  rng)
    optimizers = {
        VELOCITY: init_adam(velocity, learning_rates[FLOW]),
        POLICY: init_adam(policy, learning_rates[POLICY]),
        DISCRIMINATOR: init_adam(discriminator.params,
                                 learning_rates[DISCRIMINATOR]),
    }
    for i, member in enumerate(critics.members):
        optimizers[f'{CRITIC}{i}'] = init_adam(member,
                                               learning_rates[CRITIC])
    return NetworkBundle(velocity=velocity, policy=policy, critics=critics,
                         discriminator=discriminator, optimizers=optimizers)


def params_checksum(params: MlpParams) -> str:
    """SHA-1 of the raw parameter bytes"""
    digest = hashlib.sha1()
    for tensor in params.tensors():
        digest.update(np.ascontiguousarray(tensor, dtype='<f8').tobytes())
    return digest.hexdigest()


def save_bundle(bundle: NetworkBundle, filename: Union[str, Path]) -> None:
    """Write a bundle to a tensor container

    Tensor names encode network and layer (``critic0/W1``), optimizer
    state (``adam/policy/m3``) and scalars (``meta/step``), so that
    :func:`load_bundle` needs no config.
    """
    tensors = {}
    for name, params in bundle.networks().items():
        for i, (w, b) in enumerate(zip(params.weights, params.biases)):
            tensors[f'{name}/W{i}'] = w
            tensors[f'{name}/b{i}'] = b
    for name, state in bundle.optimizers.items():
        for key in ('step', 'lr', 'beta1', 'beta2', 'eps'):
            tensors[f'adam/{name}/{key}'] = np.array(getattr(state, key),
                                                     dtype=float)
        for i, (m, v) in enumerate(zip(state.m, state.v)):
            tensors[f'adam/{name}/m{i}'] = m
            tensors[f'adam/{name}/v{i}'] = v
    tensors['meta/step'] = np.array(bundle.step, dtype=float)
    tensors['meta/tau'] = np.array(bundle.critics.tau)
    tensors['meta/disc_coef'] = np.array(bundle.discriminator.coef)
    tensors['meta/disc_decay'] = np.array(bundle.discriminator.decay)
    write_tensors(filename, tensors)


def _network(tensors: Dict[str, np.ndarray], name: str,
             kind: Optional[str] = None) -> MlpParams:
    n_layers = 0
    while f'{name}/W{n_layers}' in tensors:
        n_layers += 1
    if not n_layers:
        raise ValueError(f"Checkpoint lacks network '{name}'.")
    activation, final_activation = _ACTIVATIONS[kind or name]
    return MlpParams(
        weights=[tensors[f'{name}/W{i}'] for i in range(n_layers)],
        biases=[tensors[f'{name}/b{i}'] for i in range(n_layers)],
        activation=activation, final_activation=final_activation)


def _adam(tensors: Dict[str, np.ndarray], name: str) -> AdamState:
    prefix = f'adam/{name}'
    n_tensors = 0
    while f'{prefix}/m{n_tensors}' in tensors:
        n_tensors += 1
    return AdamState(
        step=int(tensors[f'{prefix}/step']),
        m=tuple(tensors[f'{prefix}/m{i}'] for i in range(n_tensors)),
        v=tuple(tensors[f'{prefix}/v{i}'] for i in range(n_tensors)),
        lr=float(tensors[f'{prefix}/lr']),
        beta1=float(tensors[f'{prefix}/beta1']),
        beta2=float(tensors[f'{prefix}/beta2']),
        eps=float(tensors[f'{prefix}/eps']))


def load_bundle(filename: Union[str, Path]) -> NetworkBundle:
    """Read a bundle written by :func:`save_bundle`

    Raises:
        FileNotFoundError: if the checkpoint does not exist.
        ValueError: if the checkpoint is malformed.
    """
    tensors = read_tensors(filename)
    n_critics = 0
    while f'{CRITIC}{n_critics}/W0' in tensors:
        n_critics += 1
    critics = CriticEnsemble(
        members=[_network(tensors, f'{CRITIC}{i}', CRITIC)
                 for i in range(n_critics)],
        targets=[_network(tensors, f'{TARGET}{i}', TARGET)
                 for i in range(n_critics)],
        tau=float(tensors['meta/tau']))
    discriminator = Discriminator(
        params=_network(tensors, DISCRIMINATOR),
        coef=float(tensors['meta/disc_coef']),
        decay=float(tensors['meta/disc_decay']))
    names = {key.split('/')[1] for key in tensors if key.startswith('adam/')}
    return NetworkBundle(
        velocity=_network(tensors, VELOCITY),
        policy=_network(tensors, POLICY),
        critics=critics,
        discriminator=discriminator,
        optimizers={name: _adam(tensors, name) for name in sorted(names)},
        step=int(tensors['meta/step']))
