"""Tests for cfql.bundle"""
import tempfile
from pathlib import Path

import numpy as np
import pytest

from cfql.bundle import init_bundle, load_bundle, params_checksum, \
    save_bundle
from cfql.C import *
from cfql.container import read_tensors, write_tensors
from cfql.dataset import Batch
from cfql.trainer import TrainConfig, make_rngs, train_step


@pytest.fixture
def config():
    return TrainConfig(hidden_sizes={component: [8] for component in
                                     CONFIG_COMPONENTS},
                       num_critics=3, batch_size=16, flow_steps=3)


@pytest.fixture
def bundle(config):
    return init_bundle(2, 1, config.hidden_sizes, config.learning_rates,
                       config.num_critics, np.random.default_rng(0),
                       tau=0.01, disc_coef=2.0, disc_decay=0.001)


def random_batch(rng, n=16):
    return Batch(obs=rng.standard_normal((n, 2)),
                 actions=rng.uniform(-1, 1, (n, 1)),
                 rewards=rng.random(n),
                 next_obs=rng.standard_normal((n, 2)),
                 dones=np.zeros(n))


def test_init_bundle(bundle):
    assert bundle.obs_dim == 2
    assert bundle.action_dim == 1
    assert bundle.step == 0
    assert bundle.critics.size == 3
    assert sorted(bundle.networks()) == sorted(
        [VELOCITY, POLICY, DISCRIMINATOR, 'critic0', 'critic1', 'critic2',
         'target0', 'target1', 'target2'])
    assert sorted(bundle.optimizers) == sorted(
        [VELOCITY, POLICY, DISCRIMINATOR, 'critic0', 'critic1', 'critic2'])
    assert bundle.velocity.n_inputs == 1 + 2 + 1
    assert bundle.policy.final_activation == TANH
    # targets start as copies
    for member, target in zip(bundle.critics.members,
                              bundle.critics.targets):
        assert params_checksum(member) == params_checksum(target)


def test_save_load(bundle, config):
    rng = np.random.default_rng(1)
    rngs = make_rngs(0)
    bundle, _ = train_step(bundle, random_batch(rng), config, rngs)

    with tempfile.TemporaryDirectory() as tmpdir:
        filename = Path(tmpdir, 'bundle.cfql')
        save_bundle(bundle, filename)
        loaded = load_bundle(filename)

    assert loaded.step == 1
    assert loaded.critics.tau == 0.01
    assert loaded.discriminator.coef == 2.0
    assert loaded.discriminator.decay == 0.001
    for name, params in bundle.networks().items():
        other = loaded.networks()[name]
        assert params_checksum(params) == params_checksum(other)
        assert other.activation == params.activation
        assert other.final_activation == params.final_activation
    for name, state in bundle.optimizers.items():
        assert loaded.optimizers[name].step == state.step
        assert loaded.optimizers[name].lr == state.lr

    # training continues identically from the checkpoint
    batch = random_batch(rng)
    continued, _ = train_step(bundle, batch, config, make_rngs(5))
    resumed, _ = train_step(loaded, batch, config, make_rngs(5))
    for name, params in continued.networks().items():
        assert params_checksum(params) \
            == params_checksum(resumed.networks()[name])


def test_load_incomplete_checkpoint(bundle):
    with tempfile.TemporaryDirectory() as tmpdir:
        filename = Path(tmpdir, 'bundle.cfql')
        save_bundle(bundle, filename)
        tensors = read_tensors(filename)
        del tensors['velocity/W0']
        write_tensors(filename, tensors)
        with pytest.raises(ValueError, match='velocity'):
            load_bundle(filename)


def test_checksum_detects_changes(bundle):
    policy = bundle.policy
    changed = policy.with_tensors([t + (i == 0) * 1e-12 for i, t in
                                   enumerate(policy.tensors())])
    assert params_checksum(policy) != params_checksum(changed)
    assert params_checksum(policy) == params_checksum(policy.copy())
