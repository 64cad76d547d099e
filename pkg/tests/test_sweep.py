"""Tests for cfql.sweep"""
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from cfql.C import *
from cfql.sweep import (COMPARISON_CONFIG, IMPROVED, RUNS, TAIL_VARIANCE,
                        compare_finetuning, compare_modes, success_gap,
                        sweep, tail_variance)
from cfql.trainer import TrainConfig


@pytest.fixture
def template():
    return TrainConfig(
        env=CONFOUNDED_BANDIT, dataset_episodes=20, gradient_steps=4,
        eval_interval=2, batch_size=8, flow_steps=2, eval_episodes=5,
        hidden_sizes={component: [8] for component in CONFIG_COMPONENTS})


def test_tail_variance():
    assert tail_variance([0.1, 0.2, 0.5, 0.5, 0.5]) == 0.0
    # last 2 of 10
    assert tail_variance(np.arange(10) / 10) == pytest.approx(0.0025)
    assert tail_variance([0.3]) == 0.0
    assert np.isnan(tail_variance([]))


def test_sweep(template):
    with tempfile.TemporaryDirectory() as tmpdir:
        summary = sweep(template, AXIS_ENSEMBLES, values=[2, 3],
                        seeds=[0, 1], out_dir=tmpdir)
        assert list(summary[VALUE]) == [2, 3]
        assert list(summary[RUNS]) == [2, 2]
        assert (summary[AXIS] == AXIS_ENSEMBLES).all()
        assert summary[MEAN_SUCCESS].between(0, 1).all()
        assert (summary[TAIL_VARIANCE] >= 0).all()
        assert summary[UNSTABLE].dtype == bool

        saved = pd.read_csv(Path(tmpdir, f'sweep_{AXIS_ENSEMBLES}.csv'))
        assert list(saved.columns) == list(summary.columns)
        for value in (2, 3):
            for seed in (0, 1):
                assert Path(tmpdir, f'{AXIS_ENSEMBLES}={value}',
                            f'seed={seed}', RESULT_FILE).exists()


def test_sweep_in_memory(template):
    summary = sweep(template, AXIS_DISC_COEF, values=[5.0], seeds=[0])
    assert len(summary) == 1
    assert summary[SUCCESS_SE].iloc[0] == 0.0
    assert not summary[UNSTABLE].iloc[0]

    again = sweep(template, AXIS_DISC_COEF, values=[5.0], seeds=[0])
    pd.testing.assert_frame_equal(summary, again)


def test_sweep_invalid(template):
    with pytest.raises(ValueError, match='Unknown sweep axis'):
        sweep(template, 'alpha')
    with pytest.raises(ValueError):
        sweep(template, AXIS_DISC_COEF, values=[])
    with pytest.raises(ValueError):
        sweep(template, AXIS_DISC_COEF, seeds=[])


def test_compare_modes(template):
    with tempfile.TemporaryDirectory() as tmpdir:
        summary = compare_modes(template, seeds=[0, 1], out_dir=tmpdir)
        assert list(summary[MODE]) == [MODE_FQL, MODE_CFQL]
        assert list(summary[RUNS]) == [2, 2]
        assert summary[MEAN_SUCCESS].between(0, 1).all()
        assert (summary[SUCCESS_SE] >= 0).all()
        for mode in (MODE_FQL, MODE_CFQL):
            for seed in (0, 1):
                assert Path(tmpdir, f'{MODE}={mode}', f'seed={seed}',
                            RESULT_FILE).exists()
        saved = pd.read_csv(Path(tmpdir, 'compare_modes.csv'))
        assert list(saved[MODE]) == list(summary[MODE])

    with pytest.raises(ValueError):
        compare_modes(template, seeds=[])


def test_success_gap():
    def summary(fql, cfql, se=0.05):
        return pd.DataFrame({MODE: [MODE_FQL, MODE_CFQL],
                             MEAN_SUCCESS: [fql, cfql],
                             SUCCESS_SE: [se, se]})

    gap = success_gap(summary(0.4, 0.5))
    assert gap['ratio'] == pytest.approx(1.25)
    assert gap['ratio_holds'] and gap['not_worse']

    gap = success_gap(summary(0.4, 0.44))
    assert not gap['ratio_holds'] and gap['not_worse']
    assert success_gap(summary(0.4, 0.44), min_ratio=1.1)['ratio_holds']

    gap = success_gap(summary(0.4, 0.34))
    assert not gap['ratio_holds'] and not gap['not_worse']

    gap = success_gap(summary(0.0, 0.1))
    assert np.isnan(gap['ratio'])
    assert gap['ratio_holds'] and gap['not_worse']


def test_compare_finetuning(template):
    tuned = template.replace(online={'steps': 3, 'buffer_size': 10})
    with tempfile.TemporaryDirectory() as tmpdir:
        summary = compare_finetuning(tuned, seeds=[0, 1], out_dir=tmpdir)
        assert Path(tmpdir, 'compare_finetuning.csv').exists()
    assert list(summary[OBJECTIVE]) == ONLINE_OBJECTIVES
    assert summary[OFFLINE_SUCCESS].nunique() == 1
    assert summary[ONLINE_SUCCESS].between(0, 1).all()
    assert list(summary[IMPROVED]) == list(
        summary[ONLINE_SUCCESS] >= summary[OFFLINE_SUCCESS])

    with pytest.raises(ValueError, match='online steps'):
        compare_finetuning(template)
    with pytest.raises(ValueError, match='continuous'):
        compare_finetuning(tuned.replace(env=TABULAR_CHAIN))


def test_shipped_comparison_config():
    config = TrainConfig.from_yaml(COMPARISON_CONFIG)
    assert config.env == TWO_GOAL_REACHER
    assert config.online['steps'] > 0
    assert config.eval_interval > 0


@pytest.mark.slow
def test_reacher_comparison_at_reduced_budget():
    config = TrainConfig.from_yaml(COMPARISON_CONFIG).replace(
        gradient_steps=200, eval_interval=100, eval_episodes=20,
        dataset_episodes=50, online={'steps': 100})
    summary = compare_modes(config, seeds=[0, 1])
    gap = success_gap(summary)
    means = summary.set_index(MODE)[MEAN_SUCCESS]
    assert gap['ratio_holds'] == bool(
        means[MODE_CFQL] >= 1.2 * means[MODE_FQL])

    finetuning = compare_finetuning(config, seeds=[0])
    assert list(finetuning[IMPROVED]) == list(
        finetuning[ONLINE_SUCCESS] >= finetuning[OFFLINE_SUCCESS])
