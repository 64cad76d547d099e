import sys
import tempfile
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import pytest

from cfql.C import *
from cfql.visualize import (plot_learning_curves, plot_losses, plot_runs,
                            plot_sweep)
from cfql.visualize.cli import _cfql_visualize_main

# Avoid errors when plotting without X server
plt.switch_backend('agg')


@pytest.fixture
def metrics_df():
    rows = []
    for step in range(1, 11):
        rows.append({STEP: step, PHASE: PHASE_OFFLINE,
                     CRITIC_LOSS: 1.0 / step, FLOW_LOSS: 0.5,
                     POLICY_LOSS: -step, DISCRIMINATOR_LOSS: 0.7})
        if step % 5 == 0:
            rows.append({STEP: step, PHASE: PHASE_EVAL,
                         SUCCESS_RATE: step / 10, SUCCESS_SE: 0.05})
    return pd.DataFrame(rows)


@pytest.fixture
def sweep_df():
    return pd.DataFrame({AXIS: [AXIS_DISC_COEF] * 3,
                         VALUE: [1.0, 5.0, 10.0],
                         MEAN_SUCCESS: [0.2, 0.6, 0.5],
                         SUCCESS_SE: [0.05, 0.04, 0.1],
                         'tail_variance': [0.0, 0.01, 0.05],
                         UNSTABLE: [False, False, True]})


def test_plot_learning_curves(metrics_df):
    ax = plot_learning_curves(metrics_df, label='cfql')
    np.testing.assert_array_equal(ax.lines[0].get_xdata(), [5, 10])
    np.testing.assert_array_equal(ax.lines[0].get_ydata(), [0.5, 1.0])
    assert ax.get_legend() is not None
    plt.close('all')


def test_plot_runs(metrics_df):
    ax = plot_runs({'fql': metrics_df,
                    'cfql': metrics_df.assign(
                        **{SUCCESS_RATE: metrics_df[SUCCESS_RATE] / 2})})
    assert len(ax.lines) == 2
    plt.close('all')


def test_plot_losses(metrics_df):
    fig = plot_losses(metrics_df)
    # distill loss and robust Q are not recorded
    assert len(fig.axes) == 4
    plt.close('all')


def test_plot_losses_without_losses(metrics_df, caplog):
    n_figures = len(plt.get_fignums())
    evaluations = metrics_df[metrics_df[PHASE] == PHASE_EVAL]
    assert plot_losses(evaluations) is None
    assert 'No loss values' in caplog.text
    assert plot_losses(metrics_df, columns=[DISTILL_LOSS]) is None
    assert len(plt.get_fignums()) == n_figures


def test_plot_sweep(sweep_df):
    ax = plot_sweep(sweep_df)
    assert [label.get_text() for label in ax.get_xticklabels()] \
        == ['1', '5', '10']
    assert ax.get_xlabel() == AXIS_DISC_COEF
    assert ax.get_legend() is not None
    plt.close('all')


def test_cli(metrics_df, sweep_df, monkeypatch):
    with tempfile.TemporaryDirectory() as tmpdir:
        tmpdir = Path(tmpdir)
        for name in ('fql', 'cfql'):
            (tmpdir / name).mkdir()
            metrics_df.to_csv(tmpdir / name / METRICS_FILE, index=False)
        sweep_file = tmpdir / 'sweep_disc_coef.csv'
        sweep_df.to_csv(sweep_file, index=False)
        out_dir = tmpdir / 'plots'

        monkeypatch.setattr(sys, 'argv', [
            'cfql_visualize', '-r', str(tmpdir / 'fql'), str(tmpdir / 'cfql'),
            '-s', str(sweep_file), '-o', str(out_dir)])
        _cfql_visualize_main()
        assert sorted(p.name for p in out_dir.iterdir()) == [
            'learning_curves.png', 'losses_cfql.png', 'losses_fql.png',
            'sweep_disc_coef.png']
