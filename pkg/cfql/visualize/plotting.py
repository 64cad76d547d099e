"""Learning curves and sweep summaries"""

import logging
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from ..C import *  # noqa: F403

__all__ = ['plot_learning_curves', 'plot_losses', 'plot_runs', 'plot_sweep']

logger = logging.getLogger(__name__)

#: Loss columns shown by :func:`plot_losses`
LOSS_COLUMNS = [CRITIC_LOSS, FLOW_LOSS, DISCRIMINATOR_LOSS, POLICY_LOSS,
                DISTILL_LOSS, ROBUST_Q]


def _as_df(metrics: Union[str, Path, pd.DataFrame]) -> pd.DataFrame:
    if isinstance(metrics, pd.DataFrame):
        return metrics
    return pd.read_csv(metrics)


def plot_learning_curves(
        metrics: Union[str, Path, pd.DataFrame],
        ax: Optional[plt.Axes] = None,
        label: Optional[str] = None
) -> plt.Axes:
    """Success rate over gradient steps with a one-SE band

    Arguments:
        metrics: Metrics table or ``metrics.csv`` file.
        ax: Axes to draw on, a new figure if not given.
        label: Legend label.

    Returns:
        The axes.
    """
    df = _as_df(metrics)
    df = df[df[PHASE] == PHASE_EVAL]
    if ax is None:
        _, ax = plt.subplots()
    steps = df[STEP].to_numpy()
    mean = df[SUCCESS_RATE].to_numpy()
    se = df[SUCCESS_SE].to_numpy() if SUCCESS_SE in df else np.zeros_like(
        mean)
    line, = ax.plot(steps, mean, marker='o', label=label)
    ax.fill_between(steps, mean - se, mean + se, alpha=0.2,
                    color=line.get_color())
    ax.set_xlabel('gradient step')
    ax.set_ylabel('success rate')
    ax.set_ylim(-0.05, 1.05)
    if label is not None:
        ax.legend()
    return ax


def plot_runs(runs: Dict[str, Union[str, Path, pd.DataFrame]],
              ax: Optional[plt.Axes] = None) -> plt.Axes:
    """Learning curves of several labelled runs on shared axes"""
    if ax is None:
        _, ax = plt.subplots()
    for label, metrics in runs.items():
        plot_learning_curves(metrics, ax=ax, label=label)
    return ax


def plot_losses(
        metrics: Union[str, Path, pd.DataFrame],
        columns: Sequence[str] = tuple(LOSS_COLUMNS)
) -> Optional[plt.Figure]:
    """One panel per recorded loss over gradient steps

    Returns:
        The figure, or ``None`` if none of ``columns`` has a value.
    """
    df = _as_df(metrics)
    df = df[df[PHASE] != PHASE_EVAL]
    columns = [c for c in columns if c in df and df[c].notna().any()]
    if not columns:
        logger.warning("No loss values recorded, nothing to plot.")
        return None
    fig, axes = plt.subplots(len(columns), 1, squeeze=False, sharex=True,
                             figsize=(6, 2 * max(1, len(columns))))
    for ax, column in zip(axes[:, 0], columns):
        sns.lineplot(data=df, x=STEP, y=column, hue=PHASE, ax=ax)
    fig.tight_layout()
    return fig


def plot_sweep(summary: Union[str, Path, pd.DataFrame],
               ax: Optional[plt.Axes] = None) -> plt.Axes:
    """Mean final success per axis value with SE bars, unstable values
    marked"""
    df = _as_df(summary)
    if ax is None:
        _, ax = plt.subplots()
    positions = np.arange(len(df))
    ax.errorbar(positions, df[MEAN_SUCCESS], yerr=df[SUCCESS_SE], fmt='o',
                capsize=3)
    ax.set_xticks(positions)
    ax.set_xticklabels([f'{value:g}' for value in df[VALUE]])
    if UNSTABLE in df:
        unstable = df[UNSTABLE].astype(bool).to_numpy()
        ax.scatter(positions[unstable], df[MEAN_SUCCESS][unstable],
                   marker='x', color='red', zorder=3, label=UNSTABLE)
        if unstable.any():
            ax.legend()
    ax.set_xlabel(str(df[AXIS].iloc[0]) if AXIS in df and len(df) else
                  VALUE)
    ax.set_ylabel('mean final success')
    return ax
