"""
Visualize
=========

Plots of run and sweep tables. Those need to be imported via
import cfql.visualize; training never imports them.

"""

from .plotting import (plot_learning_curves, plot_losses, plot_runs,
                       plot_sweep)

__all__ = ["plot_learning_curves",
           "plot_losses",
           "plot_runs",
           "plot_sweep",
           ]
