"""Command-line interface for visualization."""
import argparse
from pathlib import Path

import matplotlib.pyplot as plt

from ..C import METRICS_FILE
from .plotting import plot_losses, plot_runs, plot_sweep


def _parse_cli_args():
    """Parse command-line arguments."""

    parser = argparse.ArgumentParser(
        description='Plot cfql run metrics and sweep summaries.')

    parser.add_argument('-r', '--runs', dest='run_dirs', nargs='*',
                        default=[], help='Run directories')
    parser.add_argument('-s', '--sweep', dest='sweep_file_name',
                        required=False, help='Sweep summary CSV')
    parser.add_argument('-o', '--output-directory', dest='output_directory',
                        required=True, help='Output directory')
    parser.add_argument('--style', required=False,
                        dest='style_file_name',
                        help='Matplotlib style file')
    return parser.parse_args()


def _cfql_visualize_main():
    """Entrypoint for visualization command-line interface."""
    args = _parse_cli_args()

    if args.style_file_name:
        plt.style.use(args.style_file_name)

    # Avoid errors when plotting without X server
    plt.switch_backend('agg')

    output_directory = Path(args.output_directory)
    output_directory.mkdir(exist_ok=True, parents=True)

    if args.run_dirs:
        runs = {Path(run_dir).name: Path(run_dir, METRICS_FILE)
                for run_dir in args.run_dirs}
        ax = plot_runs(runs)
        ax.figure.savefig(output_directory / 'learning_curves.png')
        plt.close(ax.figure)
        for name, metrics_file in runs.items():
            fig = plot_losses(metrics_file)
            if fig is None:
                continue
            fig.savefig(output_directory / f'losses_{name}.png')
            plt.close(fig)

    if args.sweep_file_name:
        ax = plot_sweep(args.sweep_file_name)
        ax.figure.savefig(
            output_directory / f'{Path(args.sweep_file_name).stem}.png')
        plt.close(ax.figure)
