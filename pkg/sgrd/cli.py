import logging
import sys

import click

from sgrd import __version__, create_harness
from sgrd.exceptions import ConfigError
from sgrd.forms import load_config
from sgrd.services.experiments import EXIT_CONFIG, EXIT_IO, resolve_runtime, run

logger = logging.getLogger(__name__)


def _run_kind(kind, config_path, seed, out, workers):
    settings = create_harness()
    try:
        with open(config_path, 'r', encoding='utf-8') as fh:
            text = fh.read()
    except OSError as e:
        logger.error(f"Could not read config {config_path}: {e}")
        sys.exit(EXIT_IO)
    try:
        config = load_config(text, overrides={'kind': kind})
        config = resolve_runtime(config, seed=seed, out=out, workers=workers, settings=settings)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        sys.exit(EXIT_CONFIG)
    sys.exit(run(config))


def _experiment_command(kind, help_text):
    @cli.command(name=kind, help=help_text)
    @click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False),
                  help='Flat key = value experiment file.')
    @click.option('--seed', type=click.IntRange(min=0), default=None, help='Master seed (overrides the file).')
    @click.option('--out', type=click.Path(file_okay=False), default=None,
                  help='Output directory (overrides SGRD_OUT_DIR and the file; default ./runs).')
    @click.option('--workers', type=click.IntRange(min=1), default=None,
                  help='Worker threads (overrides SGRD_WORKERS and the file; default min(4, cpus)).')
    def command(config_path, seed, out, workers):
        _run_kind(kind, config_path, seed, out, workers)

    return command


@click.group()
@click.version_option(__version__, prog_name='sgrd')
def cli():
    """Stochastic damped sine-Gordon simulator and attractor toolkit.

    Defaults: L=pi, n_modes=32, n_quad=2*n_modes, dt=1e-3, delta=auto,
    h_coeffs=0.1 (one noise shape on the mean mode), f_coeffs=0, seed=0,
    burn_in=10. Exit codes: 0 success, 2 configuration error,
    3 numerical blow-up, 4 I/O error.
    """


check_params_command = _experiment_command(
    'check-params', 'Compute the constants ledger and regime flags.')
simulate_command = _experiment_command(
    'simulate', 'Integrate one trajectory forward over [0, t_end].')
attractor_command = _experiment_command(
    'attractor', 'Pullback absorbing check and horizontal-curve attractor estimate.')
rotation_command = _experiment_command(
    'rotation', 'Ensemble rotation-number estimate with the order check.')
sweep_command = _experiment_command(
    'sweep', 'Phase table over the (alpha, kappa) grid.')


def main():
    cli(prog_name='sgrd')


if __name__ == '__main__':
    main()
