import sys
from pathlib import Path

import click

sys.path.append(str(Path(__file__).resolve().parents[1]))

from sgrd.services.rotation import overdamped_rotation, pendulum_oracle


@click.command()
@click.option('--alpha', type=float, default=10.0, show_default=True)
@click.option('--f-bar', 'f_values', type=float, multiple=True, default=(0.5, 1.5, 2.0, 3.0), show_default=True)
@click.option('--horizon', type=float, default=200.0, show_default=True)
@click.option('--dt', type=float, default=1e-3, show_default=True)
def main(alpha, f_values, horizon, dt):
    """Print the pendulum rotation number next to the overdamped prediction."""
    print(f'alpha={alpha:g}, T={horizon:g}, max_step={dt:g}')
    print(f"{'f_bar':>8} {'oracle':>12} {'overdamped':>12}")
    for f_bar in f_values:
        rho = pendulum_oracle(alpha, f_bar, T=horizon, dt=dt)
        print(f'{f_bar:8.3f} {rho:12.6f} {overdamped_rotation(alpha, f_bar):12.6f}')


if __name__ == '__main__':
    main()
