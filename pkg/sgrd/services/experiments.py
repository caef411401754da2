"""
Experiment Runner

This service turns a validated ExperimentConfig into artifacts: it resolves
runtime overrides, dispatches on the experiment kind, writes the manifest,
CSV tables and summary, and maps failures to process exit codes.
"""

import dataclasses
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import Config
from sgrd import __version__
from sgrd.exceptions import (ArtifactIOError, BlowUpError, ConfigError, DegeneratePairError, DomainError,
                             RegimeError, ShapeError, UsageError)
from sgrd.models import ExperimentConfig, Params, RecordSpec
from sgrd.services import artifacts
from sgrd.services.attractor import (absorbing_check, estimate_attractor, evolve_curve, flat_curve,
                                     lifted_points, lipschitz_verify, q_spread, tempered_ics,
                                     transient_bound)
from sgrd.services.batch_runner import BatchJob, BatchRunner
from sgrd.services.core import ledger_constants, lf_rate_sum, parameter_window, regime_check
from sgrd.services.dynamics import build_solver, integrate
from sgrd.services.geometry import p_state
from sgrd.services.noise import noise_context, sample_path
from sgrd.services.rotation import (ensemble_rho, ic_family, order_report, overdamped_rotation,
                                    pendulum_oracle)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_IO = 4

ABSORBING_STREAM = 0x616273
ABSORBING_Q_MAX = 1e3

SWEEP_COLUMNS = [
    'alpha', 'kappa', 'seed', 'delta', 'a', 'a_positive', 'curve_regime', 'gamma_exists',
    'regime_1d', 'lipschitz_ratio', 'q_spread', 'rho_hat', 'rho_spread', 'error',
]


def resolve_runtime(config: ExperimentConfig, seed: Optional[int] = None, out: Optional[str] = None,
                    workers: Optional[int] = None, settings=None) -> ExperimentConfig:
    """Apply overrides with precedence flag > environment > config file > default."""
    settings = settings or Config

    def pick(flag, env, file_value, default):
        for value in (flag, env, file_value):
            if value is not None:
                return value
        return default

    resolved_seed = config.seed if seed is None else int(seed)
    params = config.params
    if resolved_seed != params.seed:
        params = dataclasses.replace(params, seed=resolved_seed)

    # out_dir always carries a value after load_config, so the environment wins over it
    out_dir = out if out is not None else (settings.SGRD_OUT_DIR or config.out_dir or settings.DEFAULT_OUT_DIR)
    n_workers = pick(workers, settings.SGRD_WORKERS, config.workers, settings.DEFAULT_WORKERS)
    burn_in = pick(None, settings.SGRD_BURN_IN, config.burn_in, settings.DEFAULT_BURN_IN)
    if int(n_workers) < 1:
        raise ConfigError(f"workers must be at least 1, got {n_workers}")
    if float(burn_in) < 0:
        raise ConfigError(f"burn_in must be nonnegative, got {burn_in}")

    return dataclasses.replace(config, params=params, seed=resolved_seed, out_dir=str(out_dir),
                               workers=int(n_workers), burn_in=float(burn_in))


def grid_info(params: Params) -> Dict[str, Any]:
    return {
        'basis': 'neumann-cosine-orthonormal',
        'collocation': 'midpoint',
        'domain_length': params.domain_length,
        'dt': params.dt,
        'n_modes': params.n_modes,
        'n_quad': params.n_quad,
    }


def _regime_fields(params: Params) -> Dict[str, Any]:
    ledger = ledger_constants(params)
    regime = regime_check(ledger)
    window = parameter_window(params.alpha, ledger.lambda1)
    rate = lf_rate_sum(params.alpha, ledger.a, ledger.gamma_star) if ledger.a > 0 else math.inf
    return {
        'ledger': ledger.to_dict(),
        'a': ledger.a,
        'a_positive': regime.a_positive,
        'curve_regime': regime.curve_regime,
        'gamma_exists': regime.gamma_exists,
        'regime_1d': regime.regime_1d,
        'parameter_window': list(window) if window else None,
        'lf_rate_sum': rate,
    }


def _noise_path(config: ExperimentConfig, t0: float, t1: float, realization_id: int = 0):
    params = config.params
    if params.noise_free:
        return None
    path = sample_path(params.m, t0, t1, params.dt, params.seed, realization_id)
    return noise_context(params, path, burn_in=config.burn_in)


def check_params(config: ExperimentConfig, out_dir: Path) -> Dict[str, Any]:
    summary = _regime_fields(config.params)
    if not summary['regime_1d']:
        logger.warning(f"Parameters outside the one-dimensional regime (a={summary['a']:.6g})")
    return summary


def simulate(config: ExperimentConfig, out_dir: Path) -> Dict[str, Any]:
    params = config.params
    solver = build_solver(params)
    ctx = _noise_path(config, 0.0, config.t_end)

    y0 = p_state(config.initial_mean, solver.geom)
    y0[1, 0] = config.initial_velocity * solver.geom.sqrt_length
    rec = integrate(y0, ctx, 0.0, config.t_end, params, RecordSpec(every=config.record_every),
                    solver=solver, burn_in=config.burn_in)

    artifacts.write_frame(out_dir / 'trajectory.csv', artifacts.trajectory_frame(rec))
    artifacts.save_checkpoint(out_dir, 'final_state', rec.final,
                              {'t': config.t_end, 'seed': params.seed, 'realization_id': 0})
    summary = _regime_fields(params)
    summary.update({
        't_end': config.t_end,
        'n_records': int(rec.times.size),
        'final_s': float(rec.s[-1]),
        'final_q_norm': float(rec.q_norm[-1]),
        'mean_velocity': float((rec.s[-1] - rec.s[0]) / config.t_end) if config.t_end > 0 else None,
    })
    return summary


def attractor(config: ExperimentConfig, out_dir: Path) -> Dict[str, Any]:
    params = config.params
    if not config.t_ladder:
        raise UsageError("attractor runs need a nonempty t_ladder")
    solver = build_solver(params)
    ladder = sorted(config.t_ladder)
    ctx = _noise_path(config, -max(ladder), 0.0)
    ledger = ledger_constants(params)

    rng = np.random.default_rng(np.random.SeedSequence([params.seed, 0, ABSORBING_STREAM]))
    ics = tempered_ics(config.n_ics, solver.geom, rng, q_max=ABSORBING_Q_MAX, q_min=1.0)
    absorbing = absorbing_check(params, ctx, ics, ladder, solver=solver, workers=config.workers)
    estimate = estimate_attractor(params, ctx, ladder, n_p=config.n_p, curve_tol=config.curve_tol,
                                  n_validation=config.n_validation, solver=solver,
                                  workers=config.workers)

    artifacts.write_frame(out_dir / 'absorbing.csv', artifacts.rows_frame(
        ({'T': T, 'max_q_norm': q, 'r0': absorbing.r0, 'inside': ok, 'max_graph_norm': g,
          'r1': absorbing.r1, 'within_r1': ok1,
          'transient_bound': transient_bound(ledger, absorbing.bounds, ABSORBING_Q_MAX, T)}
         for T, q, ok, g, ok1 in zip(absorbing.t_ladder, absorbing.max_q_norm, absorbing.inside,
                                     absorbing.max_graph_norm, absorbing.within_r1)),
        ['T', 'max_q_norm', 'r0', 'inside', 'max_graph_norm', 'r1', 'within_r1', 'transient_bound']))
    steps = [float('nan')] + list(estimate.hausdorff_steps)
    artifacts.write_frame(out_dir / 'ladder.csv', artifacts.rows_frame(
        ({'T': T, 'hausdorff_step': d} for T, d in zip(estimate.t_ladder, steps)),
        ['T', 'hausdorff_step']))
    artifacts.write_frame(out_dir / 'curve.csv', artifacts.curve_frame(estimate.curve))

    summary = _regime_fields(params)
    summary.update({
        'r0': absorbing.r0,
        'r1': absorbing.r1,
        'tempered_bounds': dataclasses.asdict(absorbing.bounds),
        'entry_horizon': absorbing.entry_horizon,
        'absorbed': bool(all(absorbing.inside[-1:])),
        'converged': estimate.converged,
        'pullback_T': estimate.pullback_T,
        'hausdorff_step': estimate.hausdorff_step,
        'q_residual': estimate.q_residual,
        'decay_rate': estimate.decay_rate,
        'gamma_star': ledger.gamma_star,
        'lipschitz_ratio': estimate.lipschitz.max_ratio,
        'lipschitz_passed': estimate.lipschitz.passed,
        'order_violation': estimate.curve.order_violation,
    })
    return summary


def _constant_forcing(params: Params) -> Optional[float]:
    """Mean of ``f`` when ``f`` is spatially constant, else ``None``."""
    if np.any(params.f_coeffs[1:]):
        return None
    return float(params.f_coeffs[0] / math.sqrt(params.domain_length))


def rotation(config: ExperimentConfig, out_dir: Path) -> Dict[str, Any]:
    params = config.params
    T = config.rotation_T
    solver = build_solver(params)
    estimate = ensemble_rho(params, config.n_realizations, config.n_ics, T, solver=solver,
                            workers=config.workers, burn_in=config.burn_in)

    # The IC family is ordered in s, so its record doubles as the order check
    ctx = _noise_path(config, 0.0, T)
    rec = integrate(ic_family(config.n_ics, solver.geom), ctx, 0.0, T, params,
                    RecordSpec(every=config.record_every), solver=solver)
    order = order_report(rec)
    artifacts.write_frame(out_dir / 'trajectory.csv', artifacts.trajectory_frame(rec))
    artifacts.write_frame(out_dir / 'rotation.csv', artifacts.rows_frame(
        ({'key': key, 'rho': value} for key, value in sorted(estimate.per_ic.items())), ['key', 'rho']))

    summary = _regime_fields(params)
    summary.update({
        'rho_hat': estimate.rho_hat,
        'T': T,
        'ci_halfwidth': estimate.ci_halfwidth,
        'ic_spread': estimate.ic_spread,
        'agreement_tolerance': estimate.agreement_tolerance,
        'ics_agree': estimate.ics_agree,
        'order_violations': order.violations,
        'max_gap_inversion': order.max_gap_inversion,
    })
    f_bar = _constant_forcing(params)
    if params.noise_free and f_bar is not None:
        summary['pendulum_oracle'] = pendulum_oracle(params.alpha, f_bar, T=T, dt=params.dt)
        summary['overdamped_rotation'] = overdamped_rotation(params.alpha, f_bar)
    return summary


def materialize_sweep(config: ExperimentConfig) -> List[Tuple[int, float, float, int]]:
    """Grid points ``(index, alpha, kappa, seed)`` in lexicographic order."""
    if not config.sweep_alpha or not config.sweep_kappa:
        raise UsageError("a sweep needs nonempty sweep_alpha and sweep_kappa grids")
    grid = sorted((float(a), float(k)) for a in config.sweep_alpha for k in config.sweep_kappa)
    points = []
    for index, (alpha, kappa) in enumerate(grid):
        seed = int(np.random.SeedSequence([config.seed, index]).generate_state(1)[0])
        points.append((index, alpha, kappa, seed))
    return points


def _sweep_point(config: ExperimentConfig, alpha: float, kappa: float, seed: int) -> Dict[str, Any]:
    params = dataclasses.replace(config.params, alpha=alpha, kappa=kappa, seed=seed)
    local = dataclasses.replace(config, params=params, seed=seed, workers=1)
    regime = _regime_fields(params)
    row = {k: regime[k] for k in ('a', 'a_positive', 'curve_regime', 'gamma_exists', 'regime_1d')}
    row['delta'] = regime['ledger']['delta']

    solver = build_solver(params)
    geom = solver.geom
    horizon = min(config.t_ladder) if config.t_ladder else 10.0
    ctx = _noise_path(local, -horizon, 0.0)
    upper = evolve_curve(flat_curve(config.n_p, geom, 1.0), ctx, horizon, params, solver=solver)
    lower = evolve_curve(flat_curve(config.n_p, geom, -1.0), ctx, horizon, params, solver=solver)
    row['lipschitz_ratio'] = lipschitz_verify(upper, geom).max_ratio
    states = np.concatenate([lifted_points(upper, geom), lifted_points(lower, geom)])
    row['q_spread'] = q_spread(states, geom, p_tol=math.pi / (2 * config.n_p))

    estimate = ensemble_rho(params, config.n_realizations, config.n_ics, config.rotation_T,
                            solver=solver, workers=1, burn_in=config.burn_in)
    row['rho_hat'] = estimate.rho_hat
    row['rho_spread'] = max(estimate.ic_spread)
    return row


def sweep(config: ExperimentConfig, out_dir: Path) -> Dict[str, Any]:
    points = materialize_sweep(config)
    jobs = [BatchJob(f"alpha={alpha:g}, kappa={kappa:g}", _sweep_point, (config, alpha, kappa, seed))
            for _, alpha, kappa, seed in points]
    results = BatchRunner(config.workers).run(jobs, raise_errors=False)

    rows = []
    for (_, alpha, kappa, seed), result in zip(points, results):
        row = {'alpha': alpha, 'kappa': kappa, 'seed': seed, 'error': ''}
        if result.status == 'success':
            row.update(result.value)
        else:
            row['error'] = f"{type(result.exception).__name__}: {result.error}"
        rows.append(row)
    artifacts.write_frame(out_dir / 'phase_table.csv', artifacts.rows_frame(rows, SWEEP_COLUMNS))

    failed = sum(1 for row in rows if row['error'])
    return {
        'n_points': len(rows),
        'n_failed': failed,
        'n_regime_1d': sum(1 for row in rows if row.get('regime_1d') is True),
        'grid_alpha': sorted(set(config.sweep_alpha)),
        'grid_kappa': sorted(set(config.sweep_kappa)),
    }


KIND_HANDLERS = {
    'check-params': check_params,
    'simulate': simulate,
    'attractor': attractor,
    'rotation': rotation,
    'sweep': sweep,
}


def execute(config: ExperimentConfig) -> Dict[str, Any]:
    """Run one resolved experiment and write its manifest, tables and summary."""
    handler = KIND_HANDLERS.get(config.kind)
    if handler is None:
        raise ConfigError(f"unknown experiment kind '{config.kind}'")
    out_dir = Path(config.out_dir)
    artifacts.write_manifest(out_dir, config.to_dict(), grid_info(config.params), __version__)
    summary = handler(config, out_dir)
    summary = {'kind': config.kind, 'seed': config.seed, **summary}
    artifacts.write_summary(out_dir, summary)
    return summary


def run(config: ExperimentConfig) -> int:
    """Execute ``config`` and return the process exit code."""
    logger.info(f"Starting {config.kind} run into {config.out_dir}")
    try:
        execute(config)
    except (ConfigError, DomainError, RegimeError, DegeneratePairError, ShapeError, UsageError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except BlowUpError as e:
        logger.error(f"Numerical blow-up at t={e.t:.6g}: {e}")
        return EXIT_BLOWUP
    except (ArtifactIOError, OSError) as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    logger.info(f"Finished {config.kind} run; artifacts in {config.out_dir}")
    return EXIT_OK
