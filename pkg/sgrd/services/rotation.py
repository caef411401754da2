"""Rotation-number estimation and the order-preservation check."""

import logging
import math
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from sgrd.exceptions import DomainError, UsageError
from sgrd.models import HorizontalCurve, OrderReport, Params, RecordSpec, RotationEstimate, TrajectoryRecord
from sgrd.services.attractor import lifted_points
from sgrd.services.batch_runner import BatchJob, run_jobs
from sgrd.services.dynamics import Solver, _context, build_solver, integrate
from sgrd.services.geometry import TWO_PI, EnergyGeometry, _array, p_state
from sgrd.services.noise import noise_context, sample_path

logger = logging.getLogger(__name__)

INVERSION_TOL = 1e-8


def estimate_rho(params: Params, path, y0, T: float, solver: Optional[Solver] = None,
                 burn_in: float = 10.0, record_every: Optional[int] = None):
    """Endpoint estimate ``(s(T) - s(0)) / T``; batched ``y0`` gives one value per state."""
    if not T > 0:
        raise DomainError(f"rotation horizon must be positive, got {T}")
    every = record_every or max(1, int(round(T / params.dt)))
    rec = integrate(y0, path, 0.0, T, params, RecordSpec(every=every), solver=solver, burn_in=burn_in)
    return (rec.s[-1] - rec.s[0]) / T


def phi_rotation(params: Params, path, phi0, T: float, solver: Optional[Solver] = None,
                 burn_in: float = 10.0):
    """Rotation estimate for the original variables ``phi = Y + (0, z)``."""
    solver = solver or build_solver(params)
    ctx = _context(path, params, burn_in)
    arr = _array(phi0)
    z0 = ctx.field_at(ctx.index_of(0.0)) if ctx is not None else np.zeros(solver.op.n_modes)
    zT = ctx.field_at(ctx.index_of(T)) if ctx is not None else np.zeros(solver.op.n_modes)
    y0 = arr.copy()
    y0[..., 1, :] -= z0
    rec = integrate(y0, ctx, 0.0, T, params, RecordSpec(every=max(1, int(round(T / params.dt)))),
                    solver=solver)
    # s of (0, z) is mean(z) / alpha
    shift = (zT[0] - z0[0]) / (solver.geom.alpha * solver.geom.sqrt_length)
    return (rec.s[-1] - rec.s[0] + shift) / T


def ic_family(n_ics: int, geom: EnergyGeometry) -> np.ndarray:
    """``n_ics`` states spread along one period of ``E_1`` with zero Q-part."""
    return p_state(np.arange(n_ics) * TWO_PI / n_ics, geom)


def agreement_tolerance(rho_hat: float, T: float, n_periods: int = 1) -> float:
    return max(0.02 * abs(rho_hat), 2 * n_periods * TWO_PI / T)


def _realization_rho(params: Params, realization_id: int, ics: np.ndarray, T: float,
                     solver: Solver, burn_in: float):
    if params.noise_free:
        path = None
    else:
        path = noise_context(params, sample_path(params.m, 0.0, T, params.dt, params.seed, realization_id),
                             burn_in=burn_in)
    return np.atleast_1d(estimate_rho(params, path, ics, T, solver=solver))


def ensemble_rho(params: Params, n_realizations: int, n_ics: int, T: float,
                 solver: Optional[Solver] = None, workers: Optional[int] = None,
                 burn_in: float = 10.0) -> RotationEstimate:
    if n_realizations < 1 or n_ics < 1:
        raise UsageError("ensemble_rho needs at least one realization and one initial condition")
    solver = solver or build_solver(params)
    ics = ic_family(n_ics, solver.geom)
    jobs = [BatchJob(f"realization {r}", _realization_rho, (params, r, ics, T, solver, burn_in))
            for r in range(n_realizations)]
    per_real = np.array(run_jobs(jobs, workers))

    per_ic = {f"r{r}/ic{i}": float(per_real[r, i]) for r in range(n_realizations) for i in range(n_ics)}
    ic_spread = [float(row.max() - row.min()) for row in per_real]
    means = per_real.mean(axis=1)
    rho_hat = float(means.mean())
    ci = 1.96 * float(means.std(ddof=1)) / math.sqrt(n_realizations) if n_realizations > 1 else 0.0
    tol = agreement_tolerance(rho_hat, T)
    estimate = RotationEstimate(rho_hat=rho_hat, T=T, ci_halfwidth=ci, per_ic=per_ic,
                                ic_spread=ic_spread, agreement_tolerance=tol)
    if not estimate.ics_agree:
        logger.warning(f"Initial conditions disagree: max spread {max(ic_spread):.3g} > tolerance {tol:.3g}")
    logger.info(f"rho_hat={rho_hat:.6g} over {n_realizations} realization(s) x {n_ics} IC(s), T={T:g}")
    return estimate


def order_check(params: Params, path, curve: HorizontalCurve, T: float,
                solver: Optional[Solver] = None, burn_in: float = 10.0,
                record_every: int = 10) -> OrderReport:
    """Count adjacent inversions of unreduced ``s`` for points started in order on ``curve``."""
    solver = solver or build_solver(params)
    states = lifted_points(curve, solver.geom)
    rec = integrate(states, path, 0.0, T, params, RecordSpec(every=record_every),
                    solver=solver, burn_in=burn_in)
    return order_report(rec)


def order_report(rec: TrajectoryRecord) -> OrderReport:
    """Inversions in a record of a batch started in increasing ``s``."""
    gaps = np.diff(rec.s, axis=-1)
    inverted = gaps < -INVERSION_TOL
    violations = int(np.count_nonzero(inverted))
    worst = float(max(0.0, -gaps.min())) if gaps.size else 0.0
    if violations:
        logger.warning(f"Order check: {violations} inversion(s), worst {worst:.3g}")
    return OrderReport(violations=violations, max_gap_inversion=worst, n_records=int(rec.times.size))


def overdamped_rotation(alpha: float, f_bar: float) -> float:
    """Overdamped pendulum rotation ``sqrt(f^2 - 1) / alpha`` (0 when locked)."""
    return math.sqrt(f_bar * f_bar - 1) / alpha if abs(f_bar) > 1 else 0.0


def pendulum_oracle(alpha: float, f_bar: float, T: float = 200.0, dt: float = 1e-3,
                    transient: Optional[float] = None) -> float:
    """Rotation number of ``u'' + alpha u' + sin u = f_bar`` from the post-transient slope."""
    if not T > 0:
        raise DomainError(f"oracle horizon must be positive, got {T}")
    transient = T / 4 if transient is None else transient

    def rhs(_, y):
        return [y[1], f_bar - math.sin(y[0]) - alpha * y[1]]

    sol = solve_ivp(rhs, (0.0, T), [0.0, 0.0], method='DOP853', max_step=dt,
                    t_eval=[transient, T], rtol=1e-10, atol=1e-12)
    if not sol.success:
        raise DomainError(f"pendulum oracle failed: {sol.message}")
    u0, u1 = sol.y[0]
    return float((u1 - u0) / (T - transient))
