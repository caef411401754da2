"""Absorbing and attracting sets, horizontal curves and the attractor estimate.

A horizontal curve is stored as the graph ``p -> Phi(p)`` of Q-states over
a uniform grid of one period; evolving it pulls every lifted point back
through ``[-T, 0]`` on the same fiber and re-parameterizes the image by its
unreduced torus coordinate.
"""

import dataclasses
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import interp1d

from sgrd.exceptions import DegeneratePairError, RegimeError, ShapeError, UsageError
from sgrd.models import (AbsorbingReport, AttractorEstimate, ConstantsLedger, HorizontalCurve,
                         LipschitzReport, Params, RecordSpec, TemperedBoundEstimate)
from sgrd.services.batch_runner import BatchJob, run_jobs
from sgrd.services.core import ledger_constants, regime_check
from sgrd.services.dynamics import Solver, _context, build_solver, integrate, pullback_solve
from sgrd.services.geometry import (TWO_PI, EnergyGeometry, energy_norm, graph_norm, p_state,
                                    project_p, project_q, wrapped_distance)
from sgrd.services.noise import NoiseContext, estimate_tempered_bounds, record_z_history

logger = logging.getLogger(__name__)

ORDER_TOL = 1e-8
VALIDATION_STREAM = 0x76616C


def _require_gap(ledger: ConstantsLedger):
    if not ledger.a > 0:
        raise RegimeError(f"radius formulas need a > 0, got a={ledger.a}")


def absorbing_radius(ledger: ConstantsLedger, bounds: TemperedBoundEstimate) -> float:
    _require_gap(ledger)
    a = ledger.a
    return 4 / a * (ledger.a1 * bounds.r + bounds.r_prime) + 2 * ledger.a2 / a


def attracting_radius(ledger: ConstantsLedger, bounds: TemperedBoundEstimate) -> float:
    _require_gap(ledger)
    return (ledger.a5 * bounds.r + ledger.a6 * bounds.r_prime
            + 8 / ledger.a * bounds.r_double_prime + ledger.a7)


def transient_bound(ledger: ConstantsLedger, bounds: TemperedBoundEstimate, q0: float, t: float) -> float:
    """Envelope of ``||QY(t)||_E`` for data starting at Q-norm ``q0``."""
    _require_gap(ledger)
    a = ledger.a
    return (math.exp(-a * t) * q0
            + 2 / a * (1 - math.exp(-a * t / 2)) * (ledger.a1 * bounds.r + bounds.r_prime)
            + ledger.a2 / a * (1 - math.exp(-a * t)))


def window_bounds(ctx: NoiseContext, geom: EnergyGeometry, ledger: ConstantsLedger,
                  epsilon: Optional[float] = None) -> TemperedBoundEstimate:
    """Tempered bounds over the whole window of ``ctx`` (``epsilon`` defaults to ``a/2``)."""
    eps = epsilon if epsilon is not None else ledger.a / 2
    history = record_z_history(ctx, ctx.path.t0, ctx.path.t1)
    return estimate_tempered_bounds(history, geom.op, eps)


def tempered_ics(n: int, geom: EnergyGeometry, rng: np.random.Generator,
                 q_max: float = 1.0, q_min: Optional[float] = None) -> np.ndarray:
    """``n`` initial states with Q-norms spread geometrically in ``[q_min, q_max]`` and random p."""
    n_modes = geom.op.n_modes
    decay = 1.0 / (1.0 + np.arange(n_modes)) ** 2
    raw = rng.standard_normal((n, 2, n_modes)) * decay
    q = project_q(raw, geom)
    q = q / energy_norm(q, geom)[:, None, None]
    lo = q_max if q_min is None else q_min
    scales = np.geomspace(lo, q_max, n) if n > 1 else np.array([q_max])
    return q * scales[:, None, None] + p_state(rng.uniform(0.0, TWO_PI, n), geom)


def _pullback_norms(ics: np.ndarray, ctx, T: float, params: Params, solver: Solver):
    final = pullback_solve(ics, ctx, T, params, solver=solver)
    q = project_q(final, solver.geom)
    return float(np.max(energy_norm(q, solver.geom))), float(np.max(graph_norm(q, solver.geom)))


def absorbing_check(params: Params, omega_path, ic_set, t_ladder: Sequence[float],
                    solver: Optional[Solver] = None, workers: Optional[int] = None,
                    burn_in: float = 10.0, epsilon: Optional[float] = None) -> AbsorbingReport:
    """Pull ``ic_set`` back over every horizon and compare against R0 and R1."""
    solver = solver or build_solver(params)
    ledger = ledger_constants(params)
    ctx = _context(omega_path, params, burn_in)
    ics = np.asarray(ic_set, dtype=float)
    if ctx is not None:
        bounds = window_bounds(ctx, solver.geom, ledger, epsilon)
    else:
        bounds = TemperedBoundEstimate(0.0, 0.0, 0.0, epsilon or ledger.a / 2)
    r0 = absorbing_radius(ledger, bounds)
    r1 = attracting_radius(ledger, bounds)

    ladder = [float(T) for T in t_ladder]
    jobs = [BatchJob(f"T={T:g}", _pullback_norms, (ics, ctx, T, params, solver)) for T in ladder]
    norms = run_jobs(jobs, workers)
    q_norms = [q for q, _ in norms]
    g_norms = [g for _, g in norms]
    report = AbsorbingReport(
        t_ladder=ladder,
        max_q_norm=q_norms,
        inside=[q <= r0 for q in q_norms],
        max_graph_norm=g_norms,
        within_r1=[g <= r1 for g in g_norms],
        r0=r0,
        r1=r1,
        bounds=bounds,
    )
    logger.info(f"Absorbing check: R0={r0:.6g}, R1={r1:.6g}, entry horizon={report.entry_horizon}")
    return report


def flat_curve(n_p: int, geom: EnergyGeometry, c: float = 0.0, period_multiple: int = 1) -> HorizontalCurve:
    """Constant graph ``Phi = c eta_{-1}`` over a uniform grid."""
    if n_p < 2:
        raise UsageError(f"a curve needs at least two points, got n_p={n_p}")
    period = TWO_PI * period_multiple
    p_grid = np.arange(n_p) * period / n_p
    phi = np.zeros((n_p, 2, geom.op.n_modes))
    phi[:, 0, 0] = c * geom.sqrt_length
    phi[:, 1, 0] = -geom.alpha * c * geom.sqrt_length
    return HorizontalCurve(p_grid=p_grid, phi_points=phi, period_multiple=period_multiple)


def lifted_points(curve: HorizontalCurve, geom: EnergyGeometry) -> np.ndarray:
    return p_state(curve.p_grid + curve.lift, geom) + curve.phi_points


def _order_violation(s: np.ndarray, period: float) -> float:
    gaps = np.diff(s)
    seam = s[0] + period - s[-1]
    worst = min(float(gaps.min()) if gaps.size else np.inf, float(seam))
    return max(0.0, -worst)


def reparameterize(states: np.ndarray, geom: EnergyGeometry, n_out: int,
                   period_multiple: int = 1) -> HorizontalCurve:
    """Graph of ``states`` (ordered along one period) over a uniform p-grid."""
    period = TWO_PI * period_multiple
    s = np.asarray(project_p(states, geom), dtype=float)
    q = project_q(states, geom)
    violation = _order_violation(s, period)
    if violation > ORDER_TOL:
        logger.warning(f"P-order violated by {violation:.3g}; re-parameterizing after sorting")
    order = np.argsort(s, kind='stable')
    s, q = s[order], q[order]
    s, keep = np.unique(s, return_index=True)
    q = q[keep]

    base = math.floor(s[0] / period) * period
    x = s - base
    xs = np.concatenate([x - period, x, x + period])
    qs = np.concatenate([q, q, q])
    grid = np.arange(n_out) * period / n_out
    phi = interp1d(xs, qs, axis=0, kind='linear', assume_sorted=True)(grid)
    return HorizontalCurve(p_grid=grid, phi_points=phi, period_multiple=period_multiple,
                           lift=base, order_violation=violation)


def evolve_curve_history(curve: HorizontalCurve, omega_path, T: float, params: Params,
                         n_checkpoints: int = 1, n_out: Optional[int] = None,
                         solver: Optional[Solver] = None, burn_in: float = 10.0,
                         resample_every: float = 0.5) -> List[HorizontalCurve]:
    """Curves at ``n_checkpoints`` equally spaced grid times of ``(-T, 0]``.

    The image is re-parameterized onto the uniform p-grid every
    ``resample_every`` time units, on boundaries counted back from time 0 so
    that different horizons resample at the same instants.
    """
    solver = solver or build_solver(params)
    ledger = ledger_constants(params)
    if not regime_check(ledger).regime_1d:
        logger.warning(f"Evolving a curve outside the one-dimensional regime (alpha={params.alpha}, a={ledger.a:.4g})")
    if not resample_every > 0:
        raise UsageError(f"resample_every must be positive, got {resample_every}")
    ctx = _context(omega_path, params, burn_in)
    n_out = n_out or curve.n_p
    n_steps = int(round(T / params.dt))
    marks = sorted({int(round(j * n_steps / n_checkpoints)) for j in range(1, n_checkpoints + 1)}) if n_steps else [0]
    leg = max(1, int(round(resample_every / params.dt)))
    legs = {k for k in range(1, n_steps) if (n_steps - k) % leg == 0}

    states = lifted_points(curve, solver.geom)
    history, k_prev = [], 0
    for k in sorted(legs.union(marks)):
        t_from, t_to = -T + k_prev * params.dt, -T + k * params.dt
        if k == n_steps:
            t_to = 0.0
        if k > k_prev:
            states = integrate(states, ctx, t_from, t_to, params,
                               RecordSpec(every=k - k_prev), solver=solver).final
        current = reparameterize(states, solver.geom, n_out, curve.period_multiple)
        if k in marks:
            history.append(current)
        states = lifted_points(current, solver.geom)
        k_prev = k
    return history


def evolve_curve(curve: HorizontalCurve, omega_path, T: float, params: Params,
                 resample_spec: Optional[int] = None, solver: Optional[Solver] = None,
                 burn_in: float = 10.0, resample_every: float = 0.5) -> HorizontalCurve:
    """Pull the curve back over ``[-T, 0]``; ``resample_spec`` is the output grid size."""
    return evolve_curve_history(curve, omega_path, T, params, n_checkpoints=1, n_out=resample_spec,
                                solver=solver, burn_in=burn_in, resample_every=resample_every)[-1]


def lipschitz_verify(curve: HorizontalCurve, geom: EnergyGeometry, tol: float = 1e-6,
                     wrapped: bool = True) -> LipschitzReport:
    if curve.n_p < 2:
        raise UsageError("Lipschitz verification needs at least two curve points")
    i, j = np.triu_indices(curve.n_p, k=1)
    p = curve.p_grid
    dp = wrapped_distance(p[i], p[j], curve.period) if wrapped else np.abs(p[i] - p[j])
    if np.any(dp == 0):
        bad = int(np.flatnonzero(dp == 0)[0])
        raise DegeneratePairError(f"duplicate torus coordinates at points {i[bad]} and {j[bad]}")
    num = energy_norm(curve.phi_points[i] - curve.phi_points[j], geom)
    ratios = num / (dp * geom.eta0_norm)
    worst = int(np.argmax(ratios))
    return LipschitzReport(max_ratio=float(ratios[worst]), worst_pair=(int(i[worst]), int(j[worst])), tol=tol)


def q_spread(states, geom: EnergyGeometry, p_tol: Optional[float] = None) -> float:
    """Largest transverse distance between states whose torus coordinates nearly match.

    Returns ``nan`` (and logs) when no pair is within ``p_tol``.
    """
    arr = np.asarray(states, dtype=float)
    if arr.shape[0] < 2:
        raise UsageError("q_spread needs at least two states")
    p_tol = p_tol if p_tol is not None else TWO_PI / 128
    s = project_p(arr, geom)
    i, j = np.triu_indices(arr.shape[0], k=1)
    matched = wrapped_distance(s[i], s[j]) < p_tol
    if not np.any(matched):
        logger.warning(f"q_spread: no state pairs within p_tol={p_tol:.3g}")
        return float('nan')
    diffs = project_q(arr[i[matched]] - arr[j[matched]], geom)
    return float(np.max(energy_norm(diffs, geom)))


def hausdorff_step(first: HorizontalCurve, second: HorizontalCurve, geom: EnergyGeometry) -> float:
    """Sup over matched grid points of ``||Phi_1(p) - Phi_2(p)||_E``."""
    if first.phi_points.shape != second.phi_points.shape:
        raise ShapeError(f"curves sampled differently: {first.phi_points.shape} vs {second.phi_points.shape}")
    return float(np.max(energy_norm(first.phi_points - second.phi_points, geom)))


def curve_at(curve: HorizontalCurve, p) -> np.ndarray:
    """Periodic piecewise-linear value of ``Phi`` at coordinates ``p``."""
    period = curve.period
    x = np.mod(np.asarray(p, dtype=float) - curve.lift, period)
    xs = np.concatenate([curve.p_grid, [period]])
    ys = np.concatenate([curve.phi_points, curve.phi_points[:1]])
    return interp1d(xs, ys, axis=0, kind='linear', assume_sorted=True)(x)


def distance_to_curve(states, curve: HorizontalCurve, geom: EnergyGeometry) -> np.ndarray:
    arr = np.asarray(states, dtype=float)
    target = curve_at(curve, project_p(arr, geom))
    return energy_norm(project_q(arr, geom) - target, geom)


def _decay_rate(ics, ctx, curve, params, solver, horizons: Tuple[float, float]) -> float:
    h1, h2 = horizons
    if ctx is not None and -h2 < ctx.path.t0 - 1e-9:
        logger.info(f"Skipping decay rate: horizon {h2:g} exceeds the noise window")
        return float('nan')
    res = [float(np.max(distance_to_curve(pullback_solve(ics, ctx, h, params, solver=solver), curve, solver.geom)))
           for h in (h1, h2)]
    if res[0] <= 0 or res[1] <= 0:
        return float('nan')
    return math.log(res[0] / res[1]) / (h2 - h1)


def estimate_attractor(params: Params, omega_path, t_ladder: Sequence[float], n_p: int = 128,
                       curve_tol: float = 1e-4, n_validation: int = 32, seed_constant: float = 0.0,
                       solver: Optional[Solver] = None, workers: Optional[int] = None,
                       burn_in: float = 10.0, decay_horizons: Tuple[float, float] = (0.5, 1.0),
                       validation_scale: float = 10.0, seed_shift: float = 0.0,
                       resample_every: float = 0.5) -> AttractorEstimate:
    """Evolve a flat seed curve through the pullback ladder until it stops moving.

    ``seed_shift`` lifts the seed along eta_0; whole periods leave the reduced
    curve unchanged.
    """
    solver = solver or build_solver(params)
    geom = solver.geom
    ledger = ledger_constants(params)
    if not regime_check(ledger).regime_1d:
        logger.warning("Attractor estimate requested outside the one-dimensional regime")
    ctx = _context(omega_path, params, burn_in)
    ladder = sorted(float(T) for T in t_ladder)
    if not ladder:
        raise UsageError("empty pullback ladder")

    seed_curve = dataclasses.replace(flat_curve(n_p, geom, seed_constant), lift=seed_shift)
    jobs = [BatchJob(f"T={T:g}", evolve_curve, (seed_curve, ctx, T, params),
                     {'solver': solver, 'resample_every': resample_every}) for T in ladder]
    curves = run_jobs(jobs, workers)
    steps = [hausdorff_step(curves[i - 1], curves[i], geom) for i in range(1, len(curves))]

    chosen, converged = len(curves) - 1, False
    for i, d in enumerate(steps, start=1):
        if d < curve_tol:
            chosen, converged = i, True
            break
    step_value = steps[chosen - 1] if chosen >= 1 else float('inf')
    if not converged:
        logger.warning(f"Curve did not converge over ladder {ladder} (last step {step_value:.3g})")

    curve, horizon = curves[chosen], ladder[chosen]
    seed_key = ctx.path if ctx is not None else None
    rng = np.random.default_rng(np.random.SeedSequence([
        seed_key.seed if seed_key else params.seed,
        seed_key.realization_id if seed_key else 0,
        VALIDATION_STREAM]))
    ics = tempered_ics(n_validation, geom, rng, q_max=validation_scale)
    q_residual = float(np.max(distance_to_curve(pullback_solve(ics, ctx, horizon, params, solver=solver),
                                                curve, geom)))
    decay = _decay_rate(ics, ctx, curve, params, solver, decay_horizons)

    return AttractorEstimate(
        curve=curve,
        pullback_T=horizon,
        q_residual=q_residual,
        hausdorff_step=step_value,
        converged=converged,
        t_ladder=ladder,
        hausdorff_steps=steps,
        lipschitz=lipschitz_verify(curve, geom),
        decay_rate=decay,
    )
