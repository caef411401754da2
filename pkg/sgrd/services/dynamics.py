"""Exponential-Euler integration of the transformed system.

Each cosine mode carries the linear block ``C_i = [[0, 1], [-lambda_i, -alpha]]``;
its exponential and the integrated exponential are closed forms in
``m = -alpha/2`` and ``d = sqrt(alpha^2/4 - lambda_i)`` (real, imaginary
or zero). A step is ``Y <- E Y + Phi F(t, Y)`` with the OU field frozen over
the step.
"""

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from sgrd.exceptions import BlowUpError, ConfigError, DomainError
from sgrd.models import NoisePath, Params, RecordSpec, TrajectoryRecord
from sgrd.services.geometry import (EnergyGeometry, _array, _like, build_geometry, energy_norm,
                                    project_p, project_q)
from sgrd.services.noise import NoiseContext, noise_context
from sgrd.services.spectral import SpectralOperator, build_operator, to_physical, to_spectral

logger = logging.getLogger(__name__)

SERIES_THRESHOLD = 1e-6


def _g(mu: float, dt: float) -> float:
    """``(exp(mu dt) - 1) / mu`` with the removable point at 0."""
    if mu == 0:
        return dt
    return math.expm1(mu * dt) / mu


def _g_prime(mu: float, dt: float) -> float:
    x = mu * dt
    if abs(x) < 1e-2:
        # dt^2 * sum_{k>=2} (k-1) x^(k-2) / k!
        total = sum((k - 1) * x ** (k - 2) / math.factorial(k) for k in range(2, 20))
        return dt * dt * total
    return (math.exp(x) * (x - 1) + 1) / (mu * mu)


def _sinhc(x: float) -> float:
    if abs(x) < 1e-4:
        return 1 + x * x / 6 + x ** 4 / 120
    return math.sinh(x) / x


def _sinc(x: float) -> float:
    if abs(x) < 1e-4:
        return 1 - x * x / 6 + x ** 4 / 120
    return math.sin(x) / x


def mode_blocks(lam: float, alpha: float, dt: float):
    """Return ``(E, Phi)`` for one mode as 2x2 arrays."""
    if lam == 0:
        decay = math.exp(-alpha * dt)
        lag = -math.expm1(-alpha * dt) / alpha
        e_blk = np.array([[1.0, lag], [0.0, decay]])
        phi_blk = np.array([[dt, (dt - lag) / alpha], [0.0, lag]])
        return e_blk, phi_blk

    m = -alpha / 2
    shifted = np.array([[alpha / 2, 1.0], [-lam, -alpha / 2]])
    d_sq = alpha * alpha / 4 - lam
    eye = np.eye(2)
    envelope = math.exp(m * dt)

    if d_sq > 0:
        d = math.sqrt(d_sq)
        x = d * dt
        if x < 1e-4:
            e_blk = envelope * (math.cosh(x) * eye + dt * _sinhc(x) * shifted)
        else:
            # m + d <= 0, so neither exponential overflows for large d dt
            e_plus, e_minus = math.exp((m + d) * dt), math.exp((m - d) * dt)
            e_blk = (e_plus + e_minus) / 2 * eye + (e_plus - e_minus) / (2 * d) * shifted
    elif d_sq < 0:
        d = math.sqrt(-d_sq)
        x = d * dt
        e_blk = envelope * (math.cos(x) * eye + dt * _sinc(x) * shifted)
    else:
        # defective block: exp = e^{m dt} (I + dt (C - mI))
        d, x = 0.0, 0.0
        e_blk = envelope * (eye + dt * shifted)

    if x < SERIES_THRESHOLD:
        a0, a1 = _g(m, dt), _g_prime(m, dt)
    elif d_sq > 0:
        gp, gm = _g(m + d, dt), _g(m - d, dt)
        a0, a1 = (gp + gm) / 2, (gp - gm) / (2 * d)
    else:
        gc = (cmath.exp(complex(m, d) * dt) - 1) / complex(m, d)
        a0, a1 = gc.real, gc.imag / d
    phi_blk = a0 * eye + a1 * shifted
    return e_blk, phi_blk


@dataclass(frozen=True)
class Propagator:
    op: SpectralOperator
    alpha: float
    dt: float
    E: np.ndarray
    Phi: np.ndarray

    def apply(self, y: np.ndarray, forcing: Optional[np.ndarray] = None) -> np.ndarray:
        """``E y + Phi forcing`` mode by mode on arrays ``(..., 2, N)``."""
        out = np.einsum('nij,...jn->...in', self.E, y)
        if forcing is not None:
            out = out + np.einsum('nij,...jn->...in', self.Phi, forcing)
        return out


def build_propagator(op: SpectralOperator, alpha: float, dt: float) -> Propagator:
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    e_all = np.empty((op.n_modes, 2, 2))
    phi_all = np.empty((op.n_modes, 2, 2))
    for i, lam in enumerate(op.lambdas):
        e_all[i], phi_all[i] = mode_blocks(float(lam), alpha, dt)
    e_all.setflags(write=False)
    phi_all.setflags(write=False)
    return Propagator(op=op, alpha=alpha, dt=dt, E=e_all, Phi=phi_all)


def nonlinearity(y, z_field, f_coeffs, alpha: float, op: SpectralOperator) -> np.ndarray:
    """``F = (z, -sin u + f + (1 - alpha) z)`` with ``sin u`` taken on the collocation grid."""
    arr = _array(y)
    z = np.broadcast_to(np.asarray(z_field, dtype=float), arr.shape[:-2] + (op.n_modes,))
    sin_u = to_spectral(np.sin(to_physical(arr[..., 0, :], op)), op)
    return np.stack([z, -sin_u + np.asarray(f_coeffs, dtype=float) + (1 - alpha) * z], axis=-2)


@dataclass(frozen=True)
class Solver:
    """Everything a trajectory needs that depends only on ``params``."""
    params: Params
    op: SpectralOperator
    geom: EnergyGeometry
    prop: Propagator


def build_solver(params: Params) -> Solver:
    op = build_operator(params)
    return Solver(params=params, op=op, geom=build_geometry(params, op),
                  prop=build_propagator(op, params.alpha, params.dt))


def _z_field(noise_ctx: Optional[NoiseContext], k: Optional[int], n_modes: int) -> np.ndarray:
    if noise_ctx is None:
        return np.zeros(n_modes)
    return noise_ctx.field_at(k)


def step(y, t: float, noise_ctx: Optional[NoiseContext], prop: Propagator, params: Params):
    """One exponential-Euler step from ``t`` to ``t + dt``."""
    arr = _array(y)
    k = noise_ctx.index_of(t) if noise_ctx is not None else None
    out = _advance(arr, k, noise_ctx, prop, params)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(t + prop.dt)
    return _like(y, out)


def _advance(arr: np.ndarray, k, noise_ctx, prop: Propagator, params: Params) -> np.ndarray:
    z = _z_field(noise_ctx, k, prop.op.n_modes)
    return prop.apply(arr, nonlinearity(arr, z, params.f_coeffs, params.alpha, prop.op))


def _context(noise: Union[NoisePath, NoiseContext, None], params: Params, burn_in: float):
    if noise is None or isinstance(noise, NoiseContext):
        return noise
    return noise_context(params, noise, burn_in=burn_in)


def _window(ctx: Optional[NoiseContext], t_begin: float, t_end: float, dt: float):
    if t_end < t_begin:
        raise ConfigError(f"integration window [{t_begin}, {t_end}] is reversed")
    if ctx is not None:
        return ctx.index_of(t_begin), ctx.index_of(t_end)
    n = int(round((t_end - t_begin) / dt))
    if abs(n * dt - (t_end - t_begin)) > 1e-9 * max(1.0, abs(t_end - t_begin)):
        raise ConfigError(f"window length {t_end - t_begin} is not a multiple of dt={dt}")
    return 0, n


def integrate(y0, path: Union[NoisePath, NoiseContext, None], t_begin: float, t_end: float,
              params: Params, record_spec: Optional[RecordSpec] = None,
              solver: Optional[Solver] = None, burn_in: float = 10.0) -> TrajectoryRecord:
    """Integrate (possibly batched) initial data over ``[t_begin, t_end]``.

    ``path=None`` runs the noise-free system. Records are taken every
    ``record_spec.every`` steps, at the start and at the end.
    """
    spec = record_spec or RecordSpec()
    solver = solver or build_solver(params)
    ctx = _context(path, params, burn_in)
    k0, k1 = _window(ctx, t_begin, t_end, params.dt)
    every = max(1, int(spec.every))

    y = np.array(_array(y0), dtype=float)
    times, s_rec, q_rec, states = [], [], [], []

    def record(k, state):
        times.append(t_begin + (k - k0) * params.dt)
        s_rec.append(project_p(state, solver.geom))
        q_rec.append(energy_norm(project_q(state, solver.geom), solver.geom))
        if spec.keep_states:
            states.append(state.copy())

    record(k0, y)
    for k in range(k0, k1):
        y = _advance(y, k, ctx, solver.prop, params)
        if not np.all(np.isfinite(y)):
            t_fail = t_begin + (k + 1 - k0) * params.dt
            logger.error(f"Non-finite state at t={t_fail:.6g}")
            raise BlowUpError(t_fail)
        if (k + 1 - k0) % every == 0 or k + 1 == k1:
            record(k + 1, y)

    seed = ctx.path.seed if ctx is not None else params.seed
    rid = ctx.path.realization_id if ctx is not None else 0
    return TrajectoryRecord(
        times=np.array(times),
        s=np.array(s_rec),
        q_norm=np.array(q_rec),
        final=y,
        states=np.array(states) if spec.keep_states else None,
        seed=seed,
        realization_id=rid,
    )


def pullback_solve(y0, omega_path: Union[NoisePath, NoiseContext, None], T: float, params: Params,
                   solver: Optional[Solver] = None, burn_in: float = 10.0):
    """State at time 0 of the solution started at ``-T`` on the fiber ``theta_{-T} omega``."""
    if T < 0:
        raise ConfigError(f"pullback time must be nonnegative, got {T}")
    rec = integrate(y0, omega_path, -T, 0.0, params, RecordSpec(every=max(1, int(round(T / params.dt)))),
                    solver=solver, burn_in=burn_in)
    return _like(y0, rec.final)


def phi_solution(phi0, path: Union[NoisePath, NoiseContext, None], t: float, params: Params,
                 solver: Optional[Solver] = None, burn_in: float = 10.0):
    """Solution of the original system: ``phi = Y + (0, z(theta_t omega))``."""
    if t == 0:
        return _like(phi0, np.array(_array(phi0), dtype=float))
    solver = solver or build_solver(params)
    ctx = _context(path, params, burn_in)
    arr = np.array(_array(phi0), dtype=float)
    z_start = _z_field(ctx, ctx.index_of(0.0) if ctx else None, solver.op.n_modes)
    z_end = _z_field(ctx, ctx.index_of(t) if ctx else None, solver.op.n_modes)
    arr[..., 1, :] -= z_start
    rec = integrate(arr, ctx, 0.0, t, params, RecordSpec(every=max(1, int(round(t / params.dt)))),
                    solver=solver)
    out = rec.final.copy()
    out[..., 1, :] += z_end
    return _like(phi0, out)
