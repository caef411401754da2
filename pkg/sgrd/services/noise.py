"""Two-sided Wiener paths and the stationary Ornstein-Uhlenbeck field.

Increments are drawn in fixed-size blocks from streams keyed by
``(seed, realization_id, component, direction, block)``, so a longer window
over the same key reproduces the shorter one on the overlap and the
pullback ladders all see the same ``omega``.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.signal import lfilter

from sgrd.exceptions import ArtifactIOError, ConfigError, DomainError, ShapeError, UsageError
from sgrd.models import NoiseHistory, NoisePath, OUState, Params, TemperedBoundEstimate
from sgrd.services.spectral import SpectralOperator

logger = logging.getLogger(__name__)

BLOCK_SIZE = 4096
OU_STREAM = 0x6F75
GRID_TOL = 1e-9


def _steps(span: float, dt: float, label: str) -> int:
    n = int(round(span / dt))
    if abs(n * dt - span) > GRID_TOL * max(1.0, abs(span)):
        raise ConfigError(f"dt={dt} does not divide {label}={span}")
    return n


def _draws(seed: int, realization_id: int, component: int, direction: int, n: int, dt: float) -> np.ndarray:
    if n == 0:
        return np.zeros(0)
    blocks = []
    for b in range((n + BLOCK_SIZE - 1) // BLOCK_SIZE):
        ss = np.random.SeedSequence([seed, realization_id, component, direction, b])
        blocks.append(np.random.default_rng(ss).standard_normal(BLOCK_SIZE))
    return math.sqrt(dt) * np.concatenate(blocks)[:n]


def _cumulative(increments: np.ndarray, zero_index: int) -> np.ndarray:
    back = increments[:, :zero_index][:, ::-1]
    fwd = increments[:, zero_index:]
    return np.concatenate([
        -np.cumsum(back, axis=1)[:, ::-1],
        np.zeros((increments.shape[0], 1)),
        np.cumsum(fwd, axis=1),
    ], axis=1)


def sample_path(m: int, t0: float, t1: float, dt: float, seed: int = 0,
                realization_id: int = 0) -> NoisePath:
    if m < 1:
        raise DomainError(f"need at least one Wiener component, got m={m}")
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    if t0 > 0 or t1 < 0:
        raise ConfigError(f"time window [{t0}, {t1}] does not contain t=0")
    n_back = _steps(-t0, dt, 't0')
    n_fwd = _steps(t1, dt, 't1')

    rows = []
    for j in range(m):
        back = _draws(seed, realization_id, j, 0, n_back, dt)
        fwd = _draws(seed, realization_id, j, 1, n_fwd, dt)
        rows.append(np.concatenate([back[::-1], fwd]))
    increments = np.array(rows).reshape(m, n_back + n_fwd)
    increments.setflags(write=False)
    cum = _cumulative(increments, n_back)
    cum.setflags(write=False)
    return NoisePath(t0=-n_back * dt, n_steps=n_back + n_fwd, dt=dt, increments=increments,
                     cum=cum, zero_index=n_back, seed=seed, realization_id=realization_id)


def shift_path(path: NoisePath, k: int) -> NoisePath:
    """``theta_{k dt} omega``: the same increments re-based at grid index ``zero_index + k``."""
    new_zero = path.zero_index + k
    if not 0 <= new_zero <= path.n_steps:
        raise ConfigError(f"shift by {k} steps leaves the path window")
    cum = path.cum - path.cum[:, new_zero:new_zero + 1]
    cum.setflags(write=False)
    return NoisePath(t0=-new_zero * path.dt, n_steps=path.n_steps, dt=path.dt,
                     increments=path.increments, cum=cum, zero_index=new_zero,
                     seed=path.seed, realization_id=path.realization_id)


def save_increments(path: NoisePath, target: Union[str, Path]) -> Path:
    target = Path(target)
    try:
        with target.open('wb') as fh:
            fh.write(np.array([path.m, path.n_steps], dtype='<i8').tobytes())
            fh.write(np.array([path.dt, path.t0], dtype='<f8').tobytes())
            fh.write(np.ascontiguousarray(path.increments, dtype='<f8').tobytes())
    except OSError as e:
        raise ArtifactIOError(f"could not write increments to {target}: {e}") from e
    return target


def load_increments(source: Union[str, Path], seed: int = 0, realization_id: int = 0) -> NoisePath:
    source = Path(source)
    try:
        raw = source.read_bytes()
    except OSError as e:
        raise ArtifactIOError(f"could not read increments from {source}: {e}") from e
    if len(raw) < 32:
        raise ArtifactIOError(f"{source} is too short to hold an increment header")
    m, n_steps = (int(x) for x in np.frombuffer(raw[:16], dtype='<i8'))
    dt, t0 = (float(x) for x in np.frombuffer(raw[16:32], dtype='<f8'))
    body = np.frombuffer(raw[32:], dtype='<f8')
    if body.size != m * n_steps:
        raise ArtifactIOError(f"{source}: expected {m * n_steps} increments, found {body.size}")
    increments = body.reshape(m, n_steps).astype(float)
    increments.setflags(write=False)
    zero_index = int(round(-t0 / dt))
    cum = _cumulative(increments, zero_index)
    cum.setflags(write=False)
    return NoisePath(t0=t0, n_steps=n_steps, dt=dt, increments=increments, cum=cum,
                     zero_index=zero_index, seed=seed, realization_id=realization_id)


def ou_init_stationary(m: int, rng: np.random.Generator, t: float = 0.0) -> OUState:
    return OUState(z=rng.normal(0.0, math.sqrt(0.5), size=m), t=t)


def ou_advance(state: OUState, dW, dt: float) -> OUState:
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    return OUState(z=math.exp(-dt) * np.asarray(state.z, dtype=float) + np.asarray(dW, dtype=float),
                   t=state.t + dt)


def assemble_z(ou_state, h_coeffs) -> np.ndarray:
    """``sum_j z_j h_j`` in coefficient space; ``ou_state`` may be batched ``(..., m)``."""
    z = np.asarray(ou_state.z if isinstance(ou_state, OUState) else ou_state, dtype=float)
    h = np.asarray(h_coeffs, dtype=float)
    if h.ndim != 2 or z.shape[-1:] != (h.shape[0],):
        raise ShapeError(f"{z.shape[-1] if z.ndim else 0} OU components against {h.shape[0]} noise shapes")
    return z @ h


@dataclass(frozen=True)
class NoiseContext:
    """A path with its OU track ``z_j`` sampled on every grid point.

    The track starts stationary at the left edge of the window, after
    ``burn_in`` time units of extra OU evolution, and is advanced with the
    path's own increments.
    """
    path: NoisePath
    h_coeffs: np.ndarray
    track: np.ndarray

    @classmethod
    def from_path(cls, path: NoisePath, h_coeffs, burn_in: float = 10.0) -> 'NoiseContext':
        h = np.asarray(h_coeffs, dtype=float)
        if h.ndim != 2 or h.shape[0] != path.m:
            raise ShapeError(f"path has {path.m} components but {h.shape[0]} noise shapes were given")
        rng = np.random.default_rng(np.random.SeedSequence([path.seed, path.realization_id, OU_STREAM]))
        state = ou_init_stationary(path.m, rng, t=path.t0 - burn_in)
        n_burn = int(round(burn_in / path.dt))
        if n_burn:
            decay = math.exp(-path.dt)
            kicks = rng.normal(0.0, math.sqrt(path.dt), size=(n_burn, path.m))
            z = lfilter([1.0], [1.0, -decay], kicks, axis=0, zi=(decay * state.z)[None, :])[0][-1]
            state = OUState(z=z, t=path.t0)
        track = cls._track(state.z, path)
        track.setflags(write=False)
        return cls(path=path, h_coeffs=h, track=track)

    @staticmethod
    def _track(z0: np.ndarray, path: NoisePath) -> np.ndarray:
        decay = math.exp(-path.dt)
        if path.n_steps == 0:
            return z0[None, :].copy()
        ys = lfilter([1.0], [1.0, -decay], path.increments.T, axis=0, zi=(decay * z0)[None, :])[0]
        return np.vstack([z0[None, :], ys])

    def shifted(self, k: int) -> 'NoiseContext':
        """Context over ``theta_{k dt} omega`` sharing this OU track."""
        return NoiseContext(path=shift_path(self.path, k), h_coeffs=self.h_coeffs, track=self.track)

    def index_of(self, t: float) -> int:
        k = self.path.index_of(t)
        if not 0 <= k <= self.path.n_steps:
            raise ConfigError(f"t={t} lies outside the path window [{self.path.t0}, {self.path.t1}]")
        if abs((k - self.path.zero_index) * self.path.dt - t) > GRID_TOL * max(1.0, abs(t)):
            raise ConfigError(f"t={t} is not on the path grid (dt={self.path.dt})")
        return k

    def ou_state(self, k: int) -> OUState:
        return OUState(z=self.track[k].copy(), t=(k - self.path.zero_index) * self.path.dt)

    def field_at(self, k: int) -> np.ndarray:
        return self.track[k] @ self.h_coeffs


def noise_context(params: Params, path: NoisePath, burn_in: float = 10.0) -> NoiseContext:
    if abs(path.dt - params.dt) > 1e-12 * params.dt:
        raise ConfigError(f"path step {path.dt} differs from params.dt={params.dt}")
    return NoiseContext.from_path(path, params.h_coeffs, burn_in=burn_in)


def record_z_history(ctx: NoiseContext, t_begin: float, t_end: float, every: int = 1) -> NoiseHistory:
    k0, k1 = ctx.index_of(t_begin), ctx.index_of(t_end)
    if k1 < k0:
        raise UsageError(f"empty history window [{t_begin}, {t_end}]")
    idx = np.arange(k0, k1 + 1, max(1, int(every)))
    if idx[-1] != k1:
        idx = np.append(idx, k1)
    times = (idx - ctx.path.zero_index) * ctx.path.dt
    return NoiseHistory(times=times, fields=ctx.track[idx] @ ctx.h_coeffs)


def estimate_tempered_bounds(z_history: NoiseHistory, op: SpectralOperator,
                             epsilon: Optional[float]) -> TemperedBoundEstimate:
    times = np.asarray(z_history.times, dtype=float)
    fields = np.asarray(z_history.fields, dtype=float)
    if times.size == 0 or fields.size == 0:
        raise UsageError("tempered bounds need a nonempty history")
    if epsilon is None or not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    if fields.shape != (times.size, op.n_modes):
        raise ShapeError(f"history fields of shape {fields.shape} do not match {times.size} x {op.n_modes}")
    weight = np.exp(-epsilon * np.abs(times))
    sq = fields ** 2
    r = np.sqrt(np.sum(sq, axis=1))
    r_prime = np.sqrt(np.sum(op.lambdas * sq, axis=1))
    r_double = np.sqrt(np.sum(op.lambdas ** 2 * sq, axis=1))
    return TemperedBoundEstimate(
        r=float(np.max(weight * r)),
        r_prime=float(np.max(weight * r_prime)),
        r_double_prime=float(np.max(weight * r_double)),
        epsilon=float(epsilon),
    )
