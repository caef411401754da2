"""Value records shared by the simulator services.

Coefficient vectors are plain ``numpy`` arrays in the orthonormal Neumann
cosine basis; a state ``Y = (u, v)`` is carried as an array of shape
``(..., 2, N)`` inside the integrator and as :class:`State` at API edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from sgrd.exceptions import DomainError, ShapeError


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Params:
    """Physical and numerical parameters of one simulation.

    ``delta=None`` means "choose the gap-maximising value" (see
    :func:`sgrd.services.core.choose_delta`). ``f_coeffs`` and every row of
    ``h_coeffs`` are cosine coefficients, shorter vectors are zero-padded to
    ``n_modes``.
    """
    alpha: float
    kappa: float
    delta: Optional[float] = None
    domain_length: float = math.pi
    f_coeffs: Any = None
    h_coeffs: Any = None
    n_modes: int = 32
    n_quad: Optional[int] = None
    dt: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not self.kappa > 0:
            raise DomainError(f"kappa must be positive, got {self.kappa}")
        if self.delta is not None and not 0 < self.delta <= 1:
            raise DomainError(f"delta must lie in (0, 1], got {self.delta}")
        if not self.domain_length > 0:
            raise DomainError(f"domain_length must be positive, got {self.domain_length}")
        if int(self.n_modes) != self.n_modes or self.n_modes < 2:
            raise DomainError(f"n_modes must be an integer >= 2, got {self.n_modes}")
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")

        n = int(self.n_modes)
        object.__setattr__(self, 'n_modes', n)
        n_quad = 2 * n if self.n_quad is None else int(self.n_quad)
        if n_quad < 2 * n:
            raise DomainError(f"n_quad must be at least 2*n_modes={2 * n}, got {n_quad}")
        object.__setattr__(self, 'n_quad', n_quad)

        f = np.zeros(n) if self.f_coeffs is None else np.atleast_1d(np.asarray(self.f_coeffs, dtype=float))
        if f.ndim != 1 or f.size > n:
            raise ShapeError(f"f_coeffs must be a vector of at most {n} coefficients")
        object.__setattr__(self, 'f_coeffs', _frozen_array(np.pad(f, (0, n - f.size))))

        if self.h_coeffs is None:
            h = np.zeros((1, n))
            h[0, 0] = 0.1
        else:
            h = np.asarray(self.h_coeffs, dtype=float)
            if h.ndim == 1:
                h = h[None, :]
        if h.ndim != 2 or h.shape[0] < 1 or h.shape[1] > n:
            raise ShapeError(f"h_coeffs must be an m x (<= {n}) array of cosine coefficients")
        object.__setattr__(self, 'h_coeffs', _frozen_array(np.pad(h, ((0, 0), (0, n - h.shape[1])))))

        if not (np.all(np.isfinite(self.f_coeffs)) and np.all(np.isfinite(self.h_coeffs))):
            raise DomainError("forcing and noise coefficients must be finite")

    @property
    def m(self) -> int:
        return int(self.h_coeffs.shape[0])

    @property
    def noise_free(self) -> bool:
        return not np.any(self.h_coeffs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'alpha': self.alpha,
            'kappa': self.kappa,
            'delta': self.delta,
            'domain_length': self.domain_length,
            'f_coeffs': self.f_coeffs.tolist(),
            'h_coeffs': self.h_coeffs.tolist(),
            'n_modes': self.n_modes,
            'n_quad': self.n_quad,
            'dt': self.dt,
            'seed': self.seed,
        }


@dataclass(frozen=True)
class RegimeReport:
    a_positive: bool
    curve_regime: bool
    gamma_exists: bool

    @property
    def regime_1d(self) -> bool:
        return self.a_positive and self.curve_regime and self.gamma_exists


@dataclass(frozen=True)
class ConstantsLedger:
    """Every constant derived from a parameter set.

    Constants that only exist when ``a > 0`` (or when the rate condition
    holds) are ``nan``.
    """
    alpha: float
    delta: float
    lambda1: float
    a: float
    lf_bound: float
    gamma_star: float
    big_m: float
    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    a6: float
    a7: float
    domain_measure: float
    regime_1d: bool
    mu_pairs: Tuple[Tuple[Tuple[float, float], Tuple[float, float]], ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        data = {k: getattr(self, k) for k in (
            'alpha', 'delta', 'lambda1', 'a', 'lf_bound', 'gamma_star', 'big_m',
            'a1', 'a2', 'a3', 'a4', 'a5', 'a6', 'a7', 'domain_measure', 'regime_1d')}
        data['mu_pairs'] = [list(map(list, pair)) for pair in self.mu_pairs]
        return data


@dataclass(frozen=True)
class State:
    """Paired cosine coefficients ``Y = (u, v)``."""
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.shape != v.shape:
            raise ShapeError(f"u and v lengths differ: {u.shape} vs {v.shape}")
        object.__setattr__(self, 'u', u)
        object.__setattr__(self, 'v', v)

    @property
    def array(self) -> np.ndarray:
        return np.stack([self.u, self.v], axis=-2)

    @classmethod
    def from_array(cls, arr) -> 'State':
        arr = np.asarray(arr, dtype=float)
        return cls(arr[..., 0, :].copy(), arr[..., 1, :].copy())

    @classmethod
    def zeros(cls, n_modes: int) -> 'State':
        return cls(np.zeros(n_modes), np.zeros(n_modes))


@dataclass(frozen=True)
class NoisePath:
    """Discretised two-sided Wiener path with ``omega(0) = 0``.

    ``cum[:, k]`` is ``omega(t0 + k*dt)``; ``increments[:, k]`` is
    ``cum[:, k+1] - cum[:, k]``.
    """
    t0: float
    n_steps: int
    dt: float
    increments: np.ndarray
    cum: np.ndarray
    zero_index: int
    seed: int = 0
    realization_id: int = 0

    @property
    def m(self) -> int:
        return int(self.increments.shape[0])

    @property
    def t1(self) -> float:
        return (self.n_steps - self.zero_index) * self.dt

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.n_steps + 1) - self.zero_index) * self.dt

    def index_of(self, t: float) -> int:
        return self.zero_index + int(round(t / self.dt))


@dataclass(frozen=True)
class OUState:
    z: np.ndarray
    t: float


@dataclass(frozen=True)
class NoiseHistory:
    """Samples of the assembled field ``z(theta_t omega)`` with their times."""
    times: np.ndarray
    fields: np.ndarray


@dataclass(frozen=True)
class TemperedBoundEstimate:
    r: float
    r_prime: float
    r_double_prime: float
    epsilon: float


@dataclass(frozen=True)
class RecordSpec:
    """What :func:`sgrd.services.dynamics.integrate` keeps while stepping."""
    every: int = 100
    keep_states: bool = False


@dataclass
class TrajectoryRecord:
    """Sampled diagnostics of one (possibly batched) trajectory.

    ``s`` and ``q_norm`` have shape ``(n_records,) + batch_shape``.
    """
    times: np.ndarray
    s: np.ndarray
    q_norm: np.ndarray
    final: np.ndarray
    states: Optional[np.ndarray] = None
    seed: int = 0
    realization_id: int = 0

    @property
    def s_mod2pi(self) -> np.ndarray:
        return np.mod(self.s, 2 * np.pi)


@dataclass
class HorizontalCurve:
    """Graph ``p -> Phi(p)`` sampled on a uniform grid of one period.

    ``phi_points`` holds Q-component states, shape ``(n_p, 2, N)``. The
    lifted point for grid value ``p`` is ``(p + lift) eta_0 + Phi(p)``.
    """
    p_grid: np.ndarray
    phi_points: np.ndarray
    period_multiple: int = 1
    lift: float = 0.0
    order_violation: float = 0.0

    @property
    def period(self) -> float:
        return 2 * np.pi * self.period_multiple

    @property
    def n_p(self) -> int:
        return int(self.p_grid.size)


@dataclass(frozen=True)
class LipschitzReport:
    max_ratio: float
    worst_pair: Tuple[int, int]
    tol: float = 1e-6

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0 + self.tol


@dataclass
class AbsorbingReport:
    """Per-horizon Q-norms of pulled-back initial data against R0 and R1."""
    t_ladder: List[float]
    max_q_norm: List[float]
    inside: List[bool]
    max_graph_norm: List[float]
    within_r1: List[bool]
    r0: float
    r1: float
    bounds: TemperedBoundEstimate

    @property
    def entry_horizon(self) -> Optional[float]:
        """Smallest horizon from which every later horizon is inside."""
        entry = None
        for t, ok in zip(self.t_ladder, self.inside):
            if ok and entry is None:
                entry = t
            elif not ok:
                entry = None
        return entry


@dataclass
class AttractorEstimate:
    curve: HorizontalCurve
    pullback_T: float
    q_residual: float
    hausdorff_step: float
    converged: bool
    t_ladder: List[float] = field(default_factory=list)
    hausdorff_steps: List[float] = field(default_factory=list)
    lipschitz: Optional[LipschitzReport] = None
    decay_rate: float = float('nan')


@dataclass(frozen=True)
class OrderReport:
    violations: int
    max_gap_inversion: float
    n_records: int


@dataclass
class RotationEstimate:
    rho_hat: float
    T: float
    ci_halfwidth: float
    per_ic: Dict[str, float]
    ic_spread: List[float]
    agreement_tolerance: float
    method: str = 'endpoint'

    @property
    def ics_agree(self) -> bool:
        return all(spread <= self.agreement_tolerance for spread in self.ic_spread)


@dataclass
class ExperimentConfig:
    """Validated experiment description (see :mod:`sgrd.forms`)."""
    params: Params
    kind: str = 'check-params'
    out_dir: str = 'runs'
    seed: int = 0
    workers: Optional[int] = None
    burn_in: Optional[float] = None
    t_end: float = 10.0
    t_ladder: List[float] = field(default_factory=lambda: [10.0, 20.0, 30.0, 40.0, 50.0, 60.0])
    n_p: int = 128
    curve_tol: float = 1e-4
    n_validation: int = 32
    n_realizations: int = 4
    n_ics: int = 8
    rotation_T: float = 200.0
    record_every: int = 100
    initial_mean: float = 0.0
    initial_velocity: float = 0.0
    sweep_alpha: List[float] = field(default_factory=list)
    sweep_kappa: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        data = {k: getattr(self, k) for k in (
            'kind', 'seed', 'burn_in', 't_end', 't_ladder', 'n_p',
            'curve_tol', 'n_validation', 'n_realizations', 'n_ics', 'rotation_T',
            'record_every', 'initial_mean', 'initial_velocity', 'sweep_alpha', 'sweep_kappa')}
        data['params'] = self.params.to_dict()
        return data
