"""Energy inner product, the P/Q splitting and torus reduction.

States are arrays of shape ``(..., 2, N)`` (``u`` then ``v``) or
:class:`sgrd.models.State`; every function returns the same kind it was
given. ``eta_0`` is the constant field ``(1, 0)``, stored as ``sqrt(L)`` on
the ``u`` mean coefficient.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from sgrd.exceptions import DomainError, ShapeError
from sgrd.models import Params, State
from sgrd.services.core import choose_delta, lambda_one
from sgrd.services.spectral import SpectralOperator, build_operator

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class EnergyGeometry:
    alpha: float
    delta: float
    lambda1: float
    op: SpectralOperator
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        w = self.op.lambdas - self.delta * self.lambda1
        w[0] = 0.0
        w.setflags(write=False)
        object.__setattr__(self, 'weights', w)
        smallest = self.min_mode_eigenvalue()
        if not smallest > 0:
            raise DomainError(
                f"energy form is not positive definite (alpha={self.alpha}, delta={self.delta}, "
                f"lambda1={self.lambda1}): smallest mode eigenvalue {smallest:.3g}")

    def min_mode_eigenvalue(self) -> float:
        """Smallest eigenvalue of the per-mode 2x2 matrices of the energy form."""
        half = self.alpha / 2
        blocks = np.empty((self.op.n_modes, 2, 2))
        blocks[:, 0, 0] = self.alpha ** 2 / 2 + self.weights
        blocks[:, 0, 1] = blocks[:, 1, 0] = half
        blocks[:, 1, 1] = 1.0
        return float(np.linalg.eigvalsh(blocks).min())

    @property
    def sqrt_length(self) -> float:
        return math.sqrt(self.op.domain_length)

    @property
    def eta0_norm(self) -> float:
        """``||eta_0||_E = alpha sqrt(L/2)``."""
        return self.alpha * math.sqrt(self.op.domain_length / 2)


def build_geometry(params: Params, op: SpectralOperator = None) -> EnergyGeometry:
    op = op or build_operator(params)
    lambda1 = lambda_one(params.kappa, params.domain_length)
    delta = params.delta if params.delta is not None else choose_delta(params.alpha, lambda1)
    return EnergyGeometry(alpha=params.alpha, delta=delta, lambda1=lambda1, op=op)


def _array(y) -> np.ndarray:
    if isinstance(y, State):
        return y.array
    arr = np.asarray(y, dtype=float)
    if arr.ndim < 2 or arr.shape[-2] != 2:
        raise ShapeError(f"state arrays must have shape (..., 2, N), got {arr.shape}")
    return arr


def _like(template, arr: np.ndarray):
    return State.from_array(arr) if isinstance(template, State) else arr


def energy_inner(y1, y2, geom: EnergyGeometry):
    a1, a2 = _array(y1), _array(y2)
    u1, v1 = a1[..., 0, :], a1[..., 1, :]
    u2, v2 = a2[..., 0, :], a2[..., 1, :]
    half = geom.alpha / 2
    total = (half ** 2) * u1 * u2 + (half * u1 + v1) * (half * u2 + v2) + geom.weights * u1 * u2
    return np.sum(total, axis=-1)


def energy_norm(y, geom: EnergyGeometry):
    return np.sqrt(np.maximum(energy_inner(y, y, geom), 0.0))


def project_p(y, geom: EnergyGeometry):
    """Unreduced torus coordinate ``s = mean(u) + mean(v)/alpha``."""
    arr = _array(y)
    return (arr[..., 0, 0] + arr[..., 1, 0] / geom.alpha) / geom.sqrt_length


def p_state(s, geom: EnergyGeometry) -> np.ndarray:
    """The state ``s * eta_0`` for scalar or array ``s``."""
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape + (2, geom.op.n_modes))
    out[..., 0, 0] = s * geom.sqrt_length
    return out


def eta_minus_one(geom: EnergyGeometry) -> np.ndarray:
    out = np.zeros((2, geom.op.n_modes))
    out[0, 0] = geom.sqrt_length
    out[1, 0] = -geom.alpha * geom.sqrt_length
    return out


def project_q(y, geom: EnergyGeometry):
    arr = _array(y).copy()
    arr[..., 0, 0] = -arr[..., 1, 0] / geom.alpha
    return _like(y, arr)


def torus_reduce(s):
    reduced = np.mod(s, TWO_PI)
    reduced = np.where(reduced >= TWO_PI, 0.0, reduced)
    return float(reduced) if np.ndim(reduced) == 0 else reduced


def wrapped_distance(p1, p2, period: float = TWO_PI):
    d = np.mod(np.abs(np.asarray(p1) - np.asarray(p2)), period)
    return np.minimum(d, period - d)


def torus_norm(y, geom: EnergyGeometry):
    """Quotient norm ``min_k ||Y + k p_0||_E``."""
    q_sq = energy_inner(project_q(_array(y), geom), project_q(_array(y), geom), geom)
    along = wrapped_distance(project_p(y, geom), 0.0) * geom.eta0_norm
    return np.sqrt(np.maximum(q_sq, 0.0) + along ** 2)


def apply_c(y, geom: EnergyGeometry):
    arr = _array(y)
    u, v = arr[..., 0, :], arr[..., 1, :]
    out = np.stack([v, -geom.op.lambdas * u - geom.alpha * v], axis=-2)
    return _like(y, out)


def graph_norm(y, geom: EnergyGeometry):
    """``||Y||_E + ||CY||_E``."""
    arr = _array(y)
    return energy_norm(arr, geom) + energy_norm(apply_c(arr, geom), geom)


def h1_norm(y, op: SpectralOperator):
    arr = _array(y)
    u, v = arr[..., 0, :], arr[..., 1, :]
    return np.sqrt(np.sum((op.wavenumbers ** 2 + 1) * u ** 2, axis=-1) + np.sum(v ** 2, axis=-1))
