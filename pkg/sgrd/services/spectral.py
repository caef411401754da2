"""Neumann cosine basis on ``[0, L]``.

Coefficients are taken against the orthonormal basis ``e_0 = 1/sqrt(L)``,
``e_i = sqrt(2/L) cos(i pi x / L)``; physical samples live on the midpoint
grid ``x_n = (n + 1/2) L / M``. On that grid the basis is exactly the
orthonormal DCT-II, so both transforms go through ``scipy.fft``.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import fft

from sgrd.exceptions import ShapeError
from sgrd.models import Params

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpectralOperator:
    kappa: float
    domain_length: float
    n_modes: int
    n_quad: int
    lambdas: np.ndarray
    wavenumbers: np.ndarray

    @property
    def lambda1(self) -> float:
        return float(self.lambdas[1])

    @property
    def grid(self) -> np.ndarray:
        return (np.arange(self.n_quad) + 0.5) * self.domain_length / self.n_quad

    @property
    def basis_norms(self) -> np.ndarray:
        """Sup-norm of each basis function: ``1/sqrt(L)`` then ``sqrt(2/L)``."""
        norms = np.full(self.n_modes, math.sqrt(2 / self.domain_length))
        norms[0] = 1 / math.sqrt(self.domain_length)
        return norms


def build_operator(params: Params) -> SpectralOperator:
    k = np.arange(params.n_modes) * math.pi / params.domain_length
    lambdas = params.kappa * k ** 2
    lambdas.setflags(write=False)
    k.setflags(write=False)
    return SpectralOperator(
        kappa=params.kappa,
        domain_length=params.domain_length,
        n_modes=params.n_modes,
        n_quad=params.n_quad,
        lambdas=lambdas,
        wavenumbers=k,
    )


def to_physical(field, op: SpectralOperator) -> np.ndarray:
    """Evaluate coefficient vectors (last axis ``N``) on the midpoint grid."""
    coeffs = np.asarray(field, dtype=float)
    if coeffs.shape[-1:] != (op.n_modes,):
        raise ShapeError(f"expected {op.n_modes} coefficients, got shape {coeffs.shape}")
    pad = [(0, 0)] * (coeffs.ndim - 1) + [(0, op.n_quad - op.n_modes)]
    padded = np.pad(coeffs, pad)
    return math.sqrt(op.n_quad / op.domain_length) * fft.idct(padded, type=2, norm='ortho', axis=-1)


def to_spectral(samples, op: SpectralOperator) -> np.ndarray:
    """Project midpoint samples (last axis ``M``) onto the first ``N`` modes."""
    values = np.asarray(samples, dtype=float)
    if values.shape[-1:] != (op.n_quad,):
        raise ShapeError(f"expected {op.n_quad} samples, got shape {values.shape}")
    coeffs = fft.dct(values, type=2, norm='ortho', axis=-1)[..., :op.n_modes]
    return math.sqrt(op.domain_length / op.n_quad) * coeffs


def mean_part(field, op: SpectralOperator):
    """Spatial average of a field, ``c_0 / sqrt(L)``."""
    return np.asarray(field, dtype=float)[..., 0] / math.sqrt(op.domain_length)


def apply_a(field, op: SpectralOperator) -> np.ndarray:
    return op.lambdas * np.asarray(field, dtype=float)


def l2_norm(field) -> np.ndarray:
    return np.sqrt(np.sum(np.asarray(field, dtype=float) ** 2, axis=-1))


def quadrature_l2_sq(samples, op: SpectralOperator) -> np.ndarray:
    """Midpoint-rule value of ``int_0^L u^2 dx``."""
    values = np.asarray(samples, dtype=float)
    return op.domain_length / op.n_quad * np.sum(values ** 2, axis=-1)


def end_slopes(field, op: SpectralOperator) -> Tuple[np.ndarray, np.ndarray]:
    """One-sided slopes of the reconstructed field at ``x = 0`` and ``x = L``.

    Uses the quadratic through the three midpoint samples nearest each end,
    so the estimate is exact for quadratics.
    """
    u = to_physical(field, op)
    if op.n_quad < 3:
        raise ShapeError(f"end slopes need at least three samples, got n_quad={op.n_quad}")
    h = op.domain_length / op.n_quad
    left = (-2 * u[..., 0] + 3 * u[..., 1] - u[..., 2]) / h
    right = (2 * u[..., -1] - 3 * u[..., -2] + u[..., -3]) / h
    return left, right
