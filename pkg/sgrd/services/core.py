"""Parameter-derived constants and the strong-damping regime test.

All functions are pure; the ledger is a frozen record and can be shared
between worker threads.
"""

import logging
import math
from typing import Optional, Tuple

import numpy as np

from sgrd.exceptions import DomainError, RegimeError
from sgrd.models import ConstantsLedger, Params, RegimeReport

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
# Threshold on alpha * a below which no admissible gamma exists (6 + 4*sqrt(2)).
GAMMA_THRESHOLD = 2 * SQRT2 / (3 * SQRT2 - 4)


def lambda_one(kappa: float, domain_length: float) -> float:
    """Smallest positive eigenvalue of ``-K d^2/dx^2`` with Neumann ends."""
    return kappa * (math.pi / domain_length) ** 2


def compute_a(alpha: float, delta: float, lambda1: float) -> float:
    """Spectral gap of the linear part on the fluctuation space."""
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if not lambda1 > 0:
        raise DomainError(f"lambda1 must be positive, got {lambda1}")
    if not 0 < delta <= 1:
        raise DomainError(f"delta must lie in (0, 1], got {delta}")
    return alpha / 2 - abs(alpha / 2 - delta * lambda1 / alpha)


def choose_delta(alpha: float, lambda1: float) -> float:
    """Largest-gap norm parameter subject to ``delta <= 1``."""
    if not alpha > 0 or not lambda1 > 0:
        raise DomainError(f"alpha and lambda1 must be positive, got {alpha}, {lambda1}")
    return min(1.0, alpha ** 2 / (2 * lambda1))


def gamma_star(a: float) -> float:
    """Minimiser of ``1/gamma + 1/(a - 2 gamma)`` on ``(0, a/2)``."""
    if not a > 0:
        raise DomainError(f"gamma_star needs a > 0, got {a}")
    return (2 - SQRT2) * a / 2


def lf_rate_sum(alpha: float, a: float, gamma: float) -> float:
    """Left-hand side ``(2/alpha)(1/gamma + 1/(a - 2 gamma))`` of the rate condition."""
    if not 0 < gamma < a / 2:
        return math.inf
    return (2 / alpha) * (1 / gamma + 1 / (a - 2 * gamma))


def attraction_constant_m(alpha: float, a: float, gamma: float) -> float:
    """Constant of the exponential attraction estimate towards the curve."""
    total = lf_rate_sum(alpha, a, gamma)
    if not total < 1:
        raise RegimeError(
            f"rate condition fails: (2/alpha)(1/gamma + 1/(a-2gamma)) = {total:.6g} >= 1 "
            f"for alpha={alpha}, a={a}, gamma={gamma}")
    return 1 / (1 - total)


def regime_check(ledger: ConstantsLedger) -> RegimeReport:
    a, alpha = ledger.a, ledger.alpha
    a_positive = a > 0
    return RegimeReport(
        a_positive=a_positive,
        curve_regime=a_positive and a > 4 * (2 / alpha),
        gamma_exists=a_positive and alpha * a > GAMMA_THRESHOLD,
    )


def parameter_window(alpha: float, lambda1: float) -> Optional[Tuple[float, float]]:
    """Open delta interval on which the one-dimensional condition is guaranteed.

    Requires ``alpha > sqrt(2c)`` and ``lambda1 > c``; returns ``None`` otherwise.
    """
    c = GAMMA_THRESHOLD
    if alpha <= math.sqrt(2 * c) or lambda1 <= c:
        return None
    low, high = c / lambda1, min((alpha ** 2 - c) / lambda1, 1.0)
    return (low, high) if low < high else None


def mu_pairs(alpha: float, lambdas) -> Tuple[Tuple[Tuple[float, float], Tuple[float, float]], ...]:
    """Eigenvalues ``(-alpha +- sqrt(alpha^2 - 4 lambda_i)) / 2`` as (re, im) pairs."""
    pairs = []
    for lam in np.asarray(lambdas, dtype=float):
        disc = alpha ** 2 - 4 * lam
        if disc >= 0:
            root = math.sqrt(disc)
            plus, minus = ((-alpha + root) / 2, 0.0), ((-alpha - root) / 2, 0.0)
        else:
            root = math.sqrt(-disc)
            plus, minus = (-alpha / 2, root / 2), (-alpha / 2, -root / 2)
        pairs.append((plus, minus))
    return tuple(pairs)


def ledger_constants(params: Params) -> ConstantsLedger:
    alpha = params.alpha
    length = params.domain_length
    lambda1 = lambda_one(params.kappa, length)
    delta = params.delta if params.delta is not None else choose_delta(alpha, lambda1)
    a = compute_a(alpha, delta, lambda1)

    lambdas = params.kappa * (np.arange(params.n_modes) * math.pi / length) ** 2
    f = params.f_coeffs
    f_sq = float(np.dot(f, f))
    f_grad_sq = float(np.dot(lambdas, f * f))

    # alpha^2 - 3 alpha + 3 >= 3/4 for every alpha
    a1 = math.sqrt(alpha ** 2 - 3 * alpha + 3)
    a2 = math.sqrt(3 * length + 3 * f_sq)
    a3 = math.sqrt(1.75 * alpha ** 2 * length + 1.75 * alpha ** 2 * f_sq + 3 * f_grad_sq)
    a4 = math.sqrt(2 / (2 - delta))

    nan = float('nan')
    a5 = a6 = a7 = g_star = big_m = nan
    if a > 0:
        s3 = math.sqrt(3)
        a5 = (4 * a1 + 2 * math.sqrt(7) * alpha * abs(1 - alpha)) / a + 8 * s3 * a1 * a4 / a ** 2
        a6 = (4 + 4 * s3 * abs(1 - alpha)) / a + 8 * s3 * a4 / a ** 2
        a7 = (2 * a2 + 2 * a3) / a + 2 * s3 * a2 * a4 / a ** 2
        g_star = gamma_star(a)
        if lf_rate_sum(alpha, a, g_star) < 1:
            big_m = attraction_constant_m(alpha, a, g_star)

    draft = ConstantsLedger(
        alpha=alpha, delta=delta, lambda1=lambda1, a=a, lf_bound=2 / alpha,
        gamma_star=g_star, big_m=big_m, a1=a1, a2=a2, a3=a3, a4=a4,
        a5=a5, a6=a6, a7=a7, domain_measure=length, regime_1d=False,
        mu_pairs=mu_pairs(alpha, lambdas),
    )
    report = regime_check(draft)
    if not report.regime_1d:
        logger.debug(f"Parameters outside the one-dimensional regime: alpha={alpha}, a={a:.6g}")
    return ConstantsLedger(**{**draft.__dict__, 'regime_1d': report.regime_1d})
