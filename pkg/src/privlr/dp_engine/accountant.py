"""Renyi-DP accounting for the Poisson-subsampled Gaussian mechanism.

Per-step RDP at order ``alpha`` is ``log(A_alpha) / (alpha - 1)`` with

    A_alpha = E_{z ~ N(0, s^2)} [((1 - q) + q * exp((2z - 1) / (2 s^2)))^alpha]

evaluated in log space: a binomial expansion for integer orders and the
two-sided erfc series for fractional ones (Mironov, Talwar & Zhang, 2019).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

DEFAULT_ORDERS = tuple([1.25, 1.5, 1.75, 2.0, 2.5] + [float(a) for a in range(3, 65)] + [128.0, 256.0])
SIGMA_MIN = 1e-2
SIGMA_MAX = 1e6


class UnreachableBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class DpParams:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")


@dataclass(frozen=True)
class RdpCurve:
    orders: tuple
    rdp_values: tuple

    def __post_init__(self):
        if len(self.orders) != len(self.rdp_values):
            raise ValueError("orders and rdp_values differ in length")
        if any(v < 0 for v in self.rdp_values):
            raise ValueError("rdp values must be non-negative")


def _log_add(a, b):
    hi, lo = max(a, b), min(a, b)
    if hi == -math.inf:
        return hi
    return hi + math.log1p(math.exp(lo - hi))


def _log_sub(a, b):
    """log(exp(a) - exp(b)) for a >= b."""
    if b == -math.inf:
        return a
    if a <= b:
        return -math.inf
    return a + math.log(-math.expm1(b - a))


def _log_erfc(x):
    return math.log(2.0) + special.log_ndtr(-x * math.sqrt(2.0))


def _log_a_int(q, sigma, alpha):
    k = np.arange(alpha + 1)
    log_binom = special.gammaln(alpha + 1) - special.gammaln(k + 1) - special.gammaln(alpha - k + 1)
    terms = log_binom + k * math.log(q) + (alpha - k) * math.log1p(-q) + (k * k - k) / (2 * sigma**2)
    return float(special.logsumexp(terms))


def _log_a_frac(q, sigma, alpha):
    log_a0 = log_a1 = -math.inf
    z0 = sigma**2 * math.log(1.0 / q - 1.0) + 0.5
    i = 0
    while True:
        coef = special.binom(alpha, i)
        log_coef = math.log(abs(coef))
        j = alpha - i
        log_t0 = log_coef + i * math.log(q) + j * math.log1p(-q)
        log_t1 = log_coef + j * math.log(q) + i * math.log1p(-q)
        log_e0 = math.log(0.5) + _log_erfc((i - z0) / (math.sqrt(2) * sigma))
        log_e1 = math.log(0.5) + _log_erfc((z0 - j) / (math.sqrt(2) * sigma))
        log_s0 = log_t0 + (i * i - i) / (2 * sigma**2) + log_e0
        log_s1 = log_t1 + (j * j - j) / (2 * sigma**2) + log_e1
        if coef > 0:
            log_a0 = _log_add(log_a0, log_s0)
            log_a1 = _log_add(log_a1, log_s1)
        else:
            log_a0 = _log_sub(log_a0, log_s0)
            log_a1 = _log_sub(log_a1, log_s1)
        i += 1
        if max(log_s0, log_s1) < -30 and i > alpha:
            break
    return _log_add(log_a0, log_a1)


@lru_cache(maxsize=65536)
def _rdp_single(sigma, q, alpha):
    if q == 0:
        return 0.0
    if q == 1.0:
        return alpha / (2 * sigma**2)
    if float(alpha).is_integer():
        log_a = _log_a_int(q, sigma, int(alpha))
    else:
        log_a = _log_a_frac(q, sigma, alpha)
    return max(float(log_a) / (alpha - 1), 0.0)


def rdp_subsampled_gaussian(sigma, q, orders=DEFAULT_ORDERS):
    """Per-step RDP curve of the Gaussian mechanism with Poisson sampling rate q."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    if not 0.0 < q <= 1.0:
        raise ValueError("sampling rate q must be in (0, 1]")
    orders = tuple(float(a) for a in orders)
    if any(a <= 1 for a in orders):
        raise ValueError("RDP orders must be > 1")
    values = tuple(_rdp_single(float(sigma), float(q), a) for a in orders)
    return RdpCurve(orders, values)


def rdp_to_dp_with_order(curve, steps, delta):
    if not curve.orders:
        raise ValueError("empty RDP curve")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    orders = np.asarray(curve.orders)
    eps = steps * np.asarray(curve.rdp_values) + math.log(1.0 / delta) / (orders - 1)
    best = int(np.nanargmin(eps))
    return float(eps[best]), float(orders[best])


def rdp_to_dp(curve, steps, delta):
    """Convert composed RDP to (epsilon, delta)-DP, optimizing over the orders."""
    return rdp_to_dp_with_order(curve, steps, delta)[0]


def epsilon_for(sigma, q, steps, delta, orders=DEFAULT_ORDERS):
    return rdp_to_dp(rdp_subsampled_gaussian(sigma, q, orders), steps, delta)


@lru_cache(maxsize=4096)
def calibrate_sigma(target, q, steps, orders=DEFAULT_ORDERS, rel_tol=1e-4):
    """Smallest noise multiplier whose accounted epsilon stays within ``target``.

    Bisects in log-sigma over [SIGMA_MIN, SIGMA_MAX]; the returned sigma
    always satisfies the budget.
    """
    if not isinstance(target, DpParams):
        target = DpParams(*target)
    eps_at = lambda s: epsilon_for(s, q, steps, target.delta, orders)  # noqa: E731
    if eps_at(SIGMA_MAX) > target.epsilon:
        raise UnreachableBudgetError(
            f"epsilon={target.epsilon} unreachable with sigma <= {SIGMA_MAX:g}"
            f" (q={q}, steps={steps}, delta={target.delta})"
        )
    lo, hi = SIGMA_MIN, SIGMA_MAX
    if eps_at(lo) <= target.epsilon:
        return lo
    while hi / lo - 1.0 > rel_tol:
        mid = math.sqrt(lo * hi)
        if eps_at(mid) <= target.epsilon:
            hi = mid
        else:
            lo = mid
    return hi
