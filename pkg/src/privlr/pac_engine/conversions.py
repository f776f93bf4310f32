"""Posterior success rate <-> mutual information <-> DP epsilon.

The membership prior is 1/2. A mechanism with mutual-information budget
``mi`` caps the adversary's posterior success rate ``p`` through

    mi = p ln(2p) + (1 - p) ln(2 - 2p)

and an (eps, delta)-DP mechanism caps it through p <= 1 - (1 - delta) / (1 + e^eps).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from scipy.optimize import brentq

PRIOR = 0.5
DEFAULT_DELTA = 1e-5
PSR_LEVELS = (0.52, 0.55, 0.65, 0.75, 0.85, 0.95, 0.98)
MI_SUPREMUM = math.log(2.0)


class DomainError(ValueError):
    pass


def psr_to_mi(psr):
    if not 0.5 < psr < 1.0:
        raise DomainError(f"posterior success rate must be in (0.5, 1), got {psr}")
    return psr * math.log(2 * psr) + (1 - psr) * math.log(2 - 2 * psr)


def psr_to_epsilon(psr, delta=DEFAULT_DELTA):
    if not 0.0 <= delta < 1.0:
        raise DomainError(f"delta must be in [0, 1), got {delta}")
    if not 0.0 < psr < 1.0:
        raise DomainError(f"posterior success rate must be in (0, 1), got {psr}")
    arg = (1 - delta) / (1 - psr) - 1
    if arg <= 0:
        raise DomainError(f"no epsilon bound for psr={psr}, delta={delta}")
    return math.log(arg)


def epsilon_to_psr(epsilon, delta=DEFAULT_DELTA):
    """Largest posterior success rate an (epsilon, delta)-DP mechanism allows."""
    if epsilon < 0 or not 0.0 <= delta < 1.0:
        raise DomainError(f"invalid (epsilon, delta) = ({epsilon}, {delta})")
    psr = 1 - (1 - delta) / (1 + math.exp(epsilon))
    if not 0.5 < psr < 1.0:
        raise DomainError(f"epsilon={epsilon} maps outside (0.5, 1)")
    return psr


def mi_to_psr(mi):
    """Invert :func:`psr_to_mi` by bracketed root finding on (0.5, 1)."""
    if not 0.0 < mi < MI_SUPREMUM:
        raise DomainError(f"mutual information must be in (0, ln 2), got {mi}")
    return brentq(lambda p: psr_to_mi(p) - mi, 0.5 + 1e-15, 1 - 1e-15, xtol=1e-15, rtol=1e-15)


@dataclass(frozen=True)
class PrivacyLevel:
    psr: float
    mi: float
    epsilon_equiv: float
    delta_equiv: float = DEFAULT_DELTA
    prior: float = PRIOR

    @classmethod
    def from_psr(cls, psr, delta=DEFAULT_DELTA):
        return cls(psr, psr_to_mi(psr), psr_to_epsilon(psr, delta), delta)

    @classmethod
    def from_epsilon(cls, epsilon, delta=DEFAULT_DELTA):
        return cls.from_psr(epsilon_to_psr(epsilon, delta), delta)

    @classmethod
    def from_mi(cls, mi, delta=DEFAULT_DELTA):
        return cls.from_psr(mi_to_psr(mi), delta)

    def to_dict(self):
        return asdict(self)
