"""Analytic security proxy for the approximate Gaussian mapping.

The mapped component ``x = (u + n) / sigma`` is symmetric with unit variance,
so its only non-zero higher cumulants are the even ones, and for r >= 3 they
equal those of ``u`` scaled by ``sigma^-r``. The KL divergence to N(0, 1) is
approximated by the truncated Gram-Charlier sum over kappa_4 .. kappa_10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .codec import Q_MAX

# Bernoulli numbers B_4 .. B_10. The discrete uniform law on N unit-spaced
# points has even cumulants kappa_2j = B_2j (N^2j - 1) / (2j).
_BERNOULLI = {4: -1.0 / 30.0, 6: 1.0 / 42.0, 8: -1.0 / 30.0, 10: 5.0 / 66.0}

ORDERS = (4, 6, 8, 10)

KL_CAP = 50.0
EMPIRICAL_SUPPORT = 8.0
EMPIRICAL_EPS = 1e-12


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class MomentSet:
    N: int
    mu: dict[int, float]


@dataclass(frozen=True)
class CumulantSet:
    kappa4: float
    kappa6: float
    kappa8: float
    kappa10: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.kappa4, self.kappa6, self.kappa8, self.kappa10)


def _check_q(Q: int) -> int:
    if not 1 <= Q <= Q_MAX:
        raise DomainError(f"Q must be in [1, {Q_MAX}], got {Q}")
    return 2**Q


def uniform_moments(Q: int) -> MomentSet:
    """Central moments mu_2 .. mu_10 of m ~ Uniform{0, ..., 2^Q - 1}."""
    N = _check_q(Q)
    n2 = float(N) ** 2
    a = n2 - 1.0
    mu = {
        2: a / 12.0,
        4: a * (3 * n2 - 7) / 240.0,
        6: a * (3 * n2**2 - 18 * n2 + 31) / 1344.0,
        8: a * (5 * n2**3 - 55 * n2**2 + 239 * n2 - 381) / 11520.0,
        10: a * (3 * n2**4 - 52 * n2**3 + 410 * n2**2 - 1636 * n2 + 2555) / 33792.0,
    }
    return MomentSet(N=N, mu=mu)


def message_variance(S: float, Q: int) -> float:
    if S < 0:
        raise DomainError("S must be non-negative")
    N = 2**Q
    return S * S * (N + 1) / (12.0 * (N - 1))


def cumulants(S: float, Q: int) -> CumulantSet:
    """Closed-form even cumulants of the normalized mapped noise.

    With d = 12(N-1) + S^2(N+1), kappa_2j = c_j S^2j (N^2j - 1) / ((N-1)^j d^j)
    where c_j = 12^j B_2j / (2j).
    """
    if S <= 0:
        raise DomainError("S must be positive")
    N = _check_q(Q)
    d = 12.0 * (N - 1) + S * S * (N + 1)
    # ratio = S^2 / ((N-1) d) keeps every power in floating range up to Q=16
    ratio = S * S / ((N - 1) * d)
    vals = []
    for r in ORDERS:
        j = r // 2
        coeff = 12.0**j * _BERNOULLI[r] / r
        vals.append(coeff * (float(N) ** r - 1.0) * ratio**j)
    return CumulantSet(*vals)


def kl_terms(S: float, Q: int) -> tuple[float, float, float, float]:
    """Per-order contributions kappa_r^2 / (2 r!) of the truncated KL sum."""
    return tuple(0.5 * k * k / math.factorial(r) for k, r in zip(cumulants(S, Q).as_tuple(), ORDERS))


def analytic_kl(S: float, Q: int) -> float:
    return math.fsum(kl_terms(S, Q))


def kappa4_share(S: float, Q: int) -> float:
    terms = kl_terms(S, Q)
    return terms[0] / math.fsum(terms)


def outside_validity(S: float, Q: int) -> bool:
    """True where a higher-order term outweighs the kappa_4 term (small-S expansion breaks down)."""
    t4, _, t8, t10 = kl_terms(S, Q)
    return t8 > t4 or t10 > t4


def security_loss(dkl: float) -> float:
    """-1 / log(dkl) on (0, 1)."""
    if not 0.0 < dkl < 1.0:
        raise DomainError(f"security loss needs 0 < dkl < 1, got {dkl!r}")
    return -1.0 / math.log(dkl)


@dataclass(frozen=True)
class EmpiricalKL:
    value: float
    bins: int
    n_samples: int
    capped: bool
    note: str = field(
        default="histogram plug-in estimate; positively biased by roughly (bins-1)/(2n)"
    )


def empirical_kl(samples, bins: int = 64, support: float = EMPIRICAL_SUPPORT,
                 eps: float = EMPIRICAL_EPS, cap: float = KL_CAP,
                 min_samples: int = 100_000) -> EmpiricalKL:
    """Histogram estimate of KL(p_hat || N(0, 1)) on [-support, support]."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {x.size}")
    if bins < 32:
        raise ValueError("bins must be >= 32")
    if np.ptp(x) == 0.0:
        # point mass: the true divergence is infinite
        return EmpiricalKL(value=cap, bins=bins, n_samples=int(x.size), capped=True)
    edges = np.linspace(-support, support, bins + 1)
    counts, _ = np.histogram(np.clip(x, -support, support), bins=edges)
    p = counts / x.size + eps
    p /= p.sum()
    q = np.diff(ndtr(edges))
    q[0] += ndtr(-support)
    q[-1] += ndtr(-support)
    q = q + eps
    q /= q.sum()
    value = float(np.sum(p * np.log(p / q)))
    capped = value > cap
    return EmpiricalKL(value=min(value, cap), bins=bins, n_samples=int(x.size), capped=capped)
