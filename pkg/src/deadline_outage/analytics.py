"""Closed forms and bounds for the outage events.

Notation used throughout:

* ``sigma2`` is the MMSE estimation error variance of a link.
* ``G`` is the measurement noise-to-signal ratio ``1 / (rho (1 - sigma2))``
  of a single-AP device.
* ``Y = W / R`` is the scaled airtime (seconds per bit per hertz) and ``y``
  a deadline in the same units; time underflow is the event
  ``sum_d Y_d <= y`` and time overflow its complement at
  ``y = T_D W / B``.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import expm

from .specfun import (
    DEFAULT_QUADRATURE,
    DomainError,
    Quadrature,
    assoc_legendre,
    integrate,
    maximize_1d,
)

LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Device failure and transmission error
# ---------------------------------------------------------------------------

def _check_sigma2(sigma2):
    if not 0.0 < sigma2 <= 1.0:
        raise DomainError(f"estimation error variance must lie in (0, 1], got {sigma2}")


def p_device_failure_a1(sigma2):
    """P(R > C) for one AP at full rate: ``(1 - sigma / sqrt(4 - 3 sigma^2)) / 2``."""
    _check_sigma2(sigma2)
    return 0.5 * (1.0 - math.sqrt(sigma2 / (4.0 - 3.0 * sigma2)))


def legendre_argument(sigma2):
    """``(2 - s) / sqrt(4 s - 3 s^2)`` for ``s = sigma2``.

    This is ``p / sqrt(p^2 - a^2)`` with ``a = 2/s`` and
    ``p = (2 - s) / (s (1 - s))``, the Laplace-domain point at which the
    averaged Bessel terms are evaluated.
    """
    return (2.0 - sigma2) / math.sqrt(4.0 * sigma2 - 3.0 * sigma2 * sigma2)


def p_device_failure(sigma2, A):
    """P(||h_hat|| > ||h||) for ``A`` equal-SNR APs at full rate.

    Averages the conditional probability

        1 - Q_A(u, u) = (1 - e^{-x} I_0(x)) / 2 - e^{-x} sum_{k=1}^{A-1} I_k(x),
        x = 2 ||h_hat||^2 / sigma2,

    over ``||h_hat||^2 ~ Gamma(A, 1 - sigma2)`` in closed form through
    associated Legendre functions.
    """
    _check_sigma2(sigma2)
    if int(A) != A or A < 1:
        raise DomainError(f"AP count must be a positive integer, got {A}")
    A = int(A)
    if sigma2 == 1.0:
        return 0.0
    scale = (sigma2 / (4.0 - 3.0 * sigma2)) ** (0.5 * A)
    x = legendre_argument(sigma2)
    if not x > 1.0:
        # sigma2 rounds to 1: P^0 -> 1, P^{-k} -> 0
        return max(0.0, 0.5 - 0.5 * scale)
    p = 0.5 - 0.5 * scale * abs(assoc_legendre(A - 1, 0, x))
    for k in range(1, A):
        coef = math.exp(math.lgamma(A + k) - math.lgamma(A))
        p -= coef * scale * abs(assoc_legendre(A - 1, -k, x))
    return min(0.5, max(0.0, p))


def p_transmission_error(p_df):
    """``1 - prod(1 - p_d)`` over independent devices."""
    p = np.asarray(p_df, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise DomainError("device failure probabilities must lie in [0, 1]")
    if p.size == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        return float(-np.expm1(np.sum(np.log1p(-p))))


def rate_cdf(threshold, snr, sigma2, beta, W):
    """P(R <= threshold) for ``R = beta W log2(1 + sum_a rho_a |h_hat_a|^2)``.

    ``rho_a |h_hat_a|^2`` are independent exponentials with means
    ``rho_a (1 - sigma2_a)``; their sum is phase-type, so the CDF is
    ``1 - e_1^T expm(S g) 1`` with a bidiagonal sub-generator ``S``.
    """
    snr = np.atleast_1d(np.asarray(snr, dtype=float))
    sigma2 = np.broadcast_to(np.asarray(sigma2, dtype=float), snr.shape)
    if threshold < 0:
        return 0.0
    if beta == 0.0:
        return 1.0
    means = snr * (1.0 - sigma2)
    means = means[means > 0]
    if means.size == 0:
        return 1.0
    g = 2.0 ** (threshold / (beta * W)) - 1.0
    if math.isinf(g):
        return 1.0
    rates = 1.0 / means
    n = rates.size
    S = np.diag(-rates) + np.diag(rates[:-1], 1)
    surv = expm(S * g)[0].sum()
    return float(min(1.0, max(0.0, 1.0 - surv)))


# ---------------------------------------------------------------------------
# Scaled airtime and time underflow
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NsrProfile:
    """Per-device measurement NSRs ``G_d`` and their mean."""

    g: np.ndarray

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.g, dtype=float))
        if g.ndim != 1 or g.size == 0 or np.any(~(g > 0)) or np.any(~np.isfinite(g)):
            raise DomainError("NSR profile must be a non-empty vector of positive values")
        object.__setattr__(self, "g", g)

    @property
    def D(self):
        return self.g.size

    @property
    def g_bar(self):
        return float(np.mean(self.g))

    @classmethod
    def from_snr(cls, rho, L=None, sigma2=None):
        """``G = 1 / (rho (1 - sigma2))`` with ``sigma2`` from ``L`` if not given."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if sigma2 is None:
            if L is None:
                raise ValueError("give either L or sigma2")
            sigma2 = 1.0 / (1.0 + rho * L)
        return cls(1.0 / (rho * (1.0 - np.asarray(sigma2, dtype=float))))

    @classmethod
    def equal(cls, G, D):
        return cls(np.full(int(D), float(G)))


@dataclass(frozen=True)
class BoundSet:
    lower: float
    upper: float
    tight_upper: Optional[float] = None
    j_values: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 <= self.lower <= self.upper <= 1.0:
            raise ValueError(f"inconsistent bounds: lower={self.lower}, upper={self.upper}")
        if self.tight_upper is not None and self.tight_upper > self.upper * (1 + 1e-12):
            raise ValueError("tight upper bound exceeds the loose one")


def scaled_airtime_cdf(y, G):
    """``F_Y(y) = exp(-G (2^{1/y} - 1))``; vectorised over ``y``."""
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore", divide="ignore"):
        out = np.where(y > 0, np.exp(-G * np.expm1(LN2 / np.where(y > 0, y, 1.0))), 0.0)
    return float(out) if out.ndim == 0 else out


def scaled_airtime_pdf(y, G):
    """Density ``G e^G ln2 2^{1/y} e^{-G 2^{1/y}} / y^2`` (log-space evaluation)."""
    y = np.asarray(y, dtype=float)
    ys = np.where(y > 0, y, 1.0)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        log_f = (math.log(G * LN2) + G + LN2 / ys - G * np.exp(LN2 / ys) - 2.0 * np.log(ys))
        out = np.where(y > 0, np.exp(log_f), 0.0)
    out = np.nan_to_num(out, nan=0.0)
    return float(out) if out.ndim == 0 else out


def _exponent_2(v, y):
    # 2^{z(v)} with z = log2 v / (y log2 v - 1): the partner airtime's
    # 2^{1/x} after the substitution v = 2^{1/x}, x in (0, y)
    t = math.log2(v)
    den = y * t - 1.0
    if den <= 0.0:
        return math.inf
    z = t / den
    if z > 1023.0:
        return math.inf
    return 2.0 ** z


def time_underflow_exact_d2(y, G, q=DEFAULT_QUADRATURE):
    """P(Y_1 + Y_2 <= y) for two devices with the same NSR ``G``.

    Evaluates ``G * int_{2^{1/y}}^inf exp(-G (v + 2^{z(v)} - 2)) dv``.
    """
    if not (y > 0 and G > 0):
        raise DomainError("deadline and NSR must be positive")
    if math.isinf(y):
        return 1.0
    c = 2.0 ** (1.0 / y) if 1.0 / y < 1023 else math.inf
    if math.isinf(c):
        return 0.0

    def f(v):
        w = _exponent_2(v, y)
        if math.isinf(w):
            return 0.0
        e = -G * (v + w - 2.0)
        return G * math.exp(e) if e > -745.0 else 0.0

    return min(1.0, max(0.0, integrate(f, c, math.inf, q)))


def time_underflow_bounds(y, nsr):
    """Loose bracket on P(sum_d Y_d <= y).

    ``exp(-D Gbar (2^{D/y} - 1)) <= P <= exp(-D Gbar (2^{1/y} - 1))``; both
    sides coincide with ``F_Y`` for a single device.
    """
    if not y > 0:
        raise DomainError("deadline must be positive")
    total = float(np.sum(nsr.g))
    D = nsr.D
    with np.errstate(over="ignore"):
        lower = math.exp(-total * math.expm1(min(D * LN2 / y, 709.0))) if D * LN2 / y < 709 else 0.0
        upper = math.exp(-total * math.expm1(min(LN2 / y, 709.0))) if LN2 / y < 709 else 0.0
    return BoundSet(lower=lower, upper=upper)


def tight_j_objective(v, y, G):
    """``log(1 - exp(G (2^{1/y} - 2^{z(v)}))) / (2^{1/y} - v)``; vectorised in ``v``.

    Positive on ``(2^{1/y}, inf)`` and vanishing at both ends.
    """
    v = np.asarray(v, dtype=float)
    c = 2.0 ** (1.0 / y)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        t = np.log2(v)
        den = y * t - 1.0
        z = np.where(den > 0, t / np.where(den > 0, den, 1.0), np.inf)
        w = np.exp2(np.minimum(z, 1100.0))
        inner = -np.expm1(G * (c - w))
        out = np.log(inner) / (c - v)
    out = np.where((v > c) & np.isfinite(out), out, 0.0)
    return float(out) if out.ndim == 0 else out


def tight_j(y, G):
    """Maximise :func:`tight_j_objective` over ``v > 2^{1/y}``.

    Returns ``(argmax, J)``.
    """
    if not (y > 0 and G > 0):
        raise DomainError("deadline and NSR must be positive")
    c = 2.0 ** (1.0 / y)
    return maximize_1d(lambda v: tight_j_objective(v, y, G), c * (1.0 + 1e-6))


def time_underflow_tight(y, nsr):
    """Loose bracket plus the tightened upper bound.

    ``tight = exp(-D Gbar (2^{1/y} - 1)) * prod_{d>=2} J_d / (J_d + G_d)``,
    where ``J_d`` is :func:`tight_j` evaluated at the cumulative NSR
    ``G_1 + ... + G_{d-1}`` of the devices already convolved.
    """
    if nsr.D < 2:
        raise DomainError("the tightened bound needs at least two devices")
    loose = time_underflow_bounds(y, nsr)
    if loose.upper == 0.0:
        return BoundSet(lower=0.0, upper=0.0, tight_upper=0.0)
    cum = np.cumsum(nsr.g)
    js = np.empty(nsr.D - 1)
    factor = 1.0
    for d in range(1, nsr.D):
        _, j = tight_j(y, float(cum[d - 1]))
        js[d - 1] = j
        factor *= j / (j + nsr.g[d])
    tight = min(loose.upper, loose.upper * factor)
    return BoundSet(lower=loose.lower, upper=loose.upper, tight_upper=tight, j_values=js)


# ---------------------------------------------------------------------------
# Time overflow sandwich
# ---------------------------------------------------------------------------

def time_overflow_sandwich(pairs):
    """Bracket P(TO) from per-device ``(P[R_d <= thr], P[R_d > thr])``.

    ``thr = D B / T_D``. Lower bound: every device needs more than its equal
    share of the budget. Upper bound: at least one device does.
    """
    pairs = np.atleast_2d(np.asarray(pairs, dtype=float))
    if pairs.shape[-1] != 2:
        raise ValueError("expected (P[R <= thr], P[R > thr]) pairs")
    if np.any(np.abs(pairs.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("each pair must sum to one")
    if np.any((pairs < 0) | (pairs > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    lower = float(np.prod(pairs[:, 0]))
    upper = float(1.0 - np.prod(pairs[:, 1]))
    return BoundSet(lower=lower, upper=max(lower, upper))
