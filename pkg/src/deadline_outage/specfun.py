"""Special functions and one-dimensional numerical routines.

Everything here is a pure function of its arguments. The Bessel and Marcum
routines work on the exponentially scaled form ``exp(-x) I_k(x)`` internally
so that arguments up to several hundred do not overflow.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as _integrate
from scipy import optimize as _optimize


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, estimate, error):
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.estimate = estimate
        self.error = error


class MaximizationError(RuntimeError):
    """No positive interior value could be bracketed."""


@dataclass(frozen=True)
class Quadrature:
    """Tolerances for :func:`integrate`."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if int(self.max_subdivisions) < 1:
            raise ValueError("max_subdivisions must be >= 1")


DEFAULT_QUADRATURE = Quadrature()

_SERIES_CUTOFF = 1.0
_RESCALE = 1e250


# ---------------------------------------------------------------------------
# Modified Bessel function of the first kind, integer order
# ---------------------------------------------------------------------------

def _ive_series(nmax, x):
    # Power series, scaled by exp(-x); only used for small x.
    out = np.zeros(nmax + 1)
    half = 0.5 * x
    log_half = math.log(half)
    for n in range(nmax + 1):
        log_t = n * log_half - math.lgamma(n + 1)
        if log_t < -745.0:
            break
        t = math.exp(log_t)
        s = t
        q = half * half
        k = 0
        while True:
            k += 1
            t *= q / (k * (k + n))
            s += t
            if t <= 1e-17 * s:
                break
        out[n] = s
    return out * math.exp(-x)


def _ive_miller(nmax, x):
    # Backward recurrence I_{k-1} = (2k/x) I_k + I_{k+1}, normalised with
    # exp(-x) * (I_0 + 2 * sum_{k>=1} I_k) = 1.
    start = nmax + 30 + int(math.sqrt(80.0 * x)) + int(0.1 * nmax)
    start += start % 2
    vals = np.zeros(nmax + 1)
    i_next = 0.0
    i_cur = 1e-300
    total = 0.0
    for k in range(start, 0, -1):
        i_prev = (2.0 * k / x) * i_cur + i_next
        i_next, i_cur = i_cur, i_prev
        # i_cur now holds the (unnormalised) order k-1 value
        if k - 1 >= 1:
            total += i_cur
        if k - 1 <= nmax:
            vals[k - 1] = i_cur
        if abs(i_cur) > _RESCALE:
            i_cur /= _RESCALE
            i_next /= _RESCALE
            total /= _RESCALE
            vals /= _RESCALE
    norm = vals[0] + 2.0 * total
    return vals / norm


def bessel_ive_sequence(nmax, x):
    """Return ``exp(-x) I_k(x)`` for ``k = 0, ..., nmax``.

    Parameters
    ----------
    nmax : int
        Highest order required (>= 0).
    x : float
        Non-negative argument.
    """
    nmax = int(nmax)
    x = float(x)
    if nmax < 0:
        raise DomainError(f"order must be non-negative, got {nmax}")
    if not x >= 0.0 or math.isinf(x):
        raise DomainError(f"argument must be finite and non-negative, got {x}")
    if x == 0.0:
        out = np.zeros(nmax + 1)
        out[0] = 1.0
        return out
    if x <= _SERIES_CUTOFF:
        return _ive_series(nmax, x)
    return _ive_miller(nmax, x)


def bessel_ive(order, x):
    """Exponentially scaled modified Bessel function ``exp(-x) I_order(x)``."""
    _check_order(order)
    return float(bessel_ive_sequence(int(order), x)[int(order)])


def bessel_i(order, x):
    """Modified Bessel function of the first kind ``I_order(x)``.

    Integer order only. Overflows to ``inf`` only when the true value exceeds
    the double range (x beyond roughly 713).
    """
    _check_order(order)
    v = bessel_ive(order, x)
    if v == 0.0:
        return 0.0
    log_v = math.log(v) + float(x)
    if log_v > 709.78:
        return math.inf
    return v * math.exp(float(x))


def _check_order(order):
    if int(order) != order or order < 0:
        raise DomainError(f"order must be a non-negative integer, got {order}")


# ---------------------------------------------------------------------------
# Marcum Q-function
# ---------------------------------------------------------------------------

def _marcum_q_zero_a(m, b):
    # Q_m(0, b) = exp(-b^2/2) sum_{k<m} (b^2/2)^k / k!
    h = 0.5 * b * b
    if h == 0.0:
        return 1.0
    log_h = math.log(h)
    s = 0.0
    for k in range(m):
        s += math.exp(k * log_h - math.lgamma(k + 1) - h)
    return min(1.0, s)


def marcum_q(order, a, b):
    """Generalised Marcum Q-function ``Q_order(a, b)`` for integer order.

    Uses the Bessel series in scaled form::

        a < b :  Q = exp(-(a-b)^2/2) * sum_{k>=1-m} (a/b)^k ive_k(ab)
        a >= b:  Q = 1 - exp(-(a-b)^2/2) * sum_{k>=m} (b/a)^k ive_k(ab)

    Both sums have positive terms; the second form keeps the complement small
    when ``a >= b``, which is where ``Q >= 1/2``.
    """
    if int(order) != order or order < 1:
        raise DomainError(f"Marcum order must be a positive integer, got {order}")
    m = int(order)
    a = float(a)
    b = float(b)
    if not (a >= 0.0 and b >= 0.0) or math.isinf(a) or math.isinf(b):
        raise DomainError(f"a and b must be finite and non-negative, got {a}, {b}")
    if b == 0.0:
        return 1.0
    if a * a < 1e-20:
        return _marcum_q_zero_a(m, b)

    x = a * b
    lead = -0.5 * (a - b) ** 2
    if lead < -745.0:
        return 0.0 if a < b else 1.0

    nmax = m + 20 + int(9.0 * math.sqrt(x))
    while True:
        ive = bessel_ive_sequence(nmax, x)
        if a < b:
            log_r = math.log(a / b)
            s = 0.0
            for k in range(1 - m, 1):
                v = ive[-k]
                if v > 0.0:
                    s += math.exp(k * log_r + math.log(v))
            start = 1
        else:
            log_r = math.log(b / a)
            s = 0.0
            start = m
        # ive_k(x) decreases in k and r <= 1, so terms are monotone
        converged = False
        for k in range(start, nmax + 1):
            v = ive[k]
            if v == 0.0:
                converged = True
                break
            t = math.exp(k * log_r + math.log(v))
            s += t
            if t <= 1e-16 * s:
                converged = True
                break
        if converged:
            break
        nmax *= 2

    tail = math.exp(lead) * s
    q = tail if a < b else 1.0 - tail
    return min(1.0, max(0.0, q))


# ---------------------------------------------------------------------------
# Associated Legendre function on the cut (1, inf)
# ---------------------------------------------------------------------------

def assoc_legendre(degree, order, x):
    """Associated Legendre function ``P_degree^order(x)`` for ``x > 1``.

    Only non-positive orders ``-degree <= order <= 0`` are supported. The
    convention is the one for which

        L{u^mu I_nu(a u)}(p) = Gamma(mu+nu+1) (p^2-a^2)^(-(mu+1)/2)
                               * P_mu^{-nu}(p / sqrt(p^2-a^2))

    holds, i.e. ``P_n^m(x) = (x^2-1)^(m/2) d^m P_n / dx^m`` without the
    Condon-Shortley phase, and ``P_n^{-m} = (n-m)!/(n+m)! P_n^m``.
    """
    if int(degree) != degree or degree < 0:
        raise DomainError(f"degree must be a non-negative integer, got {degree}")
    if int(order) != order or order > 0 or order < -degree:
        raise DomainError(f"order must satisfy -degree <= order <= 0, got {order}")
    x = float(x)
    if not x > 1.0 or math.isinf(x):
        raise DomainError(f"argument must satisfy x > 1, got {x}")
    n = int(degree)
    m = -int(order)

    # P_m^m = (2m-1)!! (x^2-1)^(m/2)
    w = math.sqrt((x - 1.0) * (x + 1.0))
    p_mm = 1.0
    for k in range(1, m + 1):
        p_mm *= (2 * k - 1) * w
    if n == m:
        p_nm = p_mm
    else:
        p_prev = p_mm
        p_cur = x * (2 * m + 1) * p_mm
        for ell in range(m + 1, n):
            p_prev, p_cur = p_cur, ((2 * ell + 1) * x * p_cur - (ell + m) * p_prev) / (ell - m + 1)
        p_nm = p_cur
    if m == 0:
        return p_nm
    return p_nm * math.exp(math.lgamma(n - m + 1) - math.lgamma(n + m + 1))


# ---------------------------------------------------------------------------
# Quadrature and 1-D maximisation
# ---------------------------------------------------------------------------

def integrate(f, lo, hi, q=DEFAULT_QUADRATURE):
    """Adaptive integral of ``f`` over ``[lo, hi]``; ``hi`` may be ``inf``.

    Infinite ranges are mapped onto ``[0, 1)`` with ``x = lo + t/(1-t)``.
    Raises :class:`QuadratureError` when the error estimate exceeds
    ``max(abs_tol, rel_tol*|result|)``.
    """
    lo = float(lo)
    hi = float(hi)
    if math.isinf(lo):
        raise ValueError("lower limit must be finite")
    if hi == lo:
        return 0.0
    if math.isinf(hi):
        if hi < 0:
            raise ValueError("upper limit must be +inf or finite")

        def g(t):
            if t >= 1.0:
                return 0.0
            s = 1.0 - t
            return f(lo + t / s) / (s * s)

        a, b = 0.0, 1.0
    else:
        g, a, b = f, lo, hi

    res = _integrate.quad(
        g, a, b,
        epsabs=q.abs_tol, epsrel=q.rel_tol,
        limit=int(q.max_subdivisions), full_output=1,
    )
    value, err = float(res[0]), float(res[1])
    if not (math.isfinite(value) and err <= max(q.abs_tol, q.rel_tol * abs(value))):
        raise QuadratureError("quadrature did not converge", value, err)
    return value


def _refine_stationary(g, a, b, c, xtol):
    # Brent on -g inside the bracket, then polish with a root of the central
    # difference derivative: value-only search stalls at ~sqrt(eps)*|x|.
    res = _optimize.minimize_scalar(
        lambda v: -g(v), bracket=(a, b, c), method="brent", options={"xtol": 1e-12}
    )
    x0 = float(res.x)
    if not (a < x0 < c):
        x0 = b

    def deriv(v):
        h = 1e-5 * max(1.0, abs(v))
        return (g(v + h) - g(v - h)) / (2 * h)

    lo_b, hi_b = max(a, x0 - 1e-3 * max(1.0, abs(x0))), min(c, x0 + 1e-3 * max(1.0, abs(x0)))
    try:
        d_lo, d_hi = deriv(lo_b), deriv(hi_b)
        if d_lo > 0 > d_hi:
            x1 = _optimize.brentq(deriv, lo_b, hi_b, xtol=0.1 * xtol, rtol=4 * np.finfo(float).eps)
            if g(x1) >= g(x0) - 1e-15 * abs(g(x0)):
                x0 = x1
    except (ValueError, RuntimeError):
        pass
    return x0


def maximize_1d(g, lo, hi=math.inf, xtol=1e-8, max_expansions=200):
    """Interior maximiser of ``g`` on ``(lo, hi)``.

    Intended for functions that vanish at both ends of the interval and are
    positive inside. A geometric expansion search from ``lo`` brackets the
    largest sampled positive value; the bracket is then refined.

    Returns
    -------
    (argmax, max) : tuple of float
    """
    lo = float(lo)
    step = 1e-6 * max(1.0, abs(lo))
    xs = []
    vals = []
    best = -1
    for k in range(max_expansions):
        x = lo + step * (2.0 ** (k / 2.0))
        if x >= hi:
            break
        v = g(x)
        if not math.isfinite(v):
            v = -math.inf
        xs.append(x)
        vals.append(v)
        if v > 0 and (best < 0 or v > vals[best]):
            best = len(vals) - 1
        # stop once we are well past the peak
        if best >= 0 and len(vals) - 1 - best >= 6 and vals[-1] < 0.5 * vals[best]:
            break
    if best < 0:
        raise MaximizationError("no positive interior value found")
    a = xs[best - 1] if best > 0 else 0.5 * (lo + xs[0])
    if best + 1 < len(xs):
        c = xs[best + 1]
    else:
        raise MaximizationError("maximum not bracketed before the expansion limit")
    b = xs[best]
    x_star = _refine_stationary(g, a, b, c, xtol)
    return x_star, float(g(x_star))
