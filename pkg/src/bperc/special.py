"""Closed-form helper functions behind the thresholds and the rigorous bounds.

Natural logarithms throughout.  Products such as ``F_a^b`` and ``G_a^b`` are only
ever handled through their logarithms.
"""
import math

import numpy as np
from scipy import integrate

from .errors import BpercError, check_int, check_probability

LAMBDA = math.pi**2 / 18
LAMBDA_M = math.pi**2 / 6
_LN2 = math.log(2.0)


def q_of_p(p):
    """``-log(1 - p)``, accurate for small ``p``."""
    p = check_probability(p, open_low=True, open_high=True)
    return -math.log1p(-p)


def f_(z):
    """``-log(1 - exp(-z))``: the log-probability cost of a strip of ``z/q`` sites being vacant-free."""
    z = float(z)
    if not z > 0:
        raise BpercError(f"f requires z > 0, got {z!r}")
    if z < _LN2:
        return -math.log(-math.expm1(-z))
    return -math.log1p(-math.exp(-z))


def beta_(u):
    u = check_probability(u, "u")
    return (u + math.sqrt(u * (4.0 - 3.0 * u))) / 2.0


def _one_minus_beta(u):
    # (2-u)^2 - u(4-3u) = 4(1-u)^2, so 1 - beta(u) = 2(1-u)^2 / ((2-u) + sqrt(u(4-3u))).
    return 2.0 * (1.0 - u) ** 2 / ((2.0 - u) + math.sqrt(u * (4.0 - 3.0 * u)))


def _g_from_tail(eps):
    # g with eps = exp(-z) supplied directly; u = 1 - eps.
    u = 1.0 - eps
    if eps < 0.5:
        deficit = 2.0 * eps * eps / ((1.0 + eps) + math.sqrt(u * (1.0 + 3.0 * eps)))
        return -math.log1p(-deficit)
    return -math.log((u + math.sqrt(u * (1.0 + 3.0 * eps))) / 2.0)


def g_(z):
    """``-log beta(1 - exp(-z))``."""
    z = float(z)
    if not z > 0:
        raise BpercError(f"g requires z > 0, got {z!r}")
    if z < 1e-3:
        u = -math.expm1(-z)
        return -math.log(beta_(u))
    return _g_from_tail(math.exp(-z))


def _check_range(a, b):
    a = check_int(a, "a", minimum=1)
    b = check_int(b, "b")
    if b < a:
        raise BpercError(f"require a <= b, got a={a}, b={b}")
    return a, b


def log_F(a, b, p):
    """``log F_a^b = -sum_{i=a}^{b-1} f(i q)``, i.e. ``sum log(1 - (1-p)^i)``."""
    a, b = _check_range(a, b)
    p = check_probability(p, open_low=True, open_high=True)
    if a == b:
        return 0.0
    i = np.arange(a, b, dtype=np.float64)
    # log(1 - (1-p)^i): expm1 while (1-p)^i is near 1, log1p once it is small
    t = i * math.log1p(-p)
    small = t > -_LN2
    terms = np.where(small, np.log(-np.expm1(np.where(small, t, -1.0))), np.log1p(-np.exp(t)))
    return float(np.sum(terms))


def log_G(a, b, p):
    """``log G_a^b = -sum_{i=a}^{b-1} g(i q)``."""
    a, b = _check_range(a, b)
    q = q_of_p(p)
    return -math.fsum(g_(i * q) for i in range(a, b))


def dilog(x):
    """``Li_2(x) = sum_{k>=1} x^k / k^2`` on ``[0, 1]``.

    Direct series for ``x <= 1/2``; above that, Euler's reflection
    ``Li_2(x) = pi^2/6 - log(x) log(1-x) - Li_2(1-x)`` keeps the series argument <= 1/2.
    """
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise BpercError(f"dilog requires 0 <= x <= 1, got {x!r}")
    if x == 1.0:
        return LAMBDA_M
    if x > 0.5:
        return LAMBDA_M - math.log(x) * math.log1p(-x) - dilog(1.0 - x)
    total, term, k = 0.0, x, 1
    # Tail after term k is below x^(k+1) / ((k+1)^2 (1-x)) <= 2 x^(k+1)/(k+1)^2.
    while term > 0.0:
        total += term / (k * k)
        k += 1
        term *= x
        if 2.0 * term / (k * k) < 1e-17:
            total += term / (k * k)
            break
    return total


def integral_f(K):
    """``int_K^inf f = Li_2(exp(-K))``."""
    K = float(K)
    if K < 0:
        raise BpercError(f"K must be >= 0, got {K!r}")
    return dilog(math.exp(-K))


_G_CUTOFF = 40.0


def integral_g(K):
    """``int_K^inf g`` by adaptive quadrature on ``[K, 40]``.

    The dropped tail is at most ``int_40^inf f = Li_2(e^-40) < 5e-18`` because ``g <= f``.
    """
    K = float(K)
    if K < 0:
        raise BpercError(f"K must be >= 0, got {K!r}")
    if K >= _G_CUTOFF:
        # 1 - beta(1 - e^-z) = e^-2z (1 + O(e^-z)), so the tail is e^-2K / 2 to double precision.
        return 0.5 * math.exp(-2.0 * K)

    def integrand(z):
        return g_(z) if z > 0 else math.inf

    total = 0.0
    pieces = [K, max(K, 1.0), max(K, 8.0), _G_CUTOFF]
    for lo, hi in zip(pieces[:-1], pieces[1:]):
        if hi > lo:
            val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
            total += val
    return total
