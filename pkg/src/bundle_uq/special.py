"""Generalised exponential integral ``E_n(x) = int_1^inf exp(-x t) / t**n dt``."""
from __future__ import annotations

import math

import numpy as np

EULER = 0.57721566490153286061
_ZETA3 = 1.2020569031595942854
_EPS = 1e-16
_MAXIT = 10_000
# orders closer than this to an integer take the integer path
_INT_TOL = 1e-12
# non-integer orders closer than this to a positive integer get the pole-pair form
_NEAR_INT = 1e-4


def _expn_int(n: int, x: float) -> float:
    if n < 0:
        # downward recurrence E_n = (exp(-x) - n E_{n+1}) / x
        e = _expn_int(0, x)
        for m in range(-1, n - 1, -1):
            e = (math.exp(-x) - m * e) / x
        return e
    if n == 0:
        return math.exp(-x) / x
    if x == 0.0:
        if n == 1:
            raise ValueError("E_1 diverges at x = 0")
        return 1.0 / (n - 1)
    if x >= 1.0:
        return _continued_fraction(float(n), x)
    nm1 = n - 1
    ans = 1.0 / nm1 if nm1 else -math.log(x) - EULER
    fact = 1.0
    for i in range(1, _MAXIT):
        fact *= -x / i
        if i != nm1:
            term = -fact / (i - nm1)
        else:
            psi = -EULER + sum(1.0 / k for k in range(1, nm1 + 1))
            term = fact * (-math.log(x) + psi)
        ans += term
        if abs(term) < abs(ans) * _EPS:
            return ans
    raise ArithmeticError(f"series for E_{n}({x}) did not converge")


def _continued_fraction(nu: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-gamma continued fraction
    tiny = 1e-300
    b = x + nu
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAXIT):
        a = -i * (nu - 1.0 + i)
        b += 2.0
        d = a * d + b
        d = tiny if abs(d) < tiny else d
        c = b + a / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h * math.exp(-x)
    raise ArithmeticError(f"continued fraction for E_{nu}({x}) did not converge")


def _pole_pair(n: int, eps: float, x: float) -> float:
    # (x**eps * (pi eps / sin(pi eps)) / Gamma(n + eps) - 1 / Gamma(n)) / eps, via a
    # third-order expansion of the exponent (eps is below _NEAR_INT)
    psi = -EULER + sum(1.0 / k for k in range(1, n))
    psi1 = math.pi ** 2 / 6.0 - sum(1.0 / k ** 2 for k in range(1, n))
    psi2 = -2.0 * _ZETA3 + 2.0 * sum(1.0 / k ** 3 for k in range(1, n))
    expo = (eps * (math.log(x) - psi) + eps ** 2 * (math.pi ** 2 / 6.0 - psi1 / 2.0)
            - eps ** 3 * psi2 / 6.0)
    lead = 1.0 / math.factorial(n - 1)
    if eps == 0.0:
        return lead * (math.log(x) - psi)
    return lead * math.expm1(expo) / eps


def _expn_real(nu: float, x: float) -> float:
    if x == 0.0:
        if nu <= 1.0:
            raise ValueError(f"E_{nu} diverges at x = 0")
        return 1.0 / (nu - 1.0)
    if x >= 1.0:
        return _continued_fraction(nu, x)
    # E_nu(x) = Gamma(1 - nu) x**(nu - 1) - sum_k (-x)^k / (k! (k + 1 - nu))
    n = round(nu)
    eps = nu - n
    skip = -1
    if n >= 1 and abs(eps) < _NEAR_INT:
        # the Gamma term and the k = n - 1 series term both blow up as eps -> 0;
        # combine them analytically
        skip = n - 1
        total = (-1.0) ** n * x ** (n - 1) * _pole_pair(n, eps, x)
    else:
        total = math.gamma(1.0 - nu) * x ** (nu - 1.0)
    term = 1.0
    for k in range(_MAXIT):
        if k:
            term *= -x / k
        if k == skip:
            continue
        add = term / (k + 1.0 - nu)
        total -= add
        if abs(add) < _EPS * abs(total) and k > skip:
            return total
    raise ArithmeticError(f"series for E_{nu}({x}) did not converge")


def expn_scalar(n: float, x: float) -> float:
    """Scalar ``E_n(x)`` for any real order ``n`` and ``x >= 0``."""
    n = float(n)
    x = float(x)
    if not (math.isfinite(n) and math.isfinite(x)):
        raise ValueError("expn needs finite arguments")
    if x < 0.0:
        raise ValueError(f"expn needs x >= 0, got {x}")
    k = round(n)
    if abs(n - k) <= _INT_TOL * max(1.0, abs(n)):
        return _expn_int(int(k), x)
    return _expn_real(n, x)


def expn(n, x):
    """Exponential integral ``E_n(x)``, broadcasting over ``n`` and ``x``.

    Parameters
    ----------
    n : float or array_like
        Order.  Integer orders use the classic series below ``x = 1`` and a
        continued fraction above; non-integer orders use the power series
        around the ``Gamma(1 - n) x**(n - 1)`` singular term.
    x : float or array_like
        Argument, ``x >= 0``; ``x = 0`` is allowed only when ``n > 1``.

    Returns
    -------
    float or ndarray
    """
    out = np.vectorize(expn_scalar, otypes=[float])(n, x)
    return float(out) if out.ndim == 0 else out
