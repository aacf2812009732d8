"""Special functions used by the closed-form forward prices.

Only two are needed: the regularized lower incomplete gamma function
(CEV forward) and the standard normal CDF (quadratic normal volatility
forward and its limit at infinity).
"""

import math

_EPS = 1e-16
_MAX_ITER = 10_000
_TINY = 1e-300


def _lower_series(nu, z):
    # P(nu, z) = z^nu e^-z / Gamma(nu + 1) * sum_k z^k / ((nu+1)...(nu+k))
    term = 1.0 / nu
    total = term
    for k in range(1, _MAX_ITER):
        term *= z / (nu + k)
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise ArithmeticError(f"incomplete gamma series did not converge (nu={nu}, z={z})")
    return total * math.exp(nu * math.log(z) - z - math.lgamma(nu))


def _upper_fraction(nu, z):
    # Q(nu, z) by the modified Lentz evaluation of the Legendre continued fraction.
    b = z + 1.0 - nu
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - nu)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError(f"incomplete gamma fraction did not converge (nu={nu}, z={z})")
    return h * math.exp(nu * math.log(z) - z - math.lgamma(nu))


def reg_lower_gamma(nu, z):
    """Regularized lower incomplete gamma function ``P(nu, z)``.

    Uses the power series for ``z < nu + 1`` and the continued fraction
    for the complement otherwise.

    Raises:
        ValueError: if ``nu <= 0`` or ``z < 0``.
    """
    nu = float(nu)
    z = float(z)
    if not nu > 0.0:
        raise ValueError(f"reg_lower_gamma requires nu > 0, got {nu}")
    if not z >= 0.0:
        raise ValueError(f"reg_lower_gamma requires z >= 0, got {z}")
    if z == 0.0:
        return 0.0
    if math.isinf(z):
        return 1.0
    if nu == 1.0:
        return -math.expm1(-z)
    if z < nu + 1.0:
        return min(1.0, _lower_series(nu, z))
    return max(0.0, 1.0 - _upper_fraction(nu, z))


def norm_cdf(x):
    """Standard normal distribution function."""
    x = float(x)
    if x < 0.0:
        return 0.5 * math.erfc(-x / math.sqrt(2.0))
    return 1.0 - 0.5 * math.erfc(x / math.sqrt(2.0))
