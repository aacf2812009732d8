"""Volatility models for zero-drift price diffusions ``dY = sigma(Y) dB``.

Every model carries its scale companion ``f`` (decreasing, with
``f^{-1}(y) = int_y^inf d eta / sigma(eta)``), the inverse, the drift
generator ``T_{1/f} = (1/f)'' / (1/f)'`` of the transformed hitting
problem, and the tail integral ``int_n^inf y / sigma(y)^2 dy`` consumed by
the integral boundary row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .specfun import norm_cdf, reg_lower_gamma


class UnsupportedModelError(ValueError):
    """A closed form or companion function was requested that the model lacks."""


class DivergentTailError(ValueError):
    """The tail integral is infinite, i.e. the price is a true martingale."""


def _missing(name):
    def fail(*args):
        raise UnsupportedModelError(f"model has no {name}")

    return fail


@dataclass(frozen=True)
class VolatilityModel:
    """A diffusion coefficient together with its scale-function companions.

    ``tail_integrand(x)`` is ``f(x) / sigma(f(x))``, the integrand of the tail
    integral after substituting ``y = f(x)``. Models override it with a form
    that stays finite as ``x -> 0`` where ``f`` itself blows up.
    """

    name: str
    sigma: Callable
    f: Callable = field(default=_missing("scale companion f"))
    f_inv: Callable = field(default=_missing("inverse scale companion"))
    t_recip: Callable = field(default=_missing("drift generator T_{1/f}"))
    tail_integrand: Optional[Callable] = None
    tail_closed: Optional[Callable] = None
    closed_forward: Optional[Callable] = None
    closed_theta0: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def tail_integral(self, n):
        return tail_integral_eval(self, n)

    def vol_pct(self, y):
        """Instantaneous relative volatility ``100 * sigma(y) / y``."""
        return 100.0 * float(self.sigma(y)) / y


# ---------------------------------------------------------------------------
# constructors


def make_cev(a, nu):
    """CEV model ``sigma(y) = a y^(1 + 1/(2 nu))``; a strict local martingale for ``nu > 0``."""
    if not a > 0:
        raise ValueError(f"CEV requires a > 0, got {a}")
    if not nu > 0:
        raise ValueError(f"CEV requires nu > 0, got {nu}")
    a = float(a)
    nu = float(nu)
    power = 1.0 + 1.0 / (2.0 * nu)
    scale = (2.0 * nu / a) ** (2.0 * nu)

    def sigma(y):
        return a * np.power(y, power)

    def f(x):
        return scale * np.power(x, -2.0 * nu)

    def f_inv(y):
        return (2.0 * nu / a) * np.power(y, -1.0 / (2.0 * nu))

    def t_recip(x):
        return (2.0 * nu - 1.0) / x

    def tail_integrand(x):
        # f / (-f') = x / (2 nu)
        return x / (2.0 * nu)

    def tail_closed(n):
        return nu * n ** (-1.0 / nu) / a**2

    model = VolatilityModel(
        name="cev",
        sigma=sigma,
        f=f,
        f_inv=f_inv,
        t_recip=t_recip,
        tail_integrand=tail_integrand,
        tail_closed=tail_closed,
        params={"a": a, "nu": nu},
    )
    return _with_closed_forms(
        model,
        lambda tau, y: forward_exact_cev(model, tau, y),
        lambda tau: theta0_exact_cev(model, tau),
    )


def make_qnv(a, l):
    """Quadratic normal volatility ``sigma(y) = a (y - l) y`` (upper root fixed at 0).

    The equivalent textbook parametrisation has ``b = -a l > 0``.
    """
    if not a > 0:
        raise ValueError(f"QNV requires a > 0 so that b = -a*l > 0, got a={a}")
    if not l < 0:
        raise ValueError(f"QNV requires l < 0, got {l}")
    a = float(a)
    l = float(l)
    b = -a * l

    def sigma(y):
        return a * (y - l) * y

    def f(x):
        # (l/2)(coth(a l x / 2) + 1) written without the cancellation near x = inf
        return -l / np.expm1(b * x)

    def f_inv(y):
        return np.log1p(-l / y) / b

    def t_recip(x):
        return b + 0.0 * x

    def tail_integrand(x):
        return -np.expm1(-b * x) / b

    model = VolatilityModel(
        name="qnv",
        sigma=sigma,
        f=f,
        f_inv=f_inv,
        t_recip=t_recip,
        tail_integrand=tail_integrand,
        params={"a": a, "l": l},
    )
    return _with_closed_forms(
        model,
        lambda tau, y: forward_exact_qnv(model, tau, y),
        lambda tau: theta0_exact_qnv(model, tau),
    )


def make_log_power(p):
    """Model with ``sigma(y) = p (1+y) log(1+y)^(1 + 1/p)``, i.e. ``f(x) = exp(x^-p) - 1``."""
    if not p > 0:
        raise ValueError(f"log-power model requires p > 0, got {p}")
    p = float(p)

    def sigma(y):
        return p * (1.0 + y) * np.power(np.log1p(y), 1.0 + 1.0 / p)

    def f(x):
        return np.expm1(np.power(x, -p))

    def f_inv(y):
        return np.power(np.log1p(y), -1.0 / p)

    def t_recip(x):
        # (1/f)''/(1/f)'; the x^-(p+1) factor reduces to x^-2 only at p = 1
        e = np.exp(-np.power(x, -p))
        return (1.0 + e) / (-np.expm1(-np.power(x, -p))) * p * np.power(x, -p - 1.0) - (p + 1.0) / x

    def tail_integrand(x):
        return -np.expm1(-np.power(x, -p)) * np.power(x, p + 1.0) / p

    return VolatilityModel(
        name="log_power",
        sigma=sigma,
        f=f,
        f_inv=f_inv,
        t_recip=t_recip,
        tail_integrand=tail_integrand,
        params={"p": p},
    )


def make_geometric(s=1.0):
    """Geometric Brownian motion ``sigma(y) = s y``: a true martingale, kept for diagnostics."""
    if not s > 0:
        raise ValueError(f"geometric model requires s > 0, got {s}")
    s = float(s)
    return VolatilityModel(name="geometric", sigma=lambda y: s * np.asarray(y, dtype=float), params={"s": s})


def _with_closed_forms(model, forward, theta0):
    object.__setattr__(model, "closed_forward", forward)
    object.__setattr__(model, "closed_theta0", theta0)
    return model


# ---------------------------------------------------------------------------
# closed forms


def _require(model, name):
    if model.name != name:
        raise UnsupportedModelError(f"closed form for {name!r} requested on model {model.name!r}")


def forward_exact_cev(model, tau, y):
    """``E_y[Y_tau]`` under CEV: ``y P(nu, r/2)`` with ``r = (2 nu / a)^2 / (y^(1/nu) tau)``."""
    _require(model, "cev")
    if y <= 0:
        return 0.0
    if tau <= 0:
        return float(y)
    a = model.params["a"]
    nu = model.params["nu"]
    r = (2.0 * nu / a) ** 2 / (y ** (1.0 / nu) * tau)
    return y * reg_lower_gamma(nu, r / 2.0)


def theta0_exact_cev(model, tau):
    """Forward price at infinity under CEV, ``(1/(nu Gamma(nu))) (2 nu^2 / (a^2 tau))^nu``."""
    _require(model, "cev")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    a = model.params["a"]
    nu = model.params["nu"]
    return (2.0 * nu**2 / (a**2 * tau)) ** nu / (nu * math.gamma(nu))


def qnv_forward(y, tau, b, l, r=0.0):
    """Quadratic normal volatility forward for roots ``l < r < y`` and normalised slope ``b``."""
    if not y > r:
        raise ValueError(f"forward requires y > r, got y={y}, r={r}")
    if tau <= 0:
        return float(y)
    s = b * math.sqrt(tau)
    m = math.log((y - r) / (y - l))
    d_minus = (m - 0.5 * s * s) / s
    d_plus = (m + 0.5 * s * s) / s
    return y - (y - l) * norm_cdf(d_minus) - (y - r) * norm_cdf(d_plus)


def forward_exact_qnv(model, tau, y):
    _require(model, "qnv")
    if not y > 0:
        raise ValueError(f"QNV forward requires y > 0, got {y}")
    a = model.params["a"]
    l = model.params["l"]
    return qnv_forward(y, tau, -a * l, l)


def theta0_exact_qnv(model, tau):
    """``sqrt(2/pi) exp(-(l/2)^2 a^2 tau / 2) / sqrt(a^2 tau) + l N((l/2) sqrt(a^2 tau))``."""
    _require(model, "qnv")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    a = model.params["a"]
    l = model.params["l"]
    s = a * math.sqrt(tau)
    return math.sqrt(2.0 / math.pi) * math.exp(-((l / 2.0) ** 2) * s * s / 2.0) / s + l * norm_cdf(0.5 * l * s)


def laplace_theta0_qnv(model, r):
    """Laplace transform of the QNV forward price at infinity."""
    _require(model, "qnv")
    if r < 0:
        raise ValueError(f"Laplace variable must be nonnegative, got {r}")
    a = model.params["a"]
    l = model.params["l"]
    k = r / (a * l) ** 2
    return -2.0 / (a**2 * l) * 2.0 / (1.0 + math.sqrt(1.0 + 8.0 * k))


# ---------------------------------------------------------------------------
# tail integral and the strict local martingale diagnostic


def tail_integral_eval(model, n):
    """``int_n^inf y / sigma(y)^2 dy``.

    Closed form when the model has one; otherwise adaptive quadrature of
    ``f(x) / (-f'(x))`` over the finite interval ``(0, f^{-1}(n))``.
    """
    if not n > 0:
        raise ValueError(f"tail integral requires n > 0, got {n}")
    if model.tail_closed is not None:
        return float(model.tail_closed(n))
    return tail_integral_quad(model, n)


def tail_integral_quad(model, n, epsabs=1e-10):
    if model.tail_integrand is None:
        try:
            upper = float(model.f_inv(n))
        except UnsupportedModelError:
            raise DivergentTailError(f"model {model.name!r} has no finite scale companion") from None

        def integrand(x):
            y = float(model.f(x))
            return y / float(model.sigma(y))
    else:
        upper = float(model.f_inv(n))

        def integrand(x):
            return float(model.tail_integrand(x))

    value, _ = integrate.quad(integrand, 0.0, upper, epsabs=epsabs, epsrel=1e-12, limit=200)
    return value


@dataclass(frozen=True)
class StrictLMDiagnostic:
    is_strict: bool
    integral: float
    converged: bool
    doublings: int


def _block_integrals(sigma, start, doublings):
    def integrand(y):
        s = float(sigma(y))
        return y / (s * s)

    lo = start
    for _ in range(doublings):
        hi = 2.0 * lo
        value, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-10, limit=200)
        yield value
        lo = hi


def strict_lm_check(model, start=1.0, max_doublings=60, rtol=1e-8):
    """Decide heuristically whether ``int^inf y / sigma(y)^2 dy`` converges.

    Partial integrals over ``[start 2^k, start 2^(k+1)]`` are accumulated; the
    tail is declared finite once a block falls below ``rtol`` of the running
    sum. If the blocks have not settled within ``max_doublings`` but are still
    shrinking geometrically, the geometric remainder estimate decides.
    Failure to converge is reported, never raised.
    """
    blocks = []
    total = 0.0
    for value in _block_integrals(model.sigma, start, max_doublings):
        if not math.isfinite(value):
            return StrictLMDiagnostic(False, math.inf, False, len(blocks))
        blocks.append(value)
        total += value
        if total > 0 and value < rtol * total:
            return StrictLMDiagnostic(True, _tail_value(model, start, total), True, len(blocks))

    tail = blocks[-10:]
    ratios = [b1 / b0 for b0, b1 in zip(tail, tail[1:]) if b0 > 0]
    ratio = max(ratios) if ratios else 1.0
    if ratio < 0.99:
        remainder = blocks[-1] * ratio / (1.0 - ratio)
        if remainder < 1e-3 * total:
            return StrictLMDiagnostic(True, _tail_value(model, start, total + remainder), False, len(blocks))
    return StrictLMDiagnostic(False, math.inf, False, len(blocks))


def _tail_value(model, start, fallback):
    try:
        return tail_integral_eval(model, start)
    except (UnsupportedModelError, DivergentTailError):
        return fallback
