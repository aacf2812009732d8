import math

import mpmath
import numpy as np
import pytest
from scipy import integrate

from bubblefd.models import (
    UnsupportedModelError,
    VolatilityModel,
    forward_exact_cev,
    forward_exact_qnv,
    laplace_theta0_qnv,
    make_cev,
    make_geometric,
    make_log_power,
    make_qnv,
    strict_lm_check,
    tail_integral_eval,
    tail_integral_quad,
    theta0_exact_cev,
    theta0_exact_qnv,
)


def mp_sigma(model):
    """The diffusion coefficient in mpmath arithmetic, so huge prices do not overflow."""
    q = {k: mpmath.mpf(v) for k, v in model.params.items()}
    if model.name == "cev":
        return lambda y: q["a"] * y ** (1 + 1 / (2 * q["nu"]))
    if model.name == "qnv":
        return lambda y: q["a"] * (y - q["l"]) * y
    if model.name == "log_power":
        return lambda y: q["p"] * (1 + y) * mpmath.log1p(y) ** (1 + 1 / q["p"])
    raise KeyError(model.name)


def direct_tail(model, n):
    """Tail integral on the price axis in ``t = log(1 + y)`` coordinates, by mpmath."""
    mpmath.mp.dps = 25
    sigma = mp_sigma(model)

    def integrand(t):
        y = mpmath.expm1(t)
        return y * mpmath.exp(t) / sigma(y) ** 2

    return float(mpmath.quad(integrand, [math.log1p(n), mpmath.inf]))


MODELS = {
    "cev": (make_cev(0.5, 1.0), np.logspace(-1, 1, 41)),
    "cev_nu3": (make_cev(1.3, 3.0), np.logspace(-1, 1, 41)),
    "qnv": (make_qnv(1.0, -1.0), np.logspace(-1, 1, 41)),
    "log_power_1": (make_log_power(1.0), np.logspace(-1, 0.5, 41)),
    "log_power_01": (make_log_power(0.1), np.logspace(-1, 1, 41)),
}


@pytest.mark.parametrize("name", MODELS)
def test_scale_companion_round_trip_and_monotone(name):
    model, xs = MODELS[name]
    ys = model.f(xs)
    assert np.all(np.diff(ys) < 0)
    np.testing.assert_allclose(model.f_inv(ys), xs, rtol=1e-10)


@pytest.mark.parametrize("name", MODELS)
def test_scale_companion_solves_its_ode(name):
    # d/dx f^{-1}... equivalently f'(x) = -sigma(f(x))
    model, xs = MODELS[name]
    h = 1e-6 * xs
    derivative = (model.f(xs + h) - model.f(xs - h)) / (2 * h)
    np.testing.assert_allclose(derivative, -model.sigma(model.f(xs)), rtol=1e-6)


@pytest.mark.parametrize("name", MODELS)
def test_drift_generator_is_log_derivative_of_reciprocal(name):
    model, xs = MODELS[name]

    def g(x):
        return 1.0 / model.f(x)

    h = 1e-4 * xs
    first = (g(xs + h) - g(xs - h)) / (2 * h)
    second = (g(xs + h) - 2 * g(xs) + g(xs - h)) / h**2
    np.testing.assert_allclose(model.t_recip(xs), second / first, rtol=2e-5, atol=1e-6)


def test_cev_basics(cev):
    assert tail_integral_eval(cev, 10) == pytest.approx(0.4, rel=1e-14)
    assert cev.f(cev.f_inv(5.0)) == pytest.approx(5.0, rel=1e-12)
    assert cev.t_recip(0.5) == pytest.approx(2.0)


def test_log_power_drift_at_one_equals_printed_form(log_power_1):
    # at p = 1 the x^-(p+1) factor is x^-2
    x = np.array([0.3, 0.7, 1.5])
    e = np.exp(-1.0 / x)
    printed = (1 + e) / (1 - e) / x**2 - 2.0 / x
    np.testing.assert_allclose(log_power_1.t_recip(x), printed, rtol=1e-12)


@pytest.mark.parametrize("factory, args", [(make_cev, (0, 1)), (make_cev, (1, 0)), (make_cev, (-1, 1)),
                                           (make_qnv, (1, 0.5)), (make_qnv, (-1, -1)), (make_log_power, (0,))])
def test_constructor_domain_errors(factory, args):
    with pytest.raises(ValueError):
        factory(*args)


def test_qnv_sigma_and_inverse(qnv):
    assert qnv.sigma(1.0) == pytest.approx(2.0)
    assert qnv.f(qnv.f_inv(3.0)) == pytest.approx(3.0, rel=1e-12)


def test_qnv_scale_companion_matches_coth_form(qnv):
    a, l = 1.0, -1.0
    xs = np.linspace(0.05, 5, 30)
    coth = 1.0 / np.tanh(a * l * xs / 2)
    np.testing.assert_allclose(qnv.f(xs), l / 2 * (coth + 1), rtol=1e-12)


def test_log_power_values(log_power_1):
    assert log_power_1.f(1.0) == pytest.approx(math.e - 1, rel=1e-14)
    assert log_power_1.f_inv(log_power_1.f(0.3)) == pytest.approx(0.3, rel=1e-12)
    assert round(log_power_1.vol_pct(1.0), 1) == 96.1


@pytest.mark.parametrize(
    "y, expected",
    list(zip([1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0], [1.00, 1.49, 1.96, 2.40, 2.79, 3.14, 3.46, 3.74, 3.99])),
)
def test_cev_forward_table_values(cev, y, expected):
    assert round(forward_exact_cev(cev, 1.0, y), 2) == expected


def test_cev_forward_limits(cev):
    assert forward_exact_cev(cev, 1e-9, 3.0) == pytest.approx(3.0, rel=1e-12)
    assert theta0_exact_cev(cev, 1.0) == pytest.approx(8.0, rel=1e-14)
    assert theta0_exact_cev(cev, 1e6) < 1e-5
    assert theta0_exact_cev(cev, 1.0) >= forward_exact_cev(cev, 1.0, 5.0)


def test_cev_forward_against_quadrature(cev):
    # integral form y * int_0^r eta^(nu-1) e^(-eta/2) d eta / (2^nu Gamma(nu))
    a, nu, tau, y = 0.5, 1.0, 0.7, 2.3
    r = (2 * nu / a) ** 2 / (y ** (1 / nu) * tau)
    integral, _ = integrate.quad(lambda e: e ** (nu - 1) * math.exp(-e / 2) / (2**nu * math.gamma(nu)), 0, r)
    assert forward_exact_cev(cev, tau, y) == pytest.approx(y * integral, rel=1e-12)


@pytest.mark.parametrize("a, nu, tau_min", [(0.5, 1.0, 1.0), (2.0, 2.0, 0.2)])
def test_cev_forward_shape(a, nu, tau_min):
    # sample kept where P(nu, r/2) is not rounded to 1
    model = make_cev(a, nu)
    taus = np.linspace(tau_min, tau_min + 3, 20)
    ys = np.linspace(1.0, 20, 20)
    grid = np.array([[forward_exact_cev(model, t, y) for y in ys] for t in taus])
    assert np.all(grid < ys[None, :])
    assert np.all(np.diff(grid, axis=1) > 0)
    assert np.all(np.diff(grid, axis=0) < 0)
    bound = np.array([theta0_exact_cev(model, t) for t in taus])
    assert np.all(grid <= bound[:, None])


def test_qnv_forward(qnv):
    assert forward_exact_qnv(qnv, 1e-12, 2.0) == pytest.approx(2.0, rel=1e-9)
    assert forward_exact_qnv(qnv, 1.0, 2.0) < 2.0
    with pytest.raises(ValueError):
        forward_exact_qnv(qnv, 1.0, 0.0)


@pytest.mark.parametrize("tau", [0.5, 1.0, 2.0])
def test_qnv_forward_tends_to_theta0(qnv, tau):
    assert abs(forward_exact_qnv(qnv, tau, 1e6) - theta0_exact_qnv(qnv, tau)) <= 1e-3


def test_qnv_theta0_shape(qnv):
    taus = np.linspace(0.01, 10, 200)
    values = np.array([theta0_exact_qnv(qnv, t) for t in taus])
    assert np.all(values > 0)
    assert np.all(np.diff(values) < 0)
    assert theta0_exact_qnv(qnv, 400.0) < 1e-10
    # tau^(-1/2) blow-up at the origin
    assert theta0_exact_qnv(qnv, 1e-8) * math.sqrt(1e-8) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-3)


def test_qnv_laplace_transform(qnv):
    assert laplace_theta0_qnv(qnv, 0.0) == pytest.approx(2.0)
    assert laplace_theta0_qnv(qnv, 1.0) == pytest.approx(1.0)
    rs = np.linspace(0, 5, 11)
    assert np.all(np.diff([laplace_theta0_qnv(qnv, r) for r in rs]) < 0)
    with pytest.raises(ValueError):
        laplace_theta0_qnv(qnv, -0.1)


@pytest.mark.parametrize("r", [0.25, 0.5, 1.0, 3.0])
def test_qnv_laplace_matches_quadrature(qnv, r):
    value, _ = integrate.quad(lambda t: math.exp(-r * t) * theta0_exact_qnv(qnv, t), 0, math.inf, epsabs=1e-12, limit=500)
    assert value == pytest.approx(laplace_theta0_qnv(qnv, r), abs=1e-4)


def test_closed_forms_reject_wrong_model(cev, qnv, log_power_1):
    with pytest.raises(UnsupportedModelError):
        forward_exact_cev(qnv, 1.0, 1.0)
    with pytest.raises(UnsupportedModelError):
        theta0_exact_qnv(cev, 1.0)
    assert log_power_1.closed_forward is None
    assert log_power_1.closed_theta0 is None


@pytest.mark.parametrize("name", ["qnv", "log_power_1", "log_power_01"])
@pytest.mark.parametrize("n", [1.0, 10.0])
def test_substituted_tail_matches_direct_quadrature(name, n):
    model = MODELS[name][0]
    assert tail_integral_eval(model, n) == pytest.approx(direct_tail(model, n), rel=1e-8)


def test_qnv_tail_closed_form(qnv):
    # int_0^xn (1 - e^(-b x)) / b dx with xn = f^-1(n), b = 1
    for n in (0.5, 3.0, 10.0):
        xn = float(qnv.f_inv(n))
        assert tail_integral_eval(qnv, n) == pytest.approx(xn - (1 - math.exp(-xn)), rel=1e-10)


def test_cev_tail_quadrature_agrees_with_closed_form():
    for model in (make_cev(0.5, 1.0), make_cev(1.3, 3.0), make_cev(0.2, 0.4)):
        for n in (1.0, 10.0, 37.5):
            assert tail_integral_quad(model, n) == pytest.approx(tail_integral_eval(model, n), rel=1e-10)


def test_log_power_tail_stable_under_refinement(log_power_1):
    upper = float(log_power_1.f_inv(10.0))
    xs_coarse = np.linspace(0, upper, 4097)
    xs_fine = np.linspace(0, upper, 8193)
    coarse = integrate.simpson(log_power_1.tail_integrand(xs_coarse[1:]), x=xs_coarse[1:])
    fine = integrate.simpson(log_power_1.tail_integrand(xs_fine[1:]), x=xs_fine[1:])
    # the integrand vanishes like x^2 at the origin; add the dropped first cell
    coarse += integrate.quad(log_power_1.tail_integrand, 0, xs_coarse[1])[0]
    fine += integrate.quad(log_power_1.tail_integrand, 0, xs_fine[1])[0]
    assert abs(coarse - fine) < 1e-8
    assert tail_integral_eval(log_power_1, 10.0) == pytest.approx(fine, abs=1e-8)


@pytest.mark.parametrize("name", MODELS)
def test_tail_strictly_decreasing(name):
    model = MODELS[name][0]
    values = [tail_integral_eval(model, n) for n in (0.5, 1, 2, 5, 10, 50)]
    assert all(v > 0 for v in values)
    assert np.all(np.diff(values) < 0)


def test_strict_lm_check():
    diag = strict_lm_check(make_cev(0.5, 1.0))
    assert diag.is_strict and diag.integral == pytest.approx(4.0)
    assert not strict_lm_check(make_geometric()).is_strict
    stub = VolatilityModel(name="stub", sigma=lambda y: y)
    assert not strict_lm_check(stub).is_strict
    for p in (1.0, 0.1):
        model = make_log_power(p)
        diag = strict_lm_check(model)
        assert diag.is_strict
        assert diag.integral == pytest.approx(direct_tail(model, 1.0), rel=1e-8)


def test_borderline_divergent_tail_is_not_strict():
    # sigma = y sqrt(log y): y / sigma^2 = 1/(y log y) diverges like log log y
    stub = VolatilityModel(name="stub", sigma=lambda y: y * math.sqrt(math.log(y)))
    assert not strict_lm_check(stub, start=2.0).is_strict


def test_tail_errors():
    with pytest.raises(ValueError):
        tail_integral_eval(make_cev(0.5, 1.0), 0.0)
    with pytest.raises(ValueError):
        tail_integral_eval(make_geometric(), 1.0)
