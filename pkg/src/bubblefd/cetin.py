"""Forward prices through the survival probability of the scale coordinate.

With ``y = f(x)`` the forward price is ``v(tau, y) = y u(tau, f^{-1}(y))``
where ``u`` solves

    u_tau = 1/2 u_xx - 1/2 T_{1/f}(x) u_x,   u(0, x) = 1,   u(tau, 0) = 0,

the probability that the transformed coordinate has not yet hit zero.
The point ``y = inf`` maps to ``x = 0``, so no far-price truncation is
needed, but the drift is singular there.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .pde import NumericalBlowupError, TridiagonalSystem, _as_count, _bracket, solve_tridiagonal


@dataclass(frozen=True)
class HittingProbSurface:
    times: np.ndarray
    nodes: np.ndarray
    values: np.ndarray
    max_violation: float = 0.0

    @property
    def x_max(self):
        return float(self.nodes[-1])


def default_grid(model):
    """``(x_max, dx)`` used for the published comparisons."""
    if model.name == "log_power" and model.params["p"] < 0.5:
        return 8.0, 0.001
    return 4.0, 0.02


def _operator(drift, dx, dtau, convection):
    """Rows of ``dtau * (1/2 D2 - 1/2 T D1)`` as (lower, diag, upper) arrays."""
    alpha = 0.5 * dtau / dx**2
    b = -0.5 * drift
    lower = np.full_like(b, alpha)
    diag = np.full_like(b, -2.0 * alpha)
    upper = np.full_like(b, alpha)

    if convection == "upwind":
        upwind = np.ones(b.shape, dtype=bool)
    elif convection == "central":
        upwind = np.zeros(b.shape, dtype=bool)
    else:
        upwind = np.abs(drift) * dx > 1.0

    central = ~upwind
    beta = b * dtau / (2.0 * dx)
    lower[central] -= beta[central]
    upper[central] += beta[central]

    gamma = b * dtau / dx
    forward = upwind & (b >= 0)
    backward = upwind & (b < 0)
    diag[forward] -= gamma[forward]
    upper[forward] += gamma[forward]
    lower[backward] -= gamma[backward]
    diag[backward] += gamma[backward]
    return lower, diag, upper


def solve_hitting_prob(
    model,
    x_max=None,
    dx=None,
    dtau=0.01,
    maturity=1.0,
    theta=1.0,
    top="neumann",
    convection="auto",
    check_every=10,
):
    """Theta-scheme solution of the survival-probability problem on ``[0, x_max]``.

    Convection is upwinded wherever ``|T_{1/f}(x)| dx > 1`` (``convection="auto"``);
    ``"upwind"`` and ``"central"`` force one stencil everywhere. The top row is
    ``u_x = 0`` (``top="neumann"``) or ``u = 1`` (``top="dirichlet"``).
    """
    if x_max is None or dx is None:
        default_xmax, default_dx = default_grid(model)
        x_max = default_xmax if x_max is None else x_max
        dx = default_dx if dx is None else dx
    if top not in ("neumann", "dirichlet"):
        raise ValueError(f"top boundary must be 'neumann' or 'dirichlet', got {top!r}")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    n_space = _as_count(x_max, dx, "x_max/dx", 3)
    n_time = _as_count(maturity, dtau, "maturity/dtau", 1)

    nodes = dx * np.arange(n_space + 1)
    times = dtau * np.arange(n_time + 1)
    drift = np.zeros(n_space + 1)
    drift[1:] = np.asarray(model.t_recip(nodes[1:]), dtype=float) * np.ones(n_space)

    if convection == "central":
        peclet = np.abs(drift[1:-1]) * dx
        worst = int(np.argmax(peclet)) + 1
        if peclet[worst - 1] > 2.0:
            warnings.warn(
                f"cell Peclet number {peclet[worst - 1]:.3g} > 2 at node {worst} (x={nodes[worst]:.4g}); "
                "central convection loses monotonicity",
                RuntimeWarning,
                stacklevel=2,
            )

    op_lower, op_diag, op_upper = _operator(drift, dx, dtau, convection)
    sys_lower = -theta * op_lower
    sys_diag = 1.0 - theta * op_diag
    sys_upper = -theta * op_upper
    for arr in (sys_lower, sys_diag, sys_upper):
        arr[0] = 0.0
    sys_diag[0] = 1.0
    if top == "neumann":
        sys_lower[-1], sys_diag[-1] = -1.0, 1.0
    else:
        sys_lower[-1], sys_diag[-1] = 0.0, 1.0
    sys_upper[-1] = 0.0

    values = np.empty((n_time + 1, n_space + 1))
    values[0] = 1.0
    values[0, 0] = 0.0
    for i in range(1, n_time + 1):
        old = values[i - 1]
        rhs = old.copy()
        if theta < 1.0:
            explicit = op_diag * old
            explicit[1:] += op_lower[1:] * old[:-1]
            explicit[:-1] += op_upper[:-1] * old[1:]
            rhs += (1.0 - theta) * explicit
        rhs[0] = 0.0
        rhs[-1] = 0.0 if top == "neumann" else 1.0
        system = TridiagonalSystem(sys_lower.copy(), sys_diag.copy(), sys_upper.copy(), rhs)
        values[i] = solve_tridiagonal(system)
        if (i % check_every == 0 or i == n_time) and not np.all(np.isfinite(values[i])):
            bad = int(np.flatnonzero(~np.isfinite(values[i]))[0])
            raise NumericalBlowupError(i, where=f"hitting probability (node {bad})")

    violation = float(max(0.0, -values.min(), values.max() - 1.0))
    if violation > 1e-9:
        warnings.warn(f"survival probability leaves [0, 1] by {violation:.3g}", RuntimeWarning, stacklevel=2)
    return HittingProbSurface(times, nodes, values, violation)


def price_from_u(surface, model, tau, y, extrapolate=False):
    """``y u(tau, f^{-1}(y))`` with linear interpolation in ``x`` and ``tau``.

    Raises:
        ValueError: if ``f^{-1}(y) > x_max`` and ``extrapolate`` is off.
            With ``extrapolate`` the top value of ``u`` is held flat, which is
            what the zero-slope top row implies.
    """
    if y < 0:
        raise ValueError(f"price must be nonnegative, got {y}")
    if y == 0:
        return 0.0
    x = float(model.f_inv(y))
    if x > surface.x_max:
        if not extrapolate:
            raise ValueError(f"f^-1({y}) = {x:.6g} exceeds x_max = {surface.x_max}; the grid cannot see this price")
        x = surface.x_max
    i, s = _bracket(surface.times, tau, "tau")
    k, w = _bracket(surface.nodes, x, "x")
    u = surface.values

    def at(level):
        return (1.0 - w) * u[level, k] + w * u[level, k + 1]

    value = at(i) if s == 0.0 else (1.0 - s) * at(i) + s * at(i + 1)
    return float(y * value)
