"""Far-boundary rows for the truncated forward-price problem.

Each scheme fills the last row of the tridiagonal system at ``y = n``:

* ``NeumannZero``       zero slope, ``v_M = v_{M-1}``.
* ``DirichletZero``     ``v_M = 0`` (no payoff revision).
* ``IntegralInfinity``  the tail-integral row: the slope at ``n`` balances the
                        time change at ``n`` weighted by
                        ``int_n^inf y / sigma(y)^2 dy``.
* ``ThetaJ``            ``v_M = Theta_j(tau)``, the spatial average of a
                        knock-out forward solved on ``(0, f(j))``.
* ``CetinRoute``        marker: the price comes from the transformed hitting
                        problem in :mod:`bubblefd.cetin` instead.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .models import tail_integral_eval
from .pde import SolverConfig, march


class BoundaryRow(NamedTuple):
    """Coefficients of ``lower * v_{M-1} + diag * v_M = rhs`` at the new level."""

    lower: float
    diag: float
    rhs: float


def final_row_neumann(config, step=None):
    return BoundaryRow(-1.0, 1.0, 0.0)


def final_row_dirichlet_zero(config, step=None):
    return BoundaryRow(0.0, 1.0, 0.0)


def final_row_integral_infinity(config, tail, step, old_level):
    """Theta-weighted backward slope at ``n`` against the tail-weighted time change.

    ``theta (v_M - v_{M-1})/dy + (1-theta)(old_M - old_{M-1})/dy
    = -(2/n) (v_M - old_M)/dtau * tail``, scaled through by ``dy``.
    """
    if tail < 0:
        raise ValueError(f"tail integral must be nonnegative, got {tail}")
    theta = config.theta
    coupling = 2.0 * tail * config.dy / (config.n * config.dtau)
    old_m = float(old_level[-1])
    old_slope = old_m - float(old_level[-2])
    return BoundaryRow(-theta, theta + coupling, coupling * old_m - (1.0 - theta) * old_slope)


def final_row_theta_j(config, theta_curve, step):
    if step >= len(theta_curve):
        raise IndexError(f"Theta_j curve has {len(theta_curve)} levels, step {step} requested")
    return BoundaryRow(0.0, 1.0, float(theta_curve[step]))


def _install(system, row):
    system.set_row(len(system.diag) - 1, row.lower, row.diag, 0.0, row.rhs)


@dataclass(frozen=True)
class NeumannZero:
    tag = "ekstrom"

    def install(self, system, config, step, old_level):
        _install(system, final_row_neumann(config, step))


@dataclass(frozen=True)
class DirichletZero:
    tag = "song_yang"

    def install(self, system, config, step, old_level):
        _install(system, final_row_dirichlet_zero(config, step))


@dataclass(frozen=True)
class IntegralInfinity:
    """``tail=None`` means: evaluate the model's tail integral at ``n`` when marching."""

    tail: Optional[float] = None
    tag = "this_study"

    def prepare(self, model, config):
        if self.tail is not None:
            return self
        tail = tail_integral_eval(model, config.n)
        if not (np.isfinite(tail) and tail > 0):
            raise ValueError(f"tail integral at n={config.n} must be finite and positive, got {tail}")
        return replace(self, tail=tail)

    def install(self, system, config, step, old_level):
        if self.tail is None:
            raise RuntimeError("IntegralInfinity used before prepare()")
        _install(system, final_row_integral_infinity(config, self.tail, step, old_level))


@dataclass(frozen=True)
class ThetaJ:
    """Knock-out boundary; ``j=None`` places the barrier at the truncation bound."""

    j: Optional[float] = None
    curve: Optional[tuple] = None
    tag = "theta_j"

    def prepare(self, model, config):
        if self.curve is not None:
            return self
        j = float(model.f_inv(config.n)) if self.j is None else self.j
        curve = theta_j_curve(model, j, config)
        return replace(self, j=j, curve=tuple(curve))

    def install(self, system, config, step, old_level):
        if self.curve is None:
            raise RuntimeError("ThetaJ used before prepare()")
        _install(system, final_row_theta_j(config, self.curve, step))


@dataclass(frozen=True)
class CetinRoute:
    """Prices through the hitting-probability transform; not a row of this grid."""

    x_max: Optional[float] = None
    dx: Optional[float] = None
    top: str = "neumann"
    tag = "cetin"

    def install(self, system, config, step, old_level):
        raise TypeError("CetinRoute has no boundary row; price it with bubblefd.cetin")


def knock_out_surface(model, j, config):
    """Forward that pays only if the price stays below the barrier ``f(j)``."""
    top = float(model.f(j))
    if abs(top - config.n) <= 1e-9 * config.n:
        top = config.n
    return march(model, config.with_top(top), DirichletZero())


def theta_j_curve(model, j, config):
    """``Theta_j(tau_i) = (2 / f(j)) int_0^f(j) v_ko(tau_i, y) dy`` by the trapezoid rule.

    The knock-out problem is solved with the same ``dy``, ``dtau`` and
    ``theta`` on ``(0, f(j))``; ``f(j)`` must be a multiple of ``dy``.
    """
    surface = knock_out_surface(model, j, config)
    top = surface.nodes[-1]
    return 2.0 / top * np.trapezoid(surface.values, surface.nodes, axis=1)


SCHEMES = {
    "ekstrom": NeumannZero,
    "neumann": NeumannZero,
    "song-yang": DirichletZero,
    "dirichlet": DirichletZero,
    "integral-infinity": IntegralInfinity,
    "this-study": IntegralInfinity,
    "theta-j": ThetaJ,
    "tsuzuki": ThetaJ,
    "cetin": CetinRoute,
}


def make_scheme(name, **params):
    try:
        cls = SCHEMES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown boundary scheme {name!r}; choose from {sorted(SCHEMES)}") from None
    return cls(**params)
