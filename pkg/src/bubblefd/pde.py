"""Theta-scheme solver for ``v_tau = 1/2 sigma(y)^2 v_yy`` on a truncated grid.

Time runs forward in time-to-maturity ``tau``; the payoff is the initial
level. The row at ``y = 0`` is Dirichlet zero (absorption), the row at
``y = n`` is delegated to a boundary scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


class SingularPivotError(ArithmeticError):
    def __init__(self, row):
        super().__init__(f"zero pivot in tridiagonal elimination at row {row}")
        self.row = row


class NumericalBlowupError(ArithmeticError):
    def __init__(self, step, where="surface"):
        super().__init__(f"non-finite values in {where} at time step {step}")
        self.step = step


def _as_count(total, step, what, minimum):
    count = total / step
    rounded = round(count)
    if rounded < minimum or abs(count - rounded) > 1e-9 * max(1.0, count):
        raise ValueError(f"{what}: {total}/{step} must be an integer >= {minimum}")
    return int(rounded)


@dataclass(frozen=True)
class SolverConfig:
    """Uniform grid ``(0, maturity] x [0, n]`` with steps ``dtau`` and ``dy``."""

    n: float = 10.0
    dy: float = 0.05
    dtau: float = 0.01
    maturity: float = 1.0
    theta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not (self.n > 0 and self.dy > 0 and self.dtau > 0 and self.maturity > 0):
            raise ValueError("grid sizes must be positive")
        _as_count(self.n, self.dy, "n/dy", 3)
        _as_count(self.maturity, self.dtau, "maturity/dtau", 1)

    @property
    def n_space(self):
        return _as_count(self.n, self.dy, "n/dy", 3)

    @property
    def n_time(self):
        return _as_count(self.maturity, self.dtau, "maturity/dtau", 1)

    def nodes(self):
        return self.dy * np.arange(self.n_space + 1)

    def times(self):
        return self.dtau * np.arange(self.n_time + 1)

    def with_top(self, n):
        return SolverConfig(n=n, dy=self.dy, dtau=self.dtau, maturity=self.maturity, theta=self.theta)


@dataclass
class TridiagonalSystem:
    """``lower[k] x[k-1] + diag[k] x[k] + upper[k] x[k+1] = rhs[k]``.

    ``lower[0]`` and ``upper[-1]`` are ignored.
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        size = len(self.diag)
        if not (len(self.lower) == len(self.upper) == len(self.rhs) == size):
            raise ValueError("tridiagonal system has inconsistent lengths")

    def set_row(self, k, lower, diag, upper, rhs):
        self.lower[k] = lower
        self.diag[k] = diag
        self.upper[k] = upper
        self.rhs[k] = rhs

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        out = self.diag * x
        out[1:] += self.lower[1:] * x[:-1]
        out[:-1] += self.upper[:-1] * x[1:]
        return out

    def dense(self):
        size = len(self.diag)
        a = np.diag(self.diag.astype(float))
        a[np.arange(1, size), np.arange(size - 1)] = self.lower[1:]
        a[np.arange(size - 1), np.arange(1, size)] = self.upper[:-1]
        return a


def solve_tridiagonal(system):
    """Thomas algorithm without pivoting.

    Raises:
        SingularPivotError: a pivot vanished; ``.row`` names the row.
    """
    lower = system.lower.tolist()
    diag = system.diag.tolist()
    upper = system.upper.tolist()
    rhs = system.rhs.tolist()
    size = len(diag)
    c = [0.0] * size
    d = [0.0] * size

    pivot = diag[0]
    if pivot == 0.0:
        raise SingularPivotError(0)
    c[0] = upper[0] / pivot
    d[0] = rhs[0] / pivot
    for k in range(1, size):
        pivot = diag[k] - lower[k] * c[k - 1]
        if pivot == 0.0 or not math.isfinite(pivot):
            raise SingularPivotError(k)
        c[k] = upper[k] / pivot
        d[k] = (rhs[k] - lower[k] * d[k - 1]) / pivot

    x = d
    for k in range(size - 2, -1, -1):
        x[k] = d[k] - c[k] * x[k + 1]
    return np.array(x)


@dataclass(frozen=True)
class PriceSurface:
    times: np.ndarray
    nodes: np.ndarray
    values: np.ndarray

    def level(self, i):
        return self.values[i]

    def sample(self, tau, y):
        return sample(self, tau, y)


def diffusion_ratio(model, config):
    """``1/2 sigma(y_k)^2 dtau / dy^2`` at every node."""
    y = config.nodes()
    with np.errstate(over="ignore"):
        s = np.asarray(model.sigma(y), dtype=float)
    return 0.5 * s * s * config.dtau / config.dy**2


def assemble_interior(model, config, old, ratio=None):
    """Interior rows of one theta step; row 0 pins ``v = 0``.

    Row ``M`` is left as the identity and must be overwritten by a scheme.
    """
    if ratio is None:
        ratio = diffusion_ratio(model, config)
    theta = config.theta
    size = config.n_space + 1
    old = np.asarray(old, dtype=float)

    lower = -theta * ratio
    upper = -theta * ratio
    diag = 1.0 + 2.0 * theta * ratio
    rhs = old.copy()
    if theta < 1.0:
        second = np.zeros(size)
        second[1:-1] = old[2:] - 2.0 * old[1:-1] + old[:-2]
        rhs += (1.0 - theta) * ratio * second

    lower[0] = upper[0] = 0.0
    diag[0] = 1.0
    rhs[0] = 0.0
    lower[-1] = upper[-1] = 0.0
    diag[-1] = 1.0
    rhs[-1] = old[-1]
    return TridiagonalSystem(lower, diag, upper, rhs)


def march(model, config, scheme, payoff: Optional[Callable] = None, check_every=10):
    """Solve all time levels with ``scheme`` supplying the row at ``y = n``.

    Raises:
        NumericalBlowupError: non-finite values detected (checked every
            ``check_every`` steps and at the last step).
        SingularPivotError: propagated from the tridiagonal solve.
    """
    prepare = getattr(scheme, "prepare", None)
    if prepare is not None:
        scheme = prepare(model, config)
    nodes = config.nodes()
    times = config.times()
    values = np.empty((len(times), len(nodes)))
    values[0] = nodes if payoff is None else np.asarray(payoff(nodes), dtype=float)
    values[0, 0] = 0.0
    ratio = diffusion_ratio(model, config)
    for i in range(1, len(times)):
        # an unstable explicit run overflows before the periodic check sees it
        with np.errstate(over="ignore", invalid="ignore"):
            system = assemble_interior(model, config, values[i - 1], ratio)
            scheme.install(system, config, i, values[i - 1])
            values[i] = solve_tridiagonal(system)
        if (i % check_every == 0 or i == len(times) - 1) and not np.all(np.isfinite(values[i])):
            raise NumericalBlowupError(i)
    return PriceSurface(times, nodes, values)


def _bracket(grid, x, what):
    lo, hi = grid[0], grid[-1]
    tol = 1e-12 * max(1.0, abs(hi))
    if not (lo - tol <= x <= hi + tol):
        raise ValueError(f"{what}={x} outside [{lo}, {hi}]")
    step = (hi - lo) / (len(grid) - 1)
    pos = (min(max(x, lo), hi) - lo) / step
    k = min(int(math.floor(pos + 1e-9)), len(grid) - 2)
    w = pos - k
    if abs(w) < 1e-9:
        w = 0.0
    elif abs(w - 1.0) < 1e-9:
        w = 1.0
    return k, w


def sample(surface, tau, y):
    """Bilinear interpolation of the surface; exact at grid nodes."""
    i, s = _bracket(surface.times, tau, "tau")
    k, w = _bracket(surface.nodes, y, "y")
    v = surface.values
    low = (1.0 - w) * v[i, k] + w * v[i, k + 1]
    if s == 0.0:
        return float(low)
    high = (1.0 - w) * v[i + 1, k] + w * v[i + 1, k + 1]
    return float((1.0 - s) * low + s * high)
