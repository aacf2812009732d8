"""Euler-Maruyama estimate of ``E_y[Y_T]`` with absorption at zero.

Only used to corroborate closed forms and the grid solvers. Paths are
simulated in fixed-size chunks, each with its own generator derived from
``(seed, chunk_index)``, so results do not depend on how chunks are
scheduled across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

CHUNK_PATHS = 8192


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 100_000
    n_steps: int = 2000
    seed: int = 20240101
    antithetic: bool = False

    def __post_init__(self):
        if self.n_paths < 100:
            raise ValueError(f"n_paths must be >= 100, got {self.n_paths}")
        if self.n_steps < 10:
            raise ValueError(f"n_steps must be >= 10, got {self.n_steps}")


@dataclass(frozen=True)
class McResult:
    mean: float
    std_err: float
    absorbed_frac: float
    n_paths: int


def split_seed(seed, chunk_index):
    """128-bit sub-seed for one chunk, derived through numpy's ``SeedSequence`` spawn keys."""
    state = np.random.SeedSequence(int(seed), spawn_key=(int(chunk_index),)).generate_state(2, np.uint64)
    return int(state[0]) ^ (int(state[1]) << 64)


def simulate_chunk(model, y0, maturity, n_paths, n_steps, sub_seed, antithetic=False):
    """Terminal values of ``n_paths`` Euler paths driven by ``sub_seed``."""
    rng = np.random.default_rng(sub_seed)
    dt = maturity / n_steps
    sqrt_dt = math.sqrt(dt)
    half = (n_paths + 1) // 2 if antithetic else n_paths
    y = np.full(n_paths, float(y0))
    alive = np.ones(n_paths, dtype=bool)
    for _ in range(n_steps):
        z = rng.standard_normal(half)
        if antithetic:
            z = np.concatenate([z, -z])[:n_paths]
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        ya = y[idx]
        with np.errstate(over="ignore", invalid="ignore"):
            step = np.asarray(model.sigma(ya), dtype=float) * sqrt_dt * z[idx]
            nxt = ya + step
        # overflowed updates (inf - inf) count as absorbed along with crossings
        dead = ~(nxt > 0.0) | ~np.isfinite(nxt)
        nxt[dead] = 0.0
        y[idx] = nxt
        alive[idx[dead]] = False
    return y


def _chunks(n_paths):
    full, rest = divmod(n_paths, CHUNK_PATHS)
    sizes = [CHUNK_PATHS] * full
    if rest:
        sizes.append(rest)
    return sizes


def simulate_terminal(model, y0, maturity, cfg, workers=1):
    sizes = _chunks(cfg.n_paths)

    def run(index):
        return simulate_chunk(
            model, y0, maturity, sizes[index], cfg.n_steps, split_seed(cfg.seed, index), cfg.antithetic
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    return np.concatenate(parts)


def simulate_forward(model, y0, maturity, cfg=None, workers=1):
    """Sample mean, standard error and absorbed fraction of ``Y_T``."""
    if not y0 > 0:
        raise ValueError(f"y0 must be positive, got {y0}")
    if not maturity > 0:
        raise ValueError(f"maturity must be positive, got {maturity}")
    cfg = cfg or McConfig()
    terminal = simulate_terminal(model, y0, maturity, cfg, workers)
    n = terminal.size
    mean = float(np.mean(terminal))
    std_err = float(np.std(terminal, ddof=1) / math.sqrt(n))
    return McResult(mean, std_err, float(np.mean(terminal == 0.0)), n)
