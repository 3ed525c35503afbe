"""Deterministic Brownian increment generation with per-scenario substreams."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lattice import TimeGrid

__all__ = ["BrownianLattice", "generate_brownian"]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class BrownianLattice:
    """Brownian increments on a grid, one row per scenario.

    ``increments[m, i]`` is the increment over [t_i, t_{i+1}].  Identical
    (seed, scenarios, grid) reproduce bit-identical increments; scenario m
    draws from the counter-based substream keyed by (seed, m), so the
    result does not depend on how scenarios are partitioned over workers.
    """

    grid: TimeGrid
    seed: int
    increments: np.ndarray = field(compare=False)

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=np.float64)
        if inc.ndim != 2 or inc.shape[1] != self.grid.steps:
            raise ValueError(f"increments must have shape (scenarios, {self.grid.steps})")
        inc = inc.copy()
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def scenarios(self) -> int:
        return self.increments.shape[0]

    def wiener_values(self) -> np.ndarray:
        """Cumulative path values, shape (scenarios, steps + 1), starting at 0."""
        out = np.empty((self.scenarios, self.grid.steps + 1))
        out[:, 0] = 0.0
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out

    def terminal_values(self) -> np.ndarray:
        return np.sum(self.increments, axis=1)


def _fill_block(out: np.ndarray, seed: int, start: int, stop: int, scale: float) -> None:
    n = out.shape[1]
    for m in range(start, stop):
        key = np.array([seed & _MASK64, m], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        out[m] = gen.standard_normal(n) * scale


def generate_brownian(
    seed: int, scenarios: int, grid: TimeGrid, workers: int = 1
) -> BrownianLattice:
    """Draw i.i.d. normal increments of variance dt for every scenario.

    Each scenario has its own Philox substream keyed by (seed, scenario),
    so filling may be split over any number of workers without changing
    the result.
    """
    if scenarios < 1:
        raise ValueError("scenarios must be >= 1")
    out = np.empty((scenarios, grid.steps))
    scale = math.sqrt(grid.dt)
    workers = max(1, int(workers))
    if workers == 1 or scenarios < 2 * workers:
        _fill_block(out, seed, 0, scenarios, scale)
    else:
        block = (scenarios + workers - 1) // workers
        bounds = [(b, min(b + block, scenarios)) for b in range(0, scenarios, block)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_fill_block, out, seed, lo, hi, scale) for lo, hi in bounds]
            for fut in futures:
                fut.result()
    return BrownianLattice(grid=grid, seed=seed, increments=out)
