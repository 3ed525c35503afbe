"""Exact small-instance oracle on a non-recombining binary sign tree.

Every sign sequence of increments +/- sqrt(dt) is one path with weight
2^-N, so conditional expectations are exact two-child averages and the
fixed-point iteration runs free of regression error.  Path dependence of
delayed coefficients rules out recombination, hence the hard cap on N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .brownian import BrownianLattice
from .lattice import (
    PathLattice,
    ProcessRole,
    TimeGrid,
    WeightedNormConfig,
    scenario_weighted_quad,
    scenario_weighted_sup,
)
from .problems import (
    ProblemMode,
    ProblemSpec,
    make_homogeneous_driver,
    make_transformed_coefficients,
    map_back_solution,
)

__all__ = ["DEFAULT_TREE_CAP", "TreeCapError", "BinomialTree", "TreeSolution", "tree_solve"]

DEFAULT_TREE_CAP = 12


class TreeCapError(ValueError):
    """Requested tree depth exceeds the exponential-cost cap."""


@dataclass(frozen=True)
class BinomialTree:
    """All 2^N sign paths over a grid, each of probability 2^-N.

    Path p takes the increment +sqrt(dt) at step i when bit i of p is set,
    -sqrt(dt) otherwise; every sign sequence appears exactly once.
    """

    grid: TimeGrid
    cap: int = DEFAULT_TREE_CAP

    def __post_init__(self):
        if self.grid.steps > self.cap:
            raise TreeCapError(
                f"tree depth {self.grid.steps} exceeds cap {self.cap}; "
                f"2^N paths make larger depths impractical"
            )

    @property
    def paths(self) -> int:
        return 1 << self.grid.steps

    def sign_matrix(self) -> np.ndarray:
        """Signs in {-1, +1}, shape (paths, steps)."""
        p = np.arange(self.paths, dtype=np.uint64)[:, None]
        bits = (p >> np.arange(self.grid.steps, dtype=np.uint64)[None, :]) & 1
        return 2.0 * bits.astype(np.float64) - 1.0

    def increments(self) -> np.ndarray:
        return self.sign_matrix() * math.sqrt(self.grid.dt)

    def brownian(self) -> BrownianLattice:
        """The tree paths viewed as an (equal-weight) increment lattice."""
        return BrownianLattice(grid=self.grid, seed=0, increments=self.increments())

    def conditional_expectation(self, values: np.ndarray, time_index: int) -> np.ndarray:
        """Expectation of a time-(i+1)-measurable path array given step i:
        the equal-weight average over the two children."""
        bit = np.uint64(1 << time_index)
        idx = np.arange(self.paths, dtype=np.uint64)
        low = idx & ~bit
        high = idx | bit
        return 0.5 * (values[low] + values[high])


@dataclass
class TreeSolution:
    """Solution lattices over all tree paths plus iteration diagnostics."""

    x: PathLattice | None
    y: PathLattice
    z: PathLattice
    y0: float
    iterations: int
    sup_diffs: list[float]
    combined_diffs: list[float]
    contraction_ratios: list[float]
    converged: bool
    driver_values: np.ndarray
    transformed_control: PathLattice | None = None


def tree_solve(
    spec: ProblemSpec,
    tree: BinomialTree,
    max_picard: int = 50,
    tol: float = 1e-12,
) -> TreeSolution:
    """Fixed-point iteration with exact conditional expectations on the tree.

    Coefficients are always evaluated on the previous iterate, the
    backward pass takes exact two-child averages, and the forward state
    steps explicitly along each path.  Problems with a backward diffusion
    are solved through the control-shift transform and mapped back.
    Iteration stops when the sup over nodes of successive differences
    drops below ``tol``.
    """
    grid = tree.grid
    paths = tree.paths
    dt = grid.dt
    coupled = spec.mode is ProblemMode.FBSDDE
    g = spec.backward_diffusion

    if g is not None:
        if coupled:
            drift_eval, diffusion_eval, driver_eval = make_transformed_coefficients(
                spec.drift, spec.diffusion, spec.driver, g
            )
        else:
            drift_eval = diffusion_eval = None
            driver_eval = make_homogeneous_driver(spec.driver, g)
    else:
        drift_eval, diffusion_eval, driver_eval = spec.drift, spec.diffusion, spec.driver

    dw = tree.increments()
    w_values = np.empty((paths, grid.steps + 1))
    w_values[:, 0] = 0.0
    np.cumsum(dw, axis=1, out=w_values[:, 1:])

    x_prev = PathLattice.constant(grid, paths, ProcessRole.STATE_FORWARD, 0.0)
    y_prev = PathLattice.constant(grid, paths, ProcessRole.STATE_BACKWARD, 0.0)
    z_prev = PathLattice.constant(grid, paths, ProcessRole.CONTROL, 0.0)

    norm_cfg = WeightedNormConfig.for_horizon(grid.horizon)
    sup_diffs: list[float] = []
    combined_diffs: list[float] = []
    converged = False
    iterations = 0
    driver_used = np.zeros((paths, grid.steps))

    for _ in range(max_picard):
        iterations += 1
        if coupled:
            x_vals = np.empty((paths, grid.steps + 1))
            x_vals[:, 0] = spec.initial_x
            for i in range(grid.steps):
                b_i = drift_eval.evaluate_all(i, x_prev, y_prev, z_prev)
                s_i = diffusion_eval.evaluate_all(i, x_prev, y_prev, z_prev)
                x_vals[:, i + 1] = x_vals[:, i] + b_i * dt + s_i * dw[:, i]
            x_lat = PathLattice(
                grid=grid, role=ProcessRole.STATE_FORWARD, values=x_vals,
                frozen_initial=spec.initial_x,
            )
            xi = spec.terminal.apply(w_values[:, -1], x_vals[:, -1])
        else:
            x_lat = None
            xi = spec.terminal.apply(w_values[:, -1])

        y_vals = np.empty((paths, grid.steps + 1))
        z_vals = np.empty((paths, grid.steps + 1))
        y_vals[:, -1] = xi
        for i in range(grid.steps - 1, -1, -1):
            # the scheme freezes all driver arguments at the previous iterate
            f_i = driver_eval.evaluate_all(i, x_prev if coupled else None, y_prev, z_prev)
            driver_used[:, i] = f_i
            z_vals[:, i] = tree.conditional_expectation(y_vals[:, i + 1] * dw[:, i], i) / dt
            y_vals[:, i] = tree.conditional_expectation(y_vals[:, i + 1] + f_i * dt, i)
        z_vals[:, -1] = z_vals[:, -2]

        y_lat = PathLattice(
            grid=grid, role=ProcessRole.STATE_BACKWARD, values=y_vals,
            frozen_initial=float(y_vals[0, 0]),
        )
        z_lat = PathLattice(grid=grid, role=ProcessRole.CONTROL, values=z_vals)

        dx = (x_lat.values - x_prev.values) if coupled else None
        dy = y_vals - y_prev.values
        dz = z_vals - z_prev.values
        sup = max(
            float(np.max(np.abs(dy))),
            float(np.max(np.abs(dz))),
            float(np.max(np.abs(dx))) if coupled else 0.0,
        )
        combined = float(
            np.mean(
                (scenario_weighted_sup(dx, grid, norm_cfg) if coupled else 0.0)
                + scenario_weighted_sup(dy, grid, norm_cfg)
                + scenario_weighted_quad(dz, grid, norm_cfg)
            )
        )
        sup_diffs.append(sup)
        combined_diffs.append(combined)

        if coupled:
            x_prev = x_lat
        y_prev, z_prev = y_lat, z_lat
        if sup < tol:
            converged = True
            break

    ratios = [
        combined_diffs[i + 1] / combined_diffs[i]
        for i in range(len(combined_diffs) - 1)
        if combined_diffs[i] > 0.0
    ]

    transformed_control = None
    if g is not None:
        transformed_control = z_prev
        y_prev, z_final = map_back_solution(y_prev, z_prev, g, x_prev if coupled else None)
    else:
        z_final = z_prev

    return TreeSolution(
        x=x_prev if coupled else None,
        y=y_prev,
        z=z_final,
        y0=float(y_prev.values[0, 0]),
        iterations=iterations,
        sup_diffs=sup_diffs,
        combined_diffs=combined_diffs,
        contraction_ratios=ratios,
        converged=converged,
        driver_values=driver_used,
        transformed_control=transformed_control,
    )
