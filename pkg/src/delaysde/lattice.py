"""Time grids, path lattices, delay measures and weighted norm estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "TimeGrid",
    "ProcessRole",
    "PathLattice",
    "DelayMeasure",
    "WeightedNormConfig",
    "DelayAlignmentError",
    "TimeIndexError",
    "delay_average",
    "delay_average_all",
    "weighted_s2_norm",
    "weighted_h2_norm",
    "scenario_weighted_sup",
    "scenario_weighted_quad",
]

_WEIGHT_SUM_TOL = 1e-9
_LAG_ALIGN_TOL = 1e-9


class DelayAlignmentError(ValueError):
    """A delay lag is not an integer multiple of the grid step."""


class TimeIndexError(IndexError):
    """A time index falls outside the grid range [0, N]."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i * dt on [0, T] with dt = T / N."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be a positive finite real, got {self.horizon}")
        if not (isinstance(self.steps, int) and self.steps >= 1):
            raise ValueError(f"steps must be a positive integer, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def time(self, i: int) -> float:
        return i * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt


class ProcessRole(Enum):
    """Extension convention used for queries below time zero.

    Forward and backward state processes return their frozen time-zero
    value; the control process returns zero.
    """

    STATE_FORWARD = "state-forward"
    STATE_BACKWARD = "state-backward"
    CONTROL = "control"


@dataclass(frozen=True)
class PathLattice:
    """Values of one process on a time grid across Monte Carlo scenarios.

    ``values`` has shape (scenarios, steps + 1); entry (m, i) is the value
    at time t_i in scenario m.  Queries at negative time indices resolve
    through the role convention: ``frozen_initial`` for state roles, zero
    for the control role.  Instances are immutable after construction.
    """

    grid: TimeGrid
    role: ProcessRole
    values: np.ndarray = field(compare=False)
    frozen_initial: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2:
            raise ValueError(f"values must be 2-d (scenarios, steps + 1), got shape {vals.shape}")
        if vals.shape[0] < 1:
            raise ValueError("lattice must hold at least one scenario")
        if vals.shape[1] != self.grid.steps + 1:
            raise ValueError(
                f"values have {vals.shape[1]} time columns, grid expects {self.grid.steps + 1}"
            )
        if not np.isfinite(vals).all():
            raise ValueError(f"non-finite values in {self.role.value} lattice")
        if not math.isfinite(self.frozen_initial):
            raise ValueError("frozen_initial must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(
        cls,
        grid: TimeGrid,
        scenarios: int,
        role: ProcessRole,
        value: float = 0.0,
        frozen_initial: float | None = None,
    ) -> "PathLattice":
        vals = np.full((scenarios, grid.steps + 1), float(value))
        frozen = float(value) if frozen_initial is None else frozen_initial
        if role is ProcessRole.CONTROL:
            frozen = 0.0
        return cls(grid=grid, role=role, values=vals, frozen_initial=frozen)

    @property
    def scenarios(self) -> int:
        return self.values.shape[0]

    def negative_time_value(self) -> float:
        return 0.0 if self.role is ProcessRole.CONTROL else self.frozen_initial

    def value(self, scenario: int, time_index: int) -> float:
        """Value at t_{time_index}; negative indices follow the role convention."""
        if time_index > self.grid.steps:
            raise TimeIndexError(f"time index {time_index} beyond grid end {self.grid.steps}")
        if time_index < 0:
            return self.negative_time_value()
        return float(self.values[scenario, time_index])

    def column(self, time_index: int) -> np.ndarray:
        """Values across all scenarios at t_{time_index}, with the t<0 convention."""
        if time_index > self.grid.steps:
            raise TimeIndexError(f"time index {time_index} beyond grid end {self.grid.steps}")
        if time_index < 0:
            return np.full(self.scenarios, self.negative_time_value())
        return self.values[:, time_index]


@dataclass(frozen=True)
class DelayMeasure:
    """Probability measure on [-T, 0] supported on finitely many lags.

    ``atoms`` is a sequence of (lag, weight) pairs with lags <= 0, pairwise
    distinct, and weights summing to one.  Lags must be integer multiples
    of the grid step of whatever grid the measure is used with.
    """

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        atoms = tuple((float(u), float(w)) for u, w in self.atoms)
        if not atoms:
            raise ValueError("delay measure needs at least one atom")
        total = 0.0
        seen = set()
        for u, w in atoms:
            if not (math.isfinite(u) and math.isfinite(w)):
                raise ValueError("delay atoms must be finite")
            if u > 0.0:
                raise ValueError(f"delay lag must be <= 0, got {u}")
            if w <= 0.0:
                raise ValueError(f"delay weight must be > 0, got {w}")
            if u in seen:
                raise ValueError(f"duplicate delay lag {u}")
            seen.add(u)
            total += w
        if abs(total - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"delay weights must sum to 1, got {total}")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def point_mass(cls) -> "DelayMeasure":
        """Dirac mass at lag zero (no delay)."""
        return cls(((0.0, 1.0),))

    @classmethod
    def single_lag(cls, lag: float) -> "DelayMeasure":
        return cls(((float(lag), 1.0),))

    @classmethod
    def uniform(cls, lags) -> "DelayMeasure":
        lags = [float(u) for u in lags]
        w = 1.0 / len(lags)
        return cls(tuple((u, w) for u in lags))

    def lag_steps(self, grid: TimeGrid) -> tuple[int, ...]:
        """Each lag as a (non-positive) number of grid steps.

        Raises DelayAlignmentError when a lag is not grid aligned or
        reaches below -T.
        """
        dt = grid.dt
        steps = []
        for u, _ in self.atoms:
            ratio = u / dt
            k = round(ratio)
            if abs(ratio - k) > _LAG_ALIGN_TOL * max(1.0, abs(ratio)):
                raise DelayAlignmentError(
                    f"delay lag {u} is not an integer multiple of dt={dt}"
                )
            if -k > grid.steps:
                raise DelayAlignmentError(
                    f"delay lag {u} reaches below -T for horizon {grid.horizon}"
                )
            steps.append(int(k))
        return tuple(steps)


@dataclass(frozen=True)
class WeightedNormConfig:
    """Exponential weight e^{beta * t} used by the norm estimators."""

    beta: float

    def __post_init__(self):
        if not (self.beta >= 0.0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be a nonnegative real, got {self.beta}")

    @classmethod
    def for_horizon(cls, horizon: float) -> "WeightedNormConfig":
        """Default weight beta = 1/T."""
        return cls(beta=1.0 / horizon)


def delay_average(
    lattice: PathLattice, alpha: DelayMeasure, scenario: int, time_index: int
) -> float:
    """Weighted average of lattice values at t_{time_index} + lag over the atoms.

    Lookups below time zero follow the lattice role convention.
    """
    _check_query_index(lattice, time_index)
    steps = alpha.lag_steps(lattice.grid)
    acc = 0.0
    for (_, w), k in zip(alpha.atoms, steps):
        acc += w * lattice.value(scenario, time_index + k)
    return acc


def delay_average_all(
    lattice: PathLattice, alpha: DelayMeasure, time_index: int
) -> np.ndarray:
    """Vector of delay averages across all scenarios at one time index."""
    _check_query_index(lattice, time_index)
    steps = alpha.lag_steps(lattice.grid)
    acc = np.zeros(lattice.scenarios)
    for (_, w), k in zip(alpha.atoms, steps):
        acc += w * lattice.column(time_index + k)
    return acc


def _check_query_index(lattice: PathLattice, time_index: int) -> None:
    if not (0 <= time_index <= lattice.grid.steps):
        raise TimeIndexError(
            f"time index {time_index} outside grid range [0, {lattice.grid.steps}]"
        )


def scenario_weighted_sup(
    values: np.ndarray, grid: TimeGrid, cfg: WeightedNormConfig
) -> np.ndarray:
    """Per-scenario max over i of e^{beta t_i} |v_i|^2, shape (scenarios,)."""
    weights = np.exp(cfg.beta * grid.times())
    return np.max(weights * np.square(values), axis=1)


def scenario_weighted_quad(
    values: np.ndarray, grid: TimeGrid, cfg: WeightedNormConfig
) -> np.ndarray:
    """Per-scenario left-endpoint sum of e^{beta t_i} |v_i|^2 dt over i < N."""
    weights = np.exp(cfg.beta * grid.times()[:-1])
    return np.sum(weights * np.square(values[:, :-1]), axis=1) * grid.dt


def weighted_s2_norm(lattice: PathLattice, cfg: WeightedNormConfig) -> float:
    """Empirical sup-type weighted norm: mean over scenarios of the weighted sup."""
    return float(np.mean(scenario_weighted_sup(lattice.values, lattice.grid, cfg)))


def weighted_h2_norm(lattice: PathLattice, cfg: WeightedNormConfig) -> float:
    """Empirical integral-type weighted norm via a left-endpoint Riemann sum."""
    return float(np.mean(scenario_weighted_quad(lattice.values, lattice.grid, cfg)))
