"""Shared builders for problem specs and lattices used across the suite."""

from __future__ import annotations

import numpy as np
import pytest

from delaysde import (
    CoefficientKind,
    DelayMeasure,
    GeneratorSpec,
    PathLattice,
    ProblemMode,
    ProblemSpec,
    ProcessRole,
    TerminalRule,
    TimeGrid,
)


def coefficient(kind, fn, params=(), lags=None, weights=None, k=0.01):
    alpha = (
        DelayMeasure.point_mass()
        if lags is None
        else DelayMeasure(tuple(zip(lags, weights)))
    )
    return GeneratorSpec.from_catalog(kind, fn, params, alpha, k)


def bsde_spec(f, g=None, horizon=1.0, xi=("w_terminal", (0.0, 1.0))):
    return ProblemSpec(
        mode=ProblemMode.BSDE,
        horizon=horizon,
        terminal=TerminalRule.from_catalog(*xi),
        driver=f,
        backward_diffusion=g,
    )


def fbsdde_spec(f, b, sigma, g=None, horizon=1.0, x=1.0, xi=("x_terminal", (0.0, 1.0))):
    return ProblemSpec(
        mode=ProblemMode.FBSDDE,
        horizon=horizon,
        terminal=TerminalRule.from_catalog(*xi),
        driver=f,
        backward_diffusion=g,
        drift=b,
        diffusion=sigma,
        initial_x=x,
    )


def random_lattice(grid, scenarios, role, rng, scale=1.0, frozen=None):
    values = rng.standard_normal((scenarios, grid.steps + 1)) * scale
    if frozen is None:
        frozen = float(values[0, 0]) if role is not ProcessRole.CONTROL else 0.0
    return PathLattice(grid=grid, role=role, values=values, frozen_initial=frozen)


def spec_text(body: str) -> str:
    """Dedent a triple-quoted spec body."""
    lines = [line.strip() for line in body.strip().splitlines()]
    return "\n".join(lines) + "\n"


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def grid8():
    return TimeGrid(horizon=1.0, steps=8)


DRIVER = CoefficientKind.DRIVER
DRIFT = CoefficientKind.DRIFT
DIFFUSION = CoefficientKind.DIFFUSION
BACKWARD_DIFFUSION = CoefficientKind.BACKWARD_DIFFUSION
