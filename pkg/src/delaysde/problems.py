"""Problem descriptions, contraction certificates and driver transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from . import catalog
from .lattice import (
    DelayMeasure,
    PathLattice,
    ProcessRole,
    TimeGrid,
)

__all__ = [
    "ProblemMode",
    "CoefficientKind",
    "GeneratorSpec",
    "TerminalRule",
    "ProblemSpec",
    "ContractionCertificate",
    "GridMismatchError",
    "check_contraction",
    "composed_lipschitz",
    "transformed_certificate",
    "TransformedCoefficient",
    "make_homogeneous_driver",
    "make_transformed_coefficients",
    "map_back_solution",
]


class GridMismatchError(ValueError):
    """Lattices passed to one operation live on different grids."""


class ProblemMode(Enum):
    BSDE = "bsde"
    FBSDDE = "fbsdde"


class CoefficientKind(Enum):
    DRIFT = "b"
    DIFFUSION = "sigma"
    DRIVER = "f"
    BACKWARD_DIFFUSION = "g"


@dataclass(frozen=True)
class GeneratorSpec:
    """One coefficient: a pointwise function composed with delay averaging.

    ``pointwise_fn`` takes (t, x_avg, y_avg, z_avg) for drift, forward
    diffusion and driver kinds, and (t, x_avg, y_avg) for the backward
    diffusion.  ``lipschitz_k`` is the caller-declared constant in the
    squared form: |phi(u) - phi(u')|^2 <= K * integral of |u - u'|^2
    against the delay measure.  Evaluations at negative times are zero.

    ``fn_name``/``params`` identify a catalog entry when the spec was
    built from one; ad-hoc callables leave them unset and cannot be
    serialized to a config file.
    """

    kind: CoefficientKind
    alpha: DelayMeasure
    lipschitz_k: float
    pointwise_fn: Callable = field(compare=False, repr=False)
    fn_name: Optional[str] = None
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if not (self.lipschitz_k > 0.0 and math.isfinite(self.lipschitz_k)):
            raise ValueError(f"lipschitz_k must be > 0, got {self.lipschitz_k}")
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))

    @classmethod
    def from_catalog(
        cls,
        kind: CoefficientKind,
        fn_name: str,
        params,
        alpha: DelayMeasure,
        lipschitz_k: float,
    ) -> "GeneratorSpec":
        params = tuple(float(v) for v in params)
        fn = catalog.build_coefficient_fn(fn_name, params, kind.value)
        return cls(
            kind=kind,
            alpha=alpha,
            lipschitz_k=lipschitz_k,
            pointwise_fn=fn,
            fn_name=fn_name,
            params=params,
        )

    def evaluate(self, t: float, x_avg=0.0, y_avg=0.0, z_avg=0.0):
        """Pointwise value with the t < 0 vanishing convention."""
        if t < 0.0:
            return 0.0
        if self.kind is CoefficientKind.BACKWARD_DIFFUSION:
            return self.pointwise_fn(t, x_avg, y_avg)
        return self.pointwise_fn(t, x_avg, y_avg, z_avg)

    def evaluate_all(
        self,
        time_index: int,
        x: Optional[PathLattice],
        y: Optional[PathLattice],
        z: Optional[PathLattice],
    ) -> np.ndarray:
        """Vector of values across scenarios at grid index ``time_index``.

        Delay averages are taken against this coefficient's own measure;
        absent processes contribute zero.
        """
        grid, scenarios = _grid_and_scenarios(x, y, z)
        if time_index < 0:
            return np.zeros(scenarios)
        t = grid.time(time_index)
        x_avg = _averaged(self.alpha, x, time_index)
        y_avg = _averaged(self.alpha, y, time_index)
        if self.kind is CoefficientKind.BACKWARD_DIFFUSION:
            out = self.pointwise_fn(t, x_avg, y_avg)
        else:
            z_avg = _averaged(self.alpha, z, time_index)
            out = self.pointwise_fn(t, x_avg, y_avg, z_avg)
        return _as_vector(out, scenarios)


@dataclass(frozen=True)
class TerminalRule:
    """Catalog rule mapping terminal scenario state to the terminal payoff."""

    fn_name: str
    params: tuple[float, ...]
    fn: Callable = field(compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))

    @classmethod
    def from_catalog(cls, fn_name: str, params) -> "TerminalRule":
        params = tuple(float(v) for v in params)
        return cls(fn_name=fn_name, params=params, fn=catalog.build_terminal_fn(fn_name, params))

    @property
    def needs_forward_state(self) -> bool:
        return self.fn_name in catalog.TERMINAL_NEEDS_FORWARD

    def apply(self, w_terminal: np.ndarray, x_terminal: Optional[np.ndarray] = None) -> np.ndarray:
        out = _as_vector(self.fn(w_terminal, x_terminal), np.asarray(w_terminal).shape[0])
        if not np.isfinite(out).all():
            raise ValueError("terminal rule produced non-finite values")
        return out


@dataclass(frozen=True)
class ProblemSpec:
    """Complete problem description for one equation.

    BSDE mode carries a driver and optionally a backward diffusion;
    coupled forward-backward mode additionally needs a drift, a forward
    diffusion and the forward initial point.
    """

    mode: ProblemMode
    horizon: float
    terminal: TerminalRule
    driver: GeneratorSpec
    backward_diffusion: Optional[GeneratorSpec] = None
    drift: Optional[GeneratorSpec] = None
    diffusion: Optional[GeneratorSpec] = None
    initial_x: Optional[float] = None

    def __post_init__(self):
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be a positive finite real, got {self.horizon}")
        _expect_kind(self.driver, CoefficientKind.DRIVER, "driver")
        if self.backward_diffusion is not None:
            _expect_kind(self.backward_diffusion, CoefficientKind.BACKWARD_DIFFUSION, "backward_diffusion")
        if self.mode is ProblemMode.FBSDDE:
            if self.drift is None or self.diffusion is None:
                raise ValueError("coupled forward-backward mode needs drift and diffusion coefficients")
            if self.initial_x is None or not math.isfinite(self.initial_x):
                raise ValueError("coupled forward-backward mode needs a finite initial_x")
            _expect_kind(self.drift, CoefficientKind.DRIFT, "drift")
            _expect_kind(self.diffusion, CoefficientKind.DIFFUSION, "diffusion")
        else:
            if self.drift is not None or self.diffusion is not None:
                raise ValueError("drift/diffusion coefficients are only valid in fbsdde mode")
            if self.initial_x is not None:
                raise ValueError("initial_x is only valid in fbsdde mode")
            if self.terminal.needs_forward_state:
                raise ValueError(
                    f"terminal rule {self.terminal.fn_name!r} reads the forward state and needs fbsdde mode"
                )

    @property
    def coefficients(self) -> tuple[GeneratorSpec, ...]:
        present = [self.driver]
        for gen in (self.backward_diffusion, self.drift, self.diffusion):
            if gen is not None:
                present.append(gen)
        return tuple(present)

    @property
    def k_effective(self) -> float:
        return max(gen.lipschitz_k for gen in self.coefficients)

    @property
    def is_homogeneous(self) -> bool:
        return self.backward_diffusion is None


@dataclass(frozen=True)
class ContractionCertificate:
    """Sufficient smallness condition for the fixed-point map to contract."""

    mode: ProblemMode
    k_effective: float
    rho: float
    satisfied: bool


def _certificate(mode: ProblemMode, k: float, horizon: float) -> ContractionCertificate:
    if mode is ProblemMode.BSDE:
        rho = 8.0 * k * horizon * max(1.0, horizon)
    else:
        rho = 24.0 * k * math.e * max(1.0, horizon * horizon)
    return ContractionCertificate(mode=mode, k_effective=k, rho=rho, satisfied=rho < 1.0)


def check_contraction(spec: ProblemSpec) -> ContractionCertificate:
    """Certificate from the declared constants of the involved coefficients."""
    return _certificate(spec.mode, spec.k_effective, spec.horizon)


def composed_lipschitz(spec: ProblemSpec) -> float:
    """Bookkeeping constant for the control-shifted coefficients.

    Shifting the control argument by the backward diffusion composes the
    constants; 2 * K * (1 + K_g) is a conservative triangle-inequality
    bound in the squared form.
    """
    if spec.backward_diffusion is None:
        raise ValueError("composed constant only applies when a backward diffusion is present")
    k_g = spec.backward_diffusion.lipschitz_k
    k_base = max(
        gen.lipschitz_k for gen in spec.coefficients if gen is not spec.backward_diffusion
    )
    return 2.0 * k_base * (1.0 + k_g)


def transformed_certificate(spec: ProblemSpec) -> Optional[ContractionCertificate]:
    """Certificate of the control-shifted homogeneous problem, or None when
    the problem is already homogeneous."""
    if spec.backward_diffusion is None:
        return None
    return _certificate(spec.mode, composed_lipschitz(spec), spec.horizon)


# ---------------------------------------------------------------------------
# control-shift transform and its inverse


def _grid_and_scenarios(*lattices: Optional[PathLattice]) -> tuple[TimeGrid, int]:
    present = [lat for lat in lattices if lat is not None]
    if not present:
        raise ValueError("coefficient evaluation needs at least one lattice")
    grid = present[0].grid
    scenarios = present[0].scenarios
    for lat in present[1:]:
        if lat.grid != grid or lat.scenarios != scenarios:
            raise GridMismatchError("lattices disagree on grid or scenario count")
    return grid, scenarios


def _averaged(alpha: DelayMeasure, lattice: Optional[PathLattice], time_index: int):
    if lattice is None:
        return 0.0
    steps = alpha.lag_steps(lattice.grid)
    acc = np.zeros(lattice.scenarios)
    for (_, w), k in zip(alpha.atoms, steps):
        acc += w * lattice.column(time_index + k)
    return acc


def _as_vector(out, scenarios: int) -> np.ndarray:
    arr = np.asarray(out, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(scenarios, float(arr))
    return arr


def _shift_column(
    shift: GeneratorSpec,
    time_index: int,
    x: Optional[PathLattice],
    y: PathLattice,
    z_bar: PathLattice,
) -> np.ndarray:
    """Control column at one index, shifted pointwise by the backward
    diffusion: z_bar(t_j) - g(t_j, x_avg, y_avg), and zero below time 0."""
    if time_index < 0:
        return np.zeros(z_bar.scenarios)
    g_col = shift.evaluate_all(time_index, x, y, None)
    return z_bar.values[:, time_index] - g_col


@dataclass(frozen=True)
class TransformedCoefficient:
    """A coefficient evaluated on the pointwise-shifted control path.

    The shift is applied along the path before delay averaging: every
    control lookup z(t + u) becomes z_bar(t + u) - g(t + u, x_{t+u}, y_{t+u}).
    """

    base: GeneratorSpec
    shift: GeneratorSpec

    def evaluate_all(
        self,
        time_index: int,
        x: Optional[PathLattice],
        y: PathLattice,
        z_bar: PathLattice,
    ) -> np.ndarray:
        grid, scenarios = _grid_and_scenarios(x, y, z_bar)
        if time_index < 0:
            return np.zeros(scenarios)
        t = grid.time(time_index)
        alpha = self.base.alpha
        x_avg = _averaged(alpha, x, time_index)
        y_avg = _averaged(alpha, y, time_index)
        steps = alpha.lag_steps(grid)
        z_avg = np.zeros(scenarios)
        for (_, w), k in zip(alpha.atoms, steps):
            z_avg += w * _shift_column(self.shift, time_index + k, x, y, z_bar)
        out = self.base.pointwise_fn(t, x_avg, y_avg, z_avg)
        return _as_vector(out, scenarios)


def make_homogeneous_driver(f: GeneratorSpec, g: GeneratorSpec) -> TransformedCoefficient:
    """Driver of the homogeneous equation equivalent to the non-homogeneous one."""
    _expect_kind(f, CoefficientKind.DRIVER, "f")
    _expect_kind(g, CoefficientKind.BACKWARD_DIFFUSION, "g")
    return TransformedCoefficient(base=f, shift=g)


def make_transformed_coefficients(
    b: GeneratorSpec, sigma: GeneratorSpec, f: GeneratorSpec, g: GeneratorSpec
) -> tuple[TransformedCoefficient, TransformedCoefficient, TransformedCoefficient]:
    """Control-shifted (drift, diffusion, driver) triple for the coupled case."""
    _expect_kind(b, CoefficientKind.DRIFT, "b")
    _expect_kind(sigma, CoefficientKind.DIFFUSION, "sigma")
    _expect_kind(f, CoefficientKind.DRIVER, "f")
    _expect_kind(g, CoefficientKind.BACKWARD_DIFFUSION, "g")
    return (
        TransformedCoefficient(base=b, shift=g),
        TransformedCoefficient(base=sigma, shift=g),
        TransformedCoefficient(base=f, shift=g),
    )


def map_back_solution(
    y_bar: PathLattice,
    z_bar: PathLattice,
    g: GeneratorSpec,
    x: Optional[PathLattice] = None,
) -> tuple[PathLattice, PathLattice]:
    """Solution of the original equation from the homogeneous one.

    The backward state is unchanged; the control becomes
    z(t_i) = z_bar(t_i) - g(t_i, x_avg, y_avg) per scenario, with the
    backward diffusion evaluated through its own delay measure.
    """
    _expect_kind(g, CoefficientKind.BACKWARD_DIFFUSION, "g")
    grid, _ = _grid_and_scenarios(x, y_bar, z_bar)
    z_values = np.empty_like(z_bar.values)
    for i in range(grid.steps + 1):
        z_values[:, i] = _shift_column(g, i, x, y_bar, z_bar)
    z = PathLattice(grid=grid, role=ProcessRole.CONTROL, values=z_values)
    return y_bar, z


def _expect_kind(gen: GeneratorSpec, kind: CoefficientKind, slot: str) -> None:
    if gen.kind is not kind:
        raise ValueError(f"{slot} coefficient must have kind {kind.value!r}, got {gen.kind.value!r}")
