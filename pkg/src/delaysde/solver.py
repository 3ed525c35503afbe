"""Monte Carlo fixed-point solver with regression-based backward steps."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np

from .brownian import BrownianLattice, generate_brownian
from .lattice import (
    DelayMeasure,
    PathLattice,
    ProcessRole,
    TimeGrid,
    WeightedNormConfig,
    delay_average_all,
    scenario_weighted_quad,
    scenario_weighted_sup,
)
from .problems import (
    ContractionCertificate,
    ProblemMode,
    ProblemSpec,
    check_contraction,
    make_homogeneous_driver,
    make_transformed_coefficients,
    map_back_solution,
    transformed_certificate,
)

__all__ = [
    "RegressionBasis",
    "SolverConfig",
    "StopReason",
    "SolverDiagnostics",
    "SolutionTriple",
    "ResidualReport",
    "SolverError",
    "RegressionConditioningError",
    "regression_design",
    "backward_step",
    "BackwardStep",
    "forward_sweep",
    "backward_sweep",
    "picard_solve",
    "solve_general",
    "residual_check",
]

_LSTSQ_RCOND = 1e-10


class RegressionConditioningError(RuntimeError):
    """Regression inputs at one time index are unusable."""

    def __init__(self, message: str, time_index: int):
        super().__init__(message)
        self.time_index = time_index


class SolverError(RuntimeError):
    """Solve failed mid-iteration; carries the diagnostics gathered so far."""

    def __init__(self, message: str, diagnostics: "SolverDiagnostics | None" = None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class RegressionBasis:
    """Polynomial basis for the conditional-expectation regressions.

    Degree 0 reduces every projection to the scenario mean.  Regressors
    are the current Brownian value, the current forward state when one
    exists, and optionally the delay averages of the previous iterate
    (taken against the driver's delay measure).
    """

    max_degree: int = 2
    use_brownian: bool = True
    use_forward_state: bool = True
    use_delay_averages: bool = False

    def __post_init__(self):
        if not (0 <= self.max_degree <= 8):
            raise ValueError(f"max_degree must be in [0, 8], got {self.max_degree}")


@dataclass(frozen=True)
class SolverConfig:
    """Discretization, sampling and iteration controls for one solve."""

    grid: TimeGrid
    scenarios: int
    seed: int = 0
    basis: RegressionBasis = RegressionBasis()
    beta: Optional[float] = None  # None picks the default weight 1/T
    max_picard: int = 25
    picard_tol: float = 1e-4
    workers: int = 1

    def __post_init__(self):
        if self.scenarios < 2:
            raise ValueError("scenarios must be >= 2")
        if self.max_picard < 1:
            raise ValueError("max_picard must be >= 1")
        if not (self.picard_tol > 0.0):
            raise ValueError("picard_tol must be > 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def norm_config(self) -> WeightedNormConfig:
        if self.beta is None:
            return WeightedNormConfig.for_horizon(self.grid.horizon)
        return WeightedNormConfig(beta=self.beta)


class StopReason(Enum):
    TOLERANCE = "tolerance"
    MAX_ITERATIONS = "max_iterations"


@dataclass
class ResidualReport:
    """How far lattices are from satisfying the discrete equations."""

    y_max_mean_sq: float
    y_argmax_index: int
    y_weighted: float
    x_max_mean_sq: Optional[float] = None
    x_argmax_index: Optional[int] = None
    x_weighted: Optional[float] = None


@dataclass
class SolverDiagnostics:
    """Per-iteration convergence record of one fixed-point solve.

    ``iteration_diffs[n-1]`` is the combined weighted norm of the n-th
    iterate difference: sup-type norms of the forward and backward state
    differences plus the integral-type norm of the control difference.
    """

    iteration_diffs: list[float] = field(default_factory=list)
    diff_stderrs: list[float] = field(default_factory=list)
    contraction_ratios: list[float] = field(default_factory=list)
    ratio_stderrs: list[float] = field(default_factory=list)
    stop_reason: Optional[StopReason] = None
    certificate: Optional[ContractionCertificate] = None
    transformed_certificate: Optional[ContractionCertificate] = None
    warnings: list[str] = field(default_factory=list)
    conditioning_indices: list[int] = field(default_factory=list)
    residual: Optional[ResidualReport] = None
    y0_mean: float = math.nan
    y0_stderr: float = math.nan

    @property
    def iterations(self) -> int:
        return len(self.iteration_diffs)


@dataclass
class SolutionTriple:
    """Solution lattices plus diagnostics; the forward state is None in
    plain backward mode.  ``transformed_control`` holds the control of the
    internal homogeneous solve when the problem had a backward diffusion."""

    x: Optional[PathLattice]
    y: PathLattice
    z: PathLattice
    diagnostics: SolverDiagnostics
    transformed_control: Optional[PathLattice] = None


@dataclass
class BackwardStep:
    """Output of one regression step of the backward sweep."""

    y_values: np.ndarray
    z_values: np.ndarray
    y_coeffs: np.ndarray
    z_coeffs: np.ndarray
    rank_deficient: bool


@lru_cache(maxsize=None)
def _monomial_exponents(n_regressors: int, degree: int) -> tuple[tuple[int, ...], ...]:
    exps = [
        e
        for e in itertools.product(range(degree + 1), repeat=n_regressors)
        if 1 <= sum(e) <= degree
    ]
    exps.sort(key=lambda e: (sum(e), e))
    return tuple(exps)


def regression_design(
    basis: RegressionBasis,
    time_index: int,
    w_values: np.ndarray,
    x_lattice: Optional[PathLattice] = None,
    prev: Optional[tuple[Optional[PathLattice], PathLattice, PathLattice]] = None,
    delay_alpha: Optional[DelayMeasure] = None,
) -> np.ndarray:
    """Design matrix at one time index; first column is the intercept.

    Every regressor is measurable at t_i: the current Brownian value uses
    only increments before i, the forward state is the explicit-scheme
    value at i, and delay-average regressors look backwards in time.
    """
    scenarios = w_values.shape[0]
    regressors: list[np.ndarray] = []
    if basis.use_brownian:
        regressors.append(w_values[:, time_index])
    if basis.use_forward_state and x_lattice is not None:
        regressors.append(x_lattice.values[:, time_index])
    if basis.use_delay_averages:
        if prev is None or delay_alpha is None:
            raise ValueError("delay-average regressors need the previous iterate and a delay measure")
        prev_x, prev_y, prev_z = prev
        for lat in (prev_x, prev_y, prev_z):
            if lat is not None:
                regressors.append(delay_average_all(lat, delay_alpha, time_index))

    columns = [np.ones(scenarios)]
    if regressors and basis.max_degree >= 1:
        for exps in _monomial_exponents(len(regressors), basis.max_degree):
            col = np.ones(scenarios)
            for r, e in zip(regressors, exps):
                if e:
                    col = col * r**e
            columns.append(col)
    return np.column_stack(columns)


def backward_step(
    time_index: int,
    y_next: np.ndarray,
    driver_values: np.ndarray,
    increment: np.ndarray,
    dt: float,
    design: Optional[np.ndarray],
) -> BackwardStep:
    """One backward regression step.

    Projects the control target y_next * dW_i / dt and the state target
    y_next + f_i * dt onto the basis at t_i.  ``design=None`` requests the
    plain scenario mean (the projection at the trivial time-zero field).
    Rank deficiencies are absorbed by a truncated-SVD least squares solve
    and flagged, never fatal.
    """
    z_target = y_next * increment / dt
    y_target = y_next + driver_values * dt
    if not (np.isfinite(y_target).all() and np.isfinite(z_target).all()):
        raise RegressionConditioningError(
            f"non-finite regression targets at time index {time_index}", time_index
        )
    if design is None:
        y_fit = float(np.mean(y_target))
        z_fit = float(np.mean(z_target))
        m = y_target.shape[0]
        return BackwardStep(
            y_values=np.full(m, y_fit),
            z_values=np.full(m, z_fit),
            y_coeffs=np.array([y_fit]),
            z_coeffs=np.array([z_fit]),
            rank_deficient=False,
        )
    if not np.isfinite(design).all():
        raise RegressionConditioningError(
            f"non-finite regression design at time index {time_index}", time_index
        )
    targets = np.column_stack([y_target, z_target])
    coeffs, _, rank, _ = np.linalg.lstsq(design, targets, rcond=_LSTSQ_RCOND)
    fits = design @ coeffs
    return BackwardStep(
        y_values=fits[:, 0],
        z_values=fits[:, 1],
        y_coeffs=coeffs[:, 0],
        z_coeffs=coeffs[:, 1],
        rank_deficient=rank < design.shape[1],
    )


@dataclass
class _SweepInfo:
    conditioning_indices: list[int]
    y0_stderr: float


def forward_sweep(
    prev_x: PathLattice,
    prev_y: PathLattice,
    prev_z: PathLattice,
    drift_eval,
    diffusion_eval,
    w: BrownianLattice,
    initial_x: float,
) -> PathLattice:
    """Explicit forward step per scenario, coefficients frozen at the
    previous iterate: x_{i+1} = x_i + b_i dt + s_i dW_i."""
    grid = w.grid
    dt = grid.dt
    values = np.empty((w.scenarios, grid.steps + 1))
    values[:, 0] = initial_x
    for i in range(grid.steps):
        b_i = drift_eval.evaluate_all(i, prev_x, prev_y, prev_z)
        s_i = diffusion_eval.evaluate_all(i, prev_x, prev_y, prev_z)
        values[:, i + 1] = values[:, i] + b_i * dt + s_i * w.increments[:, i]
    if not np.isfinite(values).all():
        raise SolverError("forward sweep produced non-finite values")
    return PathLattice(
        grid=grid, role=ProcessRole.STATE_FORWARD, values=values, frozen_initial=initial_x
    )


def backward_sweep(
    prev_x: Optional[PathLattice],
    prev_y: PathLattice,
    prev_z: PathLattice,
    driver_eval,
    xi: np.ndarray,
    w: BrownianLattice,
    basis: RegressionBasis,
    x_lattice: Optional[PathLattice] = None,
    delay_alpha: Optional[DelayMeasure] = None,
    w_values: Optional[np.ndarray] = None,
) -> tuple[PathLattice, PathLattice, _SweepInfo]:
    """Backward regression sweep from the terminal payoff.

    The terminal state column equals ``xi`` exactly; the driver is always
    evaluated on the previous iterate, so each step is a single projection
    rather than a fixed point.  The control at the final index repeats the
    last regressed value (no increment remains to project on).
    """
    grid = w.grid
    dt = grid.dt
    scenarios = w.scenarios
    if w_values is None:
        w_values = w.wiener_values()
    y = np.empty((scenarios, grid.steps + 1))
    z = np.empty((scenarios, grid.steps + 1))
    y[:, -1] = xi
    conditioning: list[int] = []
    # since every projection preserves the sample mean (intercept column),
    # the time-zero state equals the mean of xi + sum of driver terms; the
    # spread of that per-scenario sum is the honest standard error of y0
    telescoped = np.array(xi, dtype=np.float64)
    for i in range(grid.steps - 1, -1, -1):
        driver_values = driver_eval.evaluate_all(i, prev_x, prev_y, prev_z)
        telescoped = telescoped + driver_values * dt
        design = (
            regression_design(basis, i, w_values, x_lattice, (prev_x, prev_y, prev_z), delay_alpha)
            if i > 0
            else None
        )
        step = backward_step(i, y[:, i + 1], driver_values, w.increments[:, i], dt, design)
        y[:, i] = step.y_values
        z[:, i] = step.z_values
        if step.rank_deficient:
            conditioning.append(i)
    z[:, -1] = z[:, -2]
    y0_stderr = float(np.std(telescoped, ddof=1)) / math.sqrt(scenarios)
    if not (np.isfinite(y).all() and np.isfinite(z).all()):
        raise SolverError("backward sweep produced non-finite values")
    y_lat = PathLattice(
        grid=grid, role=ProcessRole.STATE_BACKWARD, values=y, frozen_initial=float(y[0, 0])
    )
    z_lat = PathLattice(grid=grid, role=ProcessRole.CONTROL, values=z)
    return y_lat, z_lat, _SweepInfo(sorted(set(conditioning)), y0_stderr)


def _validate_on_grid(spec: ProblemSpec, grid: TimeGrid) -> None:
    times = grid.times()
    for gen in spec.coefficients:
        gen.alpha.lag_steps(grid)  # raises on misaligned lags
        for t in times:
            v = gen.evaluate(float(t), 0.0, 0.0, 0.0)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"coefficient {gen.kind.value!r} is non-finite at t={t} and zero state")


def _ratio_noise(diffs: list[float], stderrs: list[float]) -> tuple[list[float], list[float]]:
    ratios: list[float] = []
    noise: list[float] = []
    for a, b, sa, sb in zip(diffs, diffs[1:], stderrs, stderrs[1:]):
        if a <= 0.0:
            break
        r = b / a
        if b > 0.0:
            noise.append(r * math.sqrt((sa / a) ** 2 + (sb / b) ** 2))
        else:
            noise.append(sb / a)
        ratios.append(r)
    return ratios, noise


def _run_picard(
    spec: ProblemSpec,
    cfg: SolverConfig,
    driver_eval,
    drift_eval,
    diffusion_eval,
) -> tuple[Optional[PathLattice], PathLattice, PathLattice, SolverDiagnostics, BrownianLattice]:
    grid = cfg.grid
    coupled = spec.mode is ProblemMode.FBSDDE
    _validate_on_grid(spec, grid)
    norm_cfg = cfg.norm_config()

    diagnostics = SolverDiagnostics(
        certificate=check_contraction(spec),
        transformed_certificate=transformed_certificate(spec),
    )
    if not diagnostics.certificate.satisfied:
        diagnostics.warnings.append(
            f"contraction condition not satisfied (rho={diagnostics.certificate.rho:.6g}); "
            "results are uncertified"
        )

    w = generate_brownian(cfg.seed, cfg.scenarios, grid, cfg.workers)
    w_values = w.wiener_values()
    m = cfg.scenarios

    x_prev = PathLattice.constant(grid, m, ProcessRole.STATE_FORWARD, 0.0)
    y_prev = PathLattice.constant(grid, m, ProcessRole.STATE_BACKWARD, 0.0)
    z_prev = PathLattice.constant(grid, m, ProcessRole.CONTROL, 0.0)

    stop = StopReason.MAX_ITERATIONS
    y0_stderr = math.nan
    try:
        for _ in range(cfg.max_picard):
            if coupled:
                x_lat = forward_sweep(
                    x_prev, y_prev, z_prev, drift_eval, diffusion_eval, w, spec.initial_x
                )
                xi = spec.terminal.apply(w_values[:, -1], x_lat.values[:, -1])
            else:
                x_lat = None
                xi = spec.terminal.apply(w_values[:, -1])

            y_lat, z_lat, info = backward_sweep(
                x_prev if coupled else None,
                y_prev,
                z_prev,
                driver_eval,
                xi,
                w,
                cfg.basis,
                x_lattice=x_lat,
                delay_alpha=spec.driver.alpha,
                w_values=w_values,
            )
            diagnostics.conditioning_indices = sorted(
                set(diagnostics.conditioning_indices) | set(info.conditioning_indices)
            )
            y0_stderr = info.y0_stderr

            d_vec = scenario_weighted_sup(
                y_lat.values - y_prev.values, grid, norm_cfg
            ) + scenario_weighted_quad(z_lat.values - z_prev.values, grid, norm_cfg)
            if coupled:
                d_vec = d_vec + scenario_weighted_sup(x_lat.values - x_prev.values, grid, norm_cfg)
            d_n = float(np.mean(d_vec))
            diagnostics.iteration_diffs.append(d_n)
            diagnostics.diff_stderrs.append(float(np.std(d_vec, ddof=1)) / math.sqrt(m))

            if coupled:
                x_prev = x_lat
            y_prev, z_prev = y_lat, z_lat
            if d_n < cfg.picard_tol:
                stop = StopReason.TOLERANCE
                break
    except (SolverError, RegressionConditioningError) as exc:
        diagnostics.stop_reason = StopReason.MAX_ITERATIONS
        raise SolverError(
            f"solve failed at iteration {diagnostics.iterations + 1}: {exc}", diagnostics
        ) from exc

    diagnostics.stop_reason = stop
    diagnostics.contraction_ratios, diagnostics.ratio_stderrs = _ratio_noise(
        diagnostics.iteration_diffs, diagnostics.diff_stderrs
    )
    diagnostics.y0_mean = float(y_prev.values[0, 0])
    diagnostics.y0_stderr = y0_stderr
    return (x_prev if coupled else None), y_prev, z_prev, diagnostics, w


def picard_solve(spec: ProblemSpec, cfg: SolverConfig) -> SolutionTriple:
    """Fixed-point solve of a homogeneous problem (no backward diffusion)."""
    if not spec.is_homogeneous:
        raise ValueError("picard_solve handles homogeneous problems; use solve_general")
    x, y, z, diagnostics, w = _run_picard(spec, cfg, spec.driver, spec.drift, spec.diffusion)
    solution = SolutionTriple(x=x, y=y, z=z, diagnostics=diagnostics)
    diagnostics.residual = residual_check(solution, spec, w, beta=cfg.norm_config().beta)
    return solution


def solve_general(spec: ProblemSpec, cfg: SolverConfig) -> SolutionTriple:
    """General solve: shift the control by the backward diffusion, solve the
    homogeneous problem, then map the solution back to the original one."""
    if spec.is_homogeneous:
        return picard_solve(spec, cfg)
    g = spec.backward_diffusion
    if spec.mode is ProblemMode.FBSDDE:
        drift_eval, diffusion_eval, driver_eval = make_transformed_coefficients(
            spec.drift, spec.diffusion, spec.driver, g
        )
    else:
        drift_eval = diffusion_eval = None
        driver_eval = make_homogeneous_driver(spec.driver, g)
    x, y_bar, z_bar, diagnostics, w = _run_picard(spec, cfg, driver_eval, drift_eval, diffusion_eval)
    y, z = map_back_solution(y_bar, z_bar, g, x)
    solution = SolutionTriple(x=x, y=y, z=z, diagnostics=diagnostics, transformed_control=z_bar)
    diagnostics.residual = residual_check(solution, spec, w, beta=cfg.norm_config().beta)
    return solution


def residual_check(
    solution: SolutionTriple,
    spec: ProblemSpec,
    w: BrownianLattice,
    beta: Optional[float] = None,
) -> ResidualReport:
    """Residuals of the discrete equations along the given solution.

    The backward residual at t_i compares y(t_i) against the terminal
    payoff plus the remaining driver sum minus the remaining stochastic
    sum (backward diffusion plus control times each increment); the
    forward residual compares x(t_i) against the accumulated explicit
    steps.  All coefficients are evaluated on the solution itself.
    """
    grid = w.grid
    n = grid.steps
    dt = grid.dt
    x, y, z = solution.x, solution.y, solution.z
    scenarios = y.scenarios
    cfg = WeightedNormConfig(beta if beta is not None else 1.0 / grid.horizon)
    w_values = w.wiener_values()

    f_mat = np.empty((scenarios, n))
    g_mat = np.zeros((scenarios, n))
    for j in range(n):
        f_mat[:, j] = spec.driver.evaluate_all(j, x, y, z)
        if spec.backward_diffusion is not None:
            g_mat[:, j] = spec.backward_diffusion.evaluate_all(j, x, y, None)

    xi = spec.terminal.apply(w_values[:, -1], x.values[:, -1] if x is not None else None)
    drift_sum = np.zeros((scenarios, n + 1))
    drift_sum[:, :n] = np.cumsum((f_mat * dt)[:, ::-1], axis=1)[:, ::-1]
    stoch_sum = np.zeros((scenarios, n + 1))
    stoch_sum[:, :n] = np.cumsum(((g_mat + z.values[:, :n]) * w.increments)[:, ::-1], axis=1)[:, ::-1]
    r_y = y.values - (xi[:, None] + drift_sum - stoch_sum)

    mean_sq_y = np.mean(np.square(r_y), axis=0)
    report = ResidualReport(
        y_max_mean_sq=float(np.max(mean_sq_y)),
        y_argmax_index=int(np.argmax(mean_sq_y)),
        y_weighted=float(np.mean(scenario_weighted_sup(r_y, grid, cfg))),
    )

    if spec.mode is ProblemMode.FBSDDE:
        b_mat = np.empty((scenarios, n))
        s_mat = np.empty((scenarios, n))
        for j in range(n):
            b_mat[:, j] = spec.drift.evaluate_all(j, x, y, z)
            s_mat[:, j] = spec.diffusion.evaluate_all(j, x, y, z)
        prefix = np.zeros((scenarios, n + 1))
        np.cumsum(b_mat * dt + s_mat * w.increments, axis=1, out=prefix[:, 1:])
        r_x = x.values - (spec.initial_x + prefix)
        mean_sq_x = np.mean(np.square(r_x), axis=0)
        report.x_max_mean_sq = float(np.max(mean_sq_x))
        report.x_argmax_index = int(np.argmax(mean_sq_x))
        report.x_weighted = float(np.mean(scenario_weighted_sup(r_x, grid, cfg)))
    return report
