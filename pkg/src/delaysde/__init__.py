"""Solvers for backward SDEs and coupled forward-backward SDEs whose
coefficients depend on the past through a delay measure."""

__version__ = "0.1.0"

from .brownian import BrownianLattice, generate_brownian
from .lattice import (
    DelayAlignmentError,
    DelayMeasure,
    PathLattice,
    ProcessRole,
    TimeGrid,
    TimeIndexError,
    WeightedNormConfig,
    delay_average,
    delay_average_all,
    weighted_h2_norm,
    weighted_s2_norm,
)
from .problems import (
    CoefficientKind,
    ContractionCertificate,
    GeneratorSpec,
    GridMismatchError,
    ProblemMode,
    ProblemSpec,
    TerminalRule,
    TransformedCoefficient,
    check_contraction,
    composed_lipschitz,
    make_homogeneous_driver,
    make_transformed_coefficients,
    map_back_solution,
    transformed_certificate,
)
from .solver import (
    RegressionBasis,
    ResidualReport,
    SolutionTriple,
    SolverConfig,
    SolverDiagnostics,
    SolverError,
    StopReason,
    backward_step,
    backward_sweep,
    forward_sweep,
    picard_solve,
    regression_design,
    residual_check,
    solve_general,
)
from .specfile import SpecFileError, parse_spec_file, parse_spec_text, serialize_spec
from .tree import DEFAULT_TREE_CAP, BinomialTree, TreeCapError, TreeSolution, tree_solve

__all__ = [
    "__version__",
    "BrownianLattice",
    "generate_brownian",
    "DelayAlignmentError",
    "DelayMeasure",
    "PathLattice",
    "ProcessRole",
    "TimeGrid",
    "TimeIndexError",
    "WeightedNormConfig",
    "delay_average",
    "delay_average_all",
    "weighted_h2_norm",
    "weighted_s2_norm",
    "CoefficientKind",
    "ContractionCertificate",
    "GeneratorSpec",
    "GridMismatchError",
    "ProblemMode",
    "ProblemSpec",
    "TerminalRule",
    "TransformedCoefficient",
    "check_contraction",
    "composed_lipschitz",
    "make_homogeneous_driver",
    "make_transformed_coefficients",
    "map_back_solution",
    "transformed_certificate",
    "RegressionBasis",
    "ResidualReport",
    "SolutionTriple",
    "SolverConfig",
    "SolverDiagnostics",
    "SolverError",
    "StopReason",
    "backward_step",
    "backward_sweep",
    "forward_sweep",
    "picard_solve",
    "regression_design",
    "residual_check",
    "solve_general",
    "SpecFileError",
    "parse_spec_file",
    "parse_spec_text",
    "serialize_spec",
    "DEFAULT_TREE_CAP",
    "BinomialTree",
    "TreeCapError",
    "TreeSolution",
    "tree_solve",
]
