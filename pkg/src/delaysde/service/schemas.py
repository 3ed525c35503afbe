"""Request and response models of the solver service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field


class SolveOptions(BaseModel):
    """Solver controls; defaults match the CLI flag defaults."""

    model_config = ConfigDict(extra="forbid")

    steps: int = Field(64, ge=1, le=100_000)
    paths: int = Field(10_000, ge=2, le=5_000_000)
    seed: int = 0
    beta: Optional[float] = Field(None, ge=0.0)
    max_picard: int = Field(25, ge=1, le=10_000)
    tol: float = Field(1e-4, gt=0.0)
    basis_degree: int = Field(2, ge=0, le=8)
    delay_regressors: bool = False
    workers: int = Field(1, ge=1, le=64)


class CertifyRequest(BaseModel):
    spec_text: str


class CertificateOut(BaseModel):
    mode: str
    k_effective: float
    rho: float
    satisfied: bool


class CertifyResponse(BaseModel):
    certificate: CertificateOut
    transformed: Optional[CertificateOut] = None


class SolveRequest(BaseModel):
    spec_text: str
    options: SolveOptions = SolveOptions()


class IterationOut(BaseModel):
    n: int
    diff: float
    diff_stderr: float
    ratio: Optional[float] = None
    ratio_stderr: Optional[float] = None


class ResidualOut(BaseModel):
    y_max_mean_sq: float
    y_argmax_index: int
    y_weighted: float
    x_max_mean_sq: Optional[float] = None
    x_argmax_index: Optional[int] = None
    x_weighted: Optional[float] = None


class SampleOut(BaseModel):
    """First few scenarios of each process on the full grid."""

    times: list[float]
    x: Optional[list[list[float]]] = None
    y: list[list[float]]
    z: list[list[float]]


class SolveResponse(BaseModel):
    y0_mean: float
    y0_stderr: float
    stop_reason: str
    iterations: list[IterationOut]
    residual: ResidualOut
    certificate: CertificateOut
    transformed_certificate: Optional[CertificateOut] = None
    warnings: list[str]
    conditioning_indices: list[int]
    sample: SampleOut


class StudyRequest(BaseModel):
    spec_text: str
    steps_list: list[int] = Field(min_length=1)
    paths_list: list[int] = Field(min_length=1)
    options: SolveOptions = SolveOptions()
    oracle: bool = True
    oracle_cap: int = Field(12, ge=1, le=20)


class StudyRow(BaseModel):
    steps: int
    paths: int
    y0_mean: float
    y0_stderr: float
    oracle_y0: Optional[float] = None
    gap: Optional[float] = None
    picard_iterations: int
    final_ratio: Optional[float] = None
    warning: Optional[str] = None


class StudyResponse(BaseModel):
    rows: list[StudyRow]


class CompareRequest(BaseModel):
    spec_text: str
    steps: int = Field(8, ge=1, le=20)
    paths: int = Field(10_000, ge=2, le=5_000_000)
    options: SolveOptions = SolveOptions()
    oracle_cap: int = Field(12, ge=1, le=20)
    tree_max_picard: int = Field(50, ge=1, le=10_000)
    tree_tol: float = Field(1e-12, gt=0.0)


class CompareResponse(BaseModel):
    y0_mc: float
    y0_tree: float
    gap: float
    y0_stderr: float
    gap_over_stderr: Optional[float] = None
    mc_iterations: int
    tree_iterations: int
    mc_diffs: list[float]
    mc_ratios: list[float]
    tree_diffs: list[float]
    tree_ratios: list[float]
