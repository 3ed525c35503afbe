"""FastAPI service wrapping the solver library."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..lattice import DelayAlignmentError, TimeGrid
from ..problems import ContractionCertificate, ProblemSpec, check_contraction, transformed_certificate
from ..solver import (
    RegressionBasis,
    SolutionTriple,
    SolverConfig,
    SolverDiagnostics,
    SolverError,
    solve_general,
)
from ..specfile import SpecFileError, parse_spec_text
from ..tree import BinomialTree, TreeCapError, tree_solve
from .schemas import (
    CertificateOut,
    CertifyRequest,
    CertifyResponse,
    CompareRequest,
    CompareResponse,
    IterationOut,
    ResidualOut,
    SampleOut,
    SolveOptions,
    SolveRequest,
    SolveResponse,
    StudyRequest,
    StudyResponse,
    StudyRow,
)

_SAMPLE_SCENARIOS = 10


def _parse_spec(text: str) -> ProblemSpec:
    try:
        return parse_spec_text(text)
    except SpecFileError as exc:
        raise HTTPException(status_code=422, detail={"message": str(exc), "line": exc.line})


def _config(options: SolveOptions, steps: int | None = None, paths: int | None = None, horizon: float = 1.0) -> SolverConfig:
    basis = RegressionBasis(
        max_degree=options.basis_degree,
        use_delay_averages=options.delay_regressors,
    )
    try:
        return SolverConfig(
            grid=TimeGrid(horizon=horizon, steps=steps if steps is not None else options.steps),
            scenarios=paths if paths is not None else options.paths,
            seed=options.seed,
            basis=basis,
            beta=options.beta,
            max_picard=options.max_picard,
            picard_tol=options.tol,
            workers=options.workers,
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail={"message": str(exc)})


def _certificate_out(cert: ContractionCertificate) -> CertificateOut:
    return CertificateOut(
        mode=cert.mode.value,
        k_effective=cert.k_effective,
        rho=cert.rho,
        satisfied=cert.satisfied,
    )


def _iteration_rows(diag: SolverDiagnostics) -> list[IterationOut]:
    rows = []
    for idx, (diff, se) in enumerate(zip(diag.iteration_diffs, diag.diff_stderrs)):
        ratio = diag.contraction_ratios[idx - 1] if 1 <= idx <= len(diag.contraction_ratios) else None
        ratio_se = diag.ratio_stderrs[idx - 1] if 1 <= idx <= len(diag.ratio_stderrs) else None
        rows.append(IterationOut(n=idx + 1, diff=diff, diff_stderr=se, ratio=ratio, ratio_stderr=ratio_se))
    return rows


def _run_solve(spec: ProblemSpec, cfg: SolverConfig) -> SolutionTriple:
    try:
        return solve_general(spec, cfg)
    except SolverError as exc:
        detail = {"message": str(exc), "iterations": []}
        if exc.diagnostics is not None:
            detail["iterations"] = [row.model_dump() for row in _iteration_rows(exc.diagnostics)]
        raise HTTPException(status_code=422, detail=detail)
    except (DelayAlignmentError, ValueError) as exc:
        raise HTTPException(status_code=422, detail={"message": str(exc)})


def _solve_response(solution: SolutionTriple) -> SolveResponse:
    diag = solution.diagnostics
    res = diag.residual
    sample_n = min(_SAMPLE_SCENARIOS, solution.y.scenarios)
    grid = solution.y.grid
    return SolveResponse(
        y0_mean=diag.y0_mean,
        y0_stderr=diag.y0_stderr,
        stop_reason=diag.stop_reason.value,
        iterations=_iteration_rows(diag),
        residual=ResidualOut(
            y_max_mean_sq=res.y_max_mean_sq,
            y_argmax_index=res.y_argmax_index,
            y_weighted=res.y_weighted,
            x_max_mean_sq=res.x_max_mean_sq,
            x_argmax_index=res.x_argmax_index,
            x_weighted=res.x_weighted,
        ),
        certificate=_certificate_out(diag.certificate),
        transformed_certificate=(
            _certificate_out(diag.transformed_certificate) if diag.transformed_certificate else None
        ),
        warnings=list(diag.warnings),
        conditioning_indices=list(diag.conditioning_indices),
        sample=SampleOut(
            times=[float(t) for t in grid.times()],
            x=solution.x.values[:sample_n].tolist() if solution.x is not None else None,
            y=solution.y.values[:sample_n].tolist(),
            z=solution.z.values[:sample_n].tolist(),
        ),
    )


def create_app() -> FastAPI:
    app = FastAPI(title="delaysde", version=__version__)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/certify", response_model=CertifyResponse)
    def certify(request: CertifyRequest) -> CertifyResponse:
        spec = _parse_spec(request.spec_text)
        transformed = transformed_certificate(spec)
        return CertifyResponse(
            certificate=_certificate_out(check_contraction(spec)),
            transformed=_certificate_out(transformed) if transformed else None,
        )

    @app.post("/solve", response_model=SolveResponse)
    def solve(request: SolveRequest) -> SolveResponse:
        spec = _parse_spec(request.spec_text)
        cfg = _config(request.options, horizon=spec.horizon)
        return _solve_response(_run_solve(spec, cfg))

    @app.post("/study", response_model=StudyResponse)
    def study(request: StudyRequest) -> StudyResponse:
        spec = _parse_spec(request.spec_text)
        rows = []
        for steps in request.steps_list:
            for paths in request.paths_list:
                cfg = _config(request.options, steps=steps, paths=paths, horizon=spec.horizon)
                solution = _run_solve(spec, cfg)
                diag = solution.diagnostics
                oracle_y0 = None
                gap = None
                warning = None
                if request.oracle:
                    if steps <= request.oracle_cap:
                        tree_sol = _run_tree(spec, steps, request.oracle_cap)
                        oracle_y0 = tree_sol.y0
                        gap = abs(diag.y0_mean - oracle_y0)
                    else:
                        warning = (
                            f"oracle requested at steps={steps} above cap {request.oracle_cap}; "
                            "oracle column left empty"
                        )
                rows.append(
                    StudyRow(
                        steps=steps,
                        paths=paths,
                        y0_mean=diag.y0_mean,
                        y0_stderr=diag.y0_stderr,
                        oracle_y0=oracle_y0,
                        gap=gap,
                        picard_iterations=diag.iterations,
                        final_ratio=diag.contraction_ratios[-1] if diag.contraction_ratios else None,
                        warning=warning,
                    )
                )
        return StudyResponse(rows=rows)

    @app.post("/compare", response_model=CompareResponse)
    def compare(request: CompareRequest) -> CompareResponse:
        spec = _parse_spec(request.spec_text)
        cfg = _config(request.options, steps=request.steps, paths=request.paths, horizon=spec.horizon)
        solution = _run_solve(spec, cfg)
        diag = solution.diagnostics
        tree_sol = _run_tree(
            spec, request.steps, request.oracle_cap, request.tree_max_picard, request.tree_tol
        )
        gap = abs(diag.y0_mean - tree_sol.y0)
        return CompareResponse(
            y0_mc=diag.y0_mean,
            y0_tree=tree_sol.y0,
            gap=gap,
            y0_stderr=diag.y0_stderr,
            gap_over_stderr=gap / diag.y0_stderr if diag.y0_stderr > 0 else None,
            mc_iterations=diag.iterations,
            tree_iterations=tree_sol.iterations,
            mc_diffs=list(diag.iteration_diffs),
            mc_ratios=list(diag.contraction_ratios),
            tree_diffs=list(tree_sol.combined_diffs),
            tree_ratios=list(tree_sol.contraction_ratios),
        )

    return app


def _run_tree(spec: ProblemSpec, steps: int, cap: int, max_picard: int = 50, tol: float = 1e-12):
    try:
        tree = BinomialTree(grid=TimeGrid(horizon=spec.horizon, steps=steps), cap=cap)
        return tree_solve(spec, tree, max_picard=max_picard, tol=tol)
    except (TreeCapError, DelayAlignmentError, ValueError) as exc:
        raise HTTPException(status_code=422, detail={"message": str(exc)})


app = create_app()
