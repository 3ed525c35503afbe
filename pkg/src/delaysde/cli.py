"""Command-line front end; a thin client of the solver service.

Commands post the spec text to the service (in process by default, or to
a remote instance via --server) and format the JSON responses into CSV
files with a reproducibility manifest header.  Exit codes: 0 success or
certified, 1 usage/parse error, 2 certification condition not satisfied.
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime, timezone
from pathlib import Path

import httpx

from . import __version__
from .manifest import RunManifest, spec_digest, write_csv

_USAGE_EXIT = 1
_NOT_SATISFIED_EXIT = 2


class _Parser(argparse.ArgumentParser):
    # usage errors must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(_USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _int_list(raw: str) -> list[int]:
    return [int(tok) for tok in raw.split(",") if tok.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="delaysde", description=__doc__)
    parser.add_argument("--version", action="version", version=f"delaysde {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_common(p):
        p.add_argument("spec_file", help="problem configuration file")
        p.add_argument("--out", default=".", help="output directory for CSV files")
        p.add_argument("--server", default=None, help="URL of a running service; default runs in process")
        p.add_argument("--timestamp", default=None, help="manifest timestamp override (for reproducible reruns)")

    def add_solver_flags(p):
        p.add_argument("--steps", type=int, default=64, help="time steps N")
        p.add_argument("--paths", type=int, default=10_000, help="Monte Carlo scenarios M")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--beta", type=float, default=None, help="norm weight exponent; default 1/T")
        p.add_argument("--max-picard", type=int, default=25)
        p.add_argument("--tol", type=float, default=1e-4)
        p.add_argument("--basis-degree", type=int, default=2)
        p.add_argument("--delay-regressors", action="store_true",
                       help="add delay-averaged regressors to the basis")
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("certify", help="evaluate the contraction certificate")
    add_common(p)

    p = sub.add_parser("solve", help="solve and write Y0/path/diagnostics CSVs")
    add_common(p)
    add_solver_flags(p)

    p = sub.add_parser("convergence-study", help="sweep steps/paths and tabulate against the oracle")
    add_common(p)
    add_solver_flags(p)
    p.add_argument("--steps-list", type=_int_list, required=True, help="comma list of N values")
    p.add_argument("--paths-list", type=_int_list, required=True, help="comma list of M values")
    p.add_argument("--no-oracle", action="store_true", help="skip the oracle column")
    p.add_argument("--oracle-cap", type=int, default=12)

    p = sub.add_parser("compare-oracle", help="cross-check the solver against the exact tree")
    add_common(p)
    add_solver_flags(p)
    p.add_argument("--oracle-cap", type=int, default=12)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    return parser


def _make_client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from starlette.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app())


def _read_spec(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"delaysde: cannot read spec file: {exc}", file=sys.stderr)
        raise SystemExit(_USAGE_EXIT)


def _options_payload(args) -> dict:
    payload = {
        "steps": args.steps,
        "paths": args.paths,
        "seed": args.seed,
        "max_picard": args.max_picard,
        "tol": args.tol,
        "basis_degree": args.basis_degree,
        "delay_regressors": args.delay_regressors,
        "workers": args.workers,
    }
    if args.beta is not None:
        payload["beta"] = args.beta
    return payload


def _solver_options_entries(args) -> list[tuple[str, str]]:
    # the worker count must not influence results, so it stays out of the manifest
    return [
        ("steps", str(args.steps)),
        ("paths", str(args.paths)),
        ("beta", "default" if args.beta is None else repr(args.beta)),
        ("max_picard", str(args.max_picard)),
        ("tol", repr(args.tol)),
        ("basis_degree", str(args.basis_degree)),
        ("delay_regressors", "true" if args.delay_regressors else "false"),
    ]


def _manifest(args, spec_text: str, options: list[tuple[str, str]]) -> RunManifest:
    timestamp = args.timestamp or datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return RunManifest(
        subcommand=args.command,
        spec_path=args.spec_file,
        spec_sha256=spec_digest(spec_text),
        out_dir=args.out,
        timestamp=timestamp,
        seed=getattr(args, "seed", 0),
        version=__version__,
        options=tuple(options),
    )


def _post(client, path: str, payload: dict, out_dir: Path | None = None, manifest=None):
    response = client.post(path, json=payload)
    if response.status_code == 200:
        return response.json()
    detail = {}
    try:
        detail = response.json().get("detail", {})
    except ValueError:
        pass
    if isinstance(detail, dict):
        message = detail.get("message", response.text)
        rows = detail.get("iterations") or []
    else:
        message = str(detail)
        rows = []
    print(f"delaysde: {message}", file=sys.stderr)
    if rows and out_dir is not None and manifest is not None:
        # surface whatever iterations completed before the failure
        _write_diagnostics(out_dir, manifest, rows, residual=None, stop_reason=None, warnings=[])
    raise SystemExit(_USAGE_EXIT)


def _write_diagnostics(out_dir: Path, manifest, iteration_rows, residual, stop_reason, warnings):
    columns = [
        "n", "d_n", "d_n_stderr", "ratio", "ratio_stderr", "stop_reason",
        "resid_y_weighted", "resid_y_max_mean_sq", "resid_y_argmax",
        "resid_x_weighted", "resid_x_max_mean_sq", "resid_x_argmax",
    ]
    rows = []
    last = len(iteration_rows) - 1
    for idx, it in enumerate(iteration_rows):
        row = [it["n"], it["diff"], it["diff_stderr"], it.get("ratio"), it.get("ratio_stderr")]
        if idx == last and residual is not None:
            row += [
                stop_reason,
                residual["y_weighted"], residual["y_max_mean_sq"], residual["y_argmax_index"],
                residual.get("x_weighted"), residual.get("x_max_mean_sq"), residual.get("x_argmax_index"),
            ]
        else:
            row += [None] * 7
        rows.append(row)
    write_csv(out_dir / "diagnostics.csv", manifest, columns, rows, warnings=warnings)


def cmd_certify(args) -> int:
    spec_text = _read_spec(args.spec_file)
    manifest = _manifest(args, spec_text, [])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _make_client(args.server) as client:
        body = _post(client, "/certify", {"spec_text": spec_text})
    cert = body["certificate"]
    rows = [["declared", cert["mode"], cert["k_effective"], cert["rho"], cert["satisfied"]]]
    if body.get("transformed"):
        t = body["transformed"]
        rows.append(["control_shifted", t["mode"], t["k_effective"], t["rho"], t["satisfied"]])
    write_csv(out_dir / "certificate.csv", manifest,
              ["variant", "mode", "k_effective", "rho", "satisfied"], rows)
    verdict = "SATISFIED" if cert["satisfied"] else "NOT SATISFIED"
    print(f"mode={cert['mode']} K_effective={cert['k_effective']!r} rho={cert['rho']!r} {verdict}")
    return 0 if cert["satisfied"] else _NOT_SATISFIED_EXIT


def cmd_solve(args) -> int:
    spec_text = _read_spec(args.spec_file)
    manifest = _manifest(args, spec_text, _solver_options_entries(args))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"spec_text": spec_text, "options": _options_payload(args)}
    with _make_client(args.server) as client:
        body = _post(client, "/solve", payload, out_dir=out_dir, manifest=manifest)

    write_csv(out_dir / "Y0.csv", manifest, ["y0_mean", "y0_stderr"],
              [[body["y0_mean"], body["y0_stderr"]]], warnings=body["warnings"])

    sample = body["sample"]
    times = sample["times"]
    path_rows = []
    for m, y_row in enumerate(sample["y"]):
        for i, t in enumerate(times):
            x_cell = sample["x"][m][i] if sample.get("x") is not None else None
            path_rows.append([m, i, t, x_cell, y_row[i], sample["z"][m][i]])
    write_csv(out_dir / "paths.csv", manifest,
              ["scenario", "time_index", "t", "x", "y", "z"], path_rows)

    _write_diagnostics(out_dir, manifest, body["iterations"], body["residual"],
                       body["stop_reason"], body["warnings"])
    for warning in body["warnings"]:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"y0_mean={body['y0_mean']!r} y0_stderr={body['y0_stderr']!r} "
          f"iterations={len(body['iterations'])} stop={body['stop_reason']}")
    return 0


def cmd_study(args) -> int:
    spec_text = _read_spec(args.spec_file)
    options = _solver_options_entries(args) + [
        ("steps_list", ",".join(str(v) for v in args.steps_list)),
        ("paths_list", ",".join(str(v) for v in args.paths_list)),
        ("oracle", "false" if args.no_oracle else "true"),
        ("oracle_cap", str(args.oracle_cap)),
    ]
    manifest = _manifest(args, spec_text, options)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "spec_text": spec_text,
        "steps_list": args.steps_list,
        "paths_list": args.paths_list,
        "options": _options_payload(args),
        "oracle": not args.no_oracle,
        "oracle_cap": args.oracle_cap,
    }
    with _make_client(args.server) as client:
        body = _post(client, "/study", payload)
    rows = []
    for row in body["rows"]:
        if row.get("warning"):
            print(f"warning: {row['warning']}", file=sys.stderr)
        rows.append([
            row["steps"], row["paths"], row["y0_mean"], row["y0_stderr"],
            row.get("oracle_y0"), row.get("gap"), row["picard_iterations"],
            row.get("final_ratio"), row.get("warning"),
        ])
    write_csv(out_dir / "study.csv", manifest,
              ["steps", "paths", "y0_mean", "y0_stderr", "oracle_y0", "abs_gap",
               "picard_iterations", "final_ratio", "warning"], rows)
    print(f"wrote {len(rows)} study rows to {out_dir / 'study.csv'}")
    return 0


def cmd_compare(args) -> int:
    spec_text = _read_spec(args.spec_file)
    options = _solver_options_entries(args) + [("oracle_cap", str(args.oracle_cap))]
    manifest = _manifest(args, spec_text, options)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "spec_text": spec_text,
        "steps": args.steps,
        "paths": args.paths,
        "options": _options_payload(args),
        "oracle_cap": args.oracle_cap,
    }
    with _make_client(args.server) as client:
        body = _post(client, "/compare", payload)

    n_rows = max(len(body["mc_diffs"]), len(body["tree_diffs"]))
    rows = []
    for i in range(n_rows):
        rows.append([
            i + 1,
            body["mc_diffs"][i] if i < len(body["mc_diffs"]) else None,
            body["mc_ratios"][i - 1] if 1 <= i <= len(body["mc_ratios"]) else None,
            body["tree_diffs"][i] if i < len(body["tree_diffs"]) else None,
            body["tree_ratios"][i - 1] if 1 <= i <= len(body["tree_ratios"]) else None,
        ])
    summary = [
        f"y0_mc: {body['y0_mc']!r}",
        f"y0_tree: {body['y0_tree']!r}",
        f"gap: {body['gap']!r}",
        f"y0_stderr: {body['y0_stderr']!r}",
        f"gap_over_stderr: {'' if body.get('gap_over_stderr') is None else repr(body['gap_over_stderr'])}",
    ]
    write_csv(out_dir / "comparison.csv", manifest,
              ["n", "d_n_mc", "ratio_mc", "d_n_tree", "ratio_tree"], rows,
              comments=summary)
    print(f"y0_mc={body['y0_mc']!r} y0_tree={body['y0_tree']!r} gap={body['gap']!r} "
          f"stderr={body['y0_stderr']!r}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def main(argv=None) -> int:
    handlers = {
        "certify": cmd_certify,
        "solve": cmd_solve,
        "convergence-study": cmd_study,
        "compare-oracle": cmd_compare,
        "serve": cmd_serve,
    }
    try:
        args = build_parser().parse_args(argv)
        return handlers[args.command](args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else _USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
