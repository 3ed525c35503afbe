"""Parsing and serialization of problem configuration files.

The format is flat INI: a [problem] section with mode, horizon, terminal
rule (and the forward initial point in coupled mode), plus one section per
coefficient ([f], [g], [b], [sigma]) holding a catalog function name,
numeric parameters, the delay measure as paired lag/weight lists, and the
declared Lipschitz constant.
"""

from __future__ import annotations

import configparser
import re
from typing import Optional

from .catalog import CatalogError
from .lattice import DelayMeasure
from .problems import (
    CoefficientKind,
    GeneratorSpec,
    ProblemMode,
    ProblemSpec,
    TerminalRule,
)

__all__ = ["SpecFileError", "parse_spec_text", "parse_spec_file", "serialize_spec"]

_COEFF_SECTIONS = {
    "f": CoefficientKind.DRIVER,
    "g": CoefficientKind.BACKWARD_DIFFUSION,
    "b": CoefficientKind.DRIFT,
    "sigma": CoefficientKind.DIFFUSION,
}
_COEFF_KEYS = {"fn", "params", "alpha_lags", "alpha_weights", "lipschitz_K"}
_PROBLEM_KEYS = {"mode", "T", "x", "xi"}


class SpecFileError(ValueError):
    """Malformed problem configuration; carries the offending line when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


def _line_of(text: str, section: str, key: Optional[str] = None) -> Optional[int]:
    in_section = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if in_section and key is not None:
                return None
            in_section = name == section
            if in_section and key is None:
                return lineno
        elif in_section and key is not None:
            if re.match(rf"\s*{re.escape(key)}\s*[=:]", raw):
                return lineno
    return None


def _parse_floats(raw: str, text: str, section: str, key: str) -> tuple[float, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    out = []
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            out.append(float(token))
        except ValueError:
            raise SpecFileError(
                f"section [{section}]: key {key} has non-numeric entry {token!r}",
                _line_of(text, section, key),
            ) from None
    return tuple(out)


def _required(parser, text: str, section: str, key: str) -> str:
    if not parser.has_option(section, key):
        raise SpecFileError(
            f"section [{section}]: missing required key {key}",
            _line_of(text, section),
        )
    return parser.get(section, key)


def _parse_coefficient(parser, text: str, section: str, kind: CoefficientKind) -> GeneratorSpec:
    for key in parser.options(section):
        if key not in _COEFF_KEYS:
            raise SpecFileError(
                f"section [{section}]: unknown key {key}",
                _line_of(text, section, key),
            )
    fn_name = _required(parser, text, section, "fn").strip()
    params = _parse_floats(parser.get(section, "params", fallback=""), text, section, "params")

    has_lags = parser.has_option(section, "alpha_lags")
    has_weights = parser.has_option(section, "alpha_weights")
    if has_lags != has_weights:
        raise SpecFileError(
            f"section [{section}]: alpha_lags and alpha_weights must be given together",
            _line_of(text, section),
        )
    if has_lags:
        lags = _parse_floats(parser.get(section, "alpha_lags"), text, section, "alpha_lags")
        weights = _parse_floats(parser.get(section, "alpha_weights"), text, section, "alpha_weights")
        if len(lags) != len(weights):
            raise SpecFileError(
                f"section [{section}]: alpha_lags and alpha_weights have different lengths",
                _line_of(text, section, "alpha_lags"),
            )
        try:
            alpha = DelayMeasure(tuple(zip(lags, weights)))
        except ValueError as exc:
            raise SpecFileError(
                f"section [{section}]: invalid delay measure: {exc}",
                _line_of(text, section, "alpha_lags"),
            ) from None
    else:
        alpha = DelayMeasure.point_mass()

    raw_k = _required(parser, text, section, "lipschitz_K").strip()
    try:
        lipschitz_k = float(raw_k)
    except ValueError:
        raise SpecFileError(
            f"section [{section}]: lipschitz_K must be a real number, got {raw_k!r}",
            _line_of(text, section, "lipschitz_K"),
        ) from None

    try:
        return GeneratorSpec.from_catalog(kind, fn_name, params, alpha, lipschitz_k)
    except (CatalogError, ValueError) as exc:
        raise SpecFileError(
            f"section [{section}]: {exc}", _line_of(text, section)
        ) from None


def parse_spec_text(text: str) -> ProblemSpec:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise SpecFileError(f"cannot parse configuration: {exc.message}", line) from None

    for section in parser.sections():
        if section != "problem" and section not in _COEFF_SECTIONS:
            raise SpecFileError(f"unknown section [{section}]", _line_of(text, section))
    if not parser.has_section("problem"):
        raise SpecFileError("missing [problem] section")
    for key in parser.options("problem"):
        if key not in _PROBLEM_KEYS:
            raise SpecFileError(
                f"section [problem]: unknown key {key}", _line_of(text, "problem", key)
            )

    raw_mode = _required(parser, text, "problem", "mode").strip().lower()
    try:
        mode = ProblemMode(raw_mode)
    except ValueError:
        raise SpecFileError(
            f"section [problem]: mode must be 'bsde' or 'fbsdde', got {raw_mode!r}",
            _line_of(text, "problem", "mode"),
        ) from None

    raw_t = _required(parser, text, "problem", "T").strip()
    try:
        horizon = float(raw_t)
    except ValueError:
        raise SpecFileError(
            f"section [problem]: T must be a real number, got {raw_t!r}",
            _line_of(text, "problem", "T"),
        ) from None

    raw_xi = _required(parser, text, "problem", "xi").strip()
    tokens = [tok for tok in re.split(r"[,\s]+", raw_xi) if tok]
    if not tokens:
        raise SpecFileError(
            "section [problem]: xi needs a terminal rule name",
            _line_of(text, "problem", "xi"),
        )
    xi_name, *xi_raw_params = tokens
    try:
        xi_params = tuple(float(tok) for tok in xi_raw_params)
    except ValueError:
        raise SpecFileError(
            f"section [problem]: xi has non-numeric parameters in {raw_xi!r}",
            _line_of(text, "problem", "xi"),
        ) from None
    try:
        terminal = TerminalRule.from_catalog(xi_name, xi_params)
    except CatalogError as exc:
        raise SpecFileError(
            f"section [problem]: {exc}", _line_of(text, "problem", "xi")
        ) from None

    initial_x = None
    if parser.has_option("problem", "x"):
        raw_x = parser.get("problem", "x").strip()
        try:
            initial_x = float(raw_x)
        except ValueError:
            raise SpecFileError(
                f"section [problem]: x must be a real number, got {raw_x!r}",
                _line_of(text, "problem", "x"),
            ) from None

    if not parser.has_section("f"):
        raise SpecFileError("missing [f] section (the driver is required)")
    driver = _parse_coefficient(parser, text, "f", CoefficientKind.DRIVER)
    backward_diffusion = (
        _parse_coefficient(parser, text, "g", CoefficientKind.BACKWARD_DIFFUSION)
        if parser.has_section("g")
        else None
    )

    if mode is ProblemMode.FBSDDE:
        for section in ("b", "sigma"):
            if not parser.has_section(section):
                raise SpecFileError(f"missing [{section}] section (required in fbsdde mode)")
        if initial_x is None:
            raise SpecFileError(
                "section [problem]: missing required key x (required in fbsdde mode)",
                _line_of(text, "problem"),
            )
        drift = _parse_coefficient(parser, text, "b", CoefficientKind.DRIFT)
        diffusion = _parse_coefficient(parser, text, "sigma", CoefficientKind.DIFFUSION)
    else:
        for section in ("b", "sigma"):
            if parser.has_section(section):
                raise SpecFileError(
                    f"section [{section}] is only valid in fbsdde mode",
                    _line_of(text, section),
                )
        if initial_x is not None:
            raise SpecFileError(
                "section [problem]: key x is only valid in fbsdde mode",
                _line_of(text, "problem", "x"),
            )
        drift = diffusion = None

    try:
        return ProblemSpec(
            mode=mode,
            horizon=horizon,
            terminal=terminal,
            driver=driver,
            backward_diffusion=backward_diffusion,
            drift=drift,
            diffusion=diffusion,
            initial_x=initial_x,
        )
    except ValueError as exc:
        raise SpecFileError(str(exc)) from None


def parse_spec_file(path) -> ProblemSpec:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_spec_text(handle.read())


def _coefficient_lines(section: str, gen: GeneratorSpec) -> list[str]:
    if gen.fn_name is None:
        raise ValueError(
            f"coefficient [{section}] was built from an ad-hoc callable and cannot be serialized"
        )
    lines = [f"[{section}]", f"fn = {gen.fn_name}"]
    if gen.params:
        lines.append("params = " + ", ".join(repr(v) for v in gen.params))
    lines.append("alpha_lags = " + ", ".join(repr(u) for u, _ in gen.alpha.atoms))
    lines.append("alpha_weights = " + ", ".join(repr(w) for _, w in gen.alpha.atoms))
    lines.append(f"lipschitz_K = {gen.lipschitz_k!r}")
    lines.append("")
    return lines


def serialize_spec(spec: ProblemSpec) -> str:
    """Canonical text form; parse(serialize(spec)) equals spec."""
    xi = " ".join([spec.terminal.fn_name] + [repr(v) for v in spec.terminal.params])
    lines = ["[problem]", f"mode = {spec.mode.value}", f"T = {spec.horizon!r}"]
    if spec.initial_x is not None:
        lines.append(f"x = {spec.initial_x!r}")
    lines.append(f"xi = {xi}")
    lines.append("")
    lines += _coefficient_lines("f", spec.driver)
    if spec.backward_diffusion is not None:
        lines += _coefficient_lines("g", spec.backward_diffusion)
    if spec.drift is not None:
        lines += _coefficient_lines("b", spec.drift)
    if spec.diffusion is not None:
        lines += _coefficient_lines("sigma", spec.diffusion)
    return "\n".join(lines)
