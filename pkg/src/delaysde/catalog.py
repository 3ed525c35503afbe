"""Named pointwise functions available in problem configuration files.

Coefficients are pointwise maps of (t, x_avg, y_avg, z_avg); the backward
diffusion takes (t, x_avg, y_avg).  Terminal rules map the terminal
scenario state (final Brownian value, and final forward value when one
exists) to the terminal payoff.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "CatalogError",
    "COEFFICIENT_NAMES",
    "TERMINAL_NAMES",
    "TERMINAL_NEEDS_FORWARD",
    "build_coefficient_fn",
    "build_terminal_fn",
    "coefficient_arity",
    "terminal_arity",
]


class CatalogError(ValueError):
    """Unknown catalog name or wrong parameter count."""


COEFFICIENT_NAMES = ("zero", "const", "linear", "affine", "scaled_identity", "clipped_linear")
TERMINAL_NAMES = ("const", "w_terminal", "x_terminal", "call_on_w", "call_on_x")

# terminal rules that read the forward state and hence need a forward equation
TERMINAL_NEEDS_FORWARD = frozenset({"x_terminal", "call_on_x"})

# kind codes: "b" drift, "sigma" forward diffusion, "f" driver, "g" backward diffusion
_FORWARD_KINDS = ("b", "sigma")


def coefficient_arity(name: str, kind: str) -> int:
    """Parameter count for a coefficient of the given kind.

    The backward diffusion ("g") has no control argument, so its linear
    forms carry one coefficient less.
    """
    n_lin = 2 if kind == "g" else 3
    table = {
        "zero": 0,
        "const": 1,
        "linear": n_lin,
        "affine": n_lin + 1,
        "scaled_identity": 1,
        "clipped_linear": n_lin + 1,
    }
    if name not in table:
        raise CatalogError(f"unknown coefficient function {name!r}; choose from {COEFFICIENT_NAMES}")
    return table[name]


def terminal_arity(name: str) -> int:
    table = {"const": 1, "w_terminal": 2, "x_terminal": 2, "call_on_w": 1, "call_on_x": 1}
    if name not in table:
        raise CatalogError(f"unknown terminal rule {name!r}; choose from {TERMINAL_NAMES}")
    return table[name]


def build_coefficient_fn(name: str, params: tuple[float, ...], kind: str):
    """Build the pointwise callable for a catalog coefficient.

    Returns a function of (t, x, y, z) for kinds "b", "sigma", "f" and of
    (t, x, y) for kind "g".  All callables broadcast over numpy arrays in
    the averaged arguments.
    """
    expected = coefficient_arity(name, kind)
    if len(params) != expected:
        raise CatalogError(f"coefficient {name!r} needs {expected} parameters, got {len(params)}")
    p = tuple(float(v) for v in params)
    takes_control = kind != "g"

    if name == "zero":
        if takes_control:
            def fn(t, x, y, z):
                return 0.0
        else:
            def fn(t, x, y):
                return 0.0
    elif name == "const":
        (c,) = p
        if takes_control:
            def fn(t, x, y, z):
                return c
        else:
            def fn(t, x, y):
                return c
    elif name == "linear":
        if takes_control:
            cx, cy, cz = p
            def fn(t, x, y, z):
                return cx * x + cy * y + cz * z
        else:
            cx, cy = p
            def fn(t, x, y):
                return cx * x + cy * y
    elif name == "affine":
        if takes_control:
            c0, cx, cy, cz = p
            def fn(t, x, y, z):
                return c0 + cx * x + cy * y + cz * z
        else:
            c0, cx, cy = p
            def fn(t, x, y):
                return c0 + cx * x + cy * y
    elif name == "scaled_identity":
        # identity on the forward state for drift/forward-diffusion kinds,
        # on the backward state otherwise
        (c,) = p
        if kind in _FORWARD_KINDS:
            def fn(t, x, y, z):
                return c * x
        elif takes_control:
            def fn(t, x, y, z):
                return c * y
        else:
            def fn(t, x, y):
                return c * y
    else:  # clipped_linear
        bound = p[0]
        if bound <= 0.0:
            raise CatalogError("clipped_linear bound must be > 0")
        if takes_control:
            cx, cy, cz = p[1:]
            def fn(t, x, y, z):
                return np.clip(cx * x + cy * y + cz * z, -bound, bound)
        else:
            cx, cy = p[1:]
            def fn(t, x, y):
                return np.clip(cx * x + cy * y, -bound, bound)
    return fn


def build_terminal_fn(name: str, params: tuple[float, ...]):
    """Build a terminal payoff callable of (w_terminal, x_terminal)."""
    expected = terminal_arity(name)
    if len(params) != expected:
        raise CatalogError(f"terminal rule {name!r} needs {expected} parameters, got {len(params)}")
    p = tuple(float(v) for v in params)

    if name == "const":
        (c,) = p
        def fn(w, x=None):
            return c
    elif name == "w_terminal":
        c0, c1 = p
        def fn(w, x=None):
            return c0 + c1 * w
    elif name == "x_terminal":
        c0, c1 = p
        def fn(w, x=None):
            return c0 + c1 * x
    elif name == "call_on_w":
        (strike,) = p
        def fn(w, x=None):
            return np.maximum(w - strike, 0.0)
    else:  # call_on_x
        (strike,) = p
        def fn(w, x=None):
            return np.maximum(x - strike, 0.0)
    return fn
