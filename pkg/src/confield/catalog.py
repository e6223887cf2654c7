"""Built-in example fields exercising every branch of the classification."""

from __future__ import annotations

import numpy as np

from .flatfield import ConformalFieldParams
from .forms import MetricForm


def _params(gram, w, s, c, u) -> ConformalFieldParams:
    return ConformalFieldParams(MetricForm(np.asarray(gram)), np.asarray(w),
                                np.asarray(s), c, np.asarray(u))


def _skew(n: int, pairs) -> np.ndarray:
    s = np.zeros((n, n), dtype=int)
    for i, j, val in pairs:
        s[i, j] = val
        s[j, i] = -val
    return s


def dilation() -> ConformalFieldParams:
    """v = x.  One zero at the origin, phi = 2 everywhere, essential."""
    g = np.diag([-1, 1, 1])
    return _params(g, [0, 0, 0], np.zeros((3, 3), dtype=int), 1, [0, 0, 0])


def killing_block() -> ConformalFieldParams:
    """Linear rotation in the (e2, e3) plane; zero set = the e1 axis."""
    g = np.diag([-1, 1, 1])
    return _params(g, [0, 0, 0], _skew(3, [(1, 2, 1)]), 0, [0, 0, 0])


def case_b_cone_22() -> ConformalFieldParams:
    """Signature (2,2) essential zero with H = u-perp carrying an indefinite
    restriction: the zero set is the null cone of that restriction, singular
    exactly at the origin."""
    g = np.diag([-1, -1, 1, 1])
    return _params(g, [0, 0, 0, 0], np.zeros((4, 4), dtype=int), 0, [1, 0, 0, 0])


def case_b_null_h_31() -> ConformalFieldParams:
    """Lorentzian (3,1) essential zero whose model space is the null line
    spanned by e1 + e2; the zero set is exactly that line (odd codimension,
    null, totally geodesic)."""
    g = np.diag([-1, 1, 1, 1])
    return _params(g, [0, 0, 0, 0], _skew(4, [(2, 3, 1)]), 0, [1, 1, 0, 0])


def odd_codim_null() -> ConformalFieldParams:
    """Signature (2,2) variant with a boost generator: the zero set is the
    null line spanned by e1 + e3, of odd codimension 3."""
    g = np.diag([-1, -1, 1, 1])
    return _params(g, [0, 0, 0, 0], _skew(4, [(1, 3, 1)]), 0, [1, 0, 1, 0])


SURFACE_2D_ROOTS = ((-1.0, 0.0, 1.0), (0.0, 2.0))

FIELD_BUILDERS = {
    "dilation": dilation,
    "killing-block": killing_block,
    "case-b-cone-22": case_b_cone_22,
    "case-b-null-H-31": case_b_null_h_31,
    "odd-codim-null": odd_codim_null,
}

DEMO_NAMES = tuple(list(FIELD_BUILDERS) + ["surface-2d"])


def get_field(name: str) -> ConformalFieldParams:
    try:
        return FIELD_BUILDERS[name]()
    except KeyError:
        raise KeyError(f"unknown example {name!r}; available: {', '.join(DEMO_NAMES)}")
