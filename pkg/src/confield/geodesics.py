"""Propagation of (v, nabla_xdot v, phi, phidot) along straight lines.

Flat-space geodesics are lines x(t) = x0 + t xdot with constant xdot.  The
transported quantities obey a closed linear ODE system (no curvature, no
Schouten tensor):

    v' = nabla_xdot v
    (nabla_xdot v)' = phidot xdot - <xdot,xdot> grad(phi) / 2
    phi' = phidot,   phidot' = 0

The integrator exists as an independent route to values that can also be
obtained by direct evaluation; agreement of the two routes is the point.
The module also certifies the null-geodesic lemmas: vanishing along null
directions frozen by the field, the proportionality nabla_xdot v =
[lambda + phi - phi(y)] xdot for tangent fields, constancy of the
characteristic polynomial of nabla v, and the interior vanishing of phi on
segments joining two zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flatfield
from .flatfield import (ConformalFieldParams, PreconditionError, evaluate,
                        conformal_factor, gradient, identity_scale,
                        phi_metric_gradient, phi_row, require_zero)


@dataclass(frozen=True)
class GeodesicState:
    """State along a straight geodesic: position, velocity, transported data."""

    t: float
    x: np.ndarray
    xdot: np.ndarray
    v: np.ndarray
    nabla_v: np.ndarray
    phi: float
    phidot: float

    def __post_init__(self):
        for name in ("x", "xdot", "v", "nabla_v"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))


def initial_state(p: ConformalFieldParams, x0, xdot) -> GeodesicState:
    """Consistent state at t = 0, from direct evaluation of the field."""
    x0 = np.asarray(x0, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    return GeodesicState(
        t=0.0, x=x0, xdot=xdot,
        v=evaluate(p, x0),
        nabla_v=gradient(p, x0) @ xdot,
        phi=conformal_factor(p, x0),
        phidot=float(phi_row(p) @ xdot),
    )


def consistency_residual(p: ConformalFieldParams, state: GeodesicState) -> float:
    """How far the state's transported data is from direct evaluation."""
    r1 = np.linalg.norm(state.v - evaluate(p, state.x))
    r2 = np.linalg.norm(state.nabla_v - gradient(p, state.x) @ state.xdot)
    r3 = abs(state.phi - conformal_factor(p, state.x))
    r4 = abs(state.phidot - float(phi_row(p) @ state.xdot))
    return float(max(r1, r2, r3, r4))


class InconsistentStateError(PreconditionError):
    """Initial data does not match the field (caller bug)."""


def propagate(p: ConformalFieldParams, state0: GeodesicState, t1: float,
              steps: int) -> list[GeodesicState]:
    """Integrate the transported system with the classical 4th-order scheme.

    The right-hand sides are polynomial of low degree, so the fixed-step
    rule reproduces the closed-form values to round-off; the returned
    trajectory samples every step.  Raises InconsistentStateError when
    state0 disagrees with direct evaluation.
    """
    if steps < 1:
        raise ValueError("steps must be positive")
    scale = identity_scale(p, state0.x) * (1.0 + float(state0.xdot @ state0.xdot))
    if consistency_residual(p, state0) > 1e-8 * scale:
        raise InconsistentStateError(
            "initial state disagrees with direct evaluation of the field")
    n = p.n
    xdot = state0.xdot
    xx = float(xdot @ p.metric.gram @ xdot)
    gphi = phi_metric_gradient(p)  # constant in flat space

    def rhs(y):
        v = y[:n]
        nv = y[n:2 * n]
        phidot = y[2 * n + 1]
        out = np.empty_like(y)
        out[:n] = nv
        out[n:2 * n] = phidot * xdot - 0.5 * xx * gphi
        out[2 * n] = phidot
        out[2 * n + 1] = 0.0
        return out

    y = np.concatenate([state0.v, state0.nabla_v, [state0.phi, state0.phidot]])
    h = (t1 - state0.t) / steps
    traj = [state0]
    t = state0.t
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        traj.append(GeodesicState(
            t=t, x=state0.x + (t - state0.t) * xdot, xdot=xdot,
            v=y[:n].copy(), nabla_v=y[n:2 * n].copy(),
            phi=float(y[2 * n]), phidot=float(y[2 * n + 1])))
    return traj


def terminal_error(p: ConformalFieldParams, traj: list[GeodesicState]) -> float:
    """Relative disagreement of the final state with direct evaluation."""
    last = traj[-1]
    direct = evaluate(p, last.x)
    denom = max(float(np.linalg.norm(direct)), p.param_scale(),
                1e-300)
    return float(np.linalg.norm(last.v - direct)) / denom


def _require_null(p: ConformalFieldParams, vec, what: str):
    vec = np.asarray(vec, dtype=float)
    q = float(vec @ p.metric.gram @ vec)
    scale = p.metric.scale() * max(float(vec @ vec), 1e-300)
    if abs(q) > 1e-10 * scale:
        raise PreconditionError(f"{what} is not null: <w,w> = {q:.3e}")


def _parallel_part(vec: np.ndarray, direction: np.ndarray) -> tuple[float, float]:
    """(coefficient, off-axis Euclidean residual) of vec against direction."""
    dd = float(direction @ direction)
    coeff = float(vec @ direction) / dd
    resid = float(np.linalg.norm(vec - coeff * direction))
    return coeff, resid


@dataclass(frozen=True)
class LineZerosReport:
    """Result of sampling v and phi along a null line frozen by the field."""

    max_v_norm: float
    max_phi_drift: float
    tolerance: float
    samples: int
    passed: bool


def lemma_zeros_check(p: ConformalFieldParams, z, w_dir,
                      t_samples: int = 1000) -> LineZerosReport:
    """Certify: v = 0 and phi = phi(z) along the whole line z + t w.

    Hypotheses, each verified and reported separately on failure: z is a
    zero; w is null; w is killed by nabla v_z; w is killed by d phi_z.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w_dir, dtype=float)
    require_zero(p, z)
    _require_null(p, w, "direction")
    scale = identity_scale(p, z) * max(1.0, float(np.linalg.norm(w)))
    if float(np.linalg.norm(gradient(p, z) @ w)) > 1e-8 * scale:
        raise PreconditionError("direction is not in the kernel of nabla v at z")
    if abs(float(phi_row(p) @ w)) > 1e-8 * scale:
        raise PreconditionError("direction is not in the kernel of d phi at z")
    phi0 = conformal_factor(p, z)
    ts = np.linspace(-1.0, 1.0, t_samples)
    pts = z[None, :] + ts[:, None] * w[None, :]
    vals = flatfield.evaluate_many(p, pts)
    phis = flatfield.conformal_factor_many(p, pts)
    max_v = float(np.max(np.linalg.norm(vals, axis=1)))
    max_phi = float(np.max(np.abs(phis - phi0)))
    tol = 1e-10 * identity_scale(p, z + w)
    return LineZerosReport(max_v, max_phi, tol, t_samples,
                           max_v <= tol and max_phi <= tol)


@dataclass(frozen=True)
class ProportionalityReport:
    """nabla_xdot v against [lambda + phi - phi(x0)] xdot along a null line."""

    lam: float
    max_residual: float
    tolerance: float
    passed: bool


def nvprl_proportionality(p: ConformalFieldParams, x0, xdot,
                          t_samples: int = 200) -> ProportionalityReport:
    """On a null line with v and nabla_xdot v tangent at t = 0, certify
    nabla_xdot v = [lambda + phi - phi(x0)] xdot at every sample."""
    x0 = np.asarray(x0, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    _require_null(p, xdot, "geodesic velocity")
    scale = identity_scale(p, x0 + xdot)
    v0 = evaluate(p, x0)
    _, off = _parallel_part(v0, xdot)
    if off > 1e-8 * scale:
        raise PreconditionError("v is not tangent to the line at t = 0")
    nv0 = gradient(p, x0) @ xdot
    lam, off = _parallel_part(nv0, xdot)
    if off > 1e-8 * scale:
        raise PreconditionError("nabla_xdot v is not tangent to the line at t = 0")
    phi0 = conformal_factor(p, x0)
    ts = np.linspace(-1.0, 1.0, t_samples)
    pts = x0[None, :] + ts[:, None] * xdot[None, :]
    grads = flatfield.gradient_many(p, pts)
    nvs = np.einsum("mij,j->mi", grads, xdot)
    phis = flatfield.conformal_factor_many(p, pts)
    predicted = (lam + phis - phi0)[:, None] * xdot[None, :]
    resid = float(np.max(np.linalg.norm(nvs - predicted, axis=1)))
    tol = 1e-9 * scale * max(1.0, float(np.linalg.norm(xdot)))
    return ProportionalityReport(lam, resid, tol, resid <= tol)


def char_poly_coeffs(a: np.ndarray) -> np.ndarray:
    """Characteristic polynomial coefficients [1, c_{n-1}, ..., c_0] of a
    matrix, by the Faddeev-LeVerrier recursion."""
    n = a.shape[0]
    coeffs = np.empty(n + 1)
    coeffs[0] = 1.0
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[k - 1] * np.eye(n)
        coeffs[k] = -np.trace(a @ m) / k
    return coeffs


@dataclass(frozen=True)
class CharPolyReport:
    """Coefficient drift of the characteristic polynomial along a line."""

    coefficients: np.ndarray  # (samples, n+1)
    max_drift: float
    tolerance: float
    passed: bool


def char_poly_constancy(p: ConformalFieldParams, x0, xdot,
                        t_samples: int = 100) -> CharPolyReport:
    """On an admissible null line (v tangent, phi constant), the operator
    nabla v has the same characteristic polynomial at every point."""
    x0 = np.asarray(x0, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    _require_null(p, xdot, "geodesic velocity")
    scale = identity_scale(p, x0 + xdot)
    _, off = _parallel_part(evaluate(p, x0), xdot)
    if off > 1e-8 * scale:
        raise PreconditionError("v is not tangent to the line at t = 0")
    _, off = _parallel_part(gradient(p, x0) @ xdot, xdot)
    if off > 1e-8 * scale:
        raise PreconditionError("nabla_xdot v is not tangent to the line at t = 0")
    ts = np.linspace(-1.0, 1.0, t_samples)
    pts = x0[None, :] + ts[:, None] * xdot[None, :]
    phis = flatfield.conformal_factor_many(p, pts)
    if float(np.max(phis) - np.min(phis)) > 1e-9 * scale:
        raise PreconditionError("phi is not constant along the line")
    rows = np.array([char_poly_coeffs(gradient(p, pt)) for pt in pts])
    drift = float(np.max(rows.max(axis=0) - rows.min(axis=0)))
    coeff_scale = max(float(np.max(np.abs(rows))), 1.0)
    tol = 1e-8 * coeff_scale
    return CharPolyReport(rows, drift, tol, drift <= tol)


@dataclass(frozen=True)
class InteriorZeroReport:
    """Location of interior vanishing of phi (or phi - phi(z), phidot) on a
    segment joining two zeros."""

    branch: str  # "non_null" | "chord_null"
    t_star: float | None
    value_at_t_star: float | None
    phidot: float | None
    identically_zero: bool
    passed: bool


def _locate_interior_zero(ts: np.ndarray, vals: np.ndarray, f, tol: float):
    """Bracketing plus bisection on sampled values; returns (t*, f(t*)) or None."""
    sign = np.sign(vals)
    for i in range(len(ts) - 1):
        if sign[i] != 0 and sign[i + 1] != 0 and sign[i] != sign[i + 1]:
            lo, hi = ts[i], ts[i + 1]
            flo = vals[i]
            while hi - lo > 1e-10:
                mid = 0.5 * (lo + hi)
                fm = f(mid)
                if fm == 0.0:
                    return mid, 0.0
                if np.sign(fm) == np.sign(flo):
                    lo, flo = mid, fm
                else:
                    hi = mid
            t = 0.5 * (lo + hi)
            return t, f(t)
    interior = slice(1, len(ts) - 1)
    if len(ts) > 2:
        idx = int(np.argmin(np.abs(vals[interior]))) + 1
        if abs(vals[idx]) <= tol:
            return float(ts[idx]), float(vals[idx])
    return None


def interior_vanishing_scan(p: ConformalFieldParams, z, x,
                            t_samples: int = 1001) -> InteriorZeroReport:
    """Between two zeros z and x: on a non-null chord, locate an interior
    zero of phi; on a null chord with (nabla v_z)(x - z) = 0, locate interior
    vanishing of phi - phi(z) and check phidot along the chord."""
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    require_zero(p, z)
    require_zero(p, x)
    d = x - z
    if float(np.linalg.norm(d)) == 0.0:
        raise PreconditionError("the two zeros coincide")
    qd = float(d @ p.metric.gram @ d)
    null_chord = abs(qd) <= 1e-10 * p.metric.scale() * float(d @ d)
    ts = np.linspace(0.0, 1.0, t_samples)
    pts = z[None, :] + ts[:, None] * d[None, :]
    scale = identity_scale(p, x) + identity_scale(p, z)
    tol = 1e-8 * scale

    if not null_chord:
        phis = flatfield.conformal_factor_many(p, pts)
        ident = bool(np.max(np.abs(phis)) <= tol)
        hit = _locate_interior_zero(ts, phis,
                                    lambda t: conformal_factor(p, z + t * d), tol)
        if ident and hit is None:
            mid = ts[len(ts) // 2]
            hit = (float(mid), float(conformal_factor(p, z + mid * d)))
        if hit is None:
            return InteriorZeroReport("non_null", None, None, None, False, False)
        return InteriorZeroReport("non_null", hit[0], hit[1], None, ident,
                                  abs(hit[1]) <= tol)

    if float(np.linalg.norm(gradient(p, z) @ d)) > 1e-8 * scale:
        raise PreconditionError(
            "null chord requires nabla_xdot v = 0 at z for the interior "
            "vanishing conclusion")
    phi0 = conformal_factor(p, z)
    drift = flatfield.conformal_factor_many(p, pts) - phi0
    ident = bool(np.max(np.abs(drift)) <= tol)
    hit = _locate_interior_zero(ts, drift,
                                lambda t: conformal_factor(p, z + t * d) - phi0, tol)
    if ident and hit is None:
        mid = ts[len(ts) // 2]
        hit = (float(mid), float(conformal_factor(p, z + mid * d) - phi0))
    phidot = float(phi_row(p) @ d)
    ok = hit is not None and abs(hit[1]) <= tol and abs(phidot) <= tol
    return InteriorZeroReport("chord_null", None if hit is None else hit[0],
                              None if hit is None else hit[1], phidot, ident, ok)
