"""The closed-form conformal fields of a flat pseudo-Euclidean space.

A field is parametrized by (w, S, c, u) over a nondegenerate metric with
Gram matrix G:

    v(x) = w + Bx + c x + 2<u,x> x - <x,x> u,      B = G^{-1} S,

with S exactly antisymmetric, which makes B skew-adjoint for the metric by
construction.  The module provides the exact derivatives of v, the
conformal factor phi = 2c + 4<u,x>, residuals for the defining identity
L_v g = phi g and its differential consequences, and the per-zero
classification (essential or not, local zero-set model: affine subspace or
null cone inside a subspace).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import exactlin, forms
from .forms import MetricForm, Subspace
from .tolerances import (GRAD_IN_IMAGE_RTOL, PHI_NONZERO_RTOL, RANK_RTOL,
                         ZERO_RTOL)


class FieldError(ValueError):
    """Invalid field parameters."""


class DegenerateMetricError(FieldError):
    """The ambient metric must be nondegenerate."""


class PreconditionError(ValueError):
    """An operation's stated precondition does not hold; carries which one."""


class NotAZeroError(PreconditionError):
    """The given point is not a zero of the field."""


@dataclass(frozen=True)
class ConformalFieldParams:
    """Parameters (w, S, c, u) of a conformal field over a metric.

    The skew-adjoint part is stored through its antisymmetric generator S;
    the operator B = G^{-1} S is derived at construction.  Integer inputs
    additionally enable the exact rational evaluation path.
    """

    metric: MetricForm
    w: np.ndarray
    skew_gen: np.ndarray
    c: float
    u: np.ndarray

    def __post_init__(self):
        n = self.metric.n
        w = np.asarray(self.w, dtype=float).reshape(-1)
        u = np.asarray(self.u, dtype=float).reshape(-1)
        s = np.asarray(self.skew_gen, dtype=float)
        if w.shape != (n,) or u.shape != (n,):
            raise FieldError(f"w and u must be vectors of length {n}")
        if s.shape != (n, n):
            raise FieldError(f"skew generator must be {n}x{n}")
        if not np.array_equal(np.asarray(self.skew_gen), -np.asarray(self.skew_gen).T):
            raise FieldError("skew generator must be exactly antisymmetric")
        sv = np.linalg.svd(self.metric.gram, compute_uv=False)
        if sv[-1] <= RANK_RTOL * sv[0]:
            raise DegenerateMetricError("metric Gram matrix is degenerate")
        gram_inv = np.linalg.inv(self.metric.gram)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "skew_gen", s)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "gram_inv", gram_inv)
        object.__setattr__(self, "skew_op", gram_inv @ s)
        object.__setattr__(self, "gu", self.metric.gram @ u)
        for a in ("w", "u", "skew_gen"):
            getattr(self, a).setflags(write=False)
        exact = (self.metric.is_exact
                 and exactlin.is_exact_array(w)
                 and exactlin.is_exact_array(u)
                 and exactlin.is_exact_array(s)
                 and float(self.c).is_integer())
        object.__setattr__(self, "is_exact", exact)

    @property
    def n(self) -> int:
        return self.metric.n

    def param_scale(self) -> float:
        s = max(float(np.max(np.abs(self.w), initial=0.0)),
                float(np.max(np.abs(self.skew_gen), initial=0.0)),
                abs(self.c),
                float(np.max(np.abs(self.u), initial=0.0)))
        return s if s > 0 else 1e-300

    def metric_amplification(self) -> float:
        g = self.metric.gram
        return float(np.max(np.abs(g)) * np.max(np.abs(self.gram_inv)))

    def exact_data(self):
        """Rational copies (w, B, c, u, G) for the exact evaluation path."""
        if not self.is_exact:
            raise FieldError("field parameters are not exact")
        g = [list(r) for r in self.metric.exact_gram]
        s = exactlin.to_fraction_matrix(self.skew_gen)
        n = self.n
        b_cols = [exactlin.solve(g, [s[i][j] for i in range(n)]) for j in range(n)]
        b = [[b_cols[j][i] for j in range(n)] for i in range(n)]
        w = [Fraction(int(x)) for x in self.w]
        u = [Fraction(int(x)) for x in self.u]
        return w, b, Fraction(int(self.c)), u, g


def pairing(metric: MetricForm, a, b) -> float:
    """<a, b> by compensated summation over all Gram products."""
    g = metric.gram
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    terms = (a[:, None] * g * b[None, :]).ravel()
    return math.fsum(terms.tolist())


def evaluate(p: ConformalFieldParams, x) -> np.ndarray:
    """v(x) = w + Bx + cx + 2<u,x>x - <x,x>u, with compensated summation."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (p.n,):
        raise FieldError(f"point must have dimension {p.n}")
    ux = pairing(p.metric, p.u, x)
    xx = pairing(p.metric, x, x)
    out = np.empty(p.n)
    for i in range(p.n):
        bx_i = math.fsum((p.skew_op[i] * x).tolist())
        out[i] = math.fsum([p.w[i], bx_i, p.c * x[i], 2.0 * ux * x[i], -xx * p.u[i]])
    return out


def evaluate_many(p: ConformalFieldParams, xs) -> np.ndarray:
    """Vectorized v over stacked points (plain float arithmetic)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ux = xs @ p.gu
    xx = np.einsum("ij,jk,ik->i", xs, p.metric.gram, xs)
    return (p.w[None, :] + xs @ p.skew_op.T + p.c * xs
            + 2.0 * ux[:, None] * xs - xx[:, None] * p.u[None, :])


def evaluate_exact(p: ConformalFieldParams, x) -> list[Fraction]:
    """Exact rational v(x) for exact parameters and rational x."""
    w, b, c, u, g = p.exact_data()
    n = p.n
    xq = [xi if isinstance(xi, Fraction) else Fraction(xi) for xi in x]
    ux = sum(u[k] * g[k][l] * xq[l] for k in range(n) for l in range(n))
    xx = sum(xq[k] * g[k][l] * xq[l] for k in range(n) for l in range(n))
    return [w[i] + sum(b[i][j] * xq[j] for j in range(n)) + c * xq[i]
            + 2 * ux * xq[i] - xx * u[i] for i in range(n)]


def gradient(p: ConformalFieldParams, x) -> np.ndarray:
    """The operator (nabla v)_x as a matrix acting by M @ h.

    Closed form: h -> Bh + ch + 2<u,h>x + 2<u,x>h - 2<x,h>u.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    gx = p.metric.gram @ x
    ux = float(p.gu @ x)
    return (p.skew_op + (p.c + 2.0 * ux) * np.eye(p.n)
            + 2.0 * np.outer(x, p.gu) - 2.0 * np.outer(p.u, gx))


def gradient_many(p: ConformalFieldParams, xs) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    m = xs.shape[0]
    gxs = xs @ p.metric.gram
    ux = xs @ p.gu
    eye = np.eye(p.n)
    out = np.broadcast_to(p.skew_op, (m, p.n, p.n)).copy()
    out += (p.c + 2.0 * ux)[:, None, None] * eye[None, :, :]
    out += 2.0 * xs[:, :, None] * p.gu[None, None, :]
    out -= 2.0 * p.u[None, :, None] * gxs[:, None, :]
    return out


def gradient_exact(p: ConformalFieldParams, x) -> list[list[Fraction]]:
    w, b, c, u, g = p.exact_data()
    n = p.n
    xq = [xi if isinstance(xi, Fraction) else Fraction(xi) for xi in x]
    gu = [sum(g[i][j] * u[j] for j in range(n)) for i in range(n)]
    gx = [sum(g[i][j] * xq[j] for j in range(n)) for i in range(n)]
    ux = sum(gu[j] * xq[j] for j in range(n))
    return [[b[i][j] + (c + 2 * ux) * (1 if i == j else 0)
             + 2 * xq[i] * gu[j] - 2 * u[i] * gx[j] for j in range(n)]
            for i in range(n)]


def conformal_factor(p: ConformalFieldParams, x) -> float:
    """phi(x) = 2c + 4<u,x>; satisfies trace(nabla v) = n phi / 2."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return math.fsum([2.0 * p.c, 4.0 * pairing(p.metric, p.u, x)])


def conformal_factor_many(p: ConformalFieldParams, xs) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    return 2.0 * p.c + 4.0 * (xs @ p.gu)


def phi_row(p: ConformalFieldParams) -> np.ndarray:
    """The (constant) differential of phi as a row: d phi = 4 <u, .>."""
    return 4.0 * p.gu


def phi_metric_gradient(p: ConformalFieldParams) -> np.ndarray:
    """The metric gradient of phi: the vector 4u."""
    return 4.0 * p.u


def metric_adjoint(p: ConformalFieldParams, a: np.ndarray) -> np.ndarray:
    """Adjoint of an operator with respect to the metric: G^{-1} A^T G."""
    return p.gram_inv @ a.T @ p.metric.gram


def identity_scale(p: ConformalFieldParams, x) -> float:
    """Scale factor for residuals of pointwise operator identities."""
    x = np.asarray(x, dtype=float).reshape(-1)
    return (1.0 + float(x @ x)) * p.param_scale() * p.metric_amplification()


def lie_derivative_residual(p: ConformalFieldParams, x) -> float:
    """Max-norm of  nabla v + (nabla v)^* - phi Id  at x.

    This is the operator form of the defining identity v_{j,k} + v_{k,j}
    = phi g_{jk}; it vanishes identically for valid parameters.
    """
    a = gradient(p, x)
    r = a + metric_adjoint(p, a) - conformal_factor(p, x) * np.eye(p.n)
    return float(np.max(np.abs(r)))


def lie_derivative_residual_many(p: ConformalFieldParams, xs) -> np.ndarray:
    grads = gradient_many(p, xs)
    g, gi = p.metric.gram, p.gram_inv
    adj = np.einsum("ik,mlk,lj->mij", gi, grads, g)
    phi = conformal_factor_many(p, xs)
    r = grads + adj - phi[:, None, None] * np.eye(p.n)[None, :, :]
    return np.max(np.abs(r), axis=(1, 2))


def lie_derivative_residual_exact(p: ConformalFieldParams, x) -> Fraction:
    """Exact-mode residual (max-abs entry as a Fraction); 0 for valid params."""
    w, b, c, u, g = p.exact_data()
    n = p.n
    dv = gradient_exact(p, x)
    # adjoint: solve G A* = A^T G  column by column
    atg = [[sum(dv[k][i] * g[k][j] for k in range(n)) for j in range(n)] for i in range(n)]
    adj_cols = [exactlin.solve(g, [atg[i][j] for i in range(n)]) for j in range(n)]
    xq = [xi if isinstance(xi, Fraction) else Fraction(xi) for xi in x]
    phi = 2 * c + 4 * sum(u[k] * g[k][l] * xq[l] for k in range(n) for l in range(n))
    res = Fraction(0)
    for i in range(n):
        for j in range(n):
            val = dv[i][j] + adj_cols[j][i] - (phi if i == j else 0)
            res = max(res, abs(val))
    return res


def second_derivative_bilinear(p: ConformalFieldParams, h, k) -> np.ndarray:
    """The constant second derivative of v: d2v(h,k) = 2<u,h>k + 2<u,k>h - 2<h,k>u."""
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    uh = float(p.gu @ h)
    uk = float(p.gu @ k)
    hk = float(h @ p.metric.gram @ k)
    return 2.0 * uh * k + 2.0 * uk * h - 2.0 * hk * p.u


def gradient_directional_derivative(p: ConformalFieldParams, direction) -> np.ndarray:
    """(nabla_dir nabla v) as a matrix: h -> 2<u,h>dir + 2<u,dir>h - 2<dir,h>u."""
    d = np.asarray(direction, dtype=float)
    return (2.0 * np.outer(d, p.gu) + 2.0 * float(p.gu @ d) * np.eye(p.n)
            - 2.0 * np.outer(p.u, p.metric.gram @ d))


def second_derivative_residual(p: ConformalFieldParams, x, direction) -> float:
    """Residual of  2 nabla_dir nabla v = dphi (x) dir - g(dir,.) (x) grad phi
    + [dphi(dir)] Id  (flat space: no curvature term).  The left side is the
    exact directional derivative of the gradient operator."""
    d = np.asarray(direction, dtype=float)
    lhs = 2.0 * gradient_directional_derivative(p, d)
    row = phi_row(p)
    rhs = (np.outer(d, row) - np.outer(phi_metric_gradient(p), p.metric.gram @ d)
           + float(row @ d) * np.eye(p.n))
    return float(np.max(np.abs(lhs - rhs)))


def zero_tolerance(p: ConformalFieldParams, z) -> float:
    z = np.asarray(z, dtype=float)
    return ZERO_RTOL * (1.0 + float(np.linalg.norm(z))) * p.param_scale()


def is_zero(p: ConformalFieldParams, z) -> bool:
    return float(np.linalg.norm(evaluate(p, z))) <= zero_tolerance(p, z)


def require_zero(p: ConformalFieldParams, z):
    r = float(np.linalg.norm(evaluate(p, z)))
    if r > zero_tolerance(p, z):
        raise NotAZeroError(f"point is not a zero: |v| = {r:.3e} "
                            f"exceeds {zero_tolerance(p, z):.3e}")


def phi_is_nonzero(p: ConformalFieldParams, phi_value: float) -> bool:
    return abs(phi_value) > PHI_NONZERO_RTOL * p.param_scale()


def basis_dimension(metric: MetricForm, rank_tol: float = RANK_RTOL) -> int:
    """Rank of the parameter-to-field-values map on generic sample points.

    For n >= 3 the family (w, S, c, u) realizes the full space of conformal
    fields, so the rank equals (n+1)(n+2)/2.
    """
    n = metric.n
    if n < 3:
        raise FieldError("dimension bound is only claimed for n >= 3")
    d = (n + 1) * (n + 2) // 2
    m = d + n
    rng = np.random.default_rng(1031)
    pts = rng.uniform(-1.0, 1.0, size=(m, n))
    cols = []

    def field_values(w, s, c, u):
        p = ConformalFieldParams(metric, w, s, c, u)
        return evaluate_many(p, pts).ravel()

    zero_v = np.zeros(n)
    zero_s = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        cols.append(field_values(e, zero_s, 0.0, zero_v))
    for i in range(n):
        for j in range(i + 1, n):
            s = np.zeros((n, n))
            s[i, j], s[j, i] = 1.0, -1.0
            cols.append(field_values(zero_v, s, 0.0, zero_v))
    cols.append(field_values(zero_v, zero_s, 1.0, zero_v))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        cols.append(field_values(zero_v, zero_s, 0.0, e))
    mat = np.column_stack(cols)
    sv = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(sv > rank_tol * sv[0]))


def _gradient_scale(p: ConformalFieldParams, z) -> float:
    """Magnitude floor for rank decisions on nabla v_z: at a zero where the
    whole matrix is rounding noise the kernel is everything, which a cut
    relative to the matrix's own largest entry would miss."""
    z = np.asarray(z, dtype=float)
    return p.param_scale() * (1.0 + float(np.linalg.norm(z))) * p.metric_amplification()


def kernel_of_gradient(p: ConformalFieldParams, z,
                       rank_tol: float = RANK_RTOL) -> Subspace:
    a = gradient(p, z)
    exact_rows = None
    if p.is_exact and exactlin.is_exact_array(np.asarray(z)):
        exact_rows = gradient_exact(p, [Fraction(int(t)) for t in np.asarray(z)])
    return forms.kernel_subspace(a, rank_tol, exact_rows=exact_rows,
                                 scale_floor=_gradient_scale(p, z))


def image_of_gradient(p: ConformalFieldParams, z,
                      rank_tol: float = RANK_RTOL) -> Subspace:
    a = gradient(p, z)
    u_, s, _ = np.linalg.svd(a)
    floor = _gradient_scale(p, z)
    rank = int(np.sum(s > rank_tol * max(float(s[0]), floor))) if s.size else 0
    return Subspace(p.n, u_[:, :rank].T)


@dataclass(frozen=True)
class KernelStructureReport:
    """Certification of the kernel/image structure of nabla v at a zero."""

    phi: float
    factor_nonzero: bool
    kernel_dim: int
    kernel_is_null: bool | None
    max_kernel_gram: float | None
    codimension: int | None
    codimension_even: bool | None
    complement_equals_image: bool | None
    passed: bool


def kernel_structure_check(p: ConformalFieldParams, z,
                           rank_tol: float = RANK_RTOL) -> KernelStructureReport:
    """At a zero z: if phi(z) != 0, the kernel of nabla v_z must be a null
    subspace; if phi(z) = 0, its codimension must be even and its metric
    complement must equal the image of nabla v_z."""
    require_zero(p, z)
    phi = conformal_factor(p, z)
    ker = kernel_of_gradient(p, z, rank_tol)
    scale = p.param_scale() * p.metric.scale() * (1.0 + float(np.asarray(z) @ np.asarray(z)))
    if phi_is_nonzero(p, phi):
        if ker.dim == 0:
            gmax = 0.0
        else:
            gram = forms.restricted_gram(p.metric, ker)
            gmax = float(np.max(np.abs(gram)))
        null_ok = gmax <= 1e-10 * scale
        return KernelStructureReport(phi, True, ker.dim, null_ok, gmax,
                                     None, None, None, null_ok)
    codim = p.n - ker.dim
    even = codim % 2 == 0
    comp = forms.orthogonal_complement(p.metric, ker, rank_tol)
    img = image_of_gradient(p, z, rank_tol)
    same = comp.spans_same(img)
    return KernelStructureReport(phi, False, ker.dim, None, None,
                                 codim, even, same, even and same)


@dataclass(frozen=True)
class ZeroModel:
    """Predicted local zero set at a zero point.

    kind "subspace": the affine set base + E.
    kind "cone": {base + h : h in H, <h,h> = 0}; when the metric is
    semidefinite on H this set is the affine null subspace base + (H meet
    H-perp).
    """

    kind: str
    base_point: np.ndarray
    subspace: Subspace
    metric: MetricForm

    def __post_init__(self):
        object.__setattr__(self, "base_point",
                           np.asarray(self.base_point, dtype=float))

    @property
    def semidefinite(self) -> bool:
        return forms.is_semidefinite(self.metric, self.subspace)

    def null_part(self) -> Subspace:
        return forms.restriction_null_subspace(self.metric, self.subspace)

    def is_null_affine(self) -> bool:
        """True when the model set is an affine null subspace."""
        return self.kind == "cone" and self.semidefinite

    def analytic_dim(self) -> int:
        if self.kind == "subspace":
            return self.subspace.dim
        if self.semidefinite:
            return self.null_part().dim
        return self.subspace.dim - 1

    def membership_residuals(self, x) -> tuple[float, float]:
        """(Euclidean distance to the affine carrier, normalized form value)."""
        y = np.asarray(x, dtype=float) - self.base_point
        dist = self.subspace.distance(y)
        if self.kind == "subspace":
            return dist, 0.0
        q = float(y @ self.metric.gram @ y)
        denom = self.metric.scale() * max(float(y @ y), 1e-300)
        return dist, abs(q) / denom

    def contains(self, x, tol: float) -> bool:
        y = np.asarray(x, dtype=float) - self.base_point
        dist, qrel = self.membership_residuals(x)
        if dist > tol * (1.0 + np.linalg.norm(y)):
            return False
        if self.kind == "cone" and float(y @ y) > 0:
            return qrel <= tol
        return True

    def _polish_in_carrier(self, y: np.ndarray, steps: int = 3) -> np.ndarray:
        """Newton steps toward <y,y> = 0 along the in-subspace form gradient."""
        h = self.subspace
        y = h.project(y)
        for _ in range(steps):
            q = float(y @ self.metric.gram @ y)
            g = h.project(2.0 * self.metric.gram @ y)
            gg = float(g @ g)
            if gg == 0.0:
                break
            y = y - (q / gg) * g
        return y

    def distance(self, x) -> float:
        """Upper bound on the Euclidean distance from x to the model set."""
        y = np.asarray(x, dtype=float) - self.base_point
        if self.kind == "subspace":
            return self.subspace.distance(y)
        if self.semidefinite:
            return self.null_part().distance(y)
        candidates = [np.zeros_like(y), self.null_part().project(y)]
        # ray rescaling: split the H-projection by eigensign, rescale the
        # negative part onto the cone
        h = self.subspace
        pos, neg, _ = _eigensplit_cached(self.metric, h)
        yh = h.project(y)
        a = sum((float(v @ yh) * v) for _, v in pos) if pos else np.zeros_like(y)
        b = sum((float(v @ yh) * v) for _, v in neg) if neg else np.zeros_like(y)
        znul = yh - a - b
        qa = float(a @ self.metric.gram @ a)
        qb = float(b @ self.metric.gram @ b)
        if qa > 0 and qb < 0:
            t = np.sqrt(-qa / qb)
            candidates.append(a + t * b + znul)
        # alternating projection: subspace projection, then one Newton step
        # toward the quadric, repeated
        zk = yh
        for _ in range(50):
            zk = self._polish_in_carrier(zk, steps=1)
        candidates.append(zk)
        best = np.inf
        for cand in candidates:
            cand = self._polish_in_carrier(cand, steps=4)
            dist, qrel = self.membership_residuals(self.base_point + cand)
            if dist <= 1e-9 * (1.0 + np.linalg.norm(cand)) and qrel <= 1e-9:
                best = min(best, float(np.linalg.norm(y - cand)))
        return best

    def sample_points(self, count: int, radius: float, seed: int) -> np.ndarray:
        """Deterministic points of the model set within `radius` of the base."""
        if self.kind == "subspace":
            rng = np.random.default_rng(seed)
            if self.subspace.dim == 0:
                return np.tile(self.base_point, (count, 1))
            coeff = rng.standard_normal((count, self.subspace.dim))
            offs = coeff @ self.subspace.basis
            norms = np.linalg.norm(offs, axis=1)
            scalemax = rng.uniform(0.05, 1.0, size=count) * radius
            nz = norms > 0
            offs[nz] *= (scalemax[nz] / norms[nz])[:, None]
            return self.base_point[None, :] + offs
        offs = forms.sample_null_cone(self.metric, self.subspace, count, radius, seed)
        return self.base_point[None, :] + offs


_EIGENSPLIT_CACHE: dict = {}


def _eigensplit_cached(metric: MetricForm, h: Subspace):
    key = (metric.gram.tobytes(), h.basis.tobytes())
    if key not in _EIGENSPLIT_CACHE:
        if len(_EIGENSPLIT_CACHE) > 256:
            _EIGENSPLIT_CACHE.clear()
        _EIGENSPLIT_CACHE[key] = forms._eigensplit(metric, h, RANK_RTOL)
    return _EIGENSPLIT_CACHE[key]


@dataclass(frozen=True)
class PointClassification:
    """Per-zero report: essential flag, case tag, and the local model.

    ``model_space`` is the intersection of the kernel of nabla v_z with the
    kernel of d phi_z; ``singular_space`` is the nullspace of the metric
    restricted to it (the predicted singular set directions in case ii).
    """

    point: np.ndarray
    phi: float
    grad_phi_in_image: bool
    essential: bool
    case: str  # "i" | "ii" | "iii"
    model_space: Subspace
    singular_space: Subspace
    gradient_kernel: Subspace
    model: ZeroModel

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))


def _grad_phi_in_image(p: ConformalFieldParams, z, rank_tol: float) -> bool:
    gphi = phi_metric_gradient(p)
    norm = float(np.linalg.norm(gphi))
    if norm == 0.0:
        return True
    a = gradient(p, z)
    if p.is_exact and exactlin.is_exact_array(np.asarray(z)):
        ae = gradient_exact(p, [Fraction(int(t)) for t in np.asarray(z)])
        rhs = [4 * Fraction(int(t)) for t in p.u]
        return exactlin.solve(ae, rhs) is not None
    # least-squares against the numerically meaningful part of the image:
    # singular values below the gradient-scale floor are rounding noise
    u_, s, vt = np.linalg.svd(a)
    cut = rank_tol * max(float(s[0]) if s.size else 0.0, _gradient_scale(p, z))
    keep = s > cut
    coeff = (u_.T @ gphi)[keep] / s[keep]
    residual = float(np.linalg.norm(a @ (vt[keep].T @ coeff) - gphi)) / norm
    return residual <= GRAD_IN_IMAGE_RTOL


def classify_zero(p: ConformalFieldParams, z,
                  rank_tol: float = RANK_RTOL) -> PointClassification:
    """Classify a zero: essential or not, case tag, and local zero-set model.

    essential  <=>  phi(z) != 0, or phi(z) = 0 with grad phi_z outside the
    image of nabla v_z.  Non-essential zeros (case i) get the affine model
    through the kernel of nabla v_z; essential zeros get the null-cone model
    inside model_space, which is a cone with singularities exactly when the
    metric is indefinite on model_space (case ii), and otherwise an affine
    null subspace (case iii).
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    require_zero(p, z)
    phi = conformal_factor(p, z)
    nonzero = phi_is_nonzero(p, phi)
    in_image = _grad_phi_in_image(p, z, rank_tol)
    essential = nonzero or not in_image
    ker = kernel_of_gradient(p, z, rank_tol)

    row = phi_row(p)
    rnorm = float(np.linalg.norm(row))
    if rnorm == 0.0:
        h = ker
    else:
        a = gradient(p, z)
        anorm = max(float(np.max(np.abs(a))), _gradient_scale(p, z))
        stack = np.vstack([a / anorm, row / rnorm])
        exact_rows = None
        if p.is_exact and exactlin.is_exact_array(z):
            ae = gradient_exact(p, [Fraction(int(t)) for t in z])
            gu_exact = [sum(Fraction(int(p.metric.gram[i, j])) * Fraction(int(p.u[j]))
                            for j in range(p.n)) for i in range(p.n)]
            exact_rows = ae + [[4 * t for t in gu_exact]]
        h = forms.kernel_subspace(stack, rank_tol, exact_rows=exact_rows)

    v_sub = forms.restriction_null_subspace(p.metric, h, rank_tol)
    if not essential:
        case = "i"
        model = ZeroModel("subspace", z, ker, p.metric)
    else:
        case = "iii" if forms.is_semidefinite(p.metric, h, rank_tol) else "ii"
        model = ZeroModel("cone", z, h, p.metric)
    return PointClassification(z, phi, in_image, essential, case, h, v_sub, ker, model)


def predicted_zero_model(cls: PointClassification) -> ZeroModel:
    """The membership-predicate object for the zero set near the point.

    Flat space: the exponential map at z is the translation x -> z + x, so
    the model set is {z + h : h in model_space, <h,h> = 0} in the essential
    cases and z + Ker(nabla v_z) otherwise.
    """
    return cls.model


@dataclass(frozen=True)
class QuadraticPolynomial:
    """tau(x) = const + <linear, x> + x^T quad x (coordinate pairing)."""

    const: float
    linear: np.ndarray
    quad: np.ndarray

    def __post_init__(self):
        lin = np.asarray(self.linear, dtype=float).reshape(-1)
        q = np.asarray(self.quad, dtype=float)
        if q.shape != (lin.shape[0], lin.shape[0]):
            raise FieldError("quadratic coefficient block must be n x n")
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "quad", q)

    @classmethod
    def from_coeffs(cls, coeffs, n: int) -> "QuadraticPolynomial":
        """Parse [const, linear(n), quad(n x n)]; shorter lists pad with zeros."""
        try:
            const = float(coeffs[0]) if len(coeffs) > 0 else 0.0
            linear = np.asarray(coeffs[1], dtype=float) if len(coeffs) > 1 else np.zeros(n)
            quad = np.asarray(coeffs[2], dtype=float) if len(coeffs) > 2 else np.zeros((n, n))
        except (TypeError, IndexError, ValueError) as exc:
            raise FieldError(f"malformed polynomial coefficient list: {exc}") from exc
        if linear.shape != (n,) or quad.shape != (n, n):
            raise FieldError("polynomial coefficient blocks have wrong shapes")
        return cls(const, linear, quad)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.const + self.linear @ x + x @ self.quad @ x)

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.linear + (self.quad + self.quad.T) @ x


def killing_gauge_residual(p: ConformalFieldParams, tau: QuadraticPolynomial, x) -> float:
    """Residual of  e^tau L_v(e^{-tau} g) = L_v g - [(d tau)(v)] g  at x.

    The left side is assembled by the exact product/chain rule for the
    rescaled constant-coefficient metric; this is the testable content of
    the Killing-rescaling criterion (a zero is inessential exactly when some
    tau with (d tau)(v) = phi exists locally).
    """
    x = np.asarray(x, dtype=float)
    g = p.metric.gram
    a = gradient(p, x)
    lie_g = a.T @ g + g @ a
    v = evaluate(p, x)
    dtau_v = float(tau.grad(x) @ v)
    tval = tau.value(x)
    lie_rescaled = math.exp(-tval) * (lie_g - dtau_v * g)
    lhs = math.exp(tval) * lie_rescaled
    rhs = lie_g - dtau_v * g
    return float(np.max(np.abs(lhs - rhs)))


def radial_factor(p: ConformalFieldParams, z, ray_dir, s: float) -> np.ndarray:
    """F(s) = v(z + s d)/s^2 for s != 0; F(0) = half the second s-derivative.

    Requires v(z) = 0 and (nabla v_z) d = 0, otherwise the division is not
    smooth and the call is rejected.
    """
    z = np.asarray(z, dtype=float)
    d = np.asarray(ray_dir, dtype=float)
    require_zero(p, z)
    lin = gradient(p, z) @ d
    tol = zero_tolerance(p, z) * max(1.0, float(np.linalg.norm(d)))
    if float(np.linalg.norm(lin)) > tol:
        raise PreconditionError(
            "the gradient of v at z does not annihilate the ray direction; "
            "v(z + s d)/s^2 is not smooth at s = 0")
    if s != 0.0:
        return evaluate(p, z + s * d) / (s * s)
    return 0.5 * second_derivative_bilinear(p, d, d)


def hessian_identity_check(p: ConformalFieldParams, z, w_dir,
                           rank_tol: float = RANK_RTOL) -> float:
    """Residual between the Hessian of Q(y) = 2 <w, v(y)> restricted to the
    affine subspace z + Ker(nabla v_z) and its closed form

        dphi_z (x) <w,.> + <w,.> (x) dphi_z - [dphi_z(w)] <,>,

    both expressed in an orthonormal basis of the kernel.  Needs phi(z) = 0
    and w_dir in the kernel."""
    z = np.asarray(z, dtype=float)
    w = np.asarray(w_dir, dtype=float)
    require_zero(p, z)
    phi = conformal_factor(p, z)
    if phi_is_nonzero(p, phi):
        raise PreconditionError("phi(z) must vanish for the Hessian identity")
    ker = kernel_of_gradient(p, z, rank_tol)
    if not ker.contains(w, 1e-8):
        raise PreconditionError("w_dir must lie in the kernel of nabla v at z")
    if ker.dim == 0:
        return 0.0
    b = ker.basis
    m = ker.dim
    row = phi_row(p)
    gw = p.metric.gram @ w
    hess = np.empty((m, m))
    closed = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            hess[i, j] = 2.0 * float(gw @ second_derivative_bilinear(p, b[i], b[j]))
            closed[i, j] = (float(row @ b[i]) * float(gw @ b[j])
                            + float(gw @ b[i]) * float(row @ b[j])
                            - float(row @ w) * float(b[i] @ p.metric.gram @ b[j]))
    return float(np.max(np.abs(hess - closed)))
