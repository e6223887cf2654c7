"""Symmetric bilinear forms of arbitrary signature on R^n.

Signatures, orthogonal complements, nullspaces, null-cone sampling and the
predictions for radial limit directions of a cone at one of its points.
All rank decisions share one tolerance (`tolerances.RANK_RTOL`); forms and
subspaces built from integer data additionally carry exact rational copies
so the same questions can be answered with no tolerance at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import exactlin
from .tolerances import RANK_RTOL


class FormError(ValueError):
    """Invalid input to a form operation."""


class EmptyNullConeError(FormError):
    """A nonzero null-cone sample was requested from a space whose cone is {0}."""


def _as_matrix(rows) -> np.ndarray:
    a = np.asarray(rows, dtype=float)
    if a.ndim != 2:
        raise FormError(f"expected a matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class MetricForm:
    """A symmetric bilinear form, stored by its Gram matrix.

    The Gram matrix must be exactly symmetric (entrywise, no tolerance).
    Degenerate forms are allowed here; modules that need an honest metric
    check nondegeneracy themselves.
    """

    gram: np.ndarray
    exact_gram: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        g = _as_matrix(self.gram)
        if g.shape[0] != g.shape[1]:
            raise FormError(f"Gram matrix must be square, got {g.shape}")
        if not np.array_equal(np.asarray(self.gram), np.asarray(self.gram).T):
            raise FormError("Gram matrix must be exactly symmetric")
        object.__setattr__(self, "gram", g)
        if self.exact_gram is None and exactlin.is_exact_array(self.gram):
            rows = exactlin.to_fraction_matrix(self.gram)
            object.__setattr__(self, "exact_gram", tuple(tuple(r) for r in rows))
        g.setflags(write=False)

    @property
    def n(self) -> int:
        return self.gram.shape[0]

    @property
    def is_exact(self) -> bool:
        return self.exact_gram is not None

    def product(self, x, y) -> float:
        """<x, y> under this form."""
        return float(np.asarray(x) @ self.gram @ np.asarray(y))

    def products(self, xs, ys) -> np.ndarray:
        """Row-wise <x_i, y_i> for stacked vectors."""
        return np.einsum("ij,jk,ik->i", np.atleast_2d(xs), self.gram, np.atleast_2d(ys))

    def scale(self) -> float:
        s = float(np.max(np.abs(self.gram)))
        return s if s > 0 else 1.0


def diag_form(*entries) -> MetricForm:
    return MetricForm(np.diag(np.asarray(entries, dtype=float)))


@dataclass(frozen=True)
class Subspace:
    """A linear subspace of R^n, stored with a Euclidean-orthonormal basis.

    ``basis`` has one row per basis vector (shape (dim, n)).  An optional
    exact rational spanning set is kept alongside when the subspace came
    from exact data; it spans the same space but is not orthonormal.
    """

    ambient_dim: int
    basis: np.ndarray
    exact_basis: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.size == 0:
            b = b.reshape(0, self.ambient_dim)
        if b.ndim != 2 or b.shape[1] != self.ambient_dim:
            raise FormError(f"basis shape {b.shape} does not match ambient dim {self.ambient_dim}")
        object.__setattr__(self, "basis", b)
        b.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @classmethod
    def from_spanning(cls, vectors, ambient_dim: int | None = None,
                      rank_tol: float = RANK_RTOL, exact_basis=None) -> "Subspace":
        """Orthonormalize a spanning set (SVD), discarding dependent vectors."""
        v = np.asarray(vectors, dtype=float)
        if v.size == 0:
            if ambient_dim is None:
                raise FormError("ambient dimension required for an empty spanning set")
            return cls(ambient_dim, np.zeros((0, ambient_dim)), exact_basis=exact_basis)
        v = np.atleast_2d(v)
        n = v.shape[1]
        if ambient_dim is not None and ambient_dim != n:
            raise FormError("spanning vectors do not match the ambient dimension")
        u, s, vh = np.linalg.svd(v, full_matrices=False)
        rank = int(np.sum(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
        if exact_basis is None and exactlin.is_exact_array(vectors) and v.size:
            exact_basis = tuple(tuple(Fraction(int(x)) for x in row) for row in np.asarray(vectors))
        return cls(n, vh[:rank], exact_basis=exact_basis)

    @classmethod
    def full(cls, n: int) -> "Subspace":
        eye = np.eye(n)
        exact = tuple(tuple(Fraction(int(x)) for x in row) for row in eye)
        return cls(n, eye, exact_basis=exact)

    @classmethod
    def zero(cls, n: int) -> "Subspace":
        return cls(n, np.zeros((0, n)), exact_basis=())

    def project(self, x) -> np.ndarray:
        """Euclidean orthogonal projection onto the subspace."""
        x = np.asarray(x, dtype=float)
        if self.dim == 0:
            return np.zeros_like(x)
        return self.basis.T @ (self.basis @ x)

    def distance(self, x) -> float:
        """Euclidean distance from x to the subspace."""
        x = np.asarray(x, dtype=float)
        return float(np.linalg.norm(x - self.project(x)))

    def contains(self, x, tol: float) -> bool:
        x = np.asarray(x, dtype=float)
        return self.distance(x) <= tol * (1.0 + np.linalg.norm(x))

    def coords(self, x) -> np.ndarray:
        return self.basis @ np.asarray(x, dtype=float)

    def angle_to(self, direction) -> float:
        """Angle (radians) between a unit direction and the subspace."""
        d = np.asarray(direction, dtype=float)
        nd = np.linalg.norm(d)
        if nd == 0:
            return 0.0
        d = d / nd
        s = np.linalg.norm(d - self.project(d))
        return float(np.arcsin(min(1.0, s)))

    def intersect(self, other: "Subspace", rank_tol: float = RANK_RTOL) -> "Subspace":
        """Intersection of two subspaces (kernel of the stacked complements)."""
        if self.ambient_dim != other.ambient_dim:
            raise FormError("subspaces live in different ambient spaces")
        n = self.ambient_dim
        rows = np.vstack([np.eye(n) - self.basis.T @ self.basis,
                          np.eye(n) - other.basis.T @ other.basis])
        return kernel_subspace(rows, rank_tol)

    def spans_same(self, other: "Subspace", rank_tol: float = RANK_RTOL) -> bool:
        if self.dim != other.dim:
            return False
        if self.dim == 0:
            return True
        p1 = self.basis.T @ self.basis
        p2 = other.basis.T @ other.basis
        return bool(np.max(np.abs(p1 - p2)) <= max(rank_tol, 1e-8))


def kernel_subspace(matrix, rank_tol: float = RANK_RTOL, exact_rows=None,
                    scale_floor: float = 0.0) -> Subspace:
    """Kernel of a matrix as a Subspace, at the shared rank tolerance.

    ``scale_floor`` sets an absolute reference scale for the rank cut, for
    matrices whose entries are pure rounding noise of a larger computation
    (e.g. a degenerate restricted Gram matrix).  When ``exact_rows``
    (rational) is supplied, the exact kernel is attached to the result and
    its dimension is authoritative.
    """
    m = _as_matrix(matrix)
    n = m.shape[1]
    exact_basis = None
    if exact_rows is not None:
        ek = exactlin.kernel([list(r) for r in exact_rows])
        exact_basis = tuple(tuple(v) for v in ek)
    if m.shape[0] == 0:
        return Subspace.full(n) if exact_basis is None else Subspace(n, np.eye(n), exact_basis=exact_basis)
    u, s, vh = np.linalg.svd(m)
    if s.size == 0 or s[0] == 0:
        rank = 0
    else:
        rank = int(np.sum(s > rank_tol * max(s[0], scale_floor)))
    if exact_basis is not None:
        # exact dimension wins; take the trailing right-singular vectors
        rank = n - len(exact_basis)
    return Subspace(n, vh[rank:], exact_basis=exact_basis)


def signature(form: MetricForm, rank_tol: float = RANK_RTOL) -> tuple[int, int, int]:
    """(positive, negative, zero) eigenvalue counts of the Gram matrix.

    Exact inputs are decided by rational congruence reduction; otherwise an
    eigenvalue of magnitude <= rank_tol * max|eigenvalue| counts as zero.
    """
    if form.is_exact:
        return exactlin.inertia([list(r) for r in form.exact_gram])
    w = np.linalg.eigvalsh(form.gram)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if scale == 0.0:
        return (0, 0, form.n)
    cut = rank_tol * scale
    p = int(np.sum(w > cut))
    q = int(np.sum(w < -cut))
    return (p, q, form.n - p - q)


def orthogonal_complement(form: MetricForm, v: Subspace,
                          rank_tol: float = RANK_RTOL) -> Subspace:
    """{x : <x, b> = 0 for every basis vector b of V}."""
    if v.ambient_dim != form.n:
        raise FormError("subspace does not match the form's dimension")
    if v.dim == 0:
        return Subspace.full(form.n)
    rows = v.basis @ form.gram
    exact_rows = None
    if form.is_exact and v.exact_basis is not None:
        g = [list(r) for r in form.exact_gram]
        exact_rows = [[sum(b[k] * g[k][j] for k in range(form.n)) for j in range(form.n)]
                      for b in v.exact_basis]
    # the rank cut needs the form's scale as an absolute floor: the rows of
    # degenerate directions are pure rounding noise
    return kernel_subspace(rows, rank_tol, exact_rows=exact_rows,
                           scale_floor=form.scale())


def nullspace(form: MetricForm, rank_tol: float = RANK_RTOL) -> Subspace:
    """Kernel of the Gram matrix: vectors orthogonal to the whole space."""
    exact_rows = [list(r) for r in form.exact_gram] if form.is_exact else None
    return kernel_subspace(form.gram, rank_tol, exact_rows=exact_rows)


def restricted_gram(form: MetricForm, h: Subspace) -> np.ndarray:
    """Gram matrix of the form restricted to H, in H's orthonormal basis."""
    if h.ambient_dim != form.n:
        raise FormError("subspace does not match the form's dimension")
    return h.basis @ form.gram @ h.basis.T


def is_semidefinite(form: MetricForm, h: Subspace, rank_tol: float = RANK_RTOL) -> bool:
    """True when the restriction of the form to H has eigenvalues of one sign.

    Eigenvalues below rank_tol times the ambient form scale count as zero
    (the restricted entries of a degenerate restriction are pure rounding
    noise, so the cut needs an absolute reference).  For a semidefinite
    restriction the null cone of form|_H equals its nullspace (Schwarz
    inequality), which downstream code relies on.
    """
    if h.dim == 0:
        return True
    w = np.linalg.eigvalsh(restricted_gram(form, h))
    scale = max(float(np.max(np.abs(w))), form.scale())
    if scale == 0.0:
        return True
    cut = rank_tol * scale
    return bool(np.all(w >= -cut) or np.all(w <= cut))


def restriction_null_subspace(form: MetricForm, h: Subspace,
                              rank_tol: float = RANK_RTOL) -> Subspace:
    """The subspace {x in H : <x, y> = 0 for all y in H}, i.e. H meet H-perp."""
    if h.dim == 0:
        return Subspace.zero(form.n)
    if form.is_exact and h.exact_basis is not None:
        # kernel of the exact restricted Gram matrix, mapped back to ambient
        g = [list(r) for r in form.exact_gram]
        hb = [list(b) for b in h.exact_basis]
        rows = [[sum(bi[k] * g[k][l] * bj[l] for k in range(form.n) for l in range(form.n))
                 for bj in hb] for bi in hb]
        coeffs = exactlin.kernel(rows)
        exact_basis = tuple(
            tuple(sum(c[i] * hb[i][j] for i in range(len(hb))) for j in range(form.n))
            for c in coeffs)
        float_rows = np.asarray([[float(x) for x in b] for b in exact_basis], dtype=float)
        return Subspace.from_spanning(float_rows, ambient_dim=form.n,
                                      rank_tol=rank_tol, exact_basis=exact_basis)
    local = kernel_subspace(restricted_gram(form, h), rank_tol,
                            scale_floor=form.scale())
    return Subspace(form.n, local.basis @ h.basis)


def _eigensplit(form: MetricForm, h: Subspace, rank_tol: float):
    """Orthogonal eigen-directions of form|_H split by sign, in ambient coords.

    The zero cut is floored at the ambient form scale so that a degenerate
    restriction (entries of rounding-noise size) splits as all-null.
    """
    m = restricted_gram(form, h)
    w, q = np.linalg.eigh(m)
    scale = max(float(np.max(np.abs(w))), form.scale()) if w.size else 0.0
    cut = rank_tol * scale if scale > 0 else 0.0
    pos = [(w[i], q[:, i] @ h.basis) for i in range(len(w)) if w[i] > cut]
    neg = [(w[i], q[:, i] @ h.basis) for i in range(len(w)) if w[i] < -cut]
    nul = [q[:, i] @ h.basis for i in range(len(w)) if abs(w[i]) <= cut]
    return pos, neg, nul


def _polish_on_cone(form: MetricForm, x: np.ndarray, steps: int = 2) -> np.ndarray:
    """Newton steps toward <x,x> = 0 along the form-gradient direction."""
    for _ in range(steps):
        q = float(x @ form.gram @ x)
        g = 2.0 * form.gram @ x
        gg = float(g @ g)
        if gg == 0.0:
            break
        x = x - (q / gg) * g
    return x


def sample_null_cone(form: MetricForm, h: Subspace, count: int, radius: float,
                     seed: int, rank_tol: float = RANK_RTOL,
                     exclude_origin: bool = False) -> np.ndarray:
    """Deterministic sample of the null cone of form|_H, within a Euclidean ball.

    Mixes the canonical null combinations of an orthogonal eigenbasis
    (difference/sum of unit-positive and unit-negative directions, plus all
    degenerate directions) with seeded random rays rescaled onto the cone by
    solving the scalar quadratic along the ray.  For a semidefinite
    restriction the cone is the nullspace, so only nullspace points are
    returned.  Every returned x satisfies |<x,x>| <= 1e-12 * radius^2 and
    |x| <= radius.
    """
    if count < 0:
        raise FormError("count must be nonnegative")
    if radius <= 0:
        raise FormError("radius must be positive")
    if count == 0:
        return np.zeros((0, form.n))
    rng = np.random.default_rng(seed)
    pos, neg, nul = _eigensplit(form, h, rank_tol)
    points: list[np.ndarray] = []

    if not pos or not neg:
        # semidefinite: cone = nullspace of the restriction
        if not nul:
            if exclude_origin:
                raise EmptyNullConeError(
                    "the null cone is {0}; no nonzero points exist to sample")
            return np.zeros((count, form.n))
        nmat = np.asarray(nul)
        for _ in range(count):
            c = rng.standard_normal(len(nul))
            x = c @ nmat
            nx = np.linalg.norm(x)
            if nx > 0:
                x = x * (rng.uniform(0.2, 1.0) * radius / nx)
            points.append(x)
        return np.asarray(points)

    # canonical null combinations from the orthogonal eigenbasis
    wvecs = [v / np.sqrt(lam) for lam, v in pos]    # <w,w> = +1
    uvecs = [v / np.sqrt(-lam) for lam, v in neg]   # <u,u> = -1
    canonical = [wvecs[0] - ua for ua in uvecs]
    canonical += [uvecs[0] + wj for wj in wvecs]
    canonical += list(nul)
    for x in canonical:
        if len(points) >= count:
            break
        nx = np.linalg.norm(x)
        if nx > 0:
            x = x * (0.5 * radius / nx)
        x = _polish_on_cone(form, x)
        points.append(x)

    # seeded random rays: a in the positive span, b in the negative span,
    # quadratic <a + t b, a + t b> = Q(a) + t^2 Q(b) = 0 always has a root
    pmat = np.asarray([v for _, v in pos])
    nmat = np.asarray([v for _, v in neg])
    zmat = np.asarray(nul) if nul else None
    while len(points) < count:
        ca = rng.standard_normal(len(pos))
        cb = rng.standard_normal(len(neg))
        a = ca @ pmat
        b = cb @ nmat
        qa = float(a @ form.gram @ a)
        qb = float(b @ form.gram @ b)
        if qa <= 0 or qb >= 0:
            continue  # degenerate draw
        t = np.sqrt(-qa / qb)
        x = a + t * b
        if zmat is not None and rng.uniform() < 0.5:
            x = x + rng.standard_normal(len(nul)) @ zmat
        nx = np.linalg.norm(x)
        if nx == 0:
            continue
        x = x * (rng.uniform(0.05, 1.0) * radius / nx)
        x = _polish_on_cone(form, x)
        if np.linalg.norm(x) <= radius:
            points.append(x)
    return np.asarray(points)


@dataclass(frozen=True)
class ConePrediction:
    """Predicted set of radial limit directions of a null cone at one of
    its points: the whole cone, the tangent hyperplane of the cone at the
    point, or (semidefinite case) the nullspace."""

    kind: str  # "whole_cone" | "tangent_hyperplane" | "nullspace"
    subspace: Subspace | None = None


def predicted_radial_directions(form: MetricForm, y, rank_tol: float = RANK_RTOL) -> ConePrediction:
    """Radial limit directions of the cone {<x,x> = 0} at a cone point y."""
    y = np.asarray(y, dtype=float)
    if y.shape != (form.n,):
        raise FormError("point dimension does not match the form")
    scale = form.scale() * max(1.0, float(y @ y))
    if abs(float(y @ form.gram @ y)) > 1e-8 * scale:
        raise FormError("point is not on the null cone of the form")
    semidef = is_semidefinite(form, Subspace.full(form.n), rank_tol)
    null = nullspace(form, rank_tol)
    if semidef:
        return ConePrediction("nullspace", null)
    gy = form.gram @ y
    if float(np.linalg.norm(gy)) <= rank_tol * scale * (1.0 + np.linalg.norm(y)):
        return ConePrediction("whole_cone", None)
    return ConePrediction("tangent_hyperplane", kernel_subspace(gy.reshape(1, -1), rank_tol))
