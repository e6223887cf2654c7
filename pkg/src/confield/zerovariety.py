"""Numerical zero-set discovery and geometric certification.

Finds zeros of a conformal field by damped Newton iteration from seeded
starts, compares the sample two-sidedly against the predicted local model
(affine subspace or null cone in a subspace), detects quadric singular
points by multi-scale local PCA, certifies codimension parity and total
umbilicity of components, estimates radial limit directions, and builds
the two-dimensional product counterexample showing the n >= 3 hypothesis
of the classification is sharp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import exactlin, flatfield, forms
from .flatfield import (ConformalFieldParams, FieldError, PointClassification,
                        PreconditionError, ZeroModel, evaluate, evaluate_many,
                        gradient_many, conformal_factor_many)
from .forms import MetricForm, Subspace
from .tolerances import DEDUPE_RRADIUS, LINKING_RRADIUS, PHI_SPREAD_RTOL, RANK_RTOL


class InsufficientSampleError(RuntimeError):
    """The sample is too sparse for the requested geometric test."""


class UnstableEstimateError(RuntimeError):
    """A local dimension estimate did not stabilize."""


class DirectionOscillationError(RuntimeError):
    """A normalized difference sequence has no limit direction."""


@dataclass(frozen=True)
class ZeroSample:
    """Accepted zeros inside a search box, with re-checked residuals."""

    points: np.ndarray     # (m, n)
    residuals: np.ndarray  # (m,)
    seeds_used: int
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "residuals", np.asarray(self.residuals, dtype=float))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def size(self) -> int:
        return self.points.shape[0]


def newton_zero_search(eval_fn, jac_fn, starts: np.ndarray, *,
                       max_iter: int = 60, max_halvings: int = 20,
                       rank_tol: float = RANK_RTOL) -> np.ndarray:
    """Damped Newton iteration, vectorized over all starts.

    Steps solve the local linear model with a pseudo-inverse at the shared
    rank tolerance; a step is halved (up to max_halvings times) until the
    residual norm does not increase.  Returns the final iterates; the
    caller decides acceptance.
    """
    x = np.array(starts, dtype=float)
    active = np.ones(len(x), dtype=bool)
    for _ in range(max_iter):
        if not np.any(active):
            break
        xa = x[active]
        f = eval_fn(xa)
        fn = np.linalg.norm(f, axis=1)
        jac = jac_fn(xa)
        pinv = np.linalg.pinv(jac, rcond=rank_tol)
        step = -np.einsum("mij,mj->mi", pinv, f)
        alpha = np.ones(len(xa))
        for _ in range(max_halvings):
            trial = xa + alpha[:, None] * step
            tn = np.linalg.norm(eval_fn(trial), axis=1)
            worse = tn > fn * (1.0 - 0.25 * alpha) + 1e-300
            if not np.any(worse):
                break
            alpha[worse] *= 0.5
        moved = alpha[:, None] * step
        xa = xa + moved
        x[active] = xa
        quiet = (np.linalg.norm(moved, axis=1)
                 < 1e-15 * (1.0 + np.max(np.abs(xa), axis=1)))
        idx = np.flatnonzero(active)
        active[idx[quiet]] = False
    return x


def _dedupe(points: np.ndarray, residuals: np.ndarray, radius: float):
    """Keep the first point of every cluster of separation < radius.

    Exact duplicates are collapsed on a fine grid first so that coincident
    Newton limits (e.g. thousands of seeds landing on one vertex) do not
    blow up the pairwise stage.
    """
    if len(points) == 0:
        return points, residuals
    cells: dict = {}
    for i in range(len(points)):
        key = tuple(np.floor(points[i] / (0.25 * radius)).astype(np.int64).tolist())
        if key not in cells:
            cells[key] = i
    idx0 = np.array(sorted(cells.values()), dtype=int)
    pts = points[idx0]

    from scipy.spatial import cKDTree

    tree = cKDTree(pts)
    killed = np.zeros(len(pts), dtype=bool)
    keep = []
    for i in range(len(pts)):
        if killed[i]:
            continue
        keep.append(i)
        for j in tree.query_ball_point(pts[i], radius):
            if j > i:
                killed[j] = True
    idx = idx0[np.array(keep, dtype=int)]
    return points[idx], residuals[idx]


def find_zeros(p: ConformalFieldParams, center, radius: float,
               n_seeds: int, seed: int) -> ZeroSample:
    """Newton zero search from uniform seeds in the box center +- radius.

    Two passes share the seeds.  The plain damped Newton pass finds the
    dominant-basin zeros.  A second pass augments the system with one
    least-squares anchor row pinning each iterate to its seed's sphere
    shell about the box center; this removes the radial escape direction
    (on a scale-invariant zero variety the exact Newton step is -x/2, so
    without the anchor every orbit drains into the vertex) and spreads the
    accepted zeros across positive-dimensional components.  Acceptance is
    by the zero tolerance on |v| alone, re-checked with the compensated
    evaluator; points deduplicate at 1e-6 * radius.  Deterministic for a
    fixed seed; an empty sample is a valid result.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if n_seeds < 1:
        raise ValueError("need at least one seed")
    center = np.asarray(center, dtype=float)
    rng = np.random.default_rng(seed)
    starts = center[None, :] + rng.uniform(-radius, radius, size=(n_seeds, p.n))
    plain = newton_zero_search(lambda xs: evaluate_many(p, xs),
                               lambda xs: gradient_many(p, xs), starts)

    # log-uniform anchor shells cover every dyadic scale down to radius/128,
    # so positive-dimensional components get sampled near their vertices too
    shell_r = radius * 2.0 ** (-7.0 * rng.uniform(size=n_seeds))
    shell_r2 = shell_r ** 2
    weight = p.param_scale()

    def eval_anchored(xs):
        d2 = np.sum((xs - center[None, :]) ** 2, axis=1)
        anchor = 0.5 * weight * (d2 - shell_r2[: len(xs)])
        return np.column_stack([evaluate_many(p, xs), anchor])

    def jac_anchored(xs):
        jac = gradient_many(p, xs)
        rows = weight * (xs - center[None, :])
        return np.concatenate([jac, rows[:, None, :]], axis=1)

    anchored = newton_zero_search(eval_anchored, jac_anchored, starts)
    # release the anchor and let plain Newton finish the local convergence;
    # second-order-flat directions converge at rate 1/2 and need extra
    # iterations, so only near-misses are worth polishing
    finals = np.vstack([plain, anchored])
    loose = 1e-2 * (1.0 + np.linalg.norm(finals, axis=1)) * weight
    finals = finals[np.linalg.norm(evaluate_many(p, finals), axis=1) <= loose]
    if len(finals):
        finals = newton_zero_search(lambda xs: evaluate_many(p, xs),
                                    lambda xs: gradient_many(p, xs), finals,
                                    max_iter=150)
    inside = np.all(np.abs(finals - center[None, :]) <= radius * (1 + 1e-12), axis=1)
    finals = finals[inside]
    if len(finals):
        res = np.linalg.norm(evaluate_many(p, finals), axis=1)
        tols = np.array([flatfield.zero_tolerance(p, x) for x in finals])
        finals = finals[res <= tols]
    if len(finals):
        # quiescence gate: a candidate still taking visible Newton steps has
        # not converged geometrically; flat directions make residual-small
        # weaker than distance-small, so reject it even at passing residual
        jac = gradient_many(p, finals)
        pinv = np.linalg.pinv(jac, rcond=RANK_RTOL)
        nxt = np.linalg.norm(
            np.einsum("mij,mj->mi", pinv, evaluate_many(p, finals)), axis=1)
        quiet = nxt <= np.maximum(1e-8 * radius,
                                  1e-11 * (1.0 + np.linalg.norm(finals, axis=1)))
        finals = finals[quiet]
    res = np.array([float(np.linalg.norm(evaluate(p, x))) for x in finals]) \
        if len(finals) else np.zeros(0)
    pts, rs = _dedupe(finals, res, DEDUPE_RRADIUS * radius)
    return ZeroSample(pts, rs, n_seeds, center, radius)


def model_distances(model: ZeroModel, xs: np.ndarray) -> np.ndarray:
    """Vectorized upper bounds on distances from points to the model set."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    y = xs - model.base_point[None, :]
    sub = model.subspace
    if model.kind == "subspace":
        return np.linalg.norm(y - y @ sub.basis.T @ sub.basis, axis=1)
    if model.semidefinite:
        npart = model.null_part()
        return np.linalg.norm(y - y @ npart.basis.T @ npart.basis, axis=1)
    g = model.metric.gram
    ph = sub.basis.T @ sub.basis
    pos, neg, _ = flatfield._eigensplit_cached(model.metric, sub)
    pa = np.sum([np.outer(v, v) for _, v in pos], axis=0)
    pb = np.sum([np.outer(v, v) for _, v in neg], axis=0)
    npart = model.null_part()
    pv = npart.basis.T @ npart.basis

    def polish(zk, steps):
        for _ in range(steps):
            zk = zk @ ph
            q = np.einsum("ij,jk,ik->i", zk, g, zk)
            grad = 2.0 * (zk @ g) @ ph
            gg = np.einsum("ij,ij->i", grad, grad)
            safe = gg > 0
            coef = np.where(safe, q / np.where(safe, gg, 1.0), 0.0)
            zk = zk - coef[:, None] * grad
        return zk

    candidates = [np.zeros_like(y), y @ pv]
    a = y @ pa
    b = y @ pb
    qa = np.einsum("ij,jk,ik->i", a, g, a)
    qb = np.einsum("ij,jk,ik->i", b, g, b)
    valid = (qa > 0) & (qb < 0)
    t = np.sqrt(np.where(valid, -qa / np.where(valid, qb, -1.0), 0.0))
    ray = a + t[:, None] * b + (y @ ph - a - b)
    candidates.append(np.where(valid[:, None], ray, 0.0))
    candidates.append(polish(y @ ph, 50))

    best = np.full(len(y), np.inf)
    gscale = model.metric.scale()
    for cand in candidates:
        cand = polish(cand, 4)
        q = np.einsum("ij,jk,ik->i", cand, g, cand)
        nrm2 = np.einsum("ij,ij->i", cand, cand)
        off_h = np.linalg.norm(cand - cand @ ph, axis=1)
        ok = (off_h <= 1e-9 * (1.0 + np.sqrt(nrm2))) & (
            np.abs(q) <= 1e-9 * gscale * np.maximum(nrm2, 1e-300))
        d = np.linalg.norm(y - cand, axis=1)
        best = np.where(ok, np.minimum(best, d), best)
    return best


@dataclass(frozen=True)
class ModelComparisonReport:
    """Two-sided certification of zero sample against predicted model."""

    subset_max_distance: float
    subset_passed: bool
    subset_witnesses: np.ndarray
    superset_max_distance: float
    superset_passed: bool
    superset_witnesses: np.ndarray
    tolerance: float
    probes: int
    passed: bool


def compare_to_model(sample: ZeroSample, model: ZeroModel,
                     p: ConformalFieldParams, tol: float,
                     probes: int = 1000, seed: int = 7) -> ModelComparisonReport:
    """Certify sample-subset-of-model and model-subset-of-zero-set.

    Subset: every sample point lies within tol * radius of the model set
    (affine distance, or cone distance by ray rescaling plus alternating
    projection).  Superset: Newton started from each of `probes` seeded
    model points converges to a zero within tol * radius.
    """
    radius = sample.radius
    cut = tol * radius
    if sample.size:
        dists = model_distances(model, sample.points)
        sub_max = float(np.max(dists))
        bad = sample.points[dists > cut]
    else:
        sub_max, bad = 0.0, np.zeros((0, p.n))
    subset_ok = sub_max <= cut

    starts = model.sample_points(probes, radius, seed)
    finals = newton_zero_search(lambda xs: evaluate_many(p, xs),
                                lambda xs: gradient_many(p, xs), starts)
    moved = np.linalg.norm(finals - starts, axis=1)
    res = np.linalg.norm(evaluate_many(p, finals), axis=1)
    tols = np.array([flatfield.zero_tolerance(p, x) for x in finals])
    ok = (moved <= cut) & (res <= tols)
    sup_max = float(np.max(moved)) if len(moved) else 0.0
    sup_bad = starts[~ok]
    return ModelComparisonReport(sub_max, subset_ok, bad[:5],
                                 sup_max, bool(np.all(ok)), sup_bad[:5],
                                 tol, probes, subset_ok and bool(np.all(ok)))


def label_components(sample: ZeroSample,
                     linking_radius: float | None = None) -> list[np.ndarray]:
    """Single-linkage clustering of the sample at the linking radius."""
    if sample.size == 0:
        return []
    from scipy.spatial import cKDTree

    if linking_radius is None:
        linking_radius = LINKING_RRADIUS * sample.radius
    parent = list(range(sample.size))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    tree = cKDTree(sample.points)
    for i, j in tree.query_pairs(linking_radius):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(sample.size):
        groups.setdefault(find(i), []).append(i)
    return [np.array(groups[k], dtype=int) for k in sorted(groups)]


@dataclass(frozen=True)
class DivergenceReport:
    """Conformal-factor constancy per connected sample component."""

    component_sizes: list[int]
    phi_spreads: list[float]
    tolerance: float
    ambiguous_components: list[int]
    passed: bool


def divergence_constancy(sample: ZeroSample, p: ConformalFieldParams) -> DivergenceReport:
    """div v = n phi / 2 must be constant on each component of the zero set;
    checked as the spread of phi over each metric cluster of the sample."""
    if sample.size == 0:
        raise PreconditionError("empty sample")
    comps = label_components(sample)
    scale = p.param_scale() * (1.0 + float(np.max(np.abs(sample.points))) ** 2)
    tol = PHI_SPREAD_RTOL * scale
    spreads, sizes, ambiguous = [], [], []
    phis = conformal_factor_many(p, sample.points)
    for ci, idx in enumerate(comps):
        vals = phis[idx]
        spread = float(np.max(vals) - np.min(vals))
        spreads.append(spread)
        sizes.append(int(len(idx)))
        if spread > tol:
            # re-cluster finer: if the failure dissolves, the linking radius
            # was spanning two model components
            finer = label_components(
                ZeroSample(sample.points[idx], sample.residuals[idx],
                           sample.seeds_used, sample.center, sample.radius),
                0.1 * LINKING_RRADIUS * sample.radius)
            if all(float(np.max(phis[idx][g]) - np.min(phis[idx][g])) <= tol
                   for g in finer):
                ambiguous.append(ci)
    passed = all(s <= tol for i, s in enumerate(spreads) if i not in ambiguous)
    return DivergenceReport(sizes, spreads, tol, ambiguous,
                            passed and not ambiguous)


def _local_pca_ratios(points: np.ndarray, x: np.ndarray, tree, scales,
                      expected_dim: int, min_neighbors: int, cap: int = 64):
    """Hyperplane-fit quality sigma_{d+1}/sigma_d of neighbor offsets at
    each usable scale (largest to smallest).  Neighborhoods are capped at
    the nearest `cap` points; the statistic only needs the local shape."""
    ratios = []
    for r in scales:  # finest scale first; two usable scales decide the flag
        sel = np.asarray(tree.query_ball_point(x, r), dtype=int)
        offs = points[sel] - x[None, :]
        offs = offs[np.linalg.norm(offs, axis=1) > 0]
        if len(offs) < max(min_neighbors, expected_dim + 2):
            continue
        if len(offs) > cap:
            # deterministic thinning that preserves the ball's spatial extent
            offs = offs[:: int(np.ceil(len(offs) / cap))]
        sv = np.linalg.svd(offs, compute_uv=False)
        if expected_dim >= len(sv) or sv[expected_dim - 1] == 0:
            ratios.append(1.0)
        else:
            ratios.append(float(sv[expected_dim] / sv[expected_dim - 1]))
        if len(ratios) >= 2:
            break
    return ratios


@dataclass(frozen=True)
class SingularSetReport:
    """Per-point singularity flags from multi-scale tangent-fit stability.

    ``checked`` holds the indices of sample points actually evaluated (all
    points near the predicted singular set plus a deterministic spread of
    the rest); ``flags`` and ``usable`` align with it.
    """

    checked: np.ndarray
    flags: np.ndarray
    usable: np.ndarray
    dist_to_singular_set: np.ndarray
    vertex_margin: float
    n_near: int
    n_flagged: int
    n_off_checked: int
    flagged_have_smooth_neighbors: bool
    passed: bool


def singular_set_check(sample: ZeroSample, cls: PointClassification,
                       tol: float | None = None, min_neighbors: int = 6,
                       max_near_checked: int = 800,
                       max_off_checked: int = 2500) -> SingularSetReport:
    """Detect quadric singular points of the sampled zero set.

    Case ii: points near the predicted singular set (base + model-space
    nullspace) must fail the hyperplane-fit test at the finest usable
    scales while points away from it must pass it, and every flagged point
    must have nonsingular sample points nearby (singular points are limits
    of nonsingular ones).  Case iii: no point may be flagged.

    `tol` is the vertex proximity margin; it defaults to the finest PCA
    scale (radius / 64), which is where the flag boundary genuinely sits.
    Points inside 0.5 * tol must flag, points beyond 1.5 * tol must not;
    the band in between is the finite-sample crossover and is left
    unconstrained.
    """
    if cls.case not in ("ii", "iii"):
        raise PreconditionError("singular-set check applies to cases ii and iii")
    if sample.size == 0:
        raise InsufficientSampleError("empty sample; request more seeds")
    from scipy.spatial import cKDTree

    if tol is None:
        tol = sample.radius / 64.0
    model = cls.model
    if cls.case == "ii":
        expected_dim = model.subspace.dim - 1
    else:
        expected_dim = model.null_part().dim
    vset = model.null_part()
    pv = vset.basis.T @ vset.basis if vset.dim else np.zeros((len(cls.point),) * 2)
    offs = sample.points - cls.point[None, :]
    dist_v = np.linalg.norm(offs - offs @ pv, axis=1)
    near = dist_v <= tol
    core = dist_v <= 0.5 * tol
    off = dist_v > 1.5 * tol

    if expected_dim == 0:
        checked = np.arange(sample.size)
        flags = np.zeros(sample.size, dtype=bool)
        usable = np.ones(sample.size, dtype=bool)
        return SingularSetReport(checked, flags, usable, dist_v, tol,
                                 int(np.sum(near)), 0, int(np.sum(off)), True,
                                 cls.case == "iii" or bool(np.all(near)))

    near_idx = np.flatnonzero(near)
    if len(near_idx) > max_near_checked:
        keep = near_idx[:: int(np.ceil(len(near_idx) / max_near_checked))]
        near_idx = np.union1d(keep, [near_idx[int(np.argmin(dist_v[near_idx]))]])
    off_idx = np.flatnonzero(off)
    if len(off_idx) > max_off_checked:
        off_idx = off_idx[:: int(np.ceil(len(off_idx) / max_off_checked))]
    checked = np.union1d(near_idx, off_idx)

    tree = cKDTree(sample.points)
    scales = [sample.radius * 0.5 ** k for k in range(6, 1, -1)]  # finest first
    flags = np.zeros(len(checked), dtype=bool)
    usable = np.zeros(len(checked), dtype=bool)
    for row, i in enumerate(checked):
        ratios = _local_pca_ratios(sample.points, sample.points[i], tree, scales,
                                   expected_dim, min_neighbors)
        if len(ratios) < 2:
            continue
        usable[row] = True
        flags[row] = min(ratios[:2]) > 0.5
    if np.sum(usable) < max(8, 0.5 * len(checked)):
        raise InsufficientSampleError(
            "too few points with populated neighborhoods; request more seeds")

    n_near = int(np.sum(near))
    if cls.case == "ii" and n_near == 0:
        raise InsufficientSampleError(
            "no sample points near the predicted singular set; request more seeds")
    core_checked = core[checked]
    off_checked = off[checked]
    if cls.case == "ii":
        consistent = bool(np.all(flags[usable & core_checked])
                          and not np.any(flags[usable & off_checked])
                          and np.any(usable & core_checked))
    else:
        consistent = not bool(np.any(flags[usable]))

    limits_ok = True
    if np.any(flags):
        smooth_pts = sample.points[checked[usable & ~flags]]
        if len(smooth_pts) == 0:
            limits_ok = False
        else:
            stree = cKDTree(smooth_pts)
            dmax = max(float(stree.query(sample.points[i])[0])
                       for i in checked[flags])
            limits_ok = dmax <= 0.25 * sample.radius
    return SingularSetReport(checked, flags, usable, dist_v, tol, n_near,
                             int(np.sum(flags)), int(np.sum(off_checked)),
                             limits_ok, consistent and limits_ok)


def estimate_local_dim(offsets: np.ndarray, tau: float = 0.3) -> int:
    """Dimension estimate: singular directions above tau * sigma_1.

    Curvature directions shrink linearly with the neighborhood scale while
    true tangent directions track it, so taking this count at fine scales
    (and minimizing over scales, which the caller does) separates the two.
    """
    sv = np.linalg.svd(offsets, compute_uv=False)
    if len(sv) == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv >= tau * sv[0]))


@dataclass(frozen=True)
class ParityReport:
    """Estimated component codimension and the parity verdict."""

    estimated_dim: int
    estimated_codim: int
    even: bool
    exemption_taken: bool
    null_certified: bool | None
    geodesic_certified: bool | None
    passed: bool


def codimension_parity_check(cls: PointClassification, sample: ZeroSample,
                             p: ConformalFieldParams | None = None,
                             seed: int = 5) -> ParityReport:
    """Component codimensions are even, unless the component is an affine
    null totally geodesic subspace (then any codimension is allowed but the
    null and geodesic properties are themselves certified)."""
    if sample.size == 0:
        raise InsufficientSampleError("empty sample")
    from scipy.spatial import cKDTree

    model = cls.model
    vset = model.null_part()
    tree = cKDTree(sample.points)
    margin = sample.radius / 16.0
    scales = [sample.radius * 0.5 ** k for k in range(6, 1, -1)]  # finest first
    votes = []
    for i, x in enumerate(sample.points):
        if cls.case == "ii" and vset.distance(x - cls.point) <= margin:
            continue
        counts = []
        for r in scales:
            idx = tree.query_ball_point(x, r)
            offs = sample.points[idx] - x[None, :]
            offs = offs[np.linalg.norm(offs, axis=1) > 0]
            if len(offs) < 4:
                continue
            if len(offs) > 64:
                offs = offs[:: int(np.ceil(len(offs) / 64))]
            counts.append(estimate_local_dim(offs))
            if len(counts) >= 2:
                break
        if counts:
            votes.append(min(counts))
        if len(votes) >= 60:
            break
    if not votes:
        # a zero-dimensional component (isolated point) has no neighbors
        if sample.size == 1 or model.analytic_dim() == 0:
            votes = [0]
        else:
            raise InsufficientSampleError("no populated neighborhoods for dimension fit")
    vals, counts = np.unique(votes, return_counts=True)
    dim = int(vals[np.argmax(counts)])
    if float(np.max(counts)) < 0.8 * len(votes):
        raise UnstableEstimateError(f"dimension votes disagree: {dict(zip(vals, counts))}")
    n = model.base_point.shape[0]
    codim = n - dim
    even = codim % 2 == 0
    exemption = model.is_null_affine()
    if not exemption:
        return ParityReport(dim, codim, even, False, None, None, even)
    carrier = model.null_part()
    if carrier.dim:
        gram = forms.restricted_gram(model.metric, carrier)
        null_ok = float(np.max(np.abs(gram))) <= 1e-12 * model.metric.scale()
    else:
        null_ok = True
    geod_ok = True
    if p is not None:
        geod_ok = totally_geodesic_check(model, p, seed=seed).passed
    return ParityReport(dim, codim, even, True, null_ok, geod_ok,
                        null_ok and geod_ok)


@dataclass(frozen=True)
class GeodesicContainmentReport:
    """Radial lines through model points stay in the zero set."""

    max_residual: float
    exact: bool
    passed: bool


def totally_geodesic_check(model: ZeroModel, p: ConformalFieldParams,
                           count: int = 50, seed: int = 5) -> GeodesicContainmentReport:
    """Certify an affine model component is totally geodesic: each radial
    line through a model point is contained in the zero set.  In exact mode
    the containment is verified in rational arithmetic."""
    carrier = model.null_part() if model.kind == "cone" else model.subspace
    z = model.base_point
    if carrier.dim == 0:
        return GeodesicContainmentReport(0.0, p.is_exact, True)
    exact = (p.is_exact and carrier.exact_basis is not None
             and exactlin.is_exact_array(z))
    if exact:
        from fractions import Fraction

        zq = [Fraction(int(t)) for t in z]
        for b in carrier.exact_basis:
            for t in (Fraction(1, 3), Fraction(-2, 5), Fraction(7, 2)):
                pt = [zq[i] + t * b[i] for i in range(p.n)]
                val = flatfield.evaluate_exact(p, pt)
                if any(x != 0 for x in val):
                    return GeodesicContainmentReport(float(max(abs(float(x)) for x in val)),
                                                     True, False)
        return GeodesicContainmentReport(0.0, True, True)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        coeff = rng.standard_normal(carrier.dim)
        direction = coeff @ carrier.basis
        for t in np.linspace(-1.0, 1.0, 11):
            x = z + t * direction
            worst = max(worst, float(np.linalg.norm(evaluate(p, x))))
    tol = flatfield.zero_tolerance(p, z + np.ones(p.n))
    return GeodesicContainmentReport(worst, False, worst <= tol)


class ModelSurface:
    """Chart provider for a smooth point of a ZeroModel set."""

    def __init__(self, model: ZeroModel):
        self.model = model

    def chart(self, x0):
        """(chi, tangent_rows) with chi(0) = x0 and chi(s) on the model set."""
        model = self.model
        x0 = np.asarray(x0, dtype=float)
        y0 = x0 - model.base_point
        if model.kind == "subspace" or model.semidefinite:
            carrier = model.subspace if model.kind == "subspace" else model.null_part()
            tangent = carrier.basis

            def chi(s):
                return model.base_point + carrier.project(y0) + np.asarray(s) @ tangent

            return chi, tangent
        h = model.subspace
        gy = model.metric.gram @ y0
        if float(np.linalg.norm(model.null_part().project(y0) - y0)) < 1e-12 or \
                float(np.linalg.norm(h.project(gy))) <= 1e-10 * model.metric.scale() * float(np.linalg.norm(y0)):
            raise PreconditionError("chart requested at a singular model point")
        rows = np.vstack([np.eye(len(y0)) - h.basis.T @ h.basis, gy[None, :]])
        tangent = forms.kernel_subspace(rows).basis
        if tangent.shape[0] != h.dim - 1:
            raise PreconditionError("tangent fit is rank-deficient at this point")

        def chi(s):
            q = y0 + np.asarray(s) @ tangent
            return model.base_point + model._polish_in_carrier(q, steps=8)

        return chi, tangent


class GraphSurface:
    """Explicit graph x_n = f(x_1..x_{n-1}) over the coordinate hyperplane."""

    def __init__(self, fn, n: int):
        self.fn = fn
        self.n = n

    def chart(self, x0):
        x0 = np.asarray(x0, dtype=float)
        n = self.n

        def chi(s):
            s = np.asarray(s, dtype=float)
            base = x0[: n - 1] + s
            out = np.empty(n)
            out[: n - 1] = base
            out[n - 1] = self.fn(base)
            return out

        eps = 1e-6
        rows = []
        for i in range(n - 1):
            e = np.zeros(n - 1)
            e[i] = eps
            rows.append((chi(e) - chi(-e)) / (2 * eps))
        return chi, np.asarray(rows)


@dataclass(frozen=True)
class SecondFundamentalForm:
    """Quotient-valued symmetric 2-form at one surface point."""

    values: np.ndarray    # (d, d, n), tangent components removed
    tangent: np.ndarray   # (d, n)
    induced_metric: np.ndarray  # (d, d), metric products of tangent rows


def second_fundamental_form(surface, x0, metric: MetricForm,
                            h: float = 1e-3) -> SecondFundamentalForm:
    """Second central differences of a surface chart, projected to the
    quotient of the ambient space by the tangent fit.

    The ambient connection is flat, so the covariant acceleration of the
    coordinate curves is the ordinary second derivative; step-h central
    differences carry an O(h^2) discretization error.
    """
    chi, tangent = surface.chart(x0)
    d = tangent.shape[0]
    if d == 0:
        raise PreconditionError("surface has no tangent directions at this point")
    tq, _ = np.linalg.qr(tangent.T)
    proj_out = np.eye(tangent.shape[1]) - tq @ tq.T

    def dd(i, j):
        ei = np.zeros(d)
        ei[i] = 1.0
        ej = np.zeros(d)
        ej[j] = 1.0
        if i == j:
            return (chi(h * ei) - 2.0 * chi(np.zeros(d)) + chi(-h * ei)) / h ** 2
        return (chi(h * (ei + ej)) - chi(h * (ei - ej))
                - chi(h * (ej - ei)) + chi(-h * (ei + ej))) / (4.0 * h ** 2)

    vals = np.empty((d, d, tangent.shape[1]))
    for i in range(d):
        for j in range(i, d):
            w = proj_out @ dd(i, j)
            vals[i, j] = w
            vals[j, i] = w
    g_k = tangent @ metric.gram @ tangent.T
    return SecondFundamentalForm(vals, tangent, g_k)


@dataclass(frozen=True)
class UmbilicityReport:
    """Least-squares fit of b = g_K (x) nu over test points."""

    max_residual: float
    residuals: list[float]
    passed: bool


def umbilicity_check(surface, points, metric: MetricForm, h: float = 1e-3,
                     tol: float = 1e-4) -> UmbilicityReport:
    """At each test point, solve for the quotient vector nu minimizing
    |b - g_K (x) nu| and report the worst relative residual.

    Null tangent fits (induced metric essentially zero) are rejected; those
    components carry no umbilicity content beyond being totally geodesic
    and must be routed to the geodesic containment check."""
    residuals = []
    for x0 in points:
        sff = second_fundamental_form(surface, x0, metric, h)
        g_k = sff.induced_metric
        gnorm = float(np.linalg.norm(g_k))
        if gnorm <= 1e-8 * metric.scale():
            raise PreconditionError(
                "induced metric is null at a test point; use the totally "
                "geodesic check for null components")
        b = sff.values
        nu = np.einsum("ij,ijk->k", g_k, b) / float(np.sum(g_k * g_k))
        fit = b - g_k[:, :, None] * nu[None, None, :]
        bnorm = float(np.linalg.norm(b))
        denom = max(bnorm, gnorm * max(float(np.linalg.norm(nu)), h))
        residuals.append(float(np.linalg.norm(fit)) / denom)
    worst = max(residuals) if residuals else 0.0
    return UmbilicityReport(worst, residuals, worst <= tol)


@dataclass(frozen=True)
class ConnectingLimitReport:
    """Estimated limit direction of normalized difference vectors."""

    direction: np.ndarray
    last_increment: float
    converged: bool
    limit_point: np.ndarray


def connecting_limit_estimate(x_seq, y_seq,
                              angle_tol: float = 1e-4) -> ConnectingLimitReport:
    """Limit of (y_j - x_j)/|y_j - x_j| for two sequences converging to a
    common point, reported projectively with the final angular Cauchy
    increment.  Raises on oscillating directions."""
    xs = np.asarray(x_seq, dtype=float)
    ys = np.asarray(y_seq, dtype=float)
    if xs.shape != ys.shape or len(xs) < 3:
        raise ValueError("need two equally long sequences of at least 3 points")
    z = xs[-1]
    rx = np.linalg.norm(xs - z[None, :], axis=1)
    ry = np.linalg.norm(ys - z[None, :], axis=1)
    for r in (rx, ry):
        tail = r[:-1]
        nz = tail[tail > 0]
        if len(nz) >= 2 and not np.all(nz[1:] <= 0.95 * nz[:-1] + 1e-30):
            raise ValueError("sequence does not decay geometrically to the "
                             "common limit point")
    diffs = ys - xs
    norms = np.linalg.norm(diffs, axis=1)
    if np.any(norms == 0):
        raise ValueError("sequences must stay distinct")
    dirs = diffs / norms[:, None]
    for j in range(1, len(dirs)):
        if float(dirs[j] @ dirs[j - 1]) < 0:
            dirs[j] = -dirs[j]
    dots = np.clip(np.abs(np.einsum("ij,ij->i", dirs[1:], dirs[:-1])), 0.0, 1.0)
    increments = np.arccos(dots)
    last = float(increments[-1])
    if last > 0.05 and len(increments) >= 3 and increments[-1] >= increments[-3]:
        raise DirectionOscillationError(
            f"direction increments oscillate (last = {last:.3f} rad)")
    return ConnectingLimitReport(dirs[-1], last, last < angle_tol, z)


def _cone_direction_angle(model: ZeroModel, direction: np.ndarray) -> float:
    """Angle from a unit direction to the nearest model-cone direction."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    target = model._polish_in_carrier(d, steps=8)
    tn = np.linalg.norm(target)
    if tn == 0:
        return float(np.pi / 2)
    cosang = abs(float(d @ target) / tn)
    return float(np.arccos(min(1.0, cosang)))


@dataclass(frozen=True)
class RadialAuditReport:
    """Estimated radial limit directions against the cone predictions."""

    vertex_max_cone_angle: float
    vertex_span_dim: int
    expected_span_dim: int
    offvertex_max_angle: float
    n_vertex_dirs: int
    n_offvertex_targets: int
    passed: bool


def radial_direction_audit(p: ConformalFieldParams, cls: PointClassification,
                           seed: int, radius: float = 1.0,
                           n_vertex_dirs: int = 48, n_offvertex: int = 6,
                           angle_tol: float = 1e-4) -> RadialAuditReport:
    """Estimate radial limit directions of the zero set by shrinking Newton
    sequences and compare them with the model predictions.

    At the base zero the directions must all be cone directions and must
    span the full model space; at an off-vertex zero y they must lie in the
    intersection of the model space with the orthogonal complement of y.
    """
    if cls.case not in ("ii", "iii"):
        raise PreconditionError("radial audit applies to essential cases")
    model = cls.model
    z = cls.point
    rng = np.random.default_rng(seed)

    def zero_near(start):
        # anchored refinement (fixed sphere shell about z) so the iterate
        # converges laterally onto the zero set instead of sliding radially
        r2 = float((start - z) @ (start - z))
        w = p.param_scale()

        def ev(xs):
            anchor = 0.5 * w * (np.sum((xs - z[None, :]) ** 2, axis=1) - r2)
            return np.column_stack([evaluate_many(p, xs), anchor])

        def ja(xs):
            return np.concatenate([gradient_many(p, xs),
                                   (w * (xs - z[None, :]))[:, None, :]], axis=1)

        final = newton_zero_search(ev, ja, start[None, :])[0]
        if float(np.linalg.norm(evaluate(p, final))) > flatfield.zero_tolerance(p, final):
            final = newton_zero_search(lambda xs: evaluate_many(p, xs),
                                       lambda xs: gradient_many(p, xs),
                                       final[None, :], max_iter=150)[0]
        if float(np.linalg.norm(evaluate(p, final))) > flatfield.zero_tolerance(p, final):
            return None
        return final

    # vertex sequences: shrink toward the base zero along fixed cone rays
    dirs = []
    ray_targets = model.sample_points(4 * n_vertex_dirs, radius, seed)
    for target in ray_targets:
        ray = target - z
        nr = np.linalg.norm(ray)
        if nr < 1e-3 * radius:
            continue
        ray = ray / nr
        seq = []
        for j in range(3, 15):
            y = zero_near(z + (0.5 ** j) * radius * ray)
            if y is None or np.linalg.norm(y - z) < 1e-13:
                break
            seq.append(y)
        if len(seq) < 6:
            continue
        try:
            rep = connecting_limit_estimate(np.tile(z, (len(seq), 1)), np.asarray(seq))
        except (ValueError, DirectionOscillationError):
            continue
        if rep.converged:
            dirs.append(rep.direction)
        if len(dirs) >= n_vertex_dirs:
            break
    if len(dirs) < max(4, model.subspace.dim):
        raise InsufficientSampleError("too few convergent vertex sequences")
    dirs = np.asarray(dirs)
    vertex_angle = max(_cone_direction_angle(model, d) for d in dirs)
    sv = np.linalg.svd(dirs, compute_uv=False)
    span_dim = int(np.sum(sv > 1e-4 * sv[0]))
    expected = model.subspace.dim if not model.semidefinite else model.null_part().dim

    # off-vertex sequences: shrink toward an off-vertex zero along one fixed
    # probe direction each
    off_max = 0.0
    n_off = 0
    vpart = model.null_part()
    candidates = model.sample_points(8 * n_offvertex, radius, seed + 1)
    for target in candidates:
        if n_off >= n_offvertex:
            break
        y0 = target - z
        if vpart.distance(y0) < 0.3 * radius or np.linalg.norm(y0) < 0.3 * radius:
            continue
        y = zero_near(target)
        if y is None:
            continue
        probe = rng.standard_normal(p.n)
        probe = probe / np.linalg.norm(probe)
        seq = []
        for j in range(3, 19):
            cand = zero_near(y + (0.5 ** j) * radius * probe)
            if cand is None:
                break
            if np.linalg.norm(cand - y) < 1e-13 or np.linalg.norm(cand - y) > 0.5 ** j * radius:
                break
            seq.append(cand)
        if len(seq) < 6:
            continue
        try:
            rep = connecting_limit_estimate(np.tile(y, (len(seq), 1)), np.asarray(seq))
        except (ValueError, DirectionOscillationError):
            continue
        if not rep.converged:
            continue
        gy = model.metric.gram @ (y - z)
        rows = np.vstack([np.eye(p.n) - model.subspace.basis.T @ model.subspace.basis,
                          gy[None, :] / max(np.linalg.norm(gy), 1e-300)])
        allowed = forms.kernel_subspace(rows)
        off_max = max(off_max, allowed.angle_to(rep.direction))
        n_off += 1
    if model.semidefinite:
        off_ok = True  # the affine model set has no off-vertex cone structure
    else:
        if n_off == 0:
            raise InsufficientSampleError("no convergent off-vertex sequences")
        off_ok = off_max <= angle_tol
    passed = vertex_angle <= angle_tol and span_dim == expected and off_ok
    return RadialAuditReport(vertex_angle, span_dim, expected, off_max,
                             len(dirs), n_off, passed)


@dataclass(frozen=True)
class ProductField2D:
    """The degenerate-metric plane field v = (v1(x1), v2(x2)).

    With the metric g12 = g21 = 1, g11 = g22 = 0, any such field is
    conformal with phi = v1' + v2', and its zero set is the product of the
    two root sets; nothing forces a subspace or a cone, which is exactly
    why the classification needs n >= 3.
    """

    roots1: tuple
    roots2: tuple

    def __post_init__(self):
        if len(self.roots1) == 0 or len(self.roots2) == 0:
            raise FieldError("degenerate polynomial degree request: "
                             "each factor needs at least one root")
        object.__setattr__(self, "roots1", tuple(float(r) for r in self.roots1))
        object.__setattr__(self, "roots2", tuple(float(r) for r in self.roots2))

    @property
    def metric(self) -> MetricForm:
        return MetricForm(np.array([[0.0, 1.0], [1.0, 0.0]]))

    def _eval_poly(self, roots, x):
        out = np.ones_like(x)
        for r in roots:
            out = out * (x - r)
        return out

    def _eval_dpoly(self, roots, x):
        total = np.zeros_like(x)
        for i in range(len(roots)):
            term = np.ones_like(x)
            for j, r in enumerate(roots):
                if j != i:
                    term = term * (x - r)
            total += term
        return total

    def evaluate_many(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.column_stack([self._eval_poly(self.roots1, pts[:, 0]),
                                self._eval_poly(self.roots2, pts[:, 1])])

    def jacobian_many(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        m = pts.shape[0]
        out = np.zeros((m, 2, 2))
        out[:, 0, 0] = self._eval_dpoly(self.roots1, pts[:, 0])
        out[:, 1, 1] = self._eval_dpoly(self.roots2, pts[:, 1])
        return out

    def phi_many(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return (self._eval_dpoly(self.roots1, pts[:, 0])
                + self._eval_dpoly(self.roots2, pts[:, 1]))

    def conformal_residual(self, pts) -> float:
        """Max-norm of L_v g - phi g over the points (exact derivatives)."""
        jac = self.jacobian_many(pts)
        g = self.metric.gram
        lie = np.einsum("mji,jk->mik", jac, g) + np.einsum("ij,mjk->mik", g, jac)
        phi = self.phi_many(pts)
        res = lie - phi[:, None, None] * g[None, :, :]
        return float(np.max(np.abs(res)))

    def zero_grid(self) -> np.ndarray:
        return np.array([[a, b] for a in self.roots1 for b in self.roots2])


@dataclass(frozen=True)
class SurfaceCounterexampleReport:
    """Zero set of the 2-D product field against the expected grid."""

    expected: np.ndarray
    found: np.ndarray
    max_match_distance: float
    conformal_residual: float
    passed: bool


def surface_counterexample(xi_zeros, xi_prime_zeros,
                           grid: int = 24) -> SurfaceCounterexampleReport:
    """Build the plane field vanishing exactly on xi x xi', verify it is
    conformal for the off-diagonal flat metric, and check the detected zero
    set equals the product grid."""
    fld = ProductField2D(tuple(xi_zeros), tuple(xi_prime_zeros))
    expected = fld.zero_grid()
    lo = float(np.min(expected)) - 1.0
    hi = float(np.max(expected)) + 1.0
    axis = np.linspace(lo, hi, grid)
    starts = np.array([[a, b] for a in axis for b in axis])
    finals = newton_zero_search(fld.evaluate_many, fld.jacobian_many, starts)
    res = np.linalg.norm(fld.evaluate_many(finals), axis=1)
    coeff_scale = max(1.0, (1.0 + abs(hi)) ** max(len(fld.roots1), len(fld.roots2)))
    good = finals[res <= 1e-9 * coeff_scale]
    pts, _ = _dedupe(good, res[res <= 1e-9 * coeff_scale], 1e-6 * (hi - lo))
    # match both ways
    max_d = 0.0
    ok = len(pts) == len(expected)
    for e in expected:
        d = float(np.min(np.linalg.norm(pts - e[None, :], axis=1))) if len(pts) else np.inf
        max_d = max(max_d, d)
        ok = ok and d <= 1e-7 * max(1.0, abs(hi))
    probes = expected + 0.0
    conf = fld.conformal_residual(np.vstack([probes, starts[:64]]))
    ok = ok and conf <= 1e-12 * coeff_scale
    return SurfaceCounterexampleReport(expected, pts, max_d, conf, ok)
