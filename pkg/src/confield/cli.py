"""Command-line front end.

Subcommands: verify (the full identity/classification/zero-set suite),
classify (one zero), zeroset (sample export), propagate (transport ODE
trajectory export), demo (built-in examples).  Exit codes: 0 all checks
pass, 1 some check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import catalog, flatfield, forms, geodesics, zerovariety
from .flatfield import (ConformalFieldParams, FieldError, NotAZeroError,
                        PreconditionError, classify_zero)
from .forms import FormError, MetricForm
from .reporting import Report, csv_lines, dumps_report
from .zerovariety import (InsufficientSampleError, UnstableEstimateError,
                          compare_to_model, divergence_constancy, find_zeros,
                          surface_counterexample)

CHECK_ANCHORS = {
    "conformality": "lie-derivative-identity",
    "trace-identity": "trace-equals-half-n-phi",
    "second-derivative": "gradient-second-derivative-identity",
    "kernel-structure": "kernel-null-or-even-codim",
    "classification": "zero-point-classification",
    "zero-sampling": "newton-zero-sampling-soundness",
    "model-comparison": "zero-set-vs-model-two-sided",
    "singular-set": "quadric-singular-set",
    "codim-parity": "codimension-parity",
    "umbilicity": "umbilical-or-totally-geodesic",
    "divergence-constancy": "divergence-constant-per-component",
    "geodesic-transport": "transport-ode-vs-direct-evaluation",
    "frozen-null-line": "vanishing-along-frozen-null-line",
    "char-poly": "char-poly-constant-on-admissible-line",
    "interior-phi-zero": "interior-factor-zero-between-zeros",
    "gauge-identity": "rescaled-metric-gauge-identity",
    "surface-2d": "plane-product-zero-grid",
}


class ConfigError(ValueError):
    pass


_FIELD_KEYS = {"n", "gram", "w", "S", "c", "u"}
_RUN_KEYS = {"center", "radius", "seeds", "seed", "tolerances", "format",
             "out", "point", "x0", "xdot", "t1", "steps"}
_TOL_KEYS = {"model_tol", "rank_tol", "singular_margin"}


def load_config(path: str) -> dict:
    import json

    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _FIELD_KEYS - _RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = _FIELD_KEYS - set(raw)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    tols = raw.get("tolerances", {})
    if not isinstance(tols, dict):
        raise ConfigError("tolerances must be an object")
    unknown = set(tols) - _TOL_KEYS
    if unknown:
        raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
    for k, v in tols.items():
        if not (isinstance(v, (int, float)) and v > 0):
            raise ConfigError(f"tolerance {k} must be positive")
    if "radius" in raw and not raw["radius"] > 0:
        raise ConfigError("radius must be positive")
    return raw


def field_from_config(cfg: dict) -> ConformalFieldParams:
    n = cfg["n"]
    if not isinstance(n, int) or n < 1:
        raise ConfigError("n must be a positive integer")
    gram = np.asarray(cfg["gram"])
    w = np.asarray(cfg["w"])
    s = np.asarray(cfg["S"])
    u = np.asarray(cfg["u"])
    if gram.shape != (n, n) or s.shape != (n, n) or w.shape != (n,) or u.shape != (n,):
        raise ConfigError("array shapes are inconsistent with n")
    try:
        metric = MetricForm(gram)
        return ConformalFieldParams(metric, w, s, float(cfg["c"]), u)
    except (FormError, FieldError) as exc:
        raise ConfigError(str(exc))


def field_to_config(p: ConformalFieldParams, **extra) -> dict:
    cfg = {
        "n": p.n,
        "gram": p.metric.gram.tolist(),
        "w": p.w.tolist(),
        "S": p.skew_gen.tolist(),
        "c": p.c,
        "u": p.u.tolist(),
    }
    cfg.update(extra)
    return cfg


def _run_settings(cfg: dict, args) -> dict:
    out = {
        "center": np.asarray(cfg.get("center", [0.0] * cfg["n"]), dtype=float),
        "radius": float(cfg.get("radius", 1.0)),
        "seeds": int(cfg.get("seeds", 3000)),
        "seed": int(cfg.get("seed", 0)),
        "model_tol": float(cfg.get("tolerances", {}).get("model_tol", 1e-6)),
        "format": cfg.get("format", "json"),
        "out": cfg.get("out"),
    }
    if "singular_margin" in cfg.get("tolerances", {}):
        out["singular_margin"] = float(cfg["tolerances"]["singular_margin"])
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "seeds", None) is not None:
        out["seeds"] = args.seeds
    if getattr(args, "tol", None) is not None:
        out["model_tol"] = args.tol
    if getattr(args, "radius", None) is not None:
        out["radius"] = args.radius
    if getattr(args, "format", None) is not None:
        out["format"] = args.format
    if getattr(args, "out", None) is not None:
        out["out"] = args.out
    if out["radius"] <= 0:
        raise ConfigError("radius must be positive")
    if out["format"] not in ("json", "csv"):
        raise ConfigError("format must be json or csv")
    return out


def _pick_zero(p: ConformalFieldParams, sample, center, cfg):
    if "point" in cfg:
        return np.asarray(cfg["point"], dtype=float)
    if sample.size == 0:
        return None
    i = int(np.argmin(np.linalg.norm(sample.points - np.asarray(center)[None, :], axis=1)))
    return sample.points[i]


def run_verify_suite(p: ConformalFieldParams, settings: dict, config_echo: dict) -> Report:
    """All checks, in a fixed order, against one field configuration."""
    report = Report(config_echo)
    rng = np.random.default_rng(settings["seed"])
    center = settings["center"]
    radius = settings["radius"]
    pts = center[None, :] + rng.uniform(-radius, radius, size=(1000, p.n))

    # pointwise identities
    scales = np.array([flatfield.identity_scale(p, x) for x in pts])
    lres = flatfield.lie_derivative_residual_many(p, pts) / scales
    report.add("conformality", CHECK_ANCHORS["conformality"],
               float(np.max(lres)) <= 1e-12, float(np.max(lres)), 1e-12)

    grads = flatfield.gradient_many(p, pts)
    phis = flatfield.conformal_factor_many(p, pts)
    tr = np.einsum("mii->m", grads)
    tres = np.abs(tr - 0.5 * p.n * phis) / scales
    report.add("trace-identity", CHECK_ANCHORS["trace-identity"],
               float(np.max(tres)) <= 1e-12, float(np.max(tres)), 1e-12)

    sres = max(flatfield.second_derivative_residual(p, x, rng.standard_normal(p.n))
               / flatfield.identity_scale(p, x) for x in pts[:100])
    report.add("second-derivative", CHECK_ANCHORS["second-derivative"],
               sres <= 1e-12, sres, 1e-12)

    tau = flatfield.QuadraticPolynomial(
        float(rng.standard_normal()), rng.standard_normal(p.n),
        0.1 * rng.standard_normal((p.n, p.n)))
    gres = max(flatfield.killing_gauge_residual(p, tau, x)
               / flatfield.identity_scale(p, x) for x in pts[:100])
    report.add("gauge-identity", CHECK_ANCHORS["gauge-identity"],
               gres <= 1e-12, gres, 1e-12)

    # zero discovery
    sample = find_zeros(p, center, radius, settings["seeds"], settings["seed"])
    max_res = float(np.max(sample.residuals)) if sample.size else 0.0
    report.add("zero-sampling", CHECK_ANCHORS["zero-sampling"], True,
               max_res, None, [f"accepted {sample.size} zeros"])

    z = _pick_zero(p, sample, center, config_echo)
    if z is None:
        report.add("classification", CHECK_ANCHORS["classification"], True,
                   None, None, ["no zeros in box; zero-set checks are vacuous"])
        _geodesic_checks(p, report, rng, None, None, sample)
        return report

    ks = flatfield.kernel_structure_check(p, z)
    report.add("kernel-structure", CHECK_ANCHORS["kernel-structure"], ks.passed,
               ks.max_kernel_gram if ks.factor_nonzero else float(ks.codimension or 0),
               None, [f"phi = {ks.phi:.6e}", f"kernel dim {ks.kernel_dim}"])

    cls = classify_zero(p, z)
    report.add("classification", CHECK_ANCHORS["classification"], True, None, None,
               [f"case {cls.case}", f"essential {cls.essential}",
                f"model-space dim {cls.model_space.dim}",
                f"singular-space dim {cls.singular_space.dim}",
                f"model kind {cls.model.kind}"])

    comp = compare_to_model(sample, cls.model, p, settings["model_tol"],
                            probes=1000, seed=settings["seed"])
    report.add("model-comparison", CHECK_ANCHORS["model-comparison"], comp.passed,
               max(comp.subset_max_distance, comp.superset_max_distance),
               settings["model_tol"] * radius,
               [w.tolist() for w in list(comp.subset_witnesses)[:2]]
               + [w.tolist() for w in list(comp.superset_witnesses)[:2]])

    margin = settings.get("singular_margin", radius / 64.0)
    if cls.case in ("ii", "iii"):
        try:
            sing = zerovariety.singular_set_check(sample, cls, margin)
            report.add("singular-set", CHECK_ANCHORS["singular-set"], sing.passed,
                       float(sing.n_flagged), margin,
                       [f"{sing.n_near} points near predicted singular set"])
        except InsufficientSampleError as exc:
            report.add("singular-set", CHECK_ANCHORS["singular-set"], False,
                       None, margin, [str(exc)])
    else:
        report.add("singular-set", CHECK_ANCHORS["singular-set"], True, 0.0,
                   margin, ["case i: no singular set predicted"])

    try:
        par = zerovariety.codimension_parity_check(cls, sample, p,
                                                   seed=settings["seed"])
        report.add("codim-parity", CHECK_ANCHORS["codim-parity"], par.passed,
                   float(par.estimated_codim), None,
                   [f"dim {par.estimated_dim}",
                    f"exemption {par.exemption_taken}"])
    except (InsufficientSampleError, UnstableEstimateError) as exc:
        report.add("codim-parity", CHECK_ANCHORS["codim-parity"], False,
                   None, None, [str(exc)])

    _umbilicity_check(p, report, cls, sample, settings)

    div = divergence_constancy(sample, p)
    report.add("divergence-constancy", CHECK_ANCHORS["divergence-constancy"],
               div.passed, max(div.phi_spreads), div.tolerance,
               [f"{len(div.component_sizes)} components"])

    _geodesic_checks(p, report, rng, z, cls, sample)
    return report


def _umbilicity_check(p, report, cls, sample, settings):
    model = cls.model
    if model.kind == "cone" and not model.semidefinite:
        surface = zerovariety.ModelSurface(model)
        pts = model.sample_points(200, sample.radius, settings["seed"] + 3)
        vset = model.null_part()
        good = [x for x in pts
                if vset.distance(x - model.base_point) > 0.35 * sample.radius
                and np.linalg.norm(x - model.base_point) > 0.35 * sample.radius][:12]
        try:
            umb = zerovariety.umbilicity_check(surface, good, p.metric)
            report.add("umbilicity", CHECK_ANCHORS["umbilicity"], umb.passed,
                       umb.max_residual, 1e-4, [f"{len(good)} test points"])
        except PreconditionError as exc:
            report.add("umbilicity", CHECK_ANCHORS["umbilicity"], False,
                       None, 1e-4, [str(exc)])
        return
    geo = zerovariety.totally_geodesic_check(model, p, seed=settings["seed"])
    report.add("umbilicity", CHECK_ANCHORS["umbilicity"], geo.passed,
               geo.max_residual, None,
               [f"affine component: totally geodesic route, exact={geo.exact}"])


def _geodesic_checks(p, report, rng, z, cls, sample):
    # transport ODE against direct evaluation on a few null lines
    full = forms.Subspace.full(p.n)
    errs = []
    for k in range(5):
        xdot = forms.sample_null_cone(p.metric, full, 1, 1.0, 100 + k)[0]
        if np.linalg.norm(xdot) == 0:
            continue
        x0 = rng.uniform(-1, 1, p.n)
        traj = geodesics.propagate(p, geodesics.initial_state(p, x0, xdot), 1.0, 1000)
        errs.append(geodesics.terminal_error(p, traj))
    terminal = max(errs) if errs else 0.0
    report.add("geodesic-transport", CHECK_ANCHORS["geodesic-transport"],
               terminal <= 1e-8, terminal, 1e-8)

    if cls is not None and cls.case in ("ii", "iii") and cls.model_space.dim > 0:
        dirs = forms.sample_null_cone(p.metric, cls.model_space, 32, 1.0, 17)
        worst_v = worst_phi = 0.0
        ok = True
        for d in dirs:
            if np.linalg.norm(d) == 0:
                continue
            rep = geodesics.lemma_zeros_check(p, cls.point, d, t_samples=101)
            worst_v = max(worst_v, rep.max_v_norm)
            worst_phi = max(worst_phi, rep.max_phi_drift)
            ok = ok and rep.passed
        report.add("frozen-null-line", CHECK_ANCHORS["frozen-null-line"], ok,
                   max(worst_v, worst_phi), None)
        ray = next((d for d in dirs if np.linalg.norm(d) > 1e-6), None)
        if ray is not None:
            cp = geodesics.char_poly_constancy(p, cls.point, ray, t_samples=51)
            report.add("char-poly", CHECK_ANCHORS["char-poly"], cp.passed,
                       cp.max_drift, cp.tolerance)

    if sample is not None and sample.size >= 2:
        d = sample.points - sample.points[0][None, :]
        q = np.einsum("ij,jk,ik->i", d, p.metric.gram, d)
        nn = np.linalg.norm(d, axis=1)
        cand = [i for i in range(1, sample.size)
                if nn[i] > 0.05 * sample.radius
                and abs(q[i]) > 1e-6 * p.metric.scale() * nn[i] ** 2]
        if cand:
            scan = geodesics.interior_vanishing_scan(p, sample.points[0],
                                                     sample.points[cand[0]])
            report.add("interior-phi-zero", CHECK_ANCHORS["interior-phi-zero"],
                       scan.passed,
                       None if scan.value_at_t_star is None else abs(scan.value_at_t_star),
                       None, [f"branch {scan.branch}", f"t* = {scan.t_star}"])


def _write_out(path: str | None, text: str):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ConfigError(f"cannot write output: {exc}")


def cmd_verify(args) -> int:
    cfg = load_config(args.config)
    p = field_from_config(cfg)
    settings = _run_settings(cfg, args)
    report = run_verify_suite(p, settings, cfg)
    _write_out(settings["out"], dumps_report(report))
    return 0 if report.overall_pass else 1


def cmd_classify(args) -> int:
    cfg = load_config(args.config)
    p = field_from_config(cfg)
    settings = _run_settings(cfg, args)
    if args.point is not None:
        z = np.asarray([float(t) for t in args.point.split(",")])
    elif "point" in cfg:
        z = np.asarray(cfg["point"], dtype=float)
    else:
        raise ConfigError("classify requires a point (--point or config key)")
    report = Report(cfg)
    try:
        cls = classify_zero(p, z)
    except NotAZeroError as exc:
        report.add("classification", CHECK_ANCHORS["classification"], False,
                   float(np.linalg.norm(flatfield.evaluate(p, z))), None, [str(exc)])
        _write_out(settings["out"], dumps_report(report))
        return 1
    report.add("classification", CHECK_ANCHORS["classification"], True, None, None, [
        f"case {cls.case}", f"essential {cls.essential}",
        f"phi {cls.phi!r}", f"model-space dim {cls.model_space.dim}",
        f"singular-space dim {cls.singular_space.dim}",
        f"model kind {cls.model.kind}"])
    _write_out(settings["out"], dumps_report(report))
    return 0


def cmd_zeroset(args) -> int:
    cfg = load_config(args.config)
    p = field_from_config(cfg)
    settings = _run_settings(cfg, args)
    sample = find_zeros(p, settings["center"], settings["radius"],
                        settings["seeds"], settings["seed"])
    header = [f"x{i + 1}" for i in range(p.n)] + ["residual"]
    rows = [list(pt) + [r] for pt, r in zip(sample.points, sample.residuals)]
    csv = csv_lines(header, rows)
    out = settings["out"]
    report = Report(cfg)
    report.add("zero-sampling", CHECK_ANCHORS["zero-sampling"], True,
               float(np.max(sample.residuals)) if sample.size else 0.0, None,
               [f"accepted {sample.size} zeros"])
    if sample.size:
        div = divergence_constancy(sample, p)
        report.add("divergence-constancy", CHECK_ANCHORS["divergence-constancy"],
                   div.passed, max(div.phi_spreads), div.tolerance,
                   [f"{len(div.component_sizes)} components"])
    if out is None:
        sys.stdout.write(csv)
        sys.stderr.write(dumps_report(report))
    else:
        _write_out(out, csv)
        sys.stdout.write(dumps_report(report))
    return 0 if report.overall_pass else 1


def cmd_propagate(args) -> int:
    cfg = load_config(args.config)
    p = field_from_config(cfg)
    settings = _run_settings(cfg, args)
    x0 = np.asarray(cfg.get("x0", [0.0] * p.n), dtype=float)
    xdot = cfg.get("xdot")
    if args.x0 is not None:
        x0 = np.asarray([float(t) for t in args.x0.split(",")])
    if args.xdot is not None:
        xdot = [float(t) for t in args.xdot.split(",")]
    if xdot is None:
        raise ConfigError("propagate requires xdot (--xdot or config key)")
    xdot = np.asarray(xdot, dtype=float)
    t1 = args.t1 if args.t1 is not None else float(cfg.get("t1", 1.0))
    steps = args.steps if args.steps is not None else int(cfg.get("steps", 1000))
    try:
        traj = geodesics.propagate(p, geodesics.initial_state(p, x0, xdot), t1, steps)
    except geodesics.InconsistentStateError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    header = (["t"] + [f"x{i + 1}" for i in range(p.n)]
              + [f"v{i + 1}" for i in range(p.n)] + ["phi"])
    rows = [[s.t] + list(s.x) + list(s.v) + [s.phi] for s in traj]
    csv = csv_lines(header, rows)
    err = geodesics.terminal_error(p, traj)
    report = Report(cfg)
    report.add("geodesic-transport", CHECK_ANCHORS["geodesic-transport"],
               err <= 1e-8, err, 1e-8)
    out = settings["out"]
    if out is None:
        sys.stdout.write(csv)
        sys.stderr.write(dumps_report(report))
    else:
        _write_out(out, csv)
        sys.stdout.write(dumps_report(report))
    return 0 if report.overall_pass else 1


def cmd_demo(args) -> int:
    name = args.name
    if name == "surface-2d":
        xi, xip = catalog.SURFACE_2D_ROOTS
        rep = surface_counterexample(xi, xip)
        report = Report({"demo": name, "xi": list(xi), "xi_prime": list(xip)})
        report.add("surface-2d", CHECK_ANCHORS["surface-2d"], rep.passed,
                   rep.max_match_distance, 1e-7,
                   [f"{len(rep.found)} zeros found, {len(rep.expected)} expected",
                    f"conformal residual {rep.conformal_residual:.3e}"])
        _write_out(getattr(args, "out", None), dumps_report(report))
        return 0 if report.overall_pass else 1
    if name not in catalog.FIELD_BUILDERS:
        sys.stderr.write(
            f"error: unknown demo {name!r}; registry: {', '.join(catalog.DEMO_NAMES)}\n")
        return 2
    p = catalog.get_field(name)
    seeds = 3000 if name in ("dilation", "killing-block") else 40000
    settings = {"center": np.zeros(p.n), "radius": 1.0, "seeds": seeds,
                "seed": 0, "model_tol": 1e-6, "format": "json",
                "out": getattr(args, "out", None)}
    if getattr(args, "seed", None) is not None:
        settings["seed"] = args.seed
    if getattr(args, "seeds", None) is not None:
        settings["seeds"] = args.seeds
    report = run_verify_suite(p, settings, field_to_config(p, demo=name))
    _write_out(settings["out"], dumps_report(report))
    return 0 if report.overall_pass else 1


def _check_listing() -> str:
    width = max(len(k) for k in CHECK_ANCHORS)
    lines = [f"  {k.ljust(width)}  {v}" for k, v in CHECK_ANCHORS.items()]
    return "checks run by `verify` (name, anchor):\n" + "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="confield",
        description="Verification toolkit for conformal vector fields on "
                    "flat pseudo-Euclidean spaces.",
        epilog=_check_listing(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--seeds", type=int, default=None,
                        help="number of Newton starts")
        sp.add_argument("--tol", type=float, default=None,
                        help="model comparison tolerance override")
        sp.add_argument("--radius", type=float, default=None)
        sp.add_argument("--format", choices=("json", "csv"), default=None)
        sp.add_argument("--out", default=None, help="output path")

    sp = sub.add_parser("verify", help="run the full verification suite")
    sp.add_argument("config")
    common(sp)
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("classify", help="classify one zero point")
    sp.add_argument("config")
    sp.add_argument("--point", default=None, help="comma-separated coordinates")
    common(sp)
    sp.set_defaults(fn=cmd_classify)

    sp = sub.add_parser("zeroset", help="sample the zero set, export CSV")
    sp.add_argument("config")
    common(sp)
    sp.set_defaults(fn=cmd_zeroset)

    sp = sub.add_parser("propagate", help="export a transport trajectory CSV")
    sp.add_argument("config")
    sp.add_argument("--x0", default=None, help="comma-separated start point")
    sp.add_argument("--xdot", default=None, help="comma-separated velocity")
    sp.add_argument("--t1", type=float, default=None)
    sp.add_argument("--steps", type=int, default=None)
    common(sp)
    sp.set_defaults(fn=cmd_propagate)

    sp = sub.add_parser("demo", help="run a built-in example")
    sp.add_argument("name")
    common(sp)
    sp.set_defaults(fn=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ConfigError, FormError, FieldError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except PreconditionError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
