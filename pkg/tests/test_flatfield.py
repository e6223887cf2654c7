from fractions import Fraction

import numpy as np
import pytest

from confield import flatfield, forms
from confield.flatfield import (ConformalFieldParams, DegenerateMetricError,
                                FieldError, NotAZeroError, PreconditionError,
                                QuadraticPolynomial, classify_zero,
                                conformal_factor, evaluate, gradient,
                                hessian_identity_check, killing_gauge_residual,
                                lie_derivative_residual, radial_factor)
from confield.forms import MetricForm, diag_form


def make(gram, w, s, c, u):
    return ConformalFieldParams(MetricForm(np.asarray(gram)), w, s, c, u)


def skew(n, pairs):
    s = np.zeros((n, n))
    for i, j, val in pairs:
        s[i, j] = val
        s[j, i] = -val
    return s


def brute_force_field(p, x):
    """Independent term-by-term evaluator: w + G^-1 S x + cx + 2<u,x>x - <x,x>u."""
    g = p.metric.gram
    x = np.asarray(x, dtype=float)
    bx = np.linalg.solve(g, p.skew_gen @ x)
    ux = p.u @ g @ x
    xx = x @ g @ x
    return p.w + bx + p.c * x + 2 * ux * x - xx * p.u


def random_params(rng, gram):
    n = gram.shape[0]
    a = rng.standard_normal((n, n))
    return ConformalFieldParams(MetricForm(gram), rng.standard_normal(n),
                                a - a.T, float(rng.standard_normal()),
                                rng.standard_normal(n))


SIGNATURE_GRAMS = [np.diag(d).astype(float) for d in
                   ([1, 1, 1], [1, 1, -1], [1, -1, -1],
                    [1, 1, -1, -1], [1, 1, 1, -1])]


class TestConstruction:
    def test_rejects_degenerate_metric(self):
        with pytest.raises(DegenerateMetricError):
            make(np.diag([1.0, 0.0, 1.0]), np.zeros(3), np.zeros((3, 3)), 0.0,
                 np.zeros(3))

    def test_rejects_non_antisymmetric_generator(self):
        s = np.zeros((3, 3))
        s[0, 1] = 1.0
        with pytest.raises(FieldError):
            make(np.eye(3), np.zeros(3), s, 0.0, np.zeros(3))

    def test_skew_operator_is_metric_skew_adjoint(self):
        rng = np.random.default_rng(0)
        for gram in SIGNATURE_GRAMS:
            p = random_params(rng, gram)
            b = p.skew_op
            for _ in range(20):
                x = rng.standard_normal(p.n)
                y = rng.standard_normal(p.n)
                val = (b @ x) @ gram @ y + x @ gram @ (b @ y)
                assert abs(val) <= 1e-12 * p.param_scale() * (
                    1 + np.linalg.norm(x)) * (1 + np.linalg.norm(y))


class TestEvaluate:
    def test_dilation_is_identity(self):
        p = make(np.diag([-1.0, 1, 1]), np.zeros(3), np.zeros((3, 3)), 1.0,
                 np.zeros(3))
        x = np.array([0.3, -0.7, 2.0])
        assert np.allclose(evaluate(p, x), x)

    def test_value_at_origin_is_w(self):
        rng = np.random.default_rng(1)
        p = random_params(rng, np.diag([-1.0, 1, 1]))
        assert np.allclose(evaluate(p, np.zeros(3)), p.w)

    def test_hand_computed_inversion_value(self):
        # u = e1, x = e2, metric diag(-1,1,1):
        # v = 2<e1,e2> e2 - <e2,e2> e1 = -e1
        p = make(np.diag([-1.0, 1, 1]), np.zeros(3), np.zeros((3, 3)), 0.0,
                 [1, 0, 0])
        assert np.allclose(evaluate(p, [0, 1, 0]), [-1, 0, 0])

    def test_against_brute_force_evaluator(self):
        rng = np.random.default_rng(2)
        for gram in SIGNATURE_GRAMS:
            p = random_params(rng, gram)
            for _ in range(50):
                x = 3 * rng.standard_normal(p.n)
                assert np.allclose(evaluate(p, x), brute_force_field(p, x),
                                   rtol=1e-13, atol=1e-13)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(3)
        p = random_params(rng, np.diag([1.0, 1, -1, -1]))
        xs = rng.standard_normal((40, 4))
        batch = flatfield.evaluate_many(p, xs)
        for i in range(40):
            assert np.allclose(batch[i], evaluate(p, xs[i]), atol=1e-12)

    def test_linear_superposition_in_parameters(self):
        rng = np.random.default_rng(4)
        gram = np.diag([-1.0, 1, 1, 1])
        x = rng.standard_normal(4)
        p1 = random_params(rng, gram)
        p2 = random_params(rng, gram)
        psum = ConformalFieldParams(p1.metric, p1.w + p2.w,
                                    p1.skew_gen + p2.skew_gen, p1.c + p2.c,
                                    p1.u + p2.u)
        assert np.allclose(evaluate(psum, x), evaluate(p1, x) + evaluate(p2, x),
                           atol=1e-12)

    def test_exact_mode_superposition_is_exact(self):
        g = np.diag([-1, 1, 1])
        p1 = make(g, [1, 0, 2], skew(3, [(0, 1, 1)]), 1, [0, 1, 0])
        p2 = make(g, [0, 3, 0], skew(3, [(1, 2, 2)]), 2, [1, 0, 1])
        psum = make(g, [1, 3, 2], p1.skew_gen + p2.skew_gen, 3, [1, 1, 1])
        x = [Fraction(1, 3), Fraction(-2, 7), Fraction(5)]
        v1 = flatfield.evaluate_exact(p1, x)
        v2 = flatfield.evaluate_exact(p2, x)
        vs = flatfield.evaluate_exact(psum, x)
        assert all(vs[i] == v1[i] + v2[i] for i in range(3))


class TestGradient:
    def test_at_origin(self):
        rng = np.random.default_rng(5)
        p = random_params(rng, np.diag([-1.0, 1, 1]))
        assert np.allclose(gradient(p, np.zeros(3)),
                           p.skew_op + p.c * np.eye(3), atol=1e-14)

    def test_constant_when_u_zero(self):
        rng = np.random.default_rng(6)
        g = np.diag([-1.0, 1, 1])
        a = rng.standard_normal((3, 3))
        p = make(g, rng.standard_normal(3), a - a.T, 0.7, np.zeros(3))
        expected = p.skew_op + 0.7 * np.eye(3)
        for _ in range(5):
            assert np.allclose(gradient(p, rng.standard_normal(3)), expected,
                               atol=1e-13)

    def test_hand_computed_case(self):
        # u = e1, x = e1, metric diag(-1,1,1):
        # h -> 2<e1,h>e1 + 2<e1,e1>h - 2<e1,h>e1 = -2h
        p = make(np.diag([-1.0, 1, 1]), np.zeros(3), np.zeros((3, 3)), 0.0,
                 [1, 0, 0])
        assert np.allclose(gradient(p, [1, 0, 0]), -2 * np.eye(3), atol=1e-14)

    def test_against_central_differences(self):
        rng = np.random.default_rng(7)
        h = 1e-6
        for gram in SIGNATURE_GRAMS:
            p = random_params(rng, gram)
            for _ in range(40):
                x = rng.standard_normal(p.n)
                a = gradient(p, x)
                fd = np.empty_like(a)
                for j in range(p.n):
                    e = np.zeros(p.n)
                    e[j] = h
                    fd[:, j] = (evaluate(p, x + e) - evaluate(p, x - e)) / (2 * h)
                scale = np.max(np.abs(a)) + 1.0
                assert np.max(np.abs(a - fd)) <= 1e-6 * scale


class TestConformalFactor:
    def test_pure_dilation(self):
        p = make(np.eye(3), np.zeros(3), np.zeros((3, 3)), 1.0, np.zeros(3))
        assert conformal_factor(p, [4.0, 1.0, -2.0]) == 2.0

    def test_killing_field(self):
        p = make(np.eye(3), np.zeros(3), skew(3, [(1, 2, 1)]), 0.0, np.zeros(3))
        assert conformal_factor(p, [0.3, 0.1, 0.9]) == 0.0

    def test_hand_computed_value(self):
        p = make(np.diag([-1.0, 1, 1]), np.zeros(3), np.zeros((3, 3)), 0.0,
                 [1, 0, 0])
        assert conformal_factor(p, [1, 0, 0]) == pytest.approx(-4.0, abs=1e-15)

    def test_trace_oracle_on_thousand_random_cases(self):
        # the closed form phi = 2c + 4<u,x> must match (2/n) trace(grad v)
        rng = np.random.default_rng(8)
        for _ in range(200):
            gram = SIGNATURE_GRAMS[int(rng.integers(len(SIGNATURE_GRAMS)))]
            p = random_params(rng, gram)
            xs = rng.standard_normal((5, p.n))
            grads = flatfield.gradient_many(p, xs)
            tr = np.einsum("mii->m", grads)
            phi = flatfield.conformal_factor_many(p, xs)
            scale = np.array([flatfield.identity_scale(p, x) for x in xs])
            assert np.all(np.abs(tr - 0.5 * p.n * phi) <= 1e-12 * scale)


class TestLieDerivativeResidual:
    def test_thousand_random_points_per_signature(self):
        rng = np.random.default_rng(9)
        for gram in SIGNATURE_GRAMS:
            p = random_params(rng, gram)
            xs = 2 * rng.standard_normal((1000, p.n))
            res = flatfield.lie_derivative_residual_many(p, xs)
            scales = np.array([flatfield.identity_scale(p, x) for x in xs])
            assert np.all(res <= 1e-12 * scales)

    def test_killing_field_exact_mode_residual_is_zero(self):
        p = make(np.diag([-1, 1, 1]), [0, 0, 0], skew(3, [(1, 2, 1)]), 0,
                 [0, 0, 0])
        x = [Fraction(3, 7), Fraction(-1, 2), Fraction(4)]
        assert flatfield.lie_derivative_residual_exact(p, x) == 0

    def test_corrupted_skew_part_is_detected(self):
        # simulate an upstream bug: replace the derived operator by one that
        # is not metric-skew-adjoint
        p = make(np.diag([-1.0, 1, 1]), np.zeros(3), skew(3, [(0, 1, 1)]), 0.0,
                 np.zeros(3))
        broken = p.skew_op.copy()
        broken[0, 1] += 1e-3
        object.__setattr__(p, "skew_op", broken)
        assert lie_derivative_residual(p, np.array([0.2, 0.4, -0.1])) > 1e-6

    def test_skew_decomposition_of_gradient(self):
        # 2 grad v - phi Id is metric-skew-adjoint at every point
        rng = np.random.default_rng(10)
        for gram in SIGNATURE_GRAMS:
            p = random_params(rng, gram)
            for _ in range(20):
                x = rng.standard_normal(p.n)
                a = 2 * gradient(p, x) - conformal_factor(p, x) * np.eye(p.n)
                res = np.max(np.abs(a + flatfield.metric_adjoint(p, a)))
                assert res <= 1e-12 * flatfield.identity_scale(p, x)


class TestSecondDerivative:
    def test_zero_when_u_vanishes(self):
        rng = np.random.default_rng(11)
        g = np.diag([-1.0, 1, 1])
        a = rng.standard_normal((3, 3))
        p = make(g, rng.standard_normal(3), a - a.T, 1.3, np.zeros(3))
        assert flatfield.second_derivative_residual(
            p, rng.standard_normal(3), rng.standard_normal(3)) == 0.0

    def test_random_points_and_directions(self):
        rng = np.random.default_rng(12)
        for gram in SIGNATURE_GRAMS:
            p = random_params(rng, gram)
            for _ in range(30):
                x = rng.standard_normal(p.n)
                d = rng.standard_normal(p.n)
                res = flatfield.second_derivative_residual(p, x, d)
                assert res <= 1e-12 * flatfield.identity_scale(p, x) * (
                    1 + np.linalg.norm(d))

    def test_gradient_directional_derivative_against_differences(self):
        rng = np.random.default_rng(13)
        p = random_params(rng, np.diag([1.0, 1, -1, -1]))
        for _ in range(20):
            x = rng.standard_normal(4)
            d = rng.standard_normal(4)
            step = 1e-5 * (1 + np.linalg.norm(x))
            fd = (gradient(p, x + step * d) - gradient(p, x - step * d)) / (2 * step)
            closed = flatfield.gradient_directional_derivative(p, d)
            assert np.max(np.abs(fd - closed)) <= 1e-6 * (1 + np.max(np.abs(closed)))

    def test_kernel_vectors_are_eigenvectors_of_skew_part(self):
        # every k in Ker(grad v_z) satisfies A_z k = -phi(z) k for the
        # skew part A_z = 2 grad v_z - phi(z) Id
        p = make(np.diag([-1.0, -1, 1, 1]), np.zeros(4), skew(4, [(2, 3, 1)]),
                 0.0, [1, 0, 0, 0])
        z = np.zeros(4)
        ker = flatfield.kernel_of_gradient(p, z)
        a = 2 * gradient(p, z) - conformal_factor(p, z) * np.eye(4)
        phi = conformal_factor(p, z)
        for k in ker.basis:
            assert np.max(np.abs(a @ k + phi * k)) <= 1e-10 * flatfield.identity_scale(p, z)


class TestBasisDimension:
    @pytest.mark.parametrize("n,expected", [(3, 10), (4, 15), (5, 21), (6, 28)])
    def test_full_dimension_attained(self, n, expected):
        gram = np.diag([-1.0] + [1.0] * (n - 1))
        assert flatfield.basis_dimension(MetricForm(gram)) == expected

    def test_rejects_small_dimension(self):
        with pytest.raises(FieldError):
            flatfield.basis_dimension(diag_form(1, 1))


class TestKernelStructure:
    def test_dilation_origin(self):
        p = make(np.diag([-1.0, 1, 1]), np.zeros(3), np.zeros((3, 3)), 1.0,
                 np.zeros(3))
        rep = flatfield.kernel_structure_check(p, np.zeros(3))
        assert rep.factor_nonzero and rep.kernel_dim == 0 and rep.passed

    def test_killing_block(self):
        p = make(np.diag([-1.0, 1, 1]), np.zeros(3), skew(3, [(1, 2, 1)]), 0.0,
                 np.zeros(3))
        rep = flatfield.kernel_structure_check(p, np.zeros(3))
        assert not rep.factor_nonzero
        assert rep.kernel_dim == 1 and rep.codimension == 2
        assert rep.codimension_even and rep.complement_equals_image and rep.passed

    def test_essential_example_structure(self):
        p = make(np.diag([-1.0, -1, 1, 1]), np.zeros(4), skew(4, [(2, 3, 1)]),
                 0.0, [1, 0, 0, 0])
        rep = flatfield.kernel_structure_check(p, np.zeros(4))
        assert not rep.factor_nonzero
        assert rep.codimension == 2 and rep.codimension_even
        assert rep.complement_equals_image and rep.passed

    def test_rejects_non_zero_point(self):
        p = make(np.diag([-1.0, 1, 1]), np.zeros(3), np.zeros((3, 3)), 1.0,
                 np.zeros(3))
        with pytest.raises(NotAZeroError):
            flatfield.kernel_structure_check(p, np.array([1.0, 0, 0]))


class TestClassifyZero:
    def test_dilation_case_iii(self):
        p = make(np.diag([-1.0, 1, 1]), np.zeros(3), np.zeros((3, 3)), 1.0,
                 np.zeros(3))
        cls = classify_zero(p, np.zeros(3))
        assert cls.essential and cls.case == "iii"
        assert cls.model_space.dim == 0
        assert cls.model.kind == "cone"

    def test_pure_killing_case_i(self):
        p = make(np.diag([-1.0, 1, 1]), np.zeros(3), skew(3, [(1, 2, 1)]), 0.0,
                 np.zeros(3))
        cls = classify_zero(p, np.zeros(3))
        assert not cls.essential and cls.case == "i"
        assert cls.model.kind == "subspace"
        assert cls.model.subspace.contains([1, 0, 0], 1e-12)

    def test_essential_gradient_example(self):
        # metric (-,-,+,+), rotation generator in (e3,e4), u = e1:
        # grad phi = 4 e1 not in image(B) = span(e3,e4), so condition b holds;
        # brute-force oracle: the model space is Ker B meet u-perp = span(e2),
        # on which the metric is definite, so case iii.
        p = make(np.diag([-1.0, -1, 1, 1]), np.zeros(4), skew(4, [(2, 3, 1)]),
                 0.0, [1, 0, 0, 0])
        b = p.skew_op
        assert np.linalg.matrix_rank(b) == 2
        gphi = 4 * p.u
        sol, res, *_ = np.linalg.lstsq(b, gphi, rcond=None)
        assert np.linalg.norm(b @ sol - gphi) > 1.0  # honest out-of-image check
        cls = classify_zero(p, np.zeros(4))
        assert cls.essential and not cls.grad_phi_in_image
        assert cls.case == "iii"
        assert cls.model_space.dim == 1
        assert cls.model_space.contains([0, 1, 0, 0], 1e-10)
        # the model set near 0 is the origin alone: scan |v| on a sphere in
        # the model space
        for t in np.linspace(-1, 1, 21):
            if abs(t) > 1e-3:
                assert np.linalg.norm(evaluate(p, [0, t, 0, 0])) > 1e-3

    def test_cone_case_ii(self):
        p = make(np.diag([-1.0, -1, 1, 1]), np.zeros(4), np.zeros((4, 4)), 0.0,
                 [1, 0, 0, 0])
        cls = classify_zero(p, np.zeros(4))
        assert cls.case == "ii" and cls.essential
        assert cls.model_space.dim == 3
        assert cls.singular_space.dim == 0

    def test_case_tags_invariant_under_metric_scaling(self):
        rng = np.random.default_rng(14)
        examples = [
            make(np.diag([-1.0, 1, 1]), np.zeros(3), np.zeros((3, 3)), 1.0, np.zeros(3)),
            make(np.diag([-1.0, 1, 1]), np.zeros(3), skew(3, [(1, 2, 1)]), 0.0, np.zeros(3)),
            make(np.diag([-1.0, -1, 1, 1]), np.zeros(4), np.zeros((4, 4)), 0.0, [1, 0, 0, 0]),
        ]
        for p in examples:
            base = classify_zero(p, np.zeros(p.n))
            for lam in (0.5, 3.0):
                scaled = ConformalFieldParams(MetricForm(lam * p.metric.gram),
                                              p.w, lam * p.skew_gen, p.c, p.u)
                cls = classify_zero(scaled, np.zeros(p.n))
                assert cls.case == base.case
                assert cls.model_space.dim == base.model_space.dim
                assert cls.singular_space.dim == base.singular_space.dim

    def test_case_tags_invariant_under_orthogonal_basis_change(self):
        rng = np.random.default_rng(15)
        p = make(np.diag([-1.0, -1, 1, 1]), np.zeros(4), np.zeros((4, 4)), 0.0,
                 [1, 0, 0, 0])
        base = classify_zero(p, np.zeros(4))
        for _ in range(5):
            q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
            gram = q.T @ p.metric.gram @ q
            gram = 0.5 * (gram + gram.T)
            s = q.T @ p.skew_gen @ q
            s = 0.5 * (s - s.T)
            moved = ConformalFieldParams(MetricForm(gram), q.T @ p.w, s, p.c,
                                         q.T @ p.u)
            cls = classify_zero(moved, np.zeros(4))
            assert cls.case == base.case
            assert cls.model_space.dim == base.model_space.dim
            assert cls.singular_space.dim == base.singular_space.dim


class TestGaugeIdentity:
    def test_zero_polynomial_gives_zero_residual(self):
        rng = np.random.default_rng(16)
        p = random_params(rng, np.diag([-1.0, 1, 1]))
        tau = QuadraticPolynomial(0.0, np.zeros(3), np.zeros((3, 3)))
        assert killing_gauge_residual(p, tau, rng.standard_normal(3)) == 0.0

    def test_random_quadratic_rescalings(self):
        rng = np.random.default_rng(17)
        for gram in SIGNATURE_GRAMS:
            p = random_params(rng, gram)
            tau = QuadraticPolynomial(float(rng.standard_normal()),
                                      rng.standard_normal(p.n),
                                      0.3 * rng.standard_normal((p.n, p.n)))
            for _ in range(20):
                x = rng.standard_normal(p.n)
                res = killing_gauge_residual(p, tau, x)
                assert res <= 1e-12 * flatfield.identity_scale(p, x) * (
                    1 + abs(tau.value(x))) * np.exp(abs(tau.value(x)))

    def test_killing_field_with_invariant_level_sets(self):
        # v rotates the (e2,e3) plane; tau = x1^2 has d tau(v) = 0, so the
        # rescaled metric has vanishing symmetric derivative too
        p = make(np.diag([-1.0, 1, 1]), np.zeros(3), skew(3, [(1, 2, 1)]), 0.0,
                 np.zeros(3))
        quad = np.zeros((3, 3))
        quad[0, 0] = 1.0
        tau = QuadraticPolynomial(0.0, np.zeros(3), quad)
        rng = np.random.default_rng(18)
        for _ in range(10):
            x = rng.standard_normal(3)
            v = evaluate(p, x)
            assert abs(tau.grad(x) @ v) < 1e-14
            a = gradient(p, x)
            g = p.metric.gram
            lie_rescaled = np.exp(-tau.value(x)) * (
                a.T @ g + g @ a - (tau.grad(x) @ v) * g)
            assert np.max(np.abs(lie_rescaled)) < 1e-13

    def test_malformed_coefficients_rejected(self):
        with pytest.raises(FieldError):
            QuadraticPolynomial.from_coeffs([0.0, [1.0, 2.0]], 3)


class TestRadialFactor:
    def setup_method(self):
        self.p = make(np.diag([-1.0, -1, 1, 1]), np.zeros(4), np.zeros((4, 4)),
                      0.0, [1, 0, 0, 0])  # cone example, zero at origin

    def test_scaling_identity(self):
        d = np.array([0.0, 1.0, 1.0, 0.0])  # cone direction in u-perp
        for s in (0.1, 0.01):
            f = radial_factor(self.p, np.zeros(4), d, s)
            v = evaluate(self.p, s * d)
            assert np.allclose(f * s * s, v, rtol=1e-12, atol=1e-300)

    def test_limit_matches_second_difference_oracle(self):
        d = np.array([0.0, 1.0, 1.0, 0.0])
        f0 = radial_factor(self.p, np.zeros(4), d, 0.0)
        h = 1e-4
        fd = (evaluate(self.p, h * d) - 2 * evaluate(self.p, np.zeros(4))
              + evaluate(self.p, -h * d)) / h ** 2
        assert np.allclose(f0, 0.5 * fd, atol=1e-6)
        # continuity of F at 0
        assert np.linalg.norm(radial_factor(self.p, np.zeros(4), d, 1e-5) - f0) < 1e-4

    def test_identically_zero_along_model_ray(self):
        # direction inside the zero set: v vanishes along the whole ray
        d = np.array([0.0, 1.0, 1.0, 0.0])
        assert abs(d @ self.p.metric.gram @ d) < 1e-14
        for s in (0.5, 0.25, 0.125):
            f = radial_factor(self.p, np.zeros(4), d, s)
            assert np.linalg.norm(f) < 1e-14

    def test_rejects_direction_not_in_kernel(self):
        p = make(np.diag([-1.0, 1, 1]), np.zeros(3), np.zeros((3, 3)), 1.0,
                 np.zeros(3))  # dilation: gradient is the identity
        with pytest.raises(PreconditionError):
            radial_factor(p, np.zeros(3), np.array([1.0, 0, 0]), 0.1)


class TestHessianIdentity:
    def test_zero_for_killing_fields(self):
        p = make(np.diag([-1.0, 1, 1]), np.zeros(3), skew(3, [(1, 2, 1)]), 0.0,
                 np.zeros(3))
        assert hessian_identity_check(p, np.zeros(3), [1, 0, 0]) == 0.0

    def test_essential_example_within_tolerance(self):
        p = make(np.diag([-1.0, -1, 1, 1]), np.zeros(4), skew(4, [(2, 3, 1)]),
                 0.0, [1, 0, 0, 0])
        # w_dir in Ker B meet u-perp
        res = hessian_identity_check(p, np.zeros(4), [0, 1, 0, 0])
        assert res <= 1e-10 * flatfield.identity_scale(p, np.zeros(4))

    def test_finite_difference_hessian_oracle(self):
        p = make(np.diag([-1.0, -1, 1, 1]), np.zeros(4), skew(4, [(2, 3, 1)]),
                 0.0, [1, 0, 0, 0])
        w = np.array([0.0, 1.0, 0, 0])
        z = np.zeros(4)
        ker = flatfield.kernel_of_gradient(p, z)
        gw = p.metric.gram @ w
        h = 1e-4
        for i in range(ker.dim):
            for j in range(ker.dim):
                bi, bj = ker.basis[i], ker.basis[j]

                def q(y):
                    return 2 * gw @ evaluate(p, y)

                fd = (q(z + h * (bi + bj)) - q(z + h * (bi - bj))
                      - q(z + h * (bj - bi)) + q(z - h * (bi + bj))) / (4 * h ** 2)
                closed = 2 * gw @ flatfield.second_derivative_bilinear(p, bi, bj)
                assert abs(fd - closed) <= 1e-5 * (1 + abs(closed))

    def test_precondition_violations(self):
        dil = make(np.diag([-1.0, 1, 1]), np.zeros(3), np.zeros((3, 3)), 1.0,
                   np.zeros(3))
        with pytest.raises(PreconditionError):
            hessian_identity_check(dil, np.zeros(3), [1, 0, 0])  # phi != 0
        p = make(np.diag([-1.0, -1, 1, 1]), np.zeros(4), skew(4, [(2, 3, 1)]),
                 0.0, [1, 0, 0, 0])
        with pytest.raises(PreconditionError):
            hessian_identity_check(p, np.zeros(4), [0, 0, 1, 0])  # not in kernel
