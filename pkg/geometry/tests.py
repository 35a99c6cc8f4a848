import numpy as np
from django.test import SimpleTestCase

from dynamics.solver import EXACT, FITTED, convergence_study

from .background import (
    BackgroundModel, CONSTANT_CURVATURE, FLAT, bianchi_residual, christoffel_at, christoffel_derivative_at,
    compare_with_oracle, metric_at, riemann_at, sectional_curvature, symmetry_residual,
)
from .catalog import get_parametrization, normal_perturbation
from .exceptions import ChartDomainError, DegenerateEmbeddingError, ShapeMismatchError
from .frames import build_geometry, gauss_weingarten_residual, metric_christoffel, orthonormality_residuals
from .worldvolume import (
    Embedding, Field, GridSpec, integrate_scalar, partial_derivative, sample_parametrization,
)

EUCLID3 = BackgroundModel.euclidean(3)


def geometry(name, sizes, model=None, **overrides):
    param = get_parametrization(name)
    ambient = overrides.get('ambient', param.ambient)
    model = model or BackgroundModel.euclidean(ambient)
    emb = param.sample(sizes, overrides, model)
    return build_geometry(emb, model, on_shell=param.is_extremal(model, overrides))


def assert_second_order(test, spacings, errors):
    report = convergence_study(spacings, errors)
    test.assertEqual(report.status, FITTED, report.errors)
    test.assertGreaterEqual(report.order, 1.8)
    test.assertLessEqual(report.order, 2.2)


class BackgroundModelTests(SimpleTestCase):

    def test_flat_metric_is_identity(self):
        g = metric_at(EUCLID3, [0.3, -1.2, 4.0])
        np.testing.assert_array_equal(g, np.eye(3))

    def test_conformal_factor_at_origin_and_radius_two(self):
        sphere = BackgroundModel.sphere_chart(3, 1.0)
        np.testing.assert_allclose(metric_at(sphere, [0, 0, 0]), np.eye(3))
        np.testing.assert_allclose(metric_at(sphere, [2.0, 0, 0]), 0.25 * np.eye(3))

    def test_hyperbolic_pole_is_a_domain_error(self):
        hyperbolic = BackgroundModel(CONSTANT_CURVATURE, (1, 1, 1), -1.0)
        with self.assertRaises(ChartDomainError):
            metric_at(hyperbolic, [2.0, 0.0, 0.0])

    def test_invalid_models_are_rejected(self):
        with self.assertRaises(ValueError):
            BackgroundModel(FLAT, (1, 2, 1))
        with self.assertRaises(ValueError):
            BackgroundModel('schwarzschild', (1, 1, 1))

    def test_christoffel_vanishes_for_constant_metrics(self):
        minkowski = BackgroundModel(FLAT, (-1, 1, 1, 1))
        self.assertFalse(np.any(christoffel_at(minkowski, [1.0, 2.0, 3.0, 4.0])))
        self.assertFalse(np.any(christoffel_at(EUCLID3, [1.0, 2.0, 3.0])))

    def test_christoffel_matches_metric_differences_to_second_order(self):
        sphere = BackgroundModel.sphere_chart(3, 1.0)
        comparison = compare_with_oracle(sphere, np.array([1.0, 0.0, 0.0]), 'christoffel')
        self.assertGreater(comparison.order, 1.8)
        self.assertLess(comparison.order, 2.2)
        gamma = christoffel_at(sphere, [1.0, 0.3, -0.2])
        np.testing.assert_allclose(gamma, np.swapaxes(gamma, -1, -2), atol=1e-15)

    def test_christoffel_derivative_matches_centered_differences(self):
        eps = 1e-5
        models = (BackgroundModel.sphere_chart(3, 1.0), BackgroundModel(CONSTANT_CURVATURE, (1, 1, 1), -1.0))
        for model in models:
            for point in ([0.3, -0.4, 0.5], [1.0, 0.2, -0.7]):
                with self.subTest(kappa=model.kappa, point=point):
                    p = np.array(point)
                    numeric = np.stack([
                        (christoffel_at(model, p + eps * axis) - christoffel_at(model, p - eps * axis)) / (2 * eps)
                        for axis in np.eye(3)
                    ])
                    np.testing.assert_allclose(christoffel_derivative_at(model, p), numeric, rtol=1e-6, atol=1e-9)
        self.assertFalse(np.any(christoffel_derivative_at(EUCLID3, [1.0, 2.0, 3.0])))

    def test_riemann_oracle_and_identities(self):
        for kappa in (1.0, -1.0):
            model = BackgroundModel(CONSTANT_CURVATURE, (1, 1, 1), kappa)
            p = np.array([0.4, -0.3, 0.5])
            comparison = compare_with_oracle(model, p, 'riemann')
            self.assertLess(comparison.relative_error, 1e-6)
            r = riemann_at(model, p)
            self.assertLess(bianchi_residual(r), 1e-10)
            self.assertLess(symmetry_residual(r), 1e-12)

    def test_sectional_curvature_equals_kappa(self):
        sphere = BackgroundModel.sphere_chart(3, 1.0)
        p = np.array([0.7, 0.2, -0.4])
        self.assertAlmostEqual(sectional_curvature(sphere, p, np.array([1.0, 0, 0]), np.array([0, 0, 1.0])), 1.0)
        hyperbolic = BackgroundModel(CONSTANT_CURVATURE, (1, 1, 1), -1.0)
        self.assertAlmostEqual(riemann_at(hyperbolic, np.zeros(3))[0, 1, 0, 1], -1.0)

    def test_flat_riemann_is_zero(self):
        self.assertFalse(np.any(riemann_at(EUCLID3, [1.0, 1.0, 1.0])))


class WorldvolumeTests(SimpleTestCase):

    def setUp(self):
        self.square = GridSpec.from_bounds([[0.0, 1.0], [0.0, 1.0]], (17, 17), (False, False))
        self.ring = GridSpec.from_bounds([[0.0, 2 * np.pi]], (64,), (True,))

    def test_grid_validation(self):
        with self.assertRaises(ValueError):
            GridSpec((4,), (0.1,), (False,))
        with self.assertRaises(ValueError):
            GridSpec((8,), (-0.1,), (False,))

    def test_constant_and_linear_fields(self):
        xi = self.square.coordinates()
        const = Field(self.square, np.full(self.square.shape, 3.0))
        self.assertFalse(np.any(partial_derivative(const, 0).values))
        linear = Field(self.square, xi[..., 0])
        np.testing.assert_allclose(partial_derivative(linear, 0).values, 1.0, atol=1e-12)

    def test_periodic_sine_derivative_error_bound(self):
        xi = self.ring.coordinates()[..., 0]
        h = self.ring.spacings[0]
        d = partial_derivative(Field(self.ring, np.sin(xi)), 0).values
        self.assertLessEqual(np.max(np.abs(d - np.cos(xi))), (h ** 2 / 6) * 1.01)

    def test_axis_out_of_range(self):
        f = Field(self.ring, np.zeros(self.ring.shape))
        with self.assertRaises(ShapeMismatchError):
            partial_derivative(f, 1)

    def test_fields_are_immutable_and_tagged(self):
        f = Field(self.ring, np.zeros(self.ring.shape + (2,)), ('i',))
        with self.assertRaises(ValueError):
            f.values[0, 0] = 1.0
        with self.assertRaises(ShapeMismatchError):
            Field(self.ring, np.zeros(self.ring.shape + (2,)), ())

    def test_trapezoid_integrals(self):
        one = Field(self.square, np.ones(self.square.shape))
        self.assertAlmostEqual(integrate_scalar(one, one), 1.0, places=12)
        xi = self.ring.coordinates()[..., 0]
        sin2 = Field(self.ring, np.sin(xi) ** 2)
        self.assertAlmostEqual(integrate_scalar(sin2, Field(self.ring, np.ones(64))), np.pi, places=12)

    def test_integrate_shape_mismatch(self):
        with self.assertRaises(ShapeMismatchError):
            integrate_scalar(Field(self.ring, np.ones(64)), Field(self.square, np.ones((17, 17))))

    def test_summation_by_parts_on_periodic_grid(self):
        torus = GridSpec.from_bounds([[0, 2 * np.pi], [0, 2 * np.pi]], (24, 20), (True, True))
        xi = torus.coordinates()
        f = np.sin(xi[..., 0]) * np.cos(2 * xi[..., 1]) + 0.3
        g = np.exp(np.cos(xi[..., 0])) * np.sin(xi[..., 1])
        for axis in (0, 1):
            total = torus.integrate(f * torus.diff(g, axis)) + torus.integrate(g * torus.diff(f, axis))
            self.assertLess(abs(total), 1e-12 * torus.integrate(np.abs(f * g)) + 1e-14)

    def test_mixed_partials_commute(self):
        # stencils on distinct axes commute exactly, so the commutator is rounding at every refinement
        for n in (17, 33, 65):
            square = GridSpec.from_bounds([[0.0, 1.0], [0.0, 1.0]], (n, n), (False, False))
            xi = square.coordinates()
            f = np.sin(3 * xi[..., 0]) * np.exp(xi[..., 1])
            d01 = square.diff(square.diff(f, 1), 0)
            d10 = square.diff(square.diff(f, 0), 1)
            self.assertLess(np.max(np.abs(d01 - d10)), 1e-9)

    def test_sphere_band_area(self):
        geom = geometry('sphere', (64, 64))
        area = geom.grid.integrate(geom.sqrt_det)
        exact = 2 * np.pi * (np.cos(0.2) - np.cos(np.pi - 0.2))
        self.assertLess(abs(area - exact) / exact, 5e-3)

    def test_flat_strip_translation_across_seam(self):
        plane = get_parametrization('plane')
        emb = plane.sample((8, 12), {'bounds': [[0, 1], [0, 2 * np.pi]], 'periodic': [False, True]})
        np.testing.assert_allclose(emb.translations[1], [0.0, 2 * np.pi, 0.0])
        tangents = emb.grid.gradient(emb.points, emb.translations)
        np.testing.assert_allclose(tangents[..., 1, :], np.broadcast_to([0, 1.0, 0], tangents[..., 1, :].shape), atol=1e-12)

    def test_sampling_outside_chart_domain(self):
        hyperbolic = BackgroundModel(CONSTANT_CURVATURE, (1, 1, 1), -1.0)
        with self.assertRaises(ChartDomainError):
            get_parametrization('sphere').sample((8, 8), {'radius': 3.0}, hyperbolic)


class FrameGeometryTests(SimpleTestCase):

    def test_plane_frame(self):
        geom = geometry('plane', (9, 9))
        np.testing.assert_allclose(geom.tangents[4, 4], [[1, 0, 0], [0, 1, 0]], atol=1e-12)
        np.testing.assert_allclose(geom.gamma[4, 4], np.eye(2), atol=1e-12)
        np.testing.assert_allclose(geom.normals[..., 0, :], np.broadcast_to([0, 0, 1.0], (9, 9, 3)))
        self.assertFalse(np.any(np.abs(geom.extrinsic) > 1e-12))
        self.assertFalse(np.any(geom.twist))

    def test_line_in_four_dimensions_has_axis_normals(self):
        geom = geometry('line', (9,))
        np.testing.assert_allclose(geom.normals[3], np.eye(4)[1:], atol=1e-12)

    def test_static_string_in_minkowski(self):
        minkowski = BackgroundModel(FLAT, (-1, 1, 1))
        grid = GridSpec.from_bounds([[0, 1], [0, 1]], (7, 7), (False, False))
        emb = sample_parametrization(
            lambda xi: np.stack([xi[..., 0], xi[..., 1], np.zeros(xi.shape[:-1])], axis=-1), grid)
        geom = build_geometry(emb, minkowski)
        np.testing.assert_allclose(geom.gamma[3, 3], np.diag([-1.0, 1.0]), atol=1e-12)
        np.testing.assert_allclose(geom.sqrt_det, 1.0, atol=1e-12)

    def test_sphere_outward_normal_and_mean_curvature(self):
        geom = geometry('sphere', (32, 64))
        inner = geom.grid.interior_mask(1)
        radial = geom.embedding.points / np.linalg.norm(geom.embedding.points, axis=-1, keepdims=True)
        self.assertLess(np.max(np.abs(geom.normals[..., 0, :] - radial)[inner]), 1e-10)
        interior = geom.grid.interior_mask(3)
        self.assertLessEqual(np.max(np.abs(geom.mean[..., 0] - 2.0)[interior]), 5e-3)
        theta = geom.grid.coordinates()[..., 0]
        np.testing.assert_allclose(geom.gamma[..., 1, 1][interior], (np.sin(theta) ** 2)[interior], rtol=1e-2)

    def test_sphere_mean_curvature_is_exact_away_from_the_rim(self):
        # centered differences rescale each first-harmonic axis uniformly and K is a ratio of them
        errors, spacings = [], []
        for sizes in ((32, 64), (64, 128), (128, 256)):
            geom = geometry('sphere', sizes)
            spacings.append(max(geom.grid.spacings))
            errors.append(float(np.max(np.abs(geom.mean[..., 0] - 2.0)[geom.grid.interior_mask(3)])))
        self.assertEqual(convergence_study(spacings, errors).status, EXACT)

    def test_cylinder_and_catenoid_mean_curvature(self):
        cyl = geometry('cylinder', (64, 17), radius=2.0)
        interior = cyl.grid.interior_mask(3)
        self.assertLess(np.max(np.abs(cyl.mean[..., 0] - 0.5)[interior]), 5e-3)
        spacings, errors = [], []
        for n in (32, 64, 128):
            cat = geometry('catenoid', (n, n))
            spacings.append(max(cat.grid.spacings))
            errors.append(cat.max_mean_curvature(margin=3))
        self.assertLessEqual(errors[1], 5e-3)
        assert_second_order(self, spacings, errors)

    def test_orthonormality_and_trace_identity(self):
        for geom in (geometry('sphere', (24, 24)), geometry('helix', (33,)), geometry('torus', (24, 24))):
            cross, gram = orthonormality_residuals(geom.frame, geom.metric)
            self.assertLess(cross, 1e-10)
            self.assertLess(gram, 1e-10)
            trace = np.einsum('...ab,...abi->...i', geom.gamma_inv, geom.extrinsic)
            self.assertEqual(np.max(np.abs(trace - geom.mean)), 0.0)
            np.testing.assert_array_equal(geom.extrinsic, np.swapaxes(geom.extrinsic, -2, -3))
            np.testing.assert_array_equal(geom.twist, -np.swapaxes(geom.twist, -1, -2))

    def test_gauss_weingarten_consistency(self):
        spacings, errors = [], []
        for n in (32, 64, 128):
            geom = geometry('torus', (n, n))
            spacings.append(max(geom.grid.spacings))
            errors.append(gauss_weingarten_residual(geom))
        self.assertLess(errors[0], 1e-2)
        assert_second_order(self, spacings, errors)
        plane = geometry('plane', (9, 9))
        self.assertFalse(np.any(metric_christoffel(plane)))

    def test_codimension_one_twist_vanishes(self):
        self.assertFalse(np.any(geometry('torus', (16, 16)).twist))

    def test_normal_rotation_covariance(self):
        angle = 0.7
        rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        param = get_parametrization('helix')
        emb = param.sample((33,))
        base = build_geometry(emb, EUCLID3)
        turned = build_geometry(emb, EUCLID3, normal_rotation=rotation)
        phi = normal_perturbation(base.grid, 2, {'kind': 'fourier', 'k': 2.0, 'component': 0}) \
            + normal_perturbation(base.grid, 2, {'kind': 'fourier', 'k': 1.0, 'phase': 0.3, 'component': 1})
        phi_turned = np.einsum('ij,...j->...i', rotation, phi)
        d_base = base.covariant_derivative(phi, ('i',))
        d_turned = turned.covariant_derivative(phi_turned, ('i',))
        np.testing.assert_allclose(d_turned, np.einsum('ij,...aj->...ai', rotation, d_base), atol=1e-10)
        kk_base = np.einsum('...i,...i->...', base.mean, base.mean)
        kk_turned = np.einsum('...i,...i->...', turned.mean, turned.mean)
        np.testing.assert_allclose(kk_turned, kk_base, atol=1e-10)

    def test_laplacian_of_harmonics(self):
        torus = geometry('plane', (48, 16), bounds=[[0, 2 * np.pi], [0, 1]], periodic=[True, True])
        xi = torus.grid.coordinates()
        lap = torus.laplacian(np.sin(xi[..., 0])[..., None])
        self.assertLess(np.max(np.abs(lap[..., 0] + np.sin(xi[..., 0]))), 5e-3)
        self.assertLess(np.max(np.abs(torus.laplacian(np.ones(torus.grid.shape + (1,))))), 1e-12)
        sphere = geometry('sphere', (64, 64))
        theta = sphere.grid.coordinates()[..., 0]
        lap = sphere.laplacian(np.cos(theta)[..., None])[..., 0]
        interior = sphere.grid.interior_mask(3)
        self.assertLess(np.max(np.abs(lap + 2 * np.cos(theta))[interior]), 2e-2)

    def test_projected_riemann_on_constant_curvature(self):
        circle = geometry('great_circle', (64,), model=BackgroundModel.sphere_chart(2))
        np.testing.assert_allclose(circle.riemann_a[..., 0, 0], -1.0, atol=1e-10)
        great_sphere = geometry('plane', (9, 9), model=BackgroundModel.sphere_chart(4),
                                bounds=[[-1, 1], [-1, 1]], ambient=4)
        np.testing.assert_allclose(great_sphere.riemann_a, np.broadcast_to(-2 * np.eye(2), (9, 9, 2, 2)), atol=1e-10)
        self.assertLess(np.max(np.abs(great_sphere.riemann_c)), 1e-12)
        self.assertLess(np.max(np.abs(great_sphere.extrinsic)), 1e-12)
        flat = geometry('sphere', (12, 12))
        self.assertFalse(np.any(flat.riemann_a))

    def test_degenerate_embedding(self):
        grid = GridSpec.from_bounds([[0, 1], [0, 1]], (7, 7), (False, False))
        collapsed = Embedding(grid, np.stack([grid.coordinates()[..., 0]] + [np.zeros((7, 7))] * 2, axis=-1))
        with self.assertRaises(DegenerateEmbeddingError):
            build_geometry(collapsed, EUCLID3)
