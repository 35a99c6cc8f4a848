import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from dynamics.solver import FITTED, convergence_study
from geometry.background import BackgroundModel
from geometry.catalog import ambient_variation, get_parametrization, normal_perturbation
from geometry.exceptions import AntisymmetryError, ShapeMismatchError, SliceError
from geometry.frames import build_geometry

from . import symplectic
from .symplectic import SliceSpec

COSH_SIN = {'kind': 'strip_harmonic', 'variant': 'cosh_sin'}
SINH_SIN = {'kind': 'strip_harmonic', 'variant': 'sinh_sin'}


def geometry(name, sizes, model=None, **overrides):
    param = get_parametrization(name)
    model = model or BackgroundModel.euclidean(overrides.get('ambient', param.ambient))
    emb = param.sample(sizes, overrides, model)
    return build_geometry(emb, model, on_shell=param.is_extremal(model, overrides))


def strip(sizes=(33, 64)):
    return geometry('plane', sizes, bounds=[[-1.0, 1.0], [0.0, 2 * np.pi]], periodic=[False, True])


def great_circle(n=64):
    return geometry('great_circle', (n,), model=BackgroundModel.sphere_chart(2))


def field(geom, *specs):
    return sum(normal_perturbation(geom.grid, geom.codim, spec) for spec in specs)


def omega(current, axis=0, margin=4):
    return [value.omega for value in symplectic.slice_sweep(current, axis, margin)]


class DngCurrentTests(SimpleTestCase):

    def setUp(self):
        self.geom = strip()
        self.phi1, self.phi2 = field(self.geom, COSH_SIN), field(self.geom, SINH_SIN)

    def test_strip_harmonics_give_pi_on_every_slice(self):
        current = symplectic.dng_potential_pair(self.geom, self.phi1, self.phi2)
        values = omega(current)
        self.assertEqual(len(values), 33 - 8)
        # j^0 = sin^2 xi^1 up to the centered-difference factor sinh(h)/h
        for value in values:
            self.assertAlmostEqual(value, np.pi, delta=5e-3)
        self.assertLess(max(values) - min(values), 1e-10)

    def test_antisymmetric_and_zero_on_the_diagonal(self):
        forward = symplectic.dng_potential_pair(self.geom, self.phi1, self.phi2)
        backward = symplectic.dng_potential_pair(self.geom, self.phi2, self.phi1)
        np.testing.assert_array_equal(forward.values, -backward.values)
        diagonal = symplectic.dng_potential_pair(self.geom, self.phi1, self.phi1)
        self.assertFalse(np.any(diagonal.values))
        self.assertEqual(forward.provenance, symplectic.DNG_PAIR)

    @settings(deadline=None, max_examples=20)
    @given(st.floats(-4, 4), st.floats(-4, 4))
    def test_symplectic_form_is_bilinear(self, a, b):
        base = symplectic.symplectic_form(
            symplectic.dng_potential_pair(self.geom, self.phi1, self.phi2), SliceSpec(0, 16)).omega
        scaled = symplectic.symplectic_form(
            symplectic.dng_potential_pair(self.geom, a * self.phi1, b * self.phi2), SliceSpec(0, 16)).omega
        self.assertAlmostEqual(scaled, a * b * base, delta=1e-9 * (1 + abs(a * b)))

    def test_current_is_conserved(self):
        current = symplectic.dng_potential_pair(self.geom, self.phi1, self.phi2)
        report = symplectic.divergence(current, self.geom, margin=1)
        self.assertLess(report.max_norm, 1e-10)
        self.assertLess(report.l2_norm, 1e-10)


class QecCurrentTests(SimpleTestCase):

    def test_great_circle_kernel_pair_is_conserved(self):
        geom = great_circle()
        phi1 = field(geom, {'kind': 'fourier', 'k': 1.0})
        phi2 = field(geom, {'kind': 'fourier', 'k': 1.0, 'phase': np.pi / 2})
        current = symplectic.qec_current_adjoint_pair(geom, phi1, phi2)
        self.assertLess(symplectic.divergence(current, geom).max_norm, 1e-10)
        self.assertLess(symplectic.route_equality_residual(geom, phi1, phi2), 1e-10)

    def test_strip_harmonic_divergence_is_second_order(self):
        # margins grow with n so every level covers the band |xi^0| <= 1/2
        spacings, errors = [], []
        x_cosh = {'kind': 'strip_harmonic', 'variant': 'x_cosh_sin'}
        for sizes, margin in (((17, 32), 4), ((33, 64), 8), ((65, 128), 16)):
            geom = strip(sizes)
            current = symplectic.qec_current_adjoint_pair(geom, field(geom, x_cosh), field(geom, SINH_SIN))
            spacings.append(max(geom.grid.spacings))
            errors.append(symplectic.divergence(current, geom, margin=margin).max_norm)
            harmonic = symplectic.qec_current_adjoint_pair(geom, field(geom, COSH_SIN), field(geom, SINH_SIN))
            self.assertLessEqual(symplectic.divergence(harmonic, geom, margin=margin).max_norm, 1e-8)
        report = convergence_study(spacings, errors)
        self.assertEqual(report.status, FITTED)
        self.assertGreaterEqual(report.order, 1.8)
        self.assertLessEqual(report.order, 2.2)

    def test_both_routes_agree_on_extremal_geometries(self):
        cases = [
            (great_circle(), {'kind': 'fourier', 'k': 1.0}, {'kind': 'fourier', 'k': 2.0, 'phase': 0.5}),
            (strip(), COSH_SIN, SINH_SIN),
            (geometry('catenoid', (32, 32)), {'kind': 'fourier', 'axis': 1, 'k': 1.0},
             {'kind': 'bump', 'center': [3.0, 0.0], 'radius': 0.8}),
            (geometry('plane', (17, 17), model=BackgroundModel.sphere_chart(4),
                      bounds=[[-1, 1], [-1, 1]], ambient=4),
             {'kind': 'fourier', 'axis': 0, 'k': 2.0, 'component': 0},
             {'kind': 'bump', 'center': [0.0, 0.0], 'radius': 0.9, 'component': 1}),
        ]
        for geom, spec1, spec2 in cases:
            self.assertTrue(geom.on_shell)
            residual = symplectic.route_equality_residual(geom, field(geom, spec1), field(geom, spec2))
            self.assertLess(residual, 1e-10)

    def test_adjoint_current_is_antisymmetric(self):
        geom = geometry('catenoid', (24, 24))
        phi1 = field(geom, {'kind': 'fourier', 'axis': 1, 'k': 1.0})
        phi2 = field(geom, {'kind': 'fourier', 'axis': 0, 'k': 2.0})
        forward = symplectic.qec_current_adjoint_pair(geom, phi1, phi2)
        backward = symplectic.qec_current_adjoint_pair(geom, phi2, phi1)
        np.testing.assert_allclose(forward.values, -backward.values, atol=1e-13 * forward.scale())
        self.assertFalse(np.any(symplectic.qec_current_adjoint_pair(geom, phi1, phi1).values))

    def test_routes_differ_off_shell(self):
        geom = geometry('torus', (32, 32))
        self.assertFalse(geom.on_shell)
        phi1 = field(geom, {'kind': 'fourier', 'axis': 1, 'k': 1.0})
        phi2 = field(geom, {'kind': 'fourier', 'axis': 0, 'k': 2.0})
        with self.assertLogs('phasespace.symplectic', level='WARNING'):
            residual = symplectic.route_equality_residual(geom, phi1, phi2)
        self.assertGreater(residual, 1e-3)

    def test_symmetric_builder_is_rejected(self):
        geom = strip((17, 16))
        phi1, phi2 = field(geom, COSH_SIN), field(geom, SINH_SIN)

        def symmetric(geom, a, b):
            return np.ones(geom.grid.shape + (2,)) * (float(np.sum(a ** 2)) + float(np.sum(b ** 2)))

        with self.assertRaises(AntisymmetryError):
            symplectic._pair(geom, symmetric, phi1, phi2, symplectic.DNG_PAIR)
        current = symplectic._pair(geom, symmetric, phi1, phi2, symplectic.QEC_FROM_POTENTIAL,
                                   antisymmetric=False)
        self.assertFalse(np.any(current.values))
        self.assertEqual(current.swap_residual, 0.0)

    def test_swap_defect_is_relative(self):
        geom = strip((17, 16))
        phi1, phi2 = field(geom, COSH_SIN), field(geom, SINH_SIN)
        forward = symplectic._dng_current(geom, phi1, phi2)
        self.assertEqual(symplectic.swap_defect(geom, forward, -forward, (phi1,), (phi2,), 1), 0.0)
        defect = symplectic.swap_defect(geom, forward, forward, (phi1,), (phi2,), 1)
        # |j| is 1 against a rounding reach of about 15
        self.assertGreater(defect, 0.05)
        zero = np.zeros_like(forward)
        self.assertEqual(symplectic.swap_defect(geom, zero, zero, (0 * phi1,), (phi2,), 1), 0.0)

    def test_potential_has_flux_shape(self):
        geom = geometry('catenoid', (16, 16))
        psi = symplectic.qec_potential(geom, field(geom, {'kind': 'constant'}))
        self.assertEqual(psi.shape, (16, 16, 2))


class SliceTests(SimpleTestCase):

    def test_slice_validation(self):
        geom = strip((17, 16))
        current = symplectic.dng_potential_pair(geom, field(geom, COSH_SIN), field(geom, SINH_SIN))
        for spec in (SliceSpec(0, 0), SliceSpec(0, 16), SliceSpec(2, 3)):
            with self.assertRaises(SliceError):
                symplectic.symplectic_form(current, spec)
        symplectic.symplectic_form(current, SliceSpec(1, 0))

    def test_one_dimensional_slice_is_a_point_value(self):
        geom = great_circle(16)
        phi1 = field(geom, {'kind': 'fourier', 'k': 1.0})
        phi2 = field(geom, {'kind': 'fourier', 'k': 2.0})
        current = symplectic.dng_potential_pair(geom, phi1, phi2)
        value = symplectic.symplectic_form(current, SliceSpec(0, 5), pair=('a', 'b'))
        self.assertEqual(value.omega, float(current.values[5, 0]))
        self.assertEqual(value.pair, ('a', 'b'))

    def test_current_field_checks(self):
        geom = strip((17, 16))
        with self.assertRaises(ValueError):
            symplectic.CurrentField(np.zeros((17, 16, 2)), 'made_up', geom.grid)
        with self.assertRaises(ShapeMismatchError):
            symplectic.CurrentField(np.zeros((17, 16, 3)), symplectic.DNG_PAIR, geom.grid)


class IndeterminacyTests(SimpleTestCase):

    def test_exact_shift_keeps_omega_and_conservation(self):
        geom = strip()
        phi1, phi2 = field(geom, COSH_SIN), field(geom, SINH_SIN)
        for build in (symplectic.dng_potential_pair, symplectic.qec_current_adjoint_pair):
            current = build(geom, phi1, phi2)
            shifted = symplectic.shift_potential(current, geom, phi1, phi2, weight=0.7)
            self.assertTrue(np.any(shifted.values != current.values))
            for before, after in zip(omega(current), omega(shifted)):
                self.assertLess(abs(before - after), 1e-12)
            gap = (symplectic.divergence(shifted, geom, 4).max_norm
                   - symplectic.divergence(current, geom, 4).max_norm)
            self.assertLess(abs(gap), 1e-10)

    def test_tangential_variation_is_pure_gauge(self):
        geom = strip()
        partner = field(geom, COSH_SIN)
        profile = {'kind': 'fourier', 'axis': 1, 'k': 2.0}
        report = symplectic.gauge_degeneracy_check(
            geom, ambient_variation(geom, {'kind': 'tangential', 'axis': 0, 'profile': profile}), partner)
        self.assertLessEqual(report.normal_residual, 1e-12)
        self.assertLessEqual(report.decomposition_residual, 1e-12)
        for scale in report.currents.values():
            self.assertLessEqual(scale, 1e-12)

    def test_tangential_variation_on_curved_surface(self):
        geom = geometry('sphere', (32, 32))
        partner = field(geom, {'kind': 'sphere_l1', 'm': 1})
        profile = {'kind': 'bump', 'center': [1.5, 3.0], 'radius': 0.8}
        report = symplectic.gauge_degeneracy_check(
            geom, ambient_variation(geom, {'kind': 'tangential', 'axis': 1, 'profile': profile}), partner)
        self.assertLessEqual(report.normal_residual, 1e-12)
        # third derivatives amplify rounding by 1/h^3
        for scale in report.currents.values():
            self.assertLessEqual(scale, 1e-10)
