import json
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from .forms import check_grid_scale, parse_config

CONFIGS = Path(settings.BASE_DIR) / 'runs' / 'configs'

PLANE = {
    'task': 'geometry',
    'background': {'kind': 'flat', 'dim': 3},
    'grid': {'sizes': [9, 9]},
    'embedding': {'name': 'plane'},
}


def with_changes(base, **blocks):
    config = json.loads(json.dumps(base))
    config.update(blocks)
    return config


class ParseConfigTests(SimpleTestCase):

    def messages(self, document):
        with self.assertRaises(ValidationError) as caught:
            parse_config(json.dumps(document))
        return caught.exception.messages

    def test_minimal_plane_config(self):
        config = parse_config(json.dumps(PLANE))
        self.assertEqual(config.task, 'geometry')
        self.assertEqual(config.grid['sizes'], [9, 9])
        self.assertEqual(config.background['kappa'], 0.0)
        self.assertEqual(config.perturbations, [])
        self.assertEqual(config.raw, PLANE)

    def test_unknown_background_kind_names_the_key(self):
        messages = self.messages(with_changes(PLANE, background={'kind': 'schwarzschild', 'dim': 3}))
        self.assertTrue(any(m.startswith('background.kind:') for m in messages))

    def test_negative_spacing_is_a_constraint_error(self):
        messages = self.messages(with_changes(PLANE, grid={'sizes': [9, 9], 'spacings': [0.1, -0.1]}))
        self.assertIn('grid.spacings[1]: must be > 0', messages)

    def test_unknown_keys_at_every_level(self):
        document = with_changes(PLANE, colour='red', grid={'sizes': [9, 9], 'step': 2})
        document['embedding'] = {'name': 'sphere', 'params': {'radius': 2.0, 'wobble': 1}}
        document['perturbations'] = [{'kind': 'bump', 'width': 3}]
        messages = self.messages(document)
        self.assertIn('colour: unknown key', messages)
        self.assertIn('grid.step: unknown key', messages)
        self.assertIn("embedding.params.wobble: unknown parameter for 'sphere'", messages)
        self.assertIn("perturbations[0].width: unknown key for perturbation kind 'bump'", messages)

    def test_missing_blocks_and_bad_task(self):
        messages = self.messages({'task': 'paint'})
        self.assertIn('grid: required block is missing', messages)
        self.assertTrue(any(m.startswith('task: unknown task') for m in messages))

    def test_pair_tasks_need_two_perturbations(self):
        messages = self.messages(with_changes(PLANE, task='sympform', perturbations=[{'kind': 'constant'}]))
        self.assertIn('perturbations: the sympform task needs two perturbations', messages)

    def test_background_constraints(self):
        messages = self.messages(with_changes(PLANE, background={'kind': 'flat', 'dim': 3, 'kappa': 1.0}))
        self.assertIn('background.kappa: must be 0 for a flat background', messages)
        messages = self.messages(with_changes(
            PLANE, background={'kind': 'flat', 'dim': 3, 'signature': [-1, 1]}))
        self.assertIn('background.signature: needs 3 entries', messages)

    def test_embedding_needs_exactly_one_source(self):
        messages = self.messages(with_changes(PLANE, embedding={'name': 'plane', 'csv': 'x.csv'}))
        self.assertIn('embedding: give exactly one of name or csv', messages)

    def test_convergence_block(self):
        config = parse_config(json.dumps(with_changes(
            PLANE, task='convergence', convergence={'quantity': 'derivative_sin'})))
        self.assertEqual(config.convergence['factors'], [1, 2, 4])
        messages = self.messages(with_changes(
            PLANE, task='convergence', convergence={'quantity': 'derivative_sin', 'factors': [1, 2]}))
        self.assertIn('convergence.factors: at least three levels are needed', messages)

    def test_axes_below_the_stencil_minimum(self):
        messages = self.messages(with_changes(PLANE, grid={'sizes': [4, 5]}))
        self.assertIn('grid.sizes[0]: a non-periodic axis needs at least 5 nodes', messages)
        self.assertFalse(any(m.startswith('grid.sizes[1]') for m in messages))
        torus = with_changes(PLANE, grid={'sizes': [2, 8]}, embedding={'name': 'torus'})
        self.assertIn('grid.sizes[0]: a periodic axis needs at least 3 nodes', self.messages(torus))

    def test_grid_must_match_the_embedding(self):
        messages = self.messages(with_changes(PLANE, grid={'sizes': [9]}))
        self.assertIn("grid.sizes: 'plane' needs 2 entries", messages)
        messages = self.messages(with_changes(PLANE, background={'kind': 'flat', 'dim': 4}))
        self.assertIn("background.dim: 'plane' is embedded in 3 dimensions", messages)

    def test_perturbation_values(self):
        document = with_changes(PLANE, perturbations=[
            {'kind': 'strip_harmonic', 'variant': 'tanh_sin'},
            {'kind': 'bump', 'component': 1},
            {'kind': 'tangential', 'axis': 2, 'profile': {'kind': 'gaussian'}},
            {'kind': 'fourier', 'axis': 3},
            {'kind': 'shear'},
        ])
        messages = self.messages(document)
        self.assertIn('perturbations[0].variant: choose one of cosh_sin, sinh_sin, x_cosh_sin', messages)
        self.assertIn('perturbations[1].component: must be below the codimension 1', messages)
        self.assertIn('perturbations[2].axis: must be an axis index below 2', messages)
        self.assertTrue(any(m.startswith('perturbations[2].profile.kind: choose one of') for m in messages))
        self.assertIn('perturbations[3].axis: must be an axis index below 2', messages)
        self.assertTrue(any(m.startswith('perturbations[4].kind:') for m in messages))

    def test_grid_scale_keeps_every_axis_usable(self):
        config = parse_config((CONFIGS / 'plane_geometry.json').read_text(encoding='utf-8'))
        check_grid_scale(config, 0.5)
        with self.assertRaises(ValidationError) as caught:
            check_grid_scale(config, 0.25)
        self.assertIn('--grid-scale: axis 0 drops to 4 nodes, at least 5 are needed', caught.exception.messages)
        ladder = parse_config((CONFIGS / 'sphere_convergence.json').read_text(encoding='utf-8'))
        check_grid_scale(ladder, 0.25)
        with self.assertRaises(ValidationError):
            check_grid_scale(ladder, 0.1)

    def test_invalid_json(self):
        with self.assertRaises(ValidationError):
            parse_config('{"task": ')

    def test_shipped_configs_parse(self):
        for path in sorted(CONFIGS.glob('*.json')):
            with self.subTest(config=path.name):
                parse_config(path.read_text(encoding='utf-8'))


class BraneCommandTests(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, document, name='config.json'):
        path = self.root / name
        path.write_text(json.dumps(document), encoding='utf-8')
        return path

    def run_task(self, task, config, out='out', *extra):
        stdout = StringIO()
        call_command('brane', task, '--config', str(config), '--out', str(self.root / out), *extra, stdout=stdout)
        report = json.loads((self.root / out / 'report.json').read_text(encoding='utf-8'))
        return report, stdout.getvalue()

    def test_plane_geometry_report(self):
        report, stdout = self.run_task('geometry', CONFIGS / 'plane_geometry.json')
        self.assertEqual(set(report), {'task', 'config_echo', 'metrics', 'files'})
        self.assertLessEqual(report['metrics']['eom_max_residual'], 1e-12)
        self.assertTrue(report['metrics']['on_shell'])
        self.assertEqual(report['files'], ['geometry.csv'])
        header = (self.root / 'out' / 'geometry.csv').read_text(encoding='utf-8').splitlines()[0]
        self.assertTrue(header.startswith('xi0,xi1,X_0,X_1,X_2,K,sqrt_det'))
        self.assertIn('Report written to', stdout)

    def test_reports_are_byte_identical(self):
        config = CONFIGS / 'great_circle_current.json'
        self.run_task('current', config, 'first')
        self.run_task('current', config, 'second')
        for name in ('report.json', 'current.csv'):
            self.assertEqual((self.root / 'first' / name).read_bytes(), (self.root / 'second' / name).read_bytes())

    def test_great_circle_current(self):
        report, _ = self.run_task('current', CONFIGS / 'great_circle_current.json')
        metrics = report['metrics']
        self.assertLessEqual(metrics['route_equality_residual'], 1e-10)
        self.assertLess(metrics['div_norms']['qec_adjoint_pair']['max'], 1e-10)
        self.assertEqual(len(metrics['omega_by_slice']), 64)

    def test_sphere_convergence_order(self):
        report, _ = self.run_task('convergence', CONFIGS / 'sphere_convergence.json')
        metrics = report['metrics']
        # K on the round sphere is exact up to rounding away from the rim
        self.assertEqual(metrics['status'], 'exact')
        self.assertIsNone(metrics['fitted_order'])
        self.assertEqual(report['files'], ['ladder.csv'])

    def test_catenoid_convergence_order(self):
        report, _ = self.run_task('convergence', CONFIGS / 'catenoid_convergence.json')
        metrics = report['metrics']
        self.assertEqual(metrics['status'], 'fitted')
        self.assertGreaterEqual(metrics['fitted_order'], 1.8)
        self.assertLessEqual(metrics['fitted_order'], 2.2)
        self.assertLessEqual(metrics['errors'][1], 5e-3)

    def test_great_circle_jacobi_kernel(self):
        report, _ = self.run_task('jacobi', CONFIGS / 'great_circle_jacobi.json')
        metrics = report['metrics']
        self.assertEqual(metrics['kernel_dimension'], 2)
        self.assertEqual(len(metrics['spectrum_head']), 6)
        for entry in metrics['persistence']:
            self.assertLessEqual(entry['p_squared_norm'], entry['bound'])

    def test_strip_symplectic_form(self):
        report, _ = self.run_task('sympform', CONFIGS / 'strip_sympform.json')
        dng = report['metrics']['dng_pair']
        self.assertAlmostEqual(dng['omega_reference'], np.pi, delta=5e-3)
        self.assertLess(dng['max_slice_deviation'], 1e-10)
        self.assertLess(dng['antisymmetry_residual'], 1e-12)
        self.assertEqual(dng['diagonal_max'], 0.0)
        self.assertLess(dng['shift_deviation'], 1e-12)
        self.assertIn('omega.csv', report['files'])

    def test_grid_scale_multiplies_node_counts(self):
        report, _ = self.run_task('geometry', CONFIGS / 'plane_geometry.json', 'out', '--grid-scale', '2')
        self.assertEqual(report['metrics']['nodes'], 34 * 34)

    def test_csv_output_can_be_switched_off(self):
        config = self.write(with_changes(PLANE, output={'csv': False}))
        report, _ = self.run_task('geometry', config)
        self.assertEqual(report['files'], [])

    def test_validation_error_exits_with_two(self):
        config = self.write(with_changes(PLANE, grid={'sizes': [9, 9], 'spacings': [0.1, -1]}))
        with self.assertRaises(CommandError) as caught:
            self.run_task('geometry', config)
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn('grid.spacings[1]', str(caught.exception))

    def test_too_few_nodes_exits_with_two(self):
        with self.assertRaises(CommandError) as caught:
            self.run_task('geometry', self.write(with_changes(PLANE, grid={'sizes': [4, 4]})))
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn('grid.sizes[0]', str(caught.exception))
        with self.assertRaises(CommandError) as caught:
            self.run_task('geometry', CONFIGS / 'plane_geometry.json', 'out', '--grid-scale', '0.25')
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn('--grid-scale', str(caught.exception))

    def test_bad_perturbation_exits_with_two(self):
        document = json.loads((CONFIGS / 'strip_sympform.json').read_text(encoding='utf-8'))
        document['perturbations'][1]['variant'] = 'tanh_sin'
        with self.assertRaises(CommandError) as caught:
            self.run_task('sympform', self.write(document))
        self.assertEqual(caught.exception.returncode, 2)
        document['perturbations'][1] = {'kind': 'bump', 'component': 1}
        with self.assertRaises(CommandError) as caught:
            self.run_task('sympform', self.write(document))
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn('perturbations[1].component', str(caught.exception))

    def test_missing_csv_embedding_exits_with_two(self):
        config = self.write(with_changes(
            PLANE, embedding={'csv': str(self.root / 'absent.csv')},
            grid={'sizes': [9, 9], 'bounds': [[0, 1], [0, 1]]},
        ))
        with self.assertRaises(CommandError) as caught:
            self.run_task('geometry', config)
        self.assertEqual(caught.exception.returncode, 2)

    def test_task_mismatch_exits_with_two(self):
        with self.assertRaises(CommandError) as caught:
            self.run_task('relax', CONFIGS / 'plane_geometry.json')
        self.assertEqual(caught.exception.returncode, 2)

    def test_numerical_failure_exits_with_three(self):
        outside = with_changes(
            PLANE, background={'kind': 'constant_curvature', 'dim': 3, 'kappa': -1.0},
            embedding={'name': 'sphere', 'params': {'radius': 3.0}},
        )
        with self.assertRaises(CommandError) as caught:
            self.run_task('geometry', self.write(outside))
        self.assertEqual(caught.exception.returncode, 3)

    def test_failed_relaxation_still_writes_a_report(self):
        config = self.write({
            'task': 'relax',
            'background': {'kind': 'flat', 'dim': 2},
            'grid': {'sizes': [17]},
            'embedding': {'name': 'segment'},
            'relax': {'max_iterations': 2},
        })
        with self.assertRaises(CommandError) as caught:
            self.run_task('relax', config)
        self.assertEqual(caught.exception.returncode, 3)
        report = json.loads((self.root / 'out' / 'report.json').read_text(encoding='utf-8'))
        self.assertFalse(report['metrics']['converged'])
        self.assertIn('history.csv', report['files'])
