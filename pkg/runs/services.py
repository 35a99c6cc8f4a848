# runs/services.py
"""
Task pipelines behind ``manage.py brane``.

Each task turns a validated RunConfig into a metrics dict plus CSV
artefacts. ``report.json`` is written with sorted keys so two runs of the
same config produce identical bytes.
"""
import json
import logging
from pathlib import Path

import numpy as np

from dynamics import actions, linearized, solver
from dynamics.deformation import decompose, normal_displacement
from geometry.background import CONSTANT_CURVATURE, FLAT, BackgroundModel
from geometry.catalog import (
    AMBIENT_VARIATIONS, ambient_variation, get_parametrization, normal_perturbation,
)
from geometry.exceptions import NonConvergenceError, ShapeMismatchError
from geometry.frames import build_geometry, gauss_weingarten_residual, orthonormality_residuals
from geometry.worldvolume import Embedding, GridSpec
from phasespace import symplectic

logger = logging.getLogger(__name__)

DEFAULT_PRECISION = 12
INTERIOR_MARGIN = 3
# E^i carries four derivatives of X; composed one-sided stencils stay first order four nodes deep
QEC_MARGIN = 5


def write_csv(path, grid, columns, precision=DEFAULT_PRECISION):
    """Node-major table: xi^a first, then every named column (vector slots flattened)."""
    xi = grid.coordinates().reshape(-1, grid.dim)
    header = [f'xi{a}' for a in range(grid.dim)]
    blocks = [xi]
    for name, values in columns.items():
        flat = np.asarray(values, dtype=float).reshape(grid.node_count, -1)
        header += [name] if flat.shape[1] == 1 else [f'{name}_{k}' for k in range(flat.shape[1])]
        blocks.append(flat)
    np.savetxt(path, np.hstack(blocks), delimiter=',', header=','.join(header),
               comments='', fmt=f'%.{precision}g')


def _max(values, mask=None):
    values = np.abs(np.asarray(values, dtype=float))
    if mask is not None:
        values = values[mask]
    return float(np.max(values, initial=0.0))


class RunService:
    """Build geometry from a RunConfig and execute one task."""

    def __init__(self, config, out_dir, grid_scale=1.0):
        self.config = config
        self.out_dir = Path(out_dir)
        self.grid_scale = float(grid_scale)
        self.files = []
        self.precision = config.output.get('precision', DEFAULT_PRECISION)
        self.dump_csv = config.output.get('csv', True)

    # =========================================================================
    # CONSTRUCTION
    # =========================================================================

    def build_model(self):
        block = self.config.background
        dim = block['dim']
        signature = tuple(block.get('signature') or (1,) * dim)
        if block['kind'] == FLAT:
            return BackgroundModel(FLAT, signature, 0.0)
        return BackgroundModel(CONSTANT_CURVATURE, signature, float(block['kappa']))

    @property
    def parametrization(self):
        name = self.config.embedding.get('name')
        return get_parametrization(name) if name else None

    @property
    def overrides(self):
        return dict(self.config.embedding.get('params', {}))

    def build_grid(self, factor=1.0):
        block = self.config.grid
        sizes = block['sizes']
        param = self.parametrization
        defaults = param.params(self.overrides) if param else {}
        periodic = block.get('periodic') or defaults.get('periodic') or [False] * len(sizes)
        if block.get('spacings'):
            origins = block.get('origins') or [0.0] * len(sizes)
            grid = GridSpec(tuple(sizes), tuple(block['spacings']), tuple(periodic), tuple(origins))
        else:
            bounds = block.get('bounds') or defaults.get('bounds')
            if bounds is None:
                raise ShapeMismatchError('grid.bounds or grid.spacings is required for csv embeddings')
            grid = GridSpec.from_bounds(bounds, sizes, periodic)
        scale = factor * self.grid_scale
        return grid if scale == 1.0 else grid.scaled(scale)

    def build_embedding(self, grid, model):
        csv = self.config.embedding.get('csv')
        if csv:
            table = np.loadtxt(csv, delimiter=',', skiprows=1, ndmin=2)
            if table.shape[0] != grid.node_count:
                raise ShapeMismatchError(f'{csv} has {table.shape[0]} rows for {grid.node_count} nodes')
            return Embedding(grid, table[:, grid.dim:].reshape(grid.shape + (-1,)))
        return self.parametrization.sample(grid.sizes, self.overrides, model, grid=grid)

    def build_geometry(self, factor=1.0):
        model = self.build_model()
        grid = self.build_grid(factor)
        embedding = self.build_embedding(grid, model)
        param = self.parametrization
        on_shell = bool(param and param.is_extremal(model, self.overrides))
        return build_geometry(embedding, model, on_shell=on_shell)

    def perturbation(self, geom, spec):
        """(ambient delta X, tangential phi^a, normal phi^i) for one perturbation spec."""
        if spec['kind'] in AMBIENT_VARIATIONS:
            delta_x = ambient_variation(geom, spec)
            parts = decompose(geom, delta_x)
            return delta_x, parts.tangential, parts.normal
        phi = normal_perturbation(geom.grid, geom.codim, spec)
        return normal_displacement(geom, phi), None, phi

    def normal_pair(self, geom):
        first, second = self.config.perturbations[:2]
        return self.perturbation(geom, first)[2], self.perturbation(geom, second)[2]

    # =========================================================================
    # OUTPUT
    # =========================================================================

    def csv(self, name, grid, columns):
        if not self.dump_csv:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(self.out_dir / name, grid, columns, self.precision)
        self.files.append(name)

    def table(self, name, header, rows):
        if not self.dump_csv:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        np.savetxt(self.out_dir / name, np.asarray(rows, dtype=float), delimiter=',',
                   header=','.join(header), comments='', fmt=f'%.{self.precision}g')
        self.files.append(name)

    def write_report(self, metrics):
        report = {
            'task': self.config.task,
            'config_echo': self.config.raw,
            'metrics': metrics,
            'files': sorted(self.files),
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        text = json.dumps(report, sort_keys=True, indent=2)
        (self.out_dir / 'report.json').write_text(text + '\n', encoding='utf-8')
        return report

    def run(self):
        task = getattr(self, f'task_{self.config.task}')
        logger.info('running task %s (grid scale %s)', self.config.task, self.grid_scale)
        metrics = task()
        return self.write_report(metrics)

    # =========================================================================
    # TASKS
    # =========================================================================

    def task_geometry(self):
        geom = self.build_geometry()
        cross, gram = orthonormality_residuals(geom.frame, geom.metric)
        self.csv('geometry.csv', geom.grid, {
            'X': geom.embedding.points, 'K': geom.mean, 'sqrt_det': geom.sqrt_det,
        })
        return {
            'dim': geom.dim,
            'codim': geom.codim,
            'nodes': geom.grid.node_count,
            'on_shell': geom.on_shell,
            'area': geom.grid.integrate(geom.sqrt_det),
            'eom_max_residual': geom.max_mean_curvature(),
            'eom_interior_residual': geom.max_mean_curvature(INTERIOR_MARGIN),
            'orthonormality': {'tangent_normal': cross, 'normal_gram': gram},
            'gauss_weingarten_residual': gauss_weingarten_residual(geom, INTERIOR_MARGIN),
            'mass_symmetry_residual': linearized.mass_symmetry_residual(geom),
        }

    def task_action(self):
        geom = self.build_geometry()
        couplings = {actions.DNG: self.config.couplings.get('mu', 1.0),
                     actions.QEC: self.config.couplings.get('alpha', 1.0)}
        qec_eom = actions.qec_eom_residual(geom)
        variations = []
        for spec in self.config.perturbations:
            delta_x, tangential, phi = self.perturbation(geom, spec)
            entry = {'kind': spec['kind']}
            for name, coupling in couplings.items():
                breakdown = actions.VARIATIONS[name](geom, phi, tangential, coupling)
                discrete = actions.discrete_first_variation(geom, delta_x, name, coupling)
                oracle = actions.action_variation_oracle(geom, delta_x, name, coupling)
                scale = max(abs(oracle), abs(discrete), 1e-300)
                entry[name] = dict(
                    breakdown.as_dict(), discrete=discrete, oracle=oracle,
                    relative_error=abs(discrete - oracle) / scale,
                    continuum_gap=abs(breakdown.total - discrete) / scale,
                )
            variations.append(entry)
        self.csv('action.csv', geom.grid, {
            'dng_density': -couplings[actions.DNG] * geom.sqrt_det,
            'qec_density': couplings[actions.QEC] * geom.sqrt_det * np.einsum('...i,...i->...', geom.mean, geom.mean),
            'qec_eom': qec_eom,
        })
        return {
            'dng': actions.dng_action(geom, couplings[actions.DNG]),
            'qec': actions.qec_action(geom, couplings[actions.QEC]),
            'couplings': couplings,
            'eom_max_residuals': {
                'dng': geom.max_mean_curvature(),
                'qec': _max(qec_eom, geom.grid.interior_mask(QEC_MARGIN)),
            },
            'variations': variations,
        }

    def task_relax(self):
        model = self.build_model()
        grid = self.build_grid()
        start = self.build_embedding(grid, model)
        block = self.config.relax
        params = solver.RelaxParams(
            step=block.get('step'),
            max_iterations=block.get('max_iterations', 5000),
            target=block.get('target', 1e-8),
        )
        try:
            result = solver.relax_dng(start, model, params)
        except NonConvergenceError as exc:
            self._dump_history(exc.history)
            if exc.best is not None:
                self.csv('relaxed.csv', grid, {'X': exc.best.points})
            self.write_report({'converged': False, 'message': str(exc)})
            raise
        self._dump_history(result.history)
        self.csv('relaxed.csv', grid, {'X': result.embedding.points, 'K': result.geometry.mean})
        areas = [entry['area'] for entry in result.history]
        metrics = {
            'converged': result.converged,
            'iterations': result.iterations,
            'residual': result.residual,
            'area_initial': areas[0],
            'area_final': areas[-1],
            'area_monotone': bool(np.all(np.diff(areas) <= solver.AREA_SLACK * abs(areas[0]))),
            'step_final': result.history[-1]['step'],
        }
        if self.config.embedding.get('name') == 'two_rings':
            p = self.parametrization.params(self.overrides)
            neck = solver.catenoid_neck(p['radius'], p['height'])
            h = max(grid.spacings)
            metrics['catenoid'] = {
                'neck': neck,
                'profile_deviation': solver.catenoid_profile_deviation(result.embedding, neck),
                'bound': 5 * h ** 2,
            }
        return metrics

    def _dump_history(self, history):
        rows = [[e['iteration'], e['area'], e['residual'], e['step']] for e in history]
        if rows:
            self.table('history.csv', ['iteration', 'area', 'residual', 'step'], rows)

    def task_jacobi(self):
        geom = self.build_geometry()
        kind = self.config.jacobi.get('operator', linearized.JACOBI)
        head = self.config.jacobi.get('spectrum_head', 8)
        kernel = solver.solve_jacobi_kernel(geom, kind)
        op = kernel.operator
        metrics = {
            'operator': kind,
            'dof': op.size,
            'spectrum_head': kernel.spectrum_head(head),
            'kernel_dimension': kernel.dimension,
            'threshold': kernel.threshold,
            'operator_scale': op.scale(),
            'symmetry_residual': op.asymmetry(),
            'mass_symmetry_residual': linearized.mass_symmetry_residual(geom),
        }
        if kind == linearized.JACOBI:
            bound = op.scale() * kernel.threshold
            metrics['persistence'] = [
                {'p_squared_norm': geom.norm(linearized.p_squared_expanded(geom, v)), 'bound': bound}
                for v in kernel.fields
            ]
        if kernel.fields:
            self.csv('kernel.csv', geom.grid, {f'v{k}': v for k, v in enumerate(kernel.fields)})
        return metrics

    def task_current(self):
        geom = self.build_geometry()
        phi1, phi2 = self.normal_pair(geom)
        currents = {
            symplectic.DNG_PAIR: symplectic.dng_potential_pair(geom, phi1, phi2),
            symplectic.QEC_ADJOINT_PAIR: symplectic.qec_current_adjoint_pair(geom, phi1, phi2),
            symplectic.QEC_FROM_POTENTIAL: symplectic.qec_current_from_potential(geom, phi1, phi2),
        }
        margin = self.config.slices.get('margin', INTERIOR_MARGIN + 1)
        axis = self.config.slices.get('axis', 0)
        div_norms = {}
        for name, current in currents.items():
            report = symplectic.divergence(current, geom, margin)
            div_norms[name] = {'max': report.max_norm, 'l2': report.l2_norm}
        omega = symplectic.slice_sweep(currents[symplectic.QEC_ADJOINT_PAIR], axis, margin)
        self.csv('current.csv', geom.grid, {name: c.values for name, c in currents.items()})
        return {
            'div_norms': div_norms,
            'omega_by_slice': [value.omega for value in omega],
            'route_equality_residual': symplectic.route_equality_residual(geom, phi1, phi2),
            'on_shell': geom.on_shell,
        }

    def task_sympform(self):
        geom = self.build_geometry()
        phi1, phi2 = self.normal_pair(geom)
        axis = self.config.slices.get('axis', 0)
        margin = self.config.slices.get('margin', INTERIOR_MARGIN + 1)
        builders = {
            symplectic.DNG_PAIR: symplectic.dng_potential_pair,
            symplectic.QEC_ADJOINT_PAIR: symplectic.qec_current_adjoint_pair,
        }
        metrics, columns = {}, {}
        for name, build in builders.items():
            current = build(geom, phi1, phi2)
            values = [v.omega for v in symplectic.slice_sweep(current, axis, margin)]
            swapped = [v.omega for v in symplectic.slice_sweep(build(geom, phi2, phi1), axis, margin)]
            diagonal = [v.omega for v in symplectic.slice_sweep(build(geom, phi1, phi1), axis, margin)]
            shifted = symplectic.shift_potential(current, geom, phi1, phi2)
            shifted_values = [v.omega for v in symplectic.slice_sweep(shifted, axis, margin)]
            metrics[name] = {
                'omega_reference': values[0],
                'max_slice_deviation': max(abs(v - values[0]) for v in values),
                'antisymmetry_residual': max(abs(a + b) for a, b in zip(values, swapped)),
                'diagonal_max': max(abs(v) for v in diagonal),
                'shift_deviation': max(abs(a - b) for a, b in zip(values, shifted_values)),
            }
            columns[name] = values
        n = geom.grid.sizes[axis]
        lo = 0 if geom.grid.periodic[axis] else margin
        coords = geom.grid.axis_coordinates(axis)[lo:n - (0 if geom.grid.periodic[axis] else margin)]
        rows = np.column_stack([coords] + [columns[name] for name in builders])
        self.table('omega.csv', ['xi', *builders], rows)
        return metrics

    def task_convergence(self):
        block = self.config.convergence
        quantity = block['quantity']
        evaluate = getattr(self, f'_error_{quantity}')
        report = solver.refinement_ladder(evaluate, block.get('factors', [1, 2, 4]))
        rows = list(zip(report.spacings, report.errors))
        self.table('ladder.csv', ['h', 'error'], rows)
        return dict(report.as_dict(), quantity=quantity)

    # --- convergence quantities: factor -> (h, error) ---

    def _error_sphere_mean_curvature(self, factor):
        geom = self.build_geometry(factor)
        radius = self.parametrization.params(self.overrides).get('radius', 1.0)
        interior = geom.grid.interior_mask(INTERIOR_MARGIN)
        return max(geom.grid.spacings), _max(geom.mean[..., 0] - 2.0 / radius, interior)

    def _error_catenoid_mean_curvature(self, factor):
        geom = self.build_geometry(factor)
        return max(geom.grid.spacings), _max(geom.mean, geom.grid.interior_mask(INTERIOR_MARGIN))

    def _error_qec_eom_sphere(self, factor):
        geom = self.build_geometry(factor)
        eom = actions.qec_eom_residual(geom)
        return max(geom.grid.spacings), _max(eom, geom.grid.interior_mask(QEC_MARGIN))

    def _error_derivative_sin(self, factor):
        grid = self.build_grid(factor)
        xi = grid.coordinates()[..., 0]
        return grid.spacings[0], _max(grid.diff(np.sin(xi), 0) - np.cos(xi))

    def _error_great_circle_divergence(self, factor):
        geom = self.build_geometry(factor)
        phi1, phi2 = self.normal_pair(geom)
        current = symplectic.qec_current_adjoint_pair(geom, phi1, phi2)
        report = symplectic.divergence(current, geom, INTERIOR_MARGIN)
        return max(geom.grid.spacings), report.max_norm
