# dynamics/solver.py
"""
Extremal surfaces by damped mean-curvature flow, Jacobi kernels by a
measure-weighted eigen-solve, and grid-refinement studies.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from geometry.exceptions import NonConvergenceError
from geometry.frames import build_geometry

from .actions import dng_action
from .linearized import JACOBI, assemble

logger = logging.getLogger(__name__)

# Explicit flow stays stable for tau * max(gamma^aa / h_a^2) below this
STABILITY_FACTOR = 0.4
MIN_STEP_FRACTION = 1e-6
AREA_SLACK = 1e-14


@dataclass
class RelaxParams:
    step: float = None
    max_iterations: int = 5000
    target: float = 1e-8
    fixed: np.ndarray = None
    log_every: int = 100


@dataclass
class RelaxResult:
    embedding: object
    geometry: object
    converged: bool
    iterations: int
    history: list = field(default_factory=list)

    @property
    def residual(self):
        return self.history[-1]['residual'] if self.history else None


def boundary_mask(grid):
    """Nodes on the ends of non-periodic axes."""
    return ~grid.interior_mask(1)


def stable_step(geom):
    h2 = np.asarray(geom.grid.spacings, dtype=float) ** 2
    diag = np.einsum('...aa->...a', geom.gamma_inv)
    return STABILITY_FACTOR / float(np.max(np.sum(np.abs(diag) / h2, axis=-1)))


def _residual(geom, free):
    return float(np.max(np.abs(geom.mean[free]), initial=0.0))


def relax_dng(embedding, model, params=None):
    """X <- X - tau K^i n_i on free nodes until max |K| <= target.

    A step that raises the area is rejected and tau halved. The returned
    geometry is flagged on shell.
    """
    params = params or RelaxParams()
    grid = embedding.grid
    fixed = boundary_mask(grid) if params.fixed is None else np.asarray(params.fixed, dtype=bool)
    free = ~fixed
    if not np.any(free):
        raise ValueError('every node is fixed; nothing to relax')

    geom = build_geometry(embedding, model)
    area = -dng_action(geom)
    tau = params.step or stable_step(geom)
    floor = tau * MIN_STEP_FRACTION
    history = [{'iteration': 0, 'area': area, 'residual': _residual(geom, free), 'step': tau}]

    for iteration in range(1, params.max_iterations + 1):
        residual = history[-1]['residual']
        if residual <= params.target:
            logger.info('relaxation converged after %d steps: max|K| %.3e, area %.12g',
                        iteration - 1, residual, area)
            return RelaxResult(embedding, geom.as_on_shell(), True, iteration - 1, history)

        push = np.einsum('...i,...im->...m', geom.mean, geom.normals)
        push[fixed] = 0.0
        while True:
            trial = embedding.moved(-tau * push)
            trial_geom = build_geometry(trial, model)
            trial_area = -dng_action(trial_geom)
            if trial_area <= area + AREA_SLACK * abs(area):
                break
            tau *= 0.5
            logger.warning('area increased at step %d; halving step to %.3e', iteration, tau)
            if tau < floor:
                raise NonConvergenceError(
                    f'step size collapsed below {floor:.3e}', best=embedding, history=history,
                )

        embedding, geom, area = trial, trial_geom, trial_area
        history.append({
            'iteration': iteration, 'area': area, 'residual': _residual(geom, free), 'step': tau,
        })
        if iteration % params.log_every == 0:
            logger.debug('step %d: area %.12g, max|K| %.3e', iteration, area, history[-1]['residual'])

    if history[-1]['residual'] <= params.target:
        return RelaxResult(embedding, geom.as_on_shell(), True, params.max_iterations, history)
    raise NonConvergenceError(
        f'max|K| = {history[-1]["residual"]:.3e} after {params.max_iterations} steps '
        f'(target {params.target:.1e})',
        best=embedding, history=history,
    )


# --- CATENOID ---

def catenoid_neck(radius, half_height):
    """Stable catenoid spanning rings of ``radius`` at z = +/- half_height: c cosh(z0 / c) = R."""
    turning = optimize.brentq(lambda t: t * np.tanh(t) - 1.0, 0.5, 2.0)
    c_min = half_height / turning
    f = lambda c: c * np.cosh(half_height / c) - radius
    if f(c_min) > 0:
        raise NonConvergenceError(
            f'no catenoid spans rings of radius {radius} at separation {2 * half_height}'
        )
    return optimize.brentq(f, c_min, radius)


def catenoid_profile_deviation(embedding, neck, margin=0):
    """max | rho - c cosh(z / c) | over nodes of a surface of revolution about the z axis."""
    points = embedding.points
    rho = np.hypot(points[..., 0], points[..., 1])
    deviation = np.abs(rho - neck * np.cosh(points[..., 2] / neck))
    if margin:
        deviation = deviation[embedding.grid.interior_mask(margin)]
    return float(np.max(deviation))


# --- JACOBI KERNEL ---

@dataclass
class KernelResult:
    eigenvalues: np.ndarray
    fields: list
    threshold: float
    operator: object = None

    @property
    def dimension(self):
        return len(self.fields)

    def spectrum_head(self, count=8):
        order = np.argsort(np.abs(self.eigenvalues))
        return [float(v) for v in self.eigenvalues[order[:count]]]


def solve_jacobi_kernel(geom, kind=JACOBI, threshold=None):
    """Generalized eigenproblem (W P) v = lambda W v; returns W-orthonormal kernel fields."""
    op = assemble(geom, kind)
    wp = op.weighted().toarray()
    wp = 0.5 * (wp + wp.T)
    values, vectors = linalg.eigh(wp, np.diag(op.weights))
    tau = op.kernel_threshold() if threshold is None else threshold
    keep = np.flatnonzero(np.abs(values) <= tau)
    fields = [vectors[:, k].reshape(op.shape + (op.codim,)) for k in keep]
    logger.info('%s kernel: dimension %d at threshold %.3e', kind, len(fields), tau)
    return KernelResult(values, fields, tau, op)


# --- REFINEMENT STUDIES ---

EXACT = 'exact'
FITTED = 'fitted'
NON_MONOTONE = 'non_monotone'

# Errors below this are rounding, not discretization
ROUNDING_FLOOR = 1e-11


@dataclass
class ConvergenceReport:
    spacings: list
    errors: list
    status: str
    order: float = None
    constant: float = None

    def as_dict(self):
        return {
            'spacings': self.spacings, 'errors': self.errors, 'status': self.status,
            'fitted_order': self.order, 'constant': self.constant,
        }


def convergence_study(spacings, errors):
    """Least-squares slope of log(error) against log(h) over at least three levels."""
    h = np.asarray(spacings, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.size < 3 or h.size != e.size:
        raise ValueError('a convergence study needs at least three matching levels')
    order_h = np.argsort(h)[::-1]
    h, e = h[order_h], e[order_h]
    as_lists = ([float(x) for x in h], [float(x) for x in e])
    if np.all(e <= ROUNDING_FLOOR):
        return ConvergenceReport(*as_lists, status=EXACT)
    if np.any(np.diff(e) >= 0):
        logger.warning('non-monotone error ladder %s; no order fitted', as_lists[1])
        return ConvergenceReport(*as_lists, status=NON_MONOTONE)
    slope, intercept = np.polyfit(np.log(h), np.log(e), 1)
    return ConvergenceReport(*as_lists, status=FITTED, order=float(slope), constant=float(np.exp(intercept)))


def refinement_ladder(evaluate, factors=(1, 2, 4)):
    """Call ``evaluate(factor) -> (h, error)`` per level and fit the order."""
    levels = [evaluate(f) for f in factors]
    return convergence_study([h for h, _ in levels], [err for _, err in levels])
