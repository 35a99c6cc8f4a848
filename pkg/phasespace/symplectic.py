# phasespace/symplectic.py
"""
Symplectic potentials and currents on the space of solutions.

One-forms on the solution space are represented by their evaluation on
concrete perturbation fields, two-forms by antisymmetric bilinear
functionals on pairs. Every pair current is antisymmetrized explicitly,
so omega(phi, phi) = 0 holds exactly.

Currents are stored densitized (sqrt|gamma| included): conservation is the
plain coordinate divergence d_a j^a.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from dynamics.actions import qec_potential_density
from dynamics.deformation import (
    check_normal, decompose, deform_grad, deform_grad_mean, deform_mean_curvature,
    deform_tangential_oneform_pair, grad, grad_up,
)
from geometry.exceptions import AntisymmetryError, ShapeMismatchError, SliceError

logger = logging.getLogger(__name__)

DNG_PAIR = 'dng_pair'
QEC_ADJOINT_PAIR = 'qec_adjoint_pair'
QEC_FROM_POTENTIAL = 'qec_from_potential'
PROVENANCES = (DNG_PAIR, QEC_ADJOINT_PAIR, QEC_FROM_POTENTIAL)


@dataclass
class DivergenceReport:
    values: np.ndarray = field(repr=False)
    max_norm: float
    l2_norm: float


@dataclass
class CurrentField:
    values: np.ndarray = field(repr=False)
    provenance: str
    grid: object = field(repr=False, default=None)
    swap_residual: float = 0.0

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown current provenance '{self.provenance}'")
        if self.grid is not None and self.values.shape != self.grid.shape + (self.grid.dim,):
            raise ShapeMismatchError('current must carry one worldvolume component per axis')
        if self.swap_residual > settings.BRANE_SWAP_TOLERANCE:
            raise AntisymmetryError(
                f'{self.provenance} current changes by {self.swap_residual:.2e} (relative) '
                f'under the pair swap'
            )

    def scale(self):
        return float(np.max(np.abs(self.values), initial=0.0))


def _size(*fields):
    return max((float(np.max(np.abs(f), initial=0.0)) for f in fields if f is not None), default=0.0)


def swap_defect(geom, forward, backward, first, second, order):
    """max |j(1, 2) + j(2, 1)| relative to the size rounding can reach.

    ``first`` and ``second`` are the fields of each slot; rounding in an
    order-k difference grows like h^-k, so kernel pairs whose current
    cancels to zero are not flagged.
    """
    swap = float(np.max(np.abs(forward + backward), initial=0.0))
    reach = float(np.max(geom.sqrt_det)) * _size(*first) * _size(*second) / geom.grid.h_min ** order
    scale = max(_size(forward, backward), reach)
    return swap / scale if scale else 0.0


def _pair(geom, builder, phi1, phi2, provenance, order=1, antisymmetric=True, **kwargs):
    """Antisymmetrized pair current.

    An antisymmetric builder returns (j(1, 2) - j(2, 1)) / 2, which only
    removes rounding, and its swap defect is checked. A one-form variation
    (antisymmetric=False) returns j(1, 2) - j(2, 1).
    """
    swapped = {_swap_key(k): v for k, v in kwargs.items()}
    forward = builder(geom, phi1, phi2, **kwargs)
    backward = builder(geom, phi2, phi1, **swapped)
    if not antisymmetric:
        return CurrentField(forward - backward, provenance, geom.grid)
    defect = swap_defect(geom, forward, backward, (phi1, kwargs.get('tangential1')),
                         (phi2, kwargs.get('tangential2')), order)
    return CurrentField(0.5 * (forward - backward), provenance, geom.grid, defect)


def _swap_key(key):
    return {'tangential1': 'tangential2', 'tangential2': 'tangential1'}.get(key, key)


# --- 1. DNG ---

def _dng_current(geom, phi1, phi2, tangential1=None, tangential2=None):
    oneform = deform_tangential_oneform_pair(geom, phi1, phi2, tangential1, tangential2)
    return -geom.sqrt_det[..., None] * oneform


def dng_potential_pair(geom, phi1, phi2, tangential1=None, tangential2=None):
    """j^a = sqrt|gamma| [(phi1 grad~^a phi2 - phi2 grad~^a phi1) + K^{abi}(phi1_i phi2_b - phi2_i phi1_b)]."""
    return _pair(geom, _dng_current, phi1, phi2, DNG_PAIR,
                 tangential1=tangential1, tangential2=tangential2)


# --- 2. QEC ---

def qec_potential(geom, phi, tangential=None):
    return qec_potential_density(geom, phi, tangential)


def _qec_adjoint(geom, phi1, phi2):
    lap1, lap2 = geom.laplacian(phi1), geom.laplacian(phi2)
    d1, d2 = grad_up(geom, phi1), grad_up(geom, phi2)
    dlap1, dlap2 = grad_up(geom, lap1), grad_up(geom, lap2)
    m = geom.curvature_square - geom.riemann_a
    exchange = (
        np.einsum('...i,...ai->...a', phi1, dlap2)
        + np.einsum('...i,...ai->...a', lap1, d2)
        - np.einsum('...ai,...i->...a', d1, lap2)
        - np.einsum('...ai,...i->...a', dlap1, phi2)
    )
    mass = 2.0 * (
        np.einsum('...i,...ij,...aj->...a', phi1, m, d2)
        - np.einsum('...ai,...ij,...j->...a', d1, m, phi2)
    )
    return geom.sqrt_det[..., None] * (exchange + mass)


def qec_current_adjoint_pair(geom, phi1, phi2):
    """Exchange current of the self-adjoint P^2: div j = phi1 P^2 phi2 - phi2 P^2 phi1."""
    phi1, phi2 = check_normal(geom, phi1), check_normal(geom, phi2)
    return _pair(geom, _qec_adjoint, phi1, phi2, QEC_ADJOINT_PAIR, order=3)


def _potential_variation(geom, phi1, phi2):
    """D_{phi1} of Psi^a(phi2) with phi2 fundamental and no tangential part.

    Only the on-shell variation is kept. Terms that vanish when K^i = 0 and
    phi2 solves P^2 phi2 = 0 are dropped, so off shell the result need not
    match the adjoint current.
    """
    k = geom.shell_mean
    sqrt_det = geom.sqrt_det[..., None, None]
    k_dot_phi = np.einsum('...i,...i->...', k, phi1)[..., None, None]
    d_density = (sqrt_det * k_dot_phi * geom.gamma_inv
                 - 2.0 * sqrt_det * np.einsum('...abi,...i->...ab', geom.extrinsic_upper, phi1))

    d_k = grad(geom, k)
    d_phi2 = grad(geom, phi2)
    h = np.einsum('...i,...bi->...b', phi2, d_k) - np.einsum('...i,...bi->...b', k, d_phi2)

    dd_k = deform_grad_mean(geom, phi1)
    dk = deform_mean_curvature(geom, phi1)
    dd_phi2 = deform_grad(geom, phi2, phi1)
    inner = (
        np.einsum('...i,...bi->...b', phi2, dd_k)
        - np.einsum('...i,...bi->...b', dk, d_phi2)
        - np.einsum('...i,...bi->...b', k, dd_phi2)
    )
    return (np.einsum('...ab,...b->...a', d_density, h)
            + geom.sqrt_det[..., None] * np.einsum('...ab,...b->...a', geom.gamma_inv, inner))


def qec_current_from_potential(geom, phi1, phi2):
    """j'^a = D_{phi1} Psi^a(phi2) - D_{phi2} Psi^a(phi1), valid on shell only."""
    phi1, phi2 = check_normal(geom, phi1), check_normal(geom, phi2)
    if not geom.on_shell:
        logger.warning('potential-route current on an off-shell geometry; it need not match the adjoint route')
    return _pair(geom, _potential_variation, phi1, phi2, QEC_FROM_POTENTIAL, antisymmetric=False)


def _term_scale(geom, phi1, phi2):
    """Largest single exchange term; kernel pairs can cancel the current itself to zero."""
    def size(values):
        return np.linalg.norm(values.reshape(geom.grid.shape + (-1,)), axis=-1)

    lap1, lap2 = geom.laplacian(phi1), geom.laplacian(phi2)
    terms = (
        size(phi1) * size(grad_up(geom, lap2)) + size(phi2) * size(grad_up(geom, lap1))
        + size(lap1) * size(grad_up(geom, phi2)) + size(lap2) * size(grad_up(geom, phi1))
    )
    return float(np.max(geom.sqrt_det * terms, initial=0.0))


def route_equality_residual(geom, phi1, phi2):
    """max |j_potential - j_adjoint| relative to the size of the exchange terms."""
    phi1, phi2 = check_normal(geom, phi1), check_normal(geom, phi2)
    adjoint = qec_current_adjoint_pair(geom, phi1, phi2)
    potential = qec_current_from_potential(geom, phi1, phi2)
    scale = max(adjoint.scale(), _term_scale(geom, phi1, phi2))
    gap = float(np.max(np.abs(potential.values - adjoint.values), initial=0.0))
    return gap / scale if scale else gap


# --- 3. CONSERVATION AND SLICES ---

def divergence(current, geom, margin=0):
    div = geom.grid.divergence(current.values)
    mask = geom.grid.interior_mask(margin) if margin else np.ones(geom.grid.shape, dtype=bool)
    w = geom.grid.quadrature_weights() * mask
    return DivergenceReport(
        values=div,
        max_norm=float(np.max(np.abs(div[mask]), initial=0.0)),
        l2_norm=float(np.sqrt(np.sum(w * div ** 2))),
    )


@dataclass(frozen=True)
class SliceSpec:
    axis: int
    index: int

    def validate(self, grid):
        if not 0 <= self.axis < grid.dim:
            raise SliceError(f'slice axis {self.axis} out of range')
        n = grid.sizes[self.axis]
        if grid.periodic[self.axis]:
            if not 0 <= self.index < n:
                raise SliceError(f'slice index {self.index} outside 0..{n - 1}')
        elif not 0 < self.index < n - 1:
            raise SliceError(f'slice index {self.index} is not interior to 1..{n - 2}')
        return self


@dataclass(frozen=True)
class SymplecticValue:
    omega: float
    slice: SliceSpec
    pair: tuple = ()


def symplectic_form(current, slice_spec, pair=()):
    """omega = int_Sigma j^{a0} over the slice xi^{a0} = const."""
    grid = current.grid
    slice_spec.validate(grid)
    flux = np.take(current.values[..., slice_spec.axis], slice_spec.index, axis=slice_spec.axis)
    if grid.dim == 1:
        return SymplecticValue(float(flux), slice_spec, tuple(pair))
    weights = grid.quadrature_weights(skip=slice_spec.axis)
    return SymplecticValue(float(np.sum(weights * flux)), slice_spec, tuple(pair))


def slice_sweep(current, axis, margin=4):
    """omega on every slice of ``axis`` at least ``margin`` nodes from a non-periodic end."""
    n = current.grid.sizes[axis]
    lo, hi = (0, n) if current.grid.periodic[axis] else (margin, n - margin)
    return [symplectic_form(current, SliceSpec(axis, index)) for index in range(lo, hi)]


def _exact_shift(geom, phi1, phi2, along=0):
    """eta^a = eps^{ab} d_b f with f = phi1 . d_c phi2 - phi2 . d_c phi1."""
    if geom.dim != 2:
        return np.zeros(geom.grid.shape + (geom.dim,))
    d1 = geom.grid.diff(phi1, along)
    d2 = geom.grid.diff(phi2, along)
    f = np.einsum('...i,...i->...', phi1, d2) - np.einsum('...i,...i->...', phi2, d1)
    return np.stack([geom.grid.diff(f, 1), -geom.grid.diff(f, 0)], axis=-1)


def shift_potential(current, geom, phi1, phi2, along=0, weight=1.0):
    """Add the pair evaluation of a closed-form shift eta^a of the potential.

    The shift is antisymmetric in the pair and divergence free, so neither
    conservation nor omega on a periodic slice may change.
    """
    phi1, phi2 = check_normal(geom, phi1), check_normal(geom, phi2)
    forward = _exact_shift(geom, phi1, phi2, along)
    backward = _exact_shift(geom, phi2, phi1, along)
    defect = swap_defect(geom, forward, backward, (phi1,), (phi2,), order=2)
    eta = weight * 0.5 * (forward - backward)
    return CurrentField(current.values + eta, current.provenance, current.grid,
                        max(current.swap_residual, defect))


# --- 4. GAUGE ---

@dataclass
class GaugeReport:
    normal_residual: float
    decomposition_residual: float
    currents: dict


def gauge_degeneracy_check(geom, delta_x, partner):
    """Purely tangential delta X must produce no normal field and no current."""
    parts = decompose(geom, delta_x)
    phi = parts.normal
    partner = check_normal(geom, partner)
    scale = max(float(np.max(np.abs(partner), initial=0.0)), 1.0)
    currents = {
        DNG_PAIR: dng_potential_pair(geom, phi, partner),
        QEC_ADJOINT_PAIR: qec_current_adjoint_pair(geom, phi, partner),
        QEC_FROM_POTENTIAL: qec_current_from_potential(geom, phi, partner),
    }
    report = GaugeReport(
        normal_residual=float(np.max(np.abs(phi), initial=0.0)),
        decomposition_residual=parts.residual,
        currents={name: c.scale() / scale for name, c in currents.items()},
    )
    logger.debug('gauge check: %s', report)
    return report
