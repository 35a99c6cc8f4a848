# dynamics/linearized.py
"""
Linearized operators about an embedding.

    M   = -K_ab^i K^{ab}_j + A^i_j           (mass matrix)
    P   = Lap~ - M = Lap~ + S - A            (Jacobi operator)
    P^2 expanded with S and A kept apart:
        Lap Lap + 2 S Lap + 2 grad S . grad + (Lap S) + S S
        - 2 A Lap - 2 grad A . grad - (Lap A) - A S - S A + A A

The grouped mass-matrix form and the composition P(P phi) are two further
routes to P^2. The expansion uses the product rule, so it matches the
composition only up to O(h^2) where S or A vary along the worldvolume.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings
from scipy import sparse

from geometry.exceptions import BudgetExceededError
from geometry.worldvolume import NORMAL

from .deformation import check_normal, grad

logger = logging.getLogger(__name__)

JACOBI = 'P'
JACOBI_SQUARED = 'P2'
OPERATOR_KINDS = [
    (JACOBI, 'Jacobi operator'),
    (JACOBI_SQUARED, 'Squared Jacobi operator (expanded)'),
]


def _apply(matrix, phi):
    return np.einsum('...ij,...j->...i', matrix, phi)


def _product(left, right):
    return np.einsum('...ik,...kj->...ij', left, right)


def mass_matrix(geom):
    return geom.riemann_a - geom.curvature_square


def mass_symmetry_residual(geom):
    m = mass_matrix(geom)
    return float(np.max(np.abs(m - np.swapaxes(m, -1, -2)), initial=0.0))


def jacobi_apply(geom, phi):
    phi = check_normal(geom, phi)
    return geom.laplacian(phi) - _apply(mass_matrix(geom), phi)


def p_squared_composed(geom, phi):
    return jacobi_apply(geom, jacobi_apply(geom, phi))


def p_squared_expanded(geom, phi):
    """P^2 written out term by term with S = K_ab K^ab and A kept apart.

    Lap Lap + 2 S Lap + 2 grad S . grad + (Lap S) + S S
            - 2 A Lap - 2 grad A . grad - (Lap A) - A S - S A + A A
    """
    phi = check_normal(geom, phi)
    s, a = geom.curvature_square, geom.riemann_a
    lap = geom.laplacian(phi)
    d_phi = grad(geom, phi)
    d_s = geom.raise_derivative(geom.covariant_derivative(s, (NORMAL, NORMAL)))
    d_a = geom.raise_derivative(geom.covariant_derivative(a, (NORMAL, NORMAL)))
    return (
        geom.laplacian(lap)
        + 2.0 * _apply(s, lap)
        + 2.0 * np.einsum('...aij,...aj->...i', d_s, d_phi)
        + _apply(geom.laplacian(s), phi)
        + _apply(_product(s, s), phi)
        - 2.0 * _apply(a, lap)
        - 2.0 * np.einsum('...aij,...aj->...i', d_a, d_phi)
        - _apply(geom.laplacian(a), phi)
        - _apply(_product(a, s), phi)
        - _apply(_product(s, a), phi)
        + _apply(_product(a, a), phi)
    )


def p_squared_mass_form(geom, phi):
    """Lap Lap - 2 M Lap - 2 grad M . grad - (Lap M) + M M, grouped through M."""
    phi = check_normal(geom, phi)
    m = mass_matrix(geom)
    lap = geom.laplacian(phi)
    d_m_up = geom.raise_derivative(geom.covariant_derivative(m, (NORMAL, NORMAL)))
    return (
        geom.laplacian(lap)
        - 2.0 * _apply(m, lap)
        - 2.0 * np.einsum('...aij,...aj->...i', d_m_up, grad(geom, phi))
        - _apply(geom.laplacian(m), phi)
        + _apply(_product(m, m), phi)
    )


APPLY = {
    JACOBI: jacobi_apply,
    JACOBI_SQUARED: p_squared_expanded,
}


def dng_jacobi_residual(geom, phi, mask=None):
    """||P phi|| in the measure-weighted L2 norm."""
    return geom.norm(jacobi_apply(geom, phi), mask)


def weighted_asymmetry(geom, apply, phi1, phi2, mask=None):
    """|<phi1, P phi2> - <P phi1, phi2>| / (||phi1|| ||phi2||)."""
    scale = geom.norm(phi1, mask) * geom.norm(phi2, mask)
    if scale == 0.0:
        return 0.0
    gap = geom.inner(phi1, apply(geom, phi2), mask) - geom.inner(apply(geom, phi1), phi2, mask)
    return abs(gap) / scale


# --- ASSEMBLY ---

@dataclass
class DiscreteOperator:
    kind: str
    matrix: sparse.csr_matrix
    weights: np.ndarray
    shape: tuple
    codim: int
    h_min: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.matrix.shape[0]

    def apply(self, phi):
        flat = np.asarray(phi, dtype=float).reshape(-1)
        return (self.matrix @ flat).reshape(self.shape + (self.codim,))

    def dense(self):
        return self.matrix.toarray()

    def weighted(self):
        """W P with W = diag(quadrature * sqrt|gamma|); symmetric for a self-adjoint P."""
        return sparse.diags(self.weights) @ self.matrix

    def asymmetry(self):
        wp = self.weighted().toarray()
        scale = np.max(np.abs(wp))
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(wp - wp.T)) / scale)

    def row_sums(self):
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def scale(self):
        """Largest absolute row sum, the infinity norm of the matrix."""
        return float(np.max(np.asarray(abs(self.matrix).sum(axis=1)).ravel(), initial=0.0))

    def kernel_threshold(self):
        factor = settings.BRANE_KERNEL_FACTOR
        # signed sums: Laplacian rows cancel, leaving the mass scale
        signed = float(np.max(np.abs(self.row_sums()), initial=0.0))
        return factor * self.h_min ** 2 * max(1.0, signed)


def assemble(geom, kind=JACOBI):
    """Apply the operator to every unit field; column order is node-major, then normal index."""
    if kind not in APPLY:
        raise ValueError(f"unknown operator kind '{kind}'")
    shape, codim = geom.grid.shape, geom.codim
    size = geom.grid.node_count * codim
    budget = settings.BRANE_DOF_BUDGET
    if size > budget:
        raise BudgetExceededError(f'{size} degrees of freedom exceed the budget of {budget}')
    apply = APPLY[kind]
    rows, cols, vals = [], [], []
    basis = np.zeros(size)
    for column in range(size):
        basis[column] = 1.0
        image = apply(geom, basis.reshape(shape + (codim,))).reshape(-1)
        basis[column] = 0.0
        nonzero = np.flatnonzero(image)
        rows.append(nonzero)
        cols.append(np.full(nonzero.size, column))
        vals.append(image[nonzero])
    matrix = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )
    weights = np.repeat(geom.weights().reshape(-1), codim)
    logger.info('assembled %s: %d dof, %d non-zeros', kind, size, matrix.nnz)
    return DiscreteOperator(kind, matrix, weights, shape, codim, geom.grid.h_min)
