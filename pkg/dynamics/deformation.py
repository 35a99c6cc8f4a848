# dynamics/deformation.py
"""
Covariant deformation calculus along a normal variation X -> X + eps n_i phi^i.

All operations are pure functions of a ``GeometryCache`` and node-major
perturbation arrays: normal fields have shape ``grid.shape + (codim,)``,
tangential fields ``grid.shape + (D,)`` (upper index).

The normal frame is transported without rotation (gamma^{ij} = 0), so
every ``deform_*`` result is the twist-covariant derivative D~.
"""
import logging
from dataclasses import dataclass

import numpy as np
from django.conf import settings

from geometry.exceptions import ShapeMismatchError
from geometry.frames import build_geometry
from geometry.worldvolume import NORMAL, WORLDVOLUME

logger = logging.getLogger(__name__)


def check_normal(geom, phi):
    phi = np.asarray(phi, dtype=float)
    if phi.shape != geom.grid.shape + (geom.codim,):
        raise ShapeMismatchError(
            f'normal field shape {phi.shape} != {geom.grid.shape + (geom.codim,)}'
        )
    return phi


def check_tangential(geom, phi_a):
    if phi_a is None:
        return np.zeros(geom.grid.shape + (geom.dim,))
    phi_a = np.asarray(phi_a, dtype=float)
    if phi_a.shape != geom.grid.shape + (geom.dim,):
        raise ShapeMismatchError(
            f'tangential field shape {phi_a.shape} != {geom.grid.shape + (geom.dim,)}'
        )
    return phi_a


def grad(geom, phi):
    """grad~_a phi^i, layout [a, i]."""
    return geom.covariant_derivative(phi, (NORMAL,))


def grad_up(geom, phi):
    """grad~^a phi^i."""
    return geom.raise_derivative(grad(geom, phi))


def hessian(geom, phi):
    """grad~_a grad~_b phi^i, symmetrized, layout [a, b, i]."""
    second = geom.covariant_derivative(grad(geom, phi), (WORLDVOLUME, NORMAL))
    return 0.5 * (second + np.swapaxes(second, -2, -3))


# --- 1. DECOMPOSITION ---

@dataclass(frozen=True)
class Decomposition:
    tangential: np.ndarray   # phi^a
    normal: np.ndarray       # phi^i
    residual: float          # max |e_a phi^a + n_i phi^i - dX|


def decompose(geom, delta_x):
    """Split an ambient variation into tangential and normal parts."""
    delta_x = np.asarray(delta_x, dtype=float)
    expected = geom.grid.shape + (geom.embedding.ambient_dim,)
    if delta_x.shape != expected:
        raise ShapeMismatchError(f'ambient variation shape {delta_x.shape} != {expected}')
    e_lower = np.einsum('...mn,...an->...am', geom.metric, geom.tangents)
    phi_lower = np.einsum('...am,...m->...a', e_lower, delta_x)
    phi_a = np.einsum('...ab,...b->...a', geom.gamma_inv, phi_lower)
    phi_i = np.einsum('...im,...m->...i', geom.frame.normals_lower, delta_x)
    rebuilt = (np.einsum('...a,...am->...m', phi_a, geom.tangents)
               + np.einsum('...i,...im->...m', phi_i, geom.normals))
    return Decomposition(phi_a, phi_i, float(np.max(np.abs(rebuilt - delta_x))))


def normal_displacement(geom, phi):
    """Ambient field n_i phi^i."""
    return np.einsum('...i,...im->...m', check_normal(geom, phi), geom.normals)


# --- 2. FIRST-ORDER DEFORMATIONS ---

def deform_metric(geom, phi):
    """(D gamma_ab, D gamma^{ab}) = (2 K_ab^i phi_i, -2 K^{ab}_i phi^i)."""
    phi = check_normal(geom, phi)
    lower = 2.0 * np.einsum('...abi,...i->...ab', geom.extrinsic, phi)
    upper = -2.0 * np.einsum('...abi,...i->...ab', geom.extrinsic_upper, phi)
    return lower, upper


def deform_measure(geom, phi):
    phi = check_normal(geom, phi)
    return geom.sqrt_det * np.einsum('...i,...i->...', geom.mean, phi)


def deform_tangent(geom, phi):
    """D e_a = beta_a^b e_b + J_a^i n_i; returns (beta_ab, J_ai)."""
    phi = check_normal(geom, phi)
    beta = np.einsum('...abi,...i->...ab', geom.extrinsic, phi)
    return beta, grad(geom, phi)


def deform_normal(geom, phi):
    """D n^i = -grad~^a phi^i e_a as an ambient vector field, layout [i, mu]."""
    return -np.einsum('...ai,...am->...im', grad_up(geom, check_normal(geom, phi)), geom.tangents)


def deform_extrinsic(geom, phi):
    """D~ K_ab^i = -grad~_a grad~_b phi^i + K_ac^i K^c_b{}_j phi^j + B_ab^{ij} phi_j."""
    phi = check_normal(geom, phi)
    mixed = np.einsum('...cd,...bdj->...cbj', geom.gamma_inv, geom.extrinsic)
    kk = np.einsum('...aci,...cbj,...j->...abi', geom.extrinsic, mixed, phi)
    riemann = np.einsum('...abij,...j->...abi', geom.riemann_b, phi)
    return -hessian(geom, phi) + kk + riemann


def deform_mean_curvature(geom, phi):
    """D~ K^i = -Lap~ phi^i - S^i_j phi^j + A^i_j phi^j."""
    phi = check_normal(geom, phi)
    mass = geom.riemann_a - geom.curvature_square
    return -geom.laplacian(phi) + np.einsum('...ij,...j->...i', mass, phi)


def deform_twist(geom, phi):
    """T_a^{ij} = D omega_a^{ij} - grad~_a gamma^{ij}, layout [a, i, j]."""
    phi = check_normal(geom, phi)
    d_up = grad_up(geom, phi)
    kd = np.einsum('...abi,...bj->...aij', geom.extrinsic, d_up)
    curvature = np.einsum('...ajik,...k->...aij', geom.riemann_c, phi)
    return -kd + np.swapaxes(kd, -1, -2) + curvature


def deform_grad(geom, psi, phi, delta_psi=None):
    """D~ (grad~_b psi^i) = grad~_b (D~ psi^i) - T_b^{ij} psi_j.

    ``delta_psi`` defaults to zero: fundamental perturbations carry no
    second variation.
    """
    psi = check_normal(geom, psi)
    twist = deform_twist(geom, phi)
    out = -np.einsum('...bij,...j->...bi', twist, psi)
    if delta_psi is not None:
        out = out + grad(geom, check_normal(geom, delta_psi))
    return out


def deform_grad_phi(geom, psi, phi):
    """D~_phi (grad~ psi) for a fundamental perturbation psi."""
    return deform_grad(geom, psi, phi)


def deform_grad_mean(geom, phi):
    """D~ (grad~_b K^i) with D~K expanded by the product rule."""
    phi = check_normal(geom, phi)
    d_phi = grad(geom, phi)
    s = geom.curvature_square
    a = geom.riemann_a
    d_s = geom.covariant_derivative(s, (NORMAL, NORMAL))
    d_a = geom.covariant_derivative(a, (NORMAL, NORMAL))
    d_lap = grad(geom, geom.laplacian(phi))
    out = (
        -d_lap
        - np.einsum('...ij,...bj->...bi', s, d_phi)
        - np.einsum('...bij,...j->...bi', d_s, phi)
        + np.einsum('...bij,...j->...bi', d_a, phi)
        + np.einsum('...ij,...bj->...bi', a, d_phi)
    )
    twist = deform_twist(geom, phi)
    return out - np.einsum('...bij,...j->...bi', twist, geom.shell_mean)


def deform_tangential_oneform_pair(geom, phi1, phi2, tangential1=None, tangential2=None):
    """Pair evaluation of D(phi^a); antisymmetric in (1, 2)."""
    phi1, phi2 = check_normal(geom, phi1), check_normal(geom, phi2)
    t1 = np.einsum('...ab,...b->...a', geom.gamma, check_tangential(geom, tangential1))
    t2 = np.einsum('...ab,...b->...a', geom.gamma, check_tangential(geom, tangential2))
    k_up = geom.extrinsic_upper
    bend = (np.einsum('...abi,...i,...b->...a', k_up, phi1, t2)
            - np.einsum('...abi,...i,...b->...a', k_up, phi2, t1))
    exchange = (np.einsum('...i,...ai->...a', phi1, grad_up(geom, phi2))
                - np.einsum('...i,...ai->...a', phi2, grad_up(geom, phi1)))
    return -(bend + exchange)


# --- 3. PERTURBATION ORACLE ---

ORACLE_QUANTITIES = ('metric', 'inverse_metric', 'measure', 'extrinsic', 'mean', 'twist')


def _quantity(geom, name):
    return {
        'metric': lambda: geom.gamma,
        'inverse_metric': lambda: geom.gamma_inv,
        'measure': lambda: geom.sqrt_det,
        'extrinsic': lambda: geom.extrinsic,
        'mean': lambda: geom.mean,
        'twist': lambda: geom.twist,
    }[name]()


def perturbation_oracle(geom, phi, quantity, eps=None):
    """Centered difference of a cached quantity under X -> X +/- eps n_i phi^i.

    The rebuilt normal frames may rotate among themselves; that gauge part is
    removed so the result is comparable with the covariant derivative.
    """
    if quantity not in ORACLE_QUANTITIES:
        raise ValueError(f"unknown oracle quantity '{quantity}'")
    eps = eps or settings.BRANE_FD_STEP
    push = normal_displacement(geom, phi)
    plus = build_geometry(geom.embedding.moved(eps * push), geom.model)
    minus = build_geometry(geom.embedding.moved(-eps * push), geom.model)
    raw = (_quantity(plus, quantity) - _quantity(minus, quantity)) / (2 * eps)

    dn = (plus.normals - minus.normals) / (2 * eps)
    rotation = np.einsum('...im,...jm->...ij', dn, geom.frame.normals_lower)
    rotation = 0.5 * (rotation - np.swapaxes(rotation, -1, -2))
    if quantity == 'mean':
        raw = raw - np.einsum('...ij,...j->...i', rotation, geom.mean)
    elif quantity == 'extrinsic':
        raw = raw - np.einsum('...ij,...abj->...abi', rotation, geom.extrinsic)
    elif quantity == 'twist':
        raw = raw - (
            geom.grid.gradient(rotation)
            + np.einsum('...ik,...akj->...aij', rotation, geom.twist)
            + np.einsum('...aik,...jk->...aij', geom.twist, rotation)
        )
    logger.debug('oracle %s at eps=%.1e: max %.3e', quantity, eps, float(np.max(np.abs(raw))))
    return raw
