# dynamics/actions.py
"""
DNG (area) and QEC (quadratic extrinsic curvature) actions, their first
variations split into a bulk EOM contraction and a divergence (flux) term.

    S_DNG = -mu    int sqrt|gamma|
    S_QEC =  alpha int sqrt|gamma| K_i K^i

Divergence terms are integrated as discrete fluxes, so on fully periodic
worldvolumes they vanish to rounding.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from geometry.background import christoffel_derivative_at
from geometry.exceptions import ShapeMismatchError
from geometry.frames import build_geometry

from .deformation import check_normal, check_tangential, grad_up

logger = logging.getLogger(__name__)

DNG = 'dng'
QEC = 'qec'


@dataclass
class ActionBreakdown:
    bulk: float
    divergence: float
    bulk_density: np.ndarray = field(default=None, repr=False)
    flux: np.ndarray = field(default=None, repr=False)

    @property
    def total(self):
        return self.bulk + self.divergence

    def as_dict(self):
        return {'total': self.total, 'bulk': self.bulk, 'divergence': self.divergence}


def _flux_integral(geom, flux):
    return geom.grid.integrate(geom.grid.divergence(flux))


def _dot(u, v):
    return np.einsum('...i,...i->...', u, v)


# --- DNG ---

def dng_action(geom, mu=1.0):
    return -mu * geom.grid.integrate(geom.sqrt_det)


def dng_eom_residual(geom, margin=0):
    """The DNG equation of motion is K^i = 0; returns (K^i, max |K|)."""
    return geom.mean, geom.max_mean_curvature(margin)


def dng_first_variation(geom, phi=None, tangential=None, mu=1.0):
    phi = np.zeros(geom.grid.shape + (geom.codim,)) if phi is None else check_normal(geom, phi)
    tangential = check_tangential(geom, tangential)
    density = -mu * geom.sqrt_det * _dot(geom.mean, phi)
    flux = -mu * geom.sqrt_det[..., None] * tangential
    return ActionBreakdown(
        bulk=geom.grid.integrate(density),
        divergence=_flux_integral(geom, flux),
        bulk_density=density,
        flux=flux,
    )


# --- QEC ---

def qec_action(geom, alpha=1.0):
    return alpha * geom.grid.integrate(geom.sqrt_det * _dot(geom.mean, geom.mean))


def qec_eom_residual(geom):
    """E^i = Lap~ K^i + S^i_j K^j - A^i_j K^j - 1/2 (K.K) K^i.

    Sign fixed so the first-variation bulk term is -2 alpha int sqrt|gamma| E.phi.
    """
    k = geom.mean
    mass = geom.curvature_square - geom.riemann_a
    return (
        geom.laplacian(k)
        + np.einsum('...ij,...j->...i', mass, k)
        - 0.5 * _dot(k, k)[..., None] * k
    )


def qec_potential_density(geom, phi, tangential=None, mean=None):
    """Psi^a = sqrt|gamma| [1/2 K.K phi^a + phi_i grad~^a K^i - K_i grad~^a phi^i]."""
    phi = check_normal(geom, phi)
    tangential = check_tangential(geom, tangential)
    k = geom.shell_mean if mean is None else mean
    d_k = grad_up(geom, k)
    d_phi = grad_up(geom, phi)
    inner = (
        0.5 * _dot(k, k)[..., None] * tangential
        + np.einsum('...i,...ai->...a', phi, d_k)
        - np.einsum('...i,...ai->...a', k, d_phi)
    )
    return geom.sqrt_det[..., None] * inner


def qec_first_variation(geom, phi=None, tangential=None, alpha=1.0):
    phi = np.zeros(geom.grid.shape + (geom.codim,)) if phi is None else check_normal(geom, phi)
    density = -2.0 * alpha * geom.sqrt_det * _dot(qec_eom_residual(geom), phi)
    flux = 2.0 * alpha * qec_potential_density(geom, phi, tangential, mean=geom.mean)
    return ActionBreakdown(
        bulk=geom.grid.integrate(density),
        divergence=_flux_integral(geom, flux),
        bulk_density=density,
        flux=flux,
    )


# --- DISCRETE VARIATION ---

def _linearized_densities(geom, delta_x):
    """Directional derivatives of sqrt|gamma| and K.K along delta X, node by node.

    K.K is written frame-free as g(h_perp, h_perp) with h = gamma^ab D_a e_b,
    so the derivative needs no variation of the Gram-Schmidt normals. Every
    grid stencil is linear, so the result is the exact derivative of the
    discrete densities.
    """
    grid = geom.grid
    delta_x = np.asarray(delta_x, dtype=float)
    if delta_x.shape != geom.embedding.points.shape:
        raise ShapeMismatchError('delta X must have the embedding shape')
    e, g, gi = geom.tangents, geom.metric, geom.gamma_inv
    chris = geom.christoffel

    de = grid.gradient(delta_x)
    # d_r g_mn = g_ln Gamma^l_rm + g_ml Gamma^l_rn
    lowered = np.einsum('...ln,...lrm->...rmn', g, chris)
    delta_g = np.einsum('...rmn,...r->...mn', lowered + np.swapaxes(lowered, -1, -2), delta_x)
    d_gamma = np.einsum('...am,...mn,...bn->...ab', de, g, e)
    d_gamma = d_gamma + np.swapaxes(d_gamma, -1, -2) + np.einsum('...am,...mn,...bn->...ab', e, delta_g, e)
    d_sqrt = 0.5 * geom.sqrt_det * np.einsum('...ab,...ab->...', gi, d_gamma)
    d_gi = -np.einsum('...ac,...cd,...db->...ab', gi, d_gamma, gi)

    delta_chris = np.einsum('...smnr,...s->...mnr', christoffel_derivative_at(geom.model, geom.embedding.points),
                            delta_x)
    d_dee = (
        grid.gradient(de)
        + np.einsum('...mnr,...an,...br->...abm', delta_chris, e, e)
        + np.einsum('...mnr,...an,...br->...abm', chris, de, e)
        + np.einsum('...mnr,...an,...br->...abm', chris, e, de)
    )
    dee = geom.covariant_tangent_derivative
    h = np.einsum('...ab,...abm->...m', gi, dee)
    dh = np.einsum('...ab,...abm->...m', d_gi, dee) + np.einsum('...ab,...abm->...m', gi, d_dee)

    h_lower = np.einsum('...mn,...n->...m', g, h)
    p = np.einsum('...am,...m->...a', e, h_lower)
    square = _dot(h, h_lower) - np.einsum('...a,...ab,...b->...', p, gi, p)
    dp = (np.einsum('...am,...m->...a', de, h_lower)
          + np.einsum('...am,...mn,...n->...a', e, delta_g, h)
          + np.einsum('...am,...mn,...n->...a', e, g, dh))
    d_square = (np.einsum('...m,...mn,...n->...', h, delta_g, h) + 2.0 * _dot(dh, h_lower)
                - 2.0 * np.einsum('...a,...ab,...b->...', dp, gi, p)
                - np.einsum('...a,...ab,...b->...', p, d_gi, p))
    return d_sqrt, square, d_square


def discrete_first_variation(geom, delta_x, action=DNG, coupling=1.0):
    """d/deps of the grid-summed action at eps = 0 along X + eps delta X.

    Agrees with action_variation_oracle up to the oracle's own O(eps^2)
    truncation; the continuum breakdown differs from it by O(h^2).
    """
    d_sqrt, square, d_square = _linearized_densities(geom, delta_x)
    if action == DNG:
        density = -coupling * d_sqrt
    elif action == QEC:
        density = coupling * (d_sqrt * square + geom.sqrt_det * d_square)
    else:
        raise ValueError(f"unknown action '{action}'")
    return geom.grid.integrate(density)


# --- ORACLE ---

ACTIONS = {DNG: dng_action, QEC: qec_action}
VARIATIONS = {DNG: dng_first_variation, QEC: qec_first_variation}


def action_variation_oracle(geom, delta_x, action=DNG, coupling=1.0, eps=None):
    """(S[X + eps dX] - S[X - eps dX]) / 2 eps on rebuilt geometries."""
    eps = eps or settings.BRANE_ACTION_FD_STEP
    evaluate = ACTIONS[action]
    delta_x = np.asarray(delta_x, dtype=float)
    plus = build_geometry(geom.embedding.moved(eps * delta_x), geom.model)
    minus = build_geometry(geom.embedding.moved(-eps * delta_x), geom.model)
    value = (evaluate(plus, coupling) - evaluate(minus, coupling)) / (2 * eps)
    logger.debug('%s action variation oracle (eps=%.1e): %.6e', action, eps, value)
    return value
