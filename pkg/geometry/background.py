# geometry/background.py
"""
Ambient spacetimes with analytic metric, connection and curvature.

Constant-curvature models live in the conformally flat chart

    g = Omega(x)^2 diag(signature),   Omega = 1 / (1 + kappa * eta(x, x) / 4)

which covers the sphere (kappa > 0), flat space (kappa = 0) and hyperbolic
space (kappa < 0) with one closed-form implementation. Every tensor is
returned fully lowered except the Christoffel symbols Gamma^mu_{nu rho}.

All evaluators are vectorised: a point array of shape (..., N) yields
arrays of shape (..., N, N), (..., N, N, N) and (..., N, N, N, N).
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from django.conf import settings

from .exceptions import ChartDomainError

logger = logging.getLogger(__name__)

FLAT = 'flat'
CONSTANT_CURVATURE = 'constant_curvature'
BACKGROUND_KINDS = [
    (FLAT, 'Flat'),
    (CONSTANT_CURVATURE, 'Constant curvature (conformal chart)'),
]

# Conformal factor denominators below this count as the chart pole
POLE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class BackgroundModel:
    kind: str
    signature: tuple
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in (FLAT, CONSTANT_CURVATURE):
            raise ValueError(f"unknown background kind '{self.kind}'")
        if any(s not in (-1, 1) for s in self.signature):
            raise ValueError('signature entries must be -1 or +1')
        if self.kind == FLAT and self.kappa != 0.0:
            raise ValueError('flat background requires kappa = 0')

    @property
    def dim(self):
        return len(self.signature)

    @property
    def eta(self):
        return np.diag(np.asarray(self.signature, dtype=float))

    @property
    def is_flat(self):
        return self.kind == FLAT or self.kappa == 0.0

    @classmethod
    def euclidean(cls, dim):
        return cls(FLAT, (1,) * dim, 0.0)

    @classmethod
    def sphere_chart(cls, dim, kappa=1.0):
        return cls(CONSTANT_CURVATURE, (1,) * dim, float(kappa))


# --- 1. CONFORMAL FACTOR ---

def _as_points(model, p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != model.dim:
        raise ValueError(f'point has {p.shape[-1]} coordinates, model needs {model.dim}')
    if not np.all(np.isfinite(p)):
        raise ChartDomainError('non-finite spacetime point')
    return p


def _conformal_factor(model, p):
    """Omega and the denominator 1 + kappa eta(x, x) / 4 at every point."""
    if model.is_flat:
        ones = np.ones(p.shape[:-1])
        return ones, ones
    sig = np.asarray(model.signature, dtype=float)
    denominator = 1.0 + 0.25 * model.kappa * np.sum(sig * p * p, axis=-1)
    if np.any(denominator <= POLE_TOLERANCE):
        raise ChartDomainError(
            f'point outside the conformal chart domain (kappa={model.kappa})'
        )
    return 1.0 / denominator, denominator


def in_domain(model, p):
    try:
        _conformal_factor(model, _as_points(model, p))
    except ChartDomainError:
        return False
    return True


# --- 2. ANALYTIC EVALUATORS ---

def metric_at(model, p):
    p = _as_points(model, p)
    omega, _ = _conformal_factor(model, p)
    return (omega ** 2)[..., None, None] * model.eta


def inverse_metric_at(model, p):
    p = _as_points(model, p)
    omega, _ = _conformal_factor(model, p)
    return (omega ** -2)[..., None, None] * model.eta


def christoffel_at(model, p):
    """Gamma^mu_{nu rho}, indices ordered [..., mu, nu, rho]."""
    p = _as_points(model, p)
    n = model.dim
    if model.is_flat:
        return np.zeros(p.shape[:-1] + (n, n, n))
    omega, _ = _conformal_factor(model, p)
    sig = np.asarray(model.signature, dtype=float)
    # d_lambda log(Omega), lowered; its eta-raised form is -kappa/2 Omega x^mu
    grad_lower = -0.5 * model.kappa * omega[..., None] * sig * p
    grad_upper = -0.5 * model.kappa * omega[..., None] * p
    delta = np.eye(n)
    return (
        np.einsum('mn,...r->...mnr', delta, grad_lower)
        + np.einsum('mr,...n->...mnr', delta, grad_lower)
        - np.einsum('nr,...m->...mnr', model.eta, grad_upper)
    )


def christoffel_derivative_at(model, p):
    """d_sigma Gamma^mu_{nu rho}, indices ordered [..., sigma, mu, nu, rho]."""
    p = _as_points(model, p)
    n = model.dim
    if model.is_flat:
        return np.zeros(p.shape[:-1] + (n, n, n, n))
    omega, _ = _conformal_factor(model, p)
    sig = np.asarray(model.signature, dtype=float)
    half = 0.5 * model.kappa * omega[..., None, None]
    grad_lower = -0.5 * model.kappa * omega[..., None] * sig * p
    grad_upper = -0.5 * model.kappa * omega[..., None] * p
    # d_s L_l = L_s L_l - kappa/2 Omega eta_sl,  d_s U^m = L_s U^m - kappa/2 Omega delta^m_s
    d_lower = np.einsum('...s,...l->...sl', grad_lower, grad_lower) - half * model.eta
    d_upper = np.einsum('...s,...m->...sm', grad_lower, grad_upper) - half * np.eye(n)
    delta = np.eye(n)
    return (
        np.einsum('mn,...sr->...smnr', delta, d_lower)
        + np.einsum('mr,...sn->...smnr', delta, d_lower)
        - np.einsum('nr,...sm->...smnr', model.eta, d_upper)
    )


def riemann_at(model, p):
    """R_{mu nu rho sigma} = kappa (g_{mu rho} g_{nu sigma} - g_{mu sigma} g_{nu rho})."""
    p = _as_points(model, p)
    n = model.dim
    if model.is_flat:
        return np.zeros(p.shape[:-1] + (n, n, n, n))
    g = metric_at(model, p)
    return model.kappa * (
        np.einsum('...mr,...ns->...mnrs', g, g)
        - np.einsum('...ms,...nr->...mnrs', g, g)
    )


def riemann_form(riemann, y1, y2, y3, y4):
    """g(R(Y1, Y2) Y3, Y4) = R_{mu nu alpha beta} Y1^nu Y2^mu Y3^alpha Y4^beta.

    The first two vectors enter crossed, as the deformation formulas are
    written. Vectors broadcast against the leading node axes of ``riemann``.
    """
    return np.einsum('...mnab,...n,...m,...a,...b->...', riemann, y1, y2, y3, y4)


# --- 3. FINITE-DIFFERENCE ORACLES ---

@dataclass
class OracleComparison:
    analytic: np.ndarray
    coarse: np.ndarray
    fine: np.ndarray
    extrapolated: np.ndarray
    steps: tuple = field(default_factory=tuple)

    @property
    def errors(self):
        scale = max(np.max(np.abs(self.analytic)), 1.0)
        return (
            np.max(np.abs(self.coarse - self.analytic)) / scale,
            np.max(np.abs(self.fine - self.analytic)) / scale,
        )

    @property
    def order(self):
        coarse, fine = self.errors
        if coarse == 0.0 or fine == 0.0:
            return float('inf')
        return float(np.log2(coarse / fine))

    @property
    def relative_error(self):
        scale = max(np.max(np.abs(self.analytic)), 1.0)
        return float(np.max(np.abs(self.extrapolated - self.analytic)) / scale)


def _centered_metric_derivative(model, p, step):
    """d_lambda g_{mu nu}, indices [lambda, mu, nu]."""
    n = model.dim
    out = np.empty((n, n, n))
    for lam in range(n):
        shift = np.zeros(n)
        shift[lam] = step
        out[lam] = (metric_at(model, p + shift) - metric_at(model, p - shift)) / (2 * step)
    return out


def fd_christoffel(model, p, step):
    p = _as_points(model, p)
    dg = _centered_metric_derivative(model, p, step)
    g_inv = inverse_metric_at(model, p)
    lowered = 0.5 * (
        np.einsum('rnl->lnr', dg) + np.einsum('nrl->lnr', dg) - dg
    )
    # lowered[l, n, r] = Gamma_{l n r}; raise the first index
    return np.einsum('ml,lnr->mnr', g_inv, lowered)


def fd_riemann(model, p, step):
    """R_{rho sigma mu nu} from centered differences of christoffel_at."""
    p = _as_points(model, p)
    n = model.dim
    gamma = christoffel_at(model, p)
    dgamma = np.empty((n, n, n, n))
    for lam in range(n):
        shift = np.zeros(n)
        shift[lam] = step
        dgamma[lam] = (christoffel_at(model, p + shift) - christoffel_at(model, p - shift)) / (2 * step)
    # R^r_{s m n} = d_m Gamma^r_{n s} - d_n Gamma^r_{m s} + Gamma^r_{m l} Gamma^l_{n s} - Gamma^r_{n l} Gamma^l_{m s}
    upper = (
        np.einsum('mrns->rsmn', dgamma)
        - np.einsum('nrms->rsmn', dgamma)
        + np.einsum('rml,lns->rsmn', gamma, gamma)
        - np.einsum('rnl,lms->rsmn', gamma, gamma)
    )
    return np.einsum('ar,rsmn->asmn', metric_at(model, p), upper)


def compare_with_oracle(model, p, quantity='riemann', step=None):
    """Analytic tensor against the Richardson pair (h, h/2) of its oracle."""
    step = step or settings.BRANE_FD_STEP
    if quantity == 'riemann':
        analytic, oracle = riemann_at(model, p), fd_riemann
    elif quantity == 'christoffel':
        analytic, oracle = christoffel_at(model, p), fd_christoffel
    else:
        raise ValueError(f"unknown oracle quantity '{quantity}'")
    coarse = oracle(model, p, step)
    fine = oracle(model, p, step / 2)
    extrapolated = (4.0 * fine - coarse) / 3.0
    comparison = OracleComparison(analytic, coarse, fine, extrapolated, (step, step / 2))
    logger.debug('%s oracle at %s: errors %s', quantity, p, comparison.errors)
    return comparison


# --- 4. IDENTITIES ---

def bianchi_residual(riemann):
    """max |R_{m[nrs]}| relative to max |R| (0 for flat)."""
    cyclic = (
        riemann
        + np.einsum('...mnrs->...mrsn', riemann)
        + np.einsum('...mnrs->...msnr', riemann)
    )
    scale = np.max(np.abs(riemann))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(cyclic)) / scale)


def symmetry_residual(riemann):
    """Largest violation of the antisymmetric pairs and pair symmetry."""
    return float(max(
        np.max(np.abs(riemann + np.swapaxes(riemann, -4, -3)), initial=0.0),
        np.max(np.abs(riemann + np.swapaxes(riemann, -2, -1)), initial=0.0),
        np.max(np.abs(riemann - np.einsum('...mnrs->...rsmn', riemann)), initial=0.0),
    ))


def sectional_curvature(model, p, u, v):
    """K(u, v) = R(u, v, u, v) / (g(u,u) g(v,v) - g(u,v)^2), standard slot order."""
    r = riemann_at(model, p)
    g = metric_at(model, p)
    num = np.einsum('mnrs,m,n,r,s->', r, u, v, u, v)
    den = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
    return float(num / den)
