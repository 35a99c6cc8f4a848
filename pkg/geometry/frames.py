# geometry/frames.py
"""
Gauss-Weingarten data of an embedding.

Conventions (kept literally):

    gamma_ab      = g(e_a, e_b)
    K_ab^i        = -g(D_a e_b, n^i)
    omega_a^{ij}  = g(D_a n^i, n^j)
    g(R(Y1, Y2) Y3, Y4) = R_{mu nu alpha beta} Y1^nu Y2^mu Y3^alpha Y4^beta

Array layout per node (after the grid axes):
    tangents       [a, mu]          normals        [i, mu]
    gamma          [a, b]           wv_christoffel [a, b, c]  (gamma_ab^c)
    extrinsic      [a, b, i]        mean           [i]
    twist          [a, i, j]
    riemann_a      [i, j]           riemann_b      [a, b, i, j]
    riemann_c      [b, j, i, k]
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from django.conf import settings

from .background import christoffel_at, metric_at, riemann_at
from .exceptions import DegenerateEmbeddingError, ShapeMismatchError
from .worldvolume import NORMAL, WORLDVOLUME

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Frame:
    tangents: np.ndarray
    normals: np.ndarray = None
    normals_lower: np.ndarray = None

    @property
    def codim(self):
        return 0 if self.normals is None else self.normals.shape[-2]


@dataclass(frozen=True)
class GeometryCache:
    embedding: object
    model: object
    metric: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray
    frame: Frame
    gamma: np.ndarray
    gamma_inv: np.ndarray
    sqrt_det: np.ndarray
    wv_christoffel: np.ndarray
    extrinsic: np.ndarray
    mean: np.ndarray
    twist: np.ndarray
    riemann_a: np.ndarray
    riemann_b: np.ndarray
    riemann_c: np.ndarray
    on_shell: bool = False
    covariant_tangent_derivative: np.ndarray = field(default=None, repr=False)

    # --- shortcuts ---

    @property
    def grid(self):
        return self.embedding.grid

    @property
    def dim(self):
        return self.grid.dim

    @property
    def codim(self):
        return self.frame.codim

    @property
    def nd(self):
        return self.grid.dim

    @property
    def tangents(self):
        return self.frame.tangents

    @property
    def normals(self):
        return self.frame.normals

    @property
    def extrinsic_upper(self):
        """K^{ab}_i with both worldvolume indices raised."""
        return np.einsum('...ac,...bd,...cdi->...abi', self.gamma_inv, self.gamma_inv, self.extrinsic)

    @property
    def curvature_square(self):
        """S^i_j = K_ab^i K^{ab}_j."""
        return np.einsum('...abi,...abj->...ij', self.extrinsic, self.extrinsic_upper)

    @property
    def shell_mean(self):
        """Mean curvature as it enters on-shell formulas (exactly 0 when on shell)."""
        return np.zeros_like(self.mean) if self.on_shell else self.mean

    def as_on_shell(self, flag=True):
        return replace(self, on_shell=flag)

    def max_mean_curvature(self, margin=0):
        mask = self.grid.interior_mask(margin) if margin else np.ones(self.grid.shape, bool)
        return float(np.max(np.abs(self.mean[mask]), initial=0.0))

    # --- twist-covariant calculus ---

    def covariant_derivative(self, values, kinds):
        return normal_cov_derivative(values, kinds, self)

    def raise_derivative(self, d):
        """Raise the derivative index inserted after the node axes."""
        nd = self.nd
        shape = d.shape
        flat = d.reshape(shape[:nd + 1] + (-1,))
        out = np.einsum('...ab,...br->...ar', self.gamma_inv, flat)
        return out.reshape(shape)

    def laplacian(self, values):
        return laplacian(values, self)

    def weights(self):
        """Quadrature weight times the measure, the inner-product weight per node."""
        return self.grid.quadrature_weights() * self.sqrt_det

    def inner(self, u, v, mask=None):
        """<u, v> = int sqrt|gamma| u_i v^i."""
        w = self.weights()
        if mask is not None:
            w = w * mask
        local = np.einsum('...i,...i->...', np.asarray(u).reshape(self.grid.shape + (-1,)),
                          np.asarray(v).reshape(self.grid.shape + (-1,)))
        return float(np.sum(w * local))

    def norm(self, u, mask=None):
        return float(np.sqrt(max(self.inner(u, u, mask), 0.0)))


# --- 1. TANGENTS AND INDUCED METRIC ---

def tangent_frame(embedding, model=None):
    grid = embedding.grid
    tangents = grid.gradient(embedding.points, embedding.translations)
    return Frame(tangents=tangents)


def _ambient_metric(embedding, model):
    return metric_at(model, embedding.points)


def induced_metric(frame, metric):
    """gamma_ab, gamma^ab and sqrt|det gamma|; raises on degenerate nodes."""
    e = frame.tangents
    gamma = np.einsum('...am,...mn,...bn->...ab', e, metric, e)
    gamma = 0.5 * (gamma + np.swapaxes(gamma, -1, -2))
    det = np.linalg.det(gamma)
    floor = settings.BRANE_DEGENERATE_DET
    if np.any(~np.isfinite(det)) or np.any(np.abs(det) < floor):
        bad = int(np.sum(~(np.abs(det) >= floor)))
        raise DegenerateEmbeddingError(f'degenerate induced metric at {bad} node(s)')
    gamma_inv = np.linalg.inv(gamma)
    gamma_inv = 0.5 * (gamma_inv + np.swapaxes(gamma_inv, -1, -2))
    return gamma, gamma_inv, np.sqrt(np.abs(det))


# --- 2. NORMAL FRAME ---

def normal_frame(frame, metric, gamma_inv, normal_rotation=None):
    """Deterministic Gram-Schmidt of the canonical ambient axes.

    Axes are tried in fixed order and skipped per node when their normal
    projection is below BRANE_NORMAL_THRESHOLD. The last normal is oriented
    so that det[e_1 .. e_D, n^1 .. n^m] > 0.
    """
    e = frame.tangents
    node_shape = e.shape[:-2]
    dim, n_amb = e.shape[-2], e.shape[-1]
    codim = n_amb - dim
    if codim < 1:
        raise DegenerateEmbeddingError('ambient dimension must exceed the worldvolume dimension')
    threshold = settings.BRANE_NORMAL_THRESHOLD
    e_lower = np.einsum('...mn,...an->...am', metric, e)
    normals = np.zeros(node_shape + (codim, n_amb))
    count = np.zeros(node_shape, dtype=int)

    for axis in range(n_amb):
        candidate = np.zeros(n_amb)
        candidate[axis] = 1.0
        # remove tangent and already accepted normal components
        along_e = np.einsum('...am,m->...a', e_lower, candidate)
        v = candidate - np.einsum('...a,...ab,...bm->...m', along_e, gamma_inv, e)
        n_lower = np.einsum('...mn,...in->...im', metric, normals)
        along_n = np.einsum('...im,m->...i', n_lower, candidate)
        v = v - np.einsum('...i,...im->...m', along_n, normals)
        norm2 = np.einsum('...m,...mn,...n->...', v, metric, v)
        scale = metric[..., axis, axis]
        accept = (norm2 > (threshold ** 2) * np.abs(scale)) & (count < codim)
        unit = v / np.sqrt(np.where(norm2 > 0, norm2, 1.0))[..., None]
        for slot in range(codim):
            chosen = accept & (count == slot)
            normals[chosen, slot] = unit[chosen]
        count += accept

    if np.any(count < codim):
        missing = int(np.sum(count < codim))
        raise DegenerateEmbeddingError(f'fewer than {codim} independent normals at {missing} node(s)')

    basis = np.concatenate([e, normals], axis=-2)
    flip = np.linalg.det(basis) < 0
    normals[flip, codim - 1] *= -1.0

    if normal_rotation is not None:
        rotation = np.asarray(normal_rotation, dtype=float)
        normals = np.einsum('ij,...jm->...im', rotation, normals)

    normals_lower = np.einsum('...mn,...in->...im', metric, normals)
    return Frame(tangents=e, normals=normals, normals_lower=normals_lower)


def orthonormality_residuals(frame, metric):
    """(max |g(e_a, n^i)|, max |g(n^i, n^j) - delta^ij|)."""
    cross = np.einsum('...am,...im->...ai', frame.tangents, frame.normals_lower)
    gram = np.einsum('...im,...jm->...ij', frame.normals, frame.normals_lower)
    return float(np.max(np.abs(cross))), float(np.max(np.abs(gram - np.eye(frame.codim))))


# --- 3. EXTRINSIC DATA ---

def _covariant_tangent_derivative(embedding, frame, christoffel):
    """D_a e_b^mu = d_a e_b^mu + Gamma^mu_{nu rho} e_a^nu e_b^rho, layout [a, b, mu]."""
    grid = embedding.grid
    de = grid.gradient(frame.tangents)
    return de + np.einsum('...mnr,...an,...br->...abm', christoffel, frame.tangents, frame.tangents)


def extrinsic_curvature(dee, frame):
    k = -np.einsum('...abm,...im->...abi', dee, frame.normals_lower)
    return 0.5 * (k + np.swapaxes(k, -2, -3))


def worldvolume_christoffel(dee, frame, metric, gamma_inv):
    e_lower = np.einsum('...mn,...an->...am', metric, frame.tangents)
    lowered = np.einsum('...abm,...dm->...abd', dee, e_lower)
    chris = np.einsum('...abd,...dc->...abc', lowered, gamma_inv)
    return 0.5 * (chris + np.swapaxes(chris, -2, -3))


def mean_curvature(extrinsic, gamma_inv):
    return np.einsum('...ab,...abi->...i', gamma_inv, extrinsic)


def twist_potential(embedding, frame, christoffel):
    grid = embedding.grid
    dn = grid.gradient(frame.normals)
    dn = dn + np.einsum('...mnr,...an,...ir->...aim', christoffel, frame.tangents, frame.normals)
    omega = np.einsum('...aim,...jm->...aij', dn, frame.normals_lower)
    return 0.5 * (omega - np.swapaxes(omega, -1, -2))


def projected_riemann(frame, riemann, gamma_inv):
    """A^i_j, B_ab^{ij} = g(R(e_a, n^j) e_b, n^i) and C_b^{jik} = g(R(n_k, e_b) n^j, n^i)."""
    e, n = frame.tangents, frame.normals
    if not np.any(riemann):
        dim, codim = e.shape[-2], n.shape[-2]
        node_shape = e.shape[:-2]
        return (np.zeros(node_shape + (codim, codim)),
                np.zeros(node_shape + (dim, dim, codim, codim)),
                np.zeros(node_shape + (dim, codim, codim, codim)))
    b = np.einsum('...pqrs,...xq,...jp,...yr,...is->...xyij', riemann, e, n, e, n, optimize=True)
    c = np.einsum('...pqrs,...kq,...bp,...jr,...is->...bjik', riemann, n, e, n, n, optimize=True)
    a = np.einsum('...xy,...xyij->...ij', gamma_inv, b)
    return a, b, c


# --- 4. TWIST-COVARIANT DERIVATIVES ---

def _contract_slot(connection, values, nd, slot):
    """connection[..., a, x, y] T[..., y at slot ...] -> [..., a, ..., x at slot, ...]."""
    moved = np.moveaxis(values, nd + slot, -1)
    rest = moved.shape[nd:-1]
    flat = moved.reshape(moved.shape[:nd] + (-1, moved.shape[-1]))
    out = np.einsum('...axy,...ry->...arx', connection, flat)
    out = out.reshape(out.shape[:nd + 1] + rest + (out.shape[-1],))
    return np.moveaxis(out, -1, nd + 1 + slot)


def normal_cov_derivative(values, kinds, geom):
    """Twist-covariant derivative; the new derivative index follows the node axes.

    ``kinds`` tags every value slot as a lower worldvolume index ('a') or a
    normal index ('i'). Worldvolume slots are corrected with gamma_ab^c,
    normal slots with omega_a^{ij}.
    """
    values = np.asarray(values, dtype=float)
    nd = geom.nd
    if values.ndim - nd != len(kinds):
        raise ShapeMismatchError('one index-kind tag is needed per value slot')
    d = geom.grid.gradient(values)
    for slot, kind in enumerate(kinds):
        if kind == WORLDVOLUME:
            if values.shape[nd + slot] != geom.dim:
                raise ShapeMismatchError('worldvolume slot has the wrong length')
            d = d - _contract_slot(geom.wv_christoffel, values, nd, slot)
        elif kind == NORMAL:
            if values.shape[nd + slot] != geom.codim:
                raise ShapeMismatchError('normal slot has the wrong length')
            d = d - _contract_slot(geom.twist, values, nd, slot)
        else:
            raise ShapeMismatchError(f"index kind '{kind}' has no twist-covariant derivative")
    return d


def laplacian(values, geom):
    """(1/sqrt|gamma|) grad~_a (sqrt|gamma| gamma^ab grad~_b f) for normal-indexed f."""
    values = np.asarray(values, dtype=float)
    nd = geom.nd
    kinds = (NORMAL,) * (values.ndim - nd)
    flux = geom.raise_derivative(normal_cov_derivative(values, kinds, geom))
    flux = flux * geom.sqrt_det.reshape(geom.grid.shape + (1,) * (flux.ndim - nd))
    div = sum(
        geom.grid.diff(flux[(slice(None),) * nd + (a,)], a)
        for a in range(geom.dim)
    )
    for slot in range(len(kinds)):
        moved = np.moveaxis(flux, nd + 1 + slot, -1)
        rest = moved.shape[nd + 1:-1]
        flat = moved.reshape(moved.shape[:nd + 1] + (-1, moved.shape[-1]))
        corr = np.einsum('...aij,...arj->...ri', geom.twist, flat)
        corr = corr.reshape(corr.shape[:nd] + rest + (corr.shape[-1],))
        div = div - np.moveaxis(corr, -1, nd + slot)
    return div / geom.sqrt_det.reshape(geom.grid.shape + (1,) * (values.ndim - nd))


def metric_christoffel(geom):
    """gamma_ab^c from differences of the induced metric, layout [a, b, c]."""
    dg = geom.grid.gradient(geom.gamma)
    lowered = 0.5 * (dg + np.swapaxes(dg, -3, -2) - np.moveaxis(dg, -3, -1))
    return np.einsum('...abd,...dc->...abc', lowered, geom.gamma_inv)


def gauss_weingarten_residual(geom, margin=0):
    """max | D_a e_b - (gamma_ab^c e_c - K_ab^i n_i) | over the grid.

    gamma_ab^c comes from the metric, not from projecting D_a e_b, so the
    residual compares two independent discretizations.
    """
    dee = geom.covariant_tangent_derivative
    rebuilt = (
        np.einsum('...abc,...cm->...abm', metric_christoffel(geom), geom.tangents)
        - np.einsum('...abi,...im->...abm', geom.extrinsic, geom.normals)
    )
    mask = geom.grid.interior_mask(margin) if margin else np.ones(geom.grid.shape, bool)
    return float(np.max(np.abs(dee - rebuilt)[mask], initial=0.0))


# --- 5. ASSEMBLY ---

def build_geometry(embedding, model, normal_rotation=None, on_shell=False):
    """Compute every Gauss-Weingarten quantity once; the cache is read-only afterwards."""
    if embedding.ambient_dim != model.dim:
        raise ShapeMismatchError('embedding and background have different ambient dimensions')
    if embedding.ambient_dim < embedding.grid.dim + 1:
        raise ShapeMismatchError('ambient dimension must be at least D + 1')
    metric = metric_at(model, embedding.points)
    christoffel = christoffel_at(model, embedding.points)
    riemann = riemann_at(model, embedding.points)

    frame = tangent_frame(embedding, model)
    gamma, gamma_inv, sqrt_det = induced_metric(frame, metric)
    frame = normal_frame(frame, metric, gamma_inv, normal_rotation)

    dee = _covariant_tangent_derivative(embedding, frame, christoffel)
    extrinsic = extrinsic_curvature(dee, frame)
    wv_chris = worldvolume_christoffel(dee, frame, metric, gamma_inv)
    twist = twist_potential(embedding, frame, christoffel)
    a, b, c = projected_riemann(frame, riemann, gamma_inv)

    geom = GeometryCache(
        embedding=embedding, model=model, metric=metric, christoffel=christoffel,
        riemann=riemann, frame=frame, gamma=gamma, gamma_inv=gamma_inv,
        sqrt_det=sqrt_det, wv_christoffel=wv_chris, extrinsic=extrinsic,
        mean=mean_curvature(extrinsic, gamma_inv), twist=twist,
        riemann_a=a, riemann_b=b, riemann_c=c, on_shell=on_shell,
        covariant_tangent_derivative=dee,
    )
    logger.debug('geometry on %s grid: codim %d, max|K| %.3e',
                 embedding.grid.shape, geom.codim, geom.max_mean_curvature())
    return geom
