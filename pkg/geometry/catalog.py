# geometry/catalog.py
"""
Named closed-form parametrizations and analytic perturbation fields.

Every parametrization knows its worldvolume/ambient dimensions, its default
parameter box and which axes are periodic, so a run config only has to name
it and give node counts.
"""
from dataclasses import dataclass

import numpy as np

from .background import CONSTANT_CURVATURE, FLAT
from .worldvolume import GridSpec, sample_parametrization

TWO_PI = 2.0 * np.pi

# Coordinate planes and lines through the origin are totally geodesic in the conformal chart
EXTREMAL_EVERYWHERE = (FLAT, CONSTANT_CURVATURE)


@dataclass(frozen=True)
class Parametrization:
    name: str
    dim: int
    ambient: int
    defaults: dict
    extremal_in: tuple = ()

    def params(self, overrides=None):
        merged = dict(self.defaults)
        merged.update(overrides or {})
        return merged

    def grid(self, sizes, overrides=None):
        p = self.params(overrides)
        return GridSpec.from_bounds(p['bounds'], sizes, p['periodic'])

    def mapping(self, overrides=None):
        return MAPS[self.name](self.params(overrides))

    def sample(self, sizes, overrides=None, model=None, grid=None):
        grid = grid or self.grid(sizes, overrides)
        return sample_parametrization(self.mapping(overrides), grid, model)

    def is_extremal(self, model, overrides=None):
        """Whether the closed form solves K^i = 0 in this background."""
        if model.kind not in self.extremal_in:
            return False
        kappa = self.params(overrides).get('kappa')
        return kappa is None or kappa == model.kappa


# --- 1. MAPS ---

def _plane(p):
    pad = p.get('ambient', 3) - 2
    def f(xi):
        return np.concatenate([xi[..., :2], np.zeros(xi.shape[:-1] + (pad,))], axis=-1)
    return f


def _line(p):
    pad = p.get('ambient', 4) - 1
    def f(xi):
        return np.concatenate([xi[..., :1], np.zeros(xi.shape[:-1] + (pad,))], axis=-1)
    return f


def _circle(p):
    r, pad = p['radius'], p.get('ambient', 2) - 2
    def f(xi):
        t = xi[..., 0]
        return np.stack([r * np.cos(t), r * np.sin(t)] + [np.zeros_like(t)] * pad, axis=-1)
    return f


def _great_circle(p):
    # |x| = 2 / sqrt(kappa) is the equator of the conformal chart
    return _circle({'radius': 2.0 / np.sqrt(p['kappa']), 'ambient': p.get('ambient', 2)})


def _sphere(p):
    r = p['radius']
    def f(xi):
        th, ph = xi[..., 0], xi[..., 1]
        return r * np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
    return f


def _cylinder(p):
    r = p['radius']
    def f(xi):
        th, z = xi[..., 0], xi[..., 1]
        return np.stack([r * np.cos(th), r * np.sin(th), z], axis=-1)
    return f


def _catenoid(p):
    c = p['neck']
    def f(xi):
        u, v = xi[..., 0], xi[..., 1]
        return np.stack([c * np.cosh(v) * np.cos(u), c * np.cosh(v) * np.sin(u), c * v], axis=-1)
    return f


def _torus(p):
    big, small = p['major'], p['minor']
    def f(xi):
        u, v = xi[..., 0], xi[..., 1]
        rho = big + small * np.cos(v)
        return np.stack([rho * np.cos(u), rho * np.sin(u), small * np.sin(v)], axis=-1)
    return f


def _helix(p):
    r, pitch = p['radius'], p['pitch']
    def f(xi):
        t = xi[..., 0]
        return np.stack([r * np.cos(t), r * np.sin(t), pitch * t], axis=-1)
    return f


def _disk(p):
    lift = p['bump']
    def f(xi):
        x, y = xi[..., 0], xi[..., 1]
        return np.stack([
            x * np.sqrt(1.0 - 0.5 * y ** 2),
            y * np.sqrt(1.0 - 0.5 * x ** 2),
            lift * (1.0 - x ** 2) * (1.0 - y ** 2),
        ], axis=-1)
    return f


def _two_rings(p):
    r, bulge, z0 = p['radius'], p['bulge'], p['height']
    def f(xi):
        u, v = xi[..., 0], xi[..., 1]
        rho = r + bulge * np.cos(0.5 * np.pi * v / z0)
        return np.stack([rho * np.cos(u), rho * np.sin(u), v], axis=-1)
    return f


def _segment(p):
    amp, pad = p['amplitude'], p.get('ambient', 2) - 2
    def f(xi):
        s = xi[..., 0]
        return np.stack([s, amp * np.sin(np.pi * s)] + [np.zeros_like(s)] * pad, axis=-1)
    return f


MAPS = {
    'plane': _plane,
    'line': _line,
    'circle': _circle,
    'great_circle': _great_circle,
    'sphere': _sphere,
    'cylinder': _cylinder,
    'catenoid': _catenoid,
    'torus': _torus,
    'helix': _helix,
    'disk': _disk,
    'two_rings': _two_rings,
    'segment': _segment,
}

PARAMETRIZATIONS = {
    'plane': Parametrization('plane', 2, 3, {
        'bounds': [[0.0, 1.0], [0.0, 1.0]], 'periodic': [False, False], 'ambient': 3,
    }, extremal_in=EXTREMAL_EVERYWHERE),
    'line': Parametrization('line', 1, 4, {
        'bounds': [[0.0, 1.0]], 'periodic': [False], 'ambient': 4,
    }, extremal_in=EXTREMAL_EVERYWHERE),
    'circle': Parametrization('circle', 1, 2, {
        'bounds': [[0.0, TWO_PI]], 'periodic': [True], 'radius': 1.0, 'ambient': 2,
    }),
    'great_circle': Parametrization('great_circle', 1, 2, {
        'bounds': [[0.0, TWO_PI]], 'periodic': [True], 'kappa': 1.0, 'ambient': 2,
    }, extremal_in=(CONSTANT_CURVATURE,)),
    'sphere': Parametrization('sphere', 2, 3, {
        'bounds': [[0.2, np.pi - 0.2], [0.0, TWO_PI]], 'periodic': [False, True], 'radius': 1.0,
    }),
    'cylinder': Parametrization('cylinder', 2, 3, {
        'bounds': [[0.0, TWO_PI], [0.0, 1.0]], 'periodic': [True, False], 'radius': 1.0,
    }),
    'catenoid': Parametrization('catenoid', 2, 3, {
        'bounds': [[0.0, TWO_PI], [-1.0, 1.0]], 'periodic': [True, False], 'neck': 1.0,
    }, extremal_in=(FLAT,)),
    'torus': Parametrization('torus', 2, 3, {
        'bounds': [[0.0, TWO_PI], [0.0, TWO_PI]], 'periodic': [True, True], 'major': 2.0, 'minor': 0.7,
    }),
    'helix': Parametrization('helix', 1, 3, {
        'bounds': [[0.0, TWO_PI]], 'periodic': [False], 'radius': 1.0, 'pitch': 0.3,
    }),
    'disk': Parametrization('disk', 2, 3, {
        'bounds': [[-1.0, 1.0], [-1.0, 1.0]], 'periodic': [False, False], 'bump': 0.2,
    }),
    'two_rings': Parametrization('two_rings', 2, 3, {
        'bounds': [[0.0, TWO_PI], [-0.4, 0.4]], 'periodic': [True, False],
        'radius': 1.0, 'bulge': 0.0, 'height': 0.4,
    }),
    'segment': Parametrization('segment', 1, 2, {
        'bounds': [[0.0, 1.0]], 'periodic': [False], 'amplitude': 0.05, 'ambient': 2,
    }),
}


def get_parametrization(name):
    try:
        return PARAMETRIZATIONS[name]
    except KeyError:
        raise KeyError(f"unknown parametrization '{name}'") from None


# --- 2. PERTURBATIONS ---

def _constant(xi, p):
    return np.full(xi.shape[:-1], float(p.get('value', 1.0)))


def _fourier(xi, p):
    s = xi[..., p.get('axis', 0)]
    return p.get('amplitude', 1.0) * np.sin(p.get('k', 1.0) * s + p.get('phase', 0.0))


def _bump(xi, p):
    center = np.asarray(p.get('center', [0.5] * xi.shape[-1]), dtype=float)
    radius = float(p.get('radius', 0.3))
    r2 = np.sum(((xi - center) / radius) ** 2, axis=-1)
    return p.get('amplitude', 1.0) * np.where(r2 < 1.0, (1.0 - r2) ** 4, 0.0)


def _sphere_l1(xi, p):
    th, ph = xi[..., 0], xi[..., 1]
    m = int(p.get('m', 0))
    if m == 0:
        return np.cos(th)
    return np.sin(th) * (np.cos(ph) if m == 1 else np.sin(ph))


STRIP_HARMONIC_VARIANTS = ('cosh_sin', 'sinh_sin', 'x_cosh_sin')


def _strip_harmonic(xi, p):
    x, y = xi[..., 0], xi[..., 1]
    variant = p.get('variant', 'cosh_sin')
    if variant == 'cosh_sin':
        return np.cosh(x) * np.sin(y)
    if variant == 'sinh_sin':
        return np.sinh(x) * np.sin(y)
    if variant == 'x_cosh_sin':
        return x * np.cosh(x) * np.sin(y)
    raise KeyError(f"unknown strip_harmonic variant '{variant}'")


PERTURBATIONS = {
    'constant': _constant,
    'fourier': _fourier,
    'bump': _bump,
    'sphere_l1': _sphere_l1,
    'strip_harmonic': _strip_harmonic,
}


def normal_perturbation(grid, codim, spec):
    """phi^i with the named profile in normal component ``spec['component']``."""
    kind = spec['kind']
    if kind not in PERTURBATIONS:
        raise KeyError(f"unknown perturbation kind '{kind}'")
    component = int(spec.get('component', 0))
    if not 0 <= component < codim:
        raise KeyError(f'normal component {component} out of range for codimension {codim}')
    phi = np.zeros(grid.shape + (codim,))
    phi[..., component] = PERTURBATIONS[kind](grid.coordinates(), spec)
    return phi


# --- 3. AMBIENT VARIATIONS ---

def _radial(geom, p):
    points = geom.embedding.points
    return p.get('amplitude', 1.0) * points / np.linalg.norm(points, axis=-1, keepdims=True)


def _rotation(geom, p):
    points = geom.embedding.points
    out = np.zeros_like(points)
    out[..., 0], out[..., 1] = -points[..., 1], points[..., 0]
    return p.get('amplitude', 1.0) * out


def _tangential(geom, p):
    profile = p.get('profile', {'kind': 'constant'})
    f = PERTURBATIONS[profile['kind']](geom.grid.coordinates(), profile)
    return f[..., None] * geom.tangents[..., int(p.get('axis', 0)), :]


AMBIENT_VARIATIONS = {
    'radial': _radial,
    'rotation': _rotation,
    'tangential': _tangential,
}


def ambient_variation(geom, spec):
    """delta X^mu built from the geometry (radial push, rigid rotation in the x^0 x^1 plane, f e_a)."""
    kind = spec['kind']
    if kind not in AMBIENT_VARIATIONS:
        raise KeyError(f"unknown ambient variation '{kind}'")
    return AMBIENT_VARIATIONS[kind](geom, spec)
