# geometry/worldvolume.py
"""
Parameter grid, sampled fields and second-order finite differences.

Fields are stored node-major: an array of shape ``grid.sizes + slots``.
Periodic axes use the centered stencil with wrap-around; non-periodic axes
use ``np.gradient`` with ``edge_order=2`` (centered interior, three-point
one-sided boundaries).
"""
from dataclasses import dataclass, field

import numpy as np

from .background import in_domain
from .exceptions import ChartDomainError, ShapeMismatchError

# Index-kind tags for field slots
WORLDVOLUME = 'a'
NORMAL = 'i'
AMBIENT = 'mu'
INDEX_KINDS = (WORLDVOLUME, NORMAL, AMBIENT)


@dataclass(frozen=True)
class GridSpec:
    sizes: tuple
    spacings: tuple
    periodic: tuple
    origins: tuple = None

    def __post_init__(self):
        dim = len(self.sizes)
        if dim < 1:
            raise ValueError('worldvolume dimension must be >= 1')
        if len(self.spacings) != dim or len(self.periodic) != dim:
            raise ValueError('sizes, spacings and periodic flags must have equal length')
        if self.origins is None:
            object.__setattr__(self, 'origins', (0.0,) * dim)
        for n, h, periodic in zip(self.sizes, self.spacings, self.periodic):
            if h <= 0:
                raise ValueError('grid spacings must be positive')
            if not periodic and n < 5:
                raise ValueError('non-periodic axes need at least 5 nodes')
            if periodic and n < 3:
                raise ValueError('periodic axes need at least 3 nodes')

    @classmethod
    def from_bounds(cls, bounds, sizes, periodic):
        """Periodic axes: h = L / n (end point excluded); others: h = L / (n - 1)."""
        spacings = tuple(
            (hi - lo) / n if per else (hi - lo) / (n - 1)
            for (lo, hi), n, per in zip(bounds, sizes, periodic)
        )
        return cls(tuple(sizes), spacings, tuple(periodic), tuple(lo for lo, _ in bounds))

    @property
    def dim(self):
        return len(self.sizes)

    @property
    def shape(self):
        return tuple(self.sizes)

    @property
    def node_count(self):
        return int(np.prod(self.sizes))

    @property
    def h_min(self):
        return min(self.spacings)

    @property
    def periods(self):
        return tuple(n * h if per else None
                     for n, h, per in zip(self.sizes, self.spacings, self.periodic))

    def axis_coordinates(self, axis):
        return self.origins[axis] + self.spacings[axis] * np.arange(self.sizes[axis])

    def coordinates(self):
        """xi^a at every node, shape sizes + (D,)."""
        axes = [self.axis_coordinates(a) for a in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)

    def scaled(self, factor):
        """Refined grid covering the same domain with n_a multiplied by ``factor``."""
        sizes, spacings = [], []
        for n, h, per in zip(self.sizes, self.spacings, self.periodic):
            length = n * h if per else (n - 1) * h
            m = int(round(n * factor))
            sizes.append(m)
            spacings.append(length / m if per else length / (m - 1))
        return GridSpec(tuple(sizes), tuple(spacings), self.periodic, self.origins)

    def axis_weights(self, axis):
        """Trapezoid weights along one axis (uniform on periodic axes)."""
        n, h = self.sizes[axis], self.spacings[axis]
        w = np.full(n, h)
        if not self.periodic[axis]:
            w[0] = w[-1] = 0.5 * h
        return w

    def quadrature_weights(self, skip=None):
        """Tensor-product trapezoid weights, optionally leaving out axis ``skip``."""
        weights = np.ones(())
        for axis in range(self.dim):
            if axis != skip:
                weights = np.multiply.outer(weights, self.axis_weights(axis))
        return weights

    def interior_mask(self, margin=3):
        """True on nodes at least ``margin`` nodes away from non-periodic ends."""
        mask = np.ones(self.shape, dtype=bool)
        for axis, (n, per) in enumerate(zip(self.sizes, self.periodic)):
            if per:
                continue
            index = np.arange(n)
            keep = (index >= margin) & (index < n - margin)
            shape = [1] * self.dim
            shape[axis] = n
            mask &= keep.reshape(shape)
        return mask

    def diff(self, values, axis, translation=None):
        """d/dxi^axis of a node-major array, second order.

        ``translation`` is the jump X(xi + L) - X(xi) of an embedding along a
        periodic axis; it is added back across the seam.
        """
        if not 0 <= axis < self.dim:
            raise ShapeMismatchError(f'axis {axis} out of range for a {self.dim}-dimensional grid')
        values = np.asarray(values, dtype=float)
        if values.shape[:self.dim] != self.shape:
            raise ShapeMismatchError(f'field shape {values.shape} does not match grid {self.shape}')
        h = self.spacings[axis]
        if not self.periodic[axis]:
            return np.gradient(values, h, axis=axis, edge_order=2)
        forward = np.roll(values, -1, axis=axis)
        backward = np.roll(values, 1, axis=axis)
        if translation is not None and np.any(translation):
            n = self.sizes[axis]
            fwd = [slice(None)] * values.ndim
            fwd[axis] = n - 1
            bwd = [slice(None)] * values.ndim
            bwd[axis] = 0
            forward[tuple(fwd)] += translation
            backward[tuple(bwd)] -= translation
        return (forward - backward) / (2 * h)

    def gradient(self, values, translations=None):
        """Stack of all partial derivatives, derivative index inserted after the nodes."""
        translations = translations or (None,) * self.dim
        return np.stack(
            [self.diff(values, a, translations[a]) for a in range(self.dim)],
            axis=self.dim,
        )

    def divergence(self, flux):
        """Coordinate divergence d_a F^a of a densitized flux, layout [..., a]."""
        flux = np.asarray(flux, dtype=float)
        if flux.shape != self.shape + (self.dim,):
            raise ShapeMismatchError(f'flux shape {flux.shape} does not match grid {self.shape}')
        return sum(self.diff(flux[..., a], a) for a in range(self.dim))

    def integrate(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != self.shape:
            raise ShapeMismatchError(f'scalar field shape {values.shape} does not match grid {self.shape}')
        # fixed-order reduction keeps reports byte-identical
        return float(np.sum(values * self.quadrature_weights()))


@dataclass(frozen=True)
class Field:
    grid: GridSpec
    values: np.ndarray
    kinds: tuple = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape[:self.grid.dim] != self.grid.shape:
            raise ShapeMismatchError(f'field shape {values.shape} does not match grid {self.grid.shape}')
        if values.ndim - self.grid.dim != len(self.kinds):
            raise ShapeMismatchError('one index-kind tag is needed per value slot')
        if any(k not in INDEX_KINDS for k in self.kinds):
            raise ValueError(f'unknown index kind in {self.kinds}')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'kinds', tuple(self.kinds))

    @property
    def rank(self):
        return len(self.kinds)


@dataclass(frozen=True)
class Embedding:
    grid: GridSpec
    points: np.ndarray
    translations: tuple = field(default=None)

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.shape[:-1] != self.grid.shape:
            raise ShapeMismatchError('embedding shape does not match the grid')
        points.setflags(write=False)
        object.__setattr__(self, 'points', points)
        if self.translations is None:
            zero = np.zeros(points.shape[-1])
            object.__setattr__(self, 'translations', tuple(zero for _ in range(self.grid.dim)))

    @property
    def ambient_dim(self):
        return self.points.shape[-1]

    def moved(self, displacement):
        return Embedding(self.grid, self.points + displacement, self.translations)


def partial_derivative(f, axis):
    if not 0 <= axis < f.grid.dim:
        raise ShapeMismatchError(f'axis {axis} out of range')
    return Field(f.grid, f.grid.diff(f.values, axis), f.kinds)


def integrate_scalar(f, weight):
    if f.grid.shape != weight.grid.shape or f.rank or weight.rank:
        raise ShapeMismatchError('integrate_scalar needs two scalar fields on the same grid')
    return f.grid.integrate(f.values * weight.values)


def sample_parametrization(parametrization, grid, model=None):
    """Evaluate a closed-form map xi -> x node by node.

    Periodic axes that close up to a translation (flat strips) record it so
    derivatives stay exact across the seam.
    """
    xi = grid.coordinates()
    points = np.asarray(parametrization(xi), dtype=float)
    if model is not None and not in_domain(model, points):
        raise ChartDomainError('parametrization leaves the background chart domain')
    translations = []
    origin = xi[(0,) * grid.dim]
    base = np.asarray(parametrization(origin), dtype=float)
    for axis, period in enumerate(grid.periods):
        if period is None:
            translations.append(np.zeros(points.shape[-1]))
            continue
        shifted = origin.copy()
        shifted[axis] += period
        jump = np.asarray(parametrization(shifted), dtype=float) - base
        jump[np.abs(jump) < 1e-12] = 0.0
        translations.append(jump)
    return Embedding(grid, points, tuple(translations))
