"""Convex domains and the projection step that realizes reflection.

A reflecting SDE on a convex domain ``D`` is discretized here by metric
projection: an Euler proposal that leaves the closure of ``D`` is pulled
back to the nearest point of it, and the distance travelled is the
local-time increment. All domain classes accept either a single point
of shape ``(d,)`` or a batch of shape ``(n, d)``.

Box and polytope boundaries are only piecewise smooth. The contraction
results used downstream need convexity only, so corners are allowed;
their normal is the normalized average of the active facet normals.

"""
# THIRD-PARTY
import numpy as np

# LOCAL
from .conf import conf
from .utils.exceptions import DimensionError, NotOnBoundaryError

__all__ = ['DomainGeometry', 'FullSpace', 'HalfSpace', 'Ball', 'Box',
           'Polytope', 'contains', 'project', 'inward_normal',
           'reflect_step', 'domain_from_dict']


def _as_points(x, dim):
    """Return ``(points, single)`` with points of shape ``(n, dim)``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    single = arr.ndim == 1
    if single:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimensionError(
            f'Expected points of dimension {dim}, got shape {np.shape(x)}')
    return arr, single


def _unit(v, name):
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm == 0:
        raise ValueError(f'{name} must be a non-zero finite vector')
    return v / norm


class DomainGeometry:
    """Base class for closed convex domains.

    Subclasses implement ``_contains``, ``_project`` and
    ``_boundary_distance`` on batches and ``_normal`` on boundary batches.

    Parameters
    ----------
    dim : int
        Dimension of the ambient space.

    """
    kind = None

    def __init__(self, dim):
        dim = int(dim)
        if dim < 1:
            raise ValueError(f'dim must be positive, got {dim}')
        self.dim = dim

    def __repr__(self):
        return f'<{self.__class__.__name__} dim={self.dim}>'

    @property
    def diameter(self):
        """Scale used for boundary tolerances (1 for unbounded domains)."""
        return 1.0

    @property
    def default_tol(self):
        """Default boundary tolerance."""
        return conf.boundary_tol * self.diameter

    def contains(self, x, tol=None):
        """Membership in the closed domain, up to ``tol``."""
        pts, single = _as_points(x, self.dim)
        if tol is None:
            tol = self.default_tol
        out = self._contains(pts, tol)
        return bool(out[0]) if single else out

    def project(self, x):
        """Nearest point of the closed domain and the distance to it."""
        pts, single = _as_points(x, self.dim)
        y = self._project(pts)
        d = np.linalg.norm(pts - y, axis=1)
        if single:
            return y[0], float(d[0])
        return y, d

    def boundary_distance(self, x):
        """Distance to the boundary (to the domain, for outside points)."""
        pts, single = _as_points(x, self.dim)
        d = self._boundary_distance(pts)
        return float(d[0]) if single else d

    def inward_normal(self, x, tol=None):
        """Inward unit normal at boundary points.

        Raises
        ------
        NotOnBoundaryError
            Some point is farther than ``tol`` from the boundary.

        """
        pts, single = _as_points(x, self.dim)
        if tol is None:
            tol = self.default_tol
        dist = self._boundary_distance(pts)
        bad = ~(dist <= tol)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise NotOnBoundaryError(
                f'{pts[i]} is {dist[i]:.3g} from the boundary of {self!r} '
                f'(tol={tol:.3g})')
        n = self._normal(pts, tol)
        return n[0] if single else n

    def to_dict(self):
        """Tagged-record form used in experiment configs."""
        raise NotImplementedError

    def _contains(self, pts, tol):
        raise NotImplementedError

    def _project(self, pts):
        raise NotImplementedError

    def _boundary_distance(self, pts):
        raise NotImplementedError

    def _normal(self, pts, tol):
        raise NotImplementedError


class FullSpace(DomainGeometry):
    """The whole of :math:`\\mathbb{R}^d`; it has no boundary."""
    kind = 'full-space'

    def to_dict(self):
        return {'kind': self.kind, 'dim': self.dim}

    def _contains(self, pts, tol):
        return np.ones(len(pts), dtype=bool)

    def _project(self, pts):
        return pts.copy()

    def _boundary_distance(self, pts):
        return np.full(len(pts), np.inf)


class HalfSpace(DomainGeometry):
    """Half-space :math:`\\{x : \\langle a, x \\rangle \\ge c\\}`.

    Parameters
    ----------
    a : array-like
        Normal vector; normalized on input (``c`` is rescaled with it).

    c : float
        Offset.

    """
    kind = 'half-space'

    def __init__(self, a, c=0.0):
        a = np.asarray(a, dtype=float).reshape(-1)
        super().__init__(a.size)
        norm = np.linalg.norm(a)
        self.a = _unit(a, 'a')
        self.c = float(c) / norm

    def to_dict(self):
        return {'kind': self.kind, 'a': self.a.tolist(), 'c': self.c}

    def _contains(self, pts, tol):
        return pts @ self.a >= self.c - tol

    def _project(self, pts):
        gap = np.maximum(self.c - pts @ self.a, 0.0)
        return pts + gap[:, None] * self.a

    def _boundary_distance(self, pts):
        return np.abs(pts @ self.a - self.c)

    def _normal(self, pts, tol):
        return np.tile(self.a, (len(pts), 1))


class Ball(DomainGeometry):
    """Closed Euclidean ball.

    Parameters
    ----------
    center : array-like

    radius : float

    """
    kind = 'ball'

    def __init__(self, center, radius):
        center = np.asarray(center, dtype=float).reshape(-1)
        super().__init__(center.size)
        if not radius > 0:
            raise ValueError(f'radius must be positive, got {radius}')
        self.center = center
        self.radius = float(radius)

    @property
    def diameter(self):
        return 2 * self.radius

    def to_dict(self):
        return {'kind': self.kind, 'center': self.center.tolist(),
                'radius': self.radius}

    def _contains(self, pts, tol):
        return np.linalg.norm(pts - self.center, axis=1) <= self.radius + tol

    def _project(self, pts):
        rel = pts - self.center
        r = np.linalg.norm(rel, axis=1)
        out = pts.copy()
        outside = r > self.radius
        out[outside] = (self.center + rel[outside] *
                        (self.radius / r[outside])[:, None])
        return out

    def _boundary_distance(self, pts):
        return np.abs(np.linalg.norm(pts - self.center, axis=1) - self.radius)

    def _normal(self, pts, tol):
        rel = self.center - pts
        return rel / np.linalg.norm(rel, axis=1)[:, None]


class Box(DomainGeometry):
    """Axis-aligned box :math:`\\prod_i [l_i, u_i]`.

    Parameters
    ----------
    lower, upper : array-like
        Corners, with ``lower < upper`` componentwise.

    """
    kind = 'box'

    def __init__(self, lower, upper):
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise DimensionError('lower and upper must have the same length')
        super().__init__(lower.size)
        if not np.all(lower < upper):
            raise ValueError('Box requires lower < upper in every coordinate')
        self.lower = lower
        self.upper = upper

    @property
    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def to_dict(self):
        return {'kind': self.kind, 'lower': self.lower.tolist(),
                'upper': self.upper.tolist()}

    def _contains(self, pts, tol):
        return (np.all(pts >= self.lower - tol, axis=1) &
                np.all(pts <= self.upper + tol, axis=1))

    def _project(self, pts):
        return np.clip(pts, self.lower, self.upper)

    def _boundary_distance(self, pts):
        inside = self._contains(pts, 0.0)
        gap = np.minimum(pts - self.lower, self.upper - pts).min(axis=1)
        outside_dist = np.linalg.norm(pts - self._project(pts), axis=1)
        return np.where(inside, gap, outside_dist)

    def _normal(self, pts, tol):
        n = ((np.abs(pts - self.lower) <= tol).astype(float) -
             (np.abs(pts - self.upper) <= tol).astype(float))
        # Points slightly outside snap to the facet they crossed.
        n += (pts < self.lower).astype(float) - (pts > self.upper)
        n = np.sign(n)
        return n / np.linalg.norm(n, axis=1)[:, None]


class Polytope(DomainGeometry):
    """Intersection of half-spaces :math:`\\{x : A x \\ge c\\}`.

    Projection runs Dykstra's alternating projections, then snaps each
    point to the exact projection onto its active facets when the KKT
    conditions confirm the active set.

    Parameters
    ----------
    normals : array-like
        Shape ``(m, d)``; rows are normalized on input.

    offsets : array-like
        Shape ``(m,)``; rescaled with the rows.

    max_iter : int
        Dykstra sweeps.

    """
    kind = 'polytope'

    def __init__(self, normals, offsets, max_iter=10000):
        A = np.atleast_2d(np.asarray(normals, dtype=float))
        c = np.asarray(offsets, dtype=float).reshape(-1)
        if A.shape[0] != c.size:
            raise DimensionError('One offset per facet normal is required')
        super().__init__(A.shape[1])
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0) or not np.all(np.isfinite(norms)):
            raise ValueError('Facet normals must be non-zero and finite')
        self.A = A / norms[:, None]
        self.c = c / norms
        self.max_iter = int(max_iter)

    @classmethod
    def from_halfspaces(cls, halfspaces, **kwargs):
        """Build from a list of `HalfSpace`."""
        return cls([h.a for h in halfspaces], [h.c for h in halfspaces],
                   **kwargs)

    def to_dict(self):
        return {'kind': self.kind,
                'halfspaces': [{'a': a.tolist(), 'c': float(c)}
                               for a, c in zip(self.A, self.c)]}

    def _slack(self, pts):
        return pts @ self.A.T - self.c

    def _contains(self, pts, tol):
        return np.all(self._slack(pts) >= -tol, axis=1)

    def _project(self, pts):
        out = pts.copy()
        outside = ~self._contains(pts, 0.0)
        if outside.any():
            x = pts[outside]
            out[outside] = self._polish(x, self._dykstra(x))
        return out

    def _dykstra(self, x):
        m = len(self.c)
        z = x.copy()
        incr = np.zeros((m,) + x.shape)
        scale = 1.0 + np.abs(x).max()
        for _ in range(self.max_iter):
            z_prev = z.copy()
            for i in range(m):
                y = z + incr[i]
                gap = np.maximum(self.c[i] - y @ self.A[i], 0.0)
                z = y + gap[:, None] * self.A[i]
                incr[i] = y - z
            if np.abs(z - z_prev).max() <= 1e-15 * scale:
                break
        return z

    def _polish(self, x, z):
        scale = 1.0 + np.abs(x).max()
        active = self._slack(z) <= 1e-8 * scale
        patterns, inverse = np.unique(active, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        z = z.copy()
        for k, pattern in enumerate(patterns):
            if not pattern.any():
                continue
            rows = np.flatnonzero(inverse == k)
            Aa = self.A[pattern]
            lam = (self.c[pattern] - x[rows] @ Aa.T) @ np.linalg.pinv(
                Aa @ Aa.T)
            zk = x[rows] + lam @ Aa
            ok = (np.all(lam >= -1e-12, axis=1) &
                  np.all(self._slack(zk) >= -1e-12 * scale, axis=1))
            z[rows[ok]] = zk[ok]
        return z

    def _boundary_distance(self, pts):
        slack = self._slack(pts)
        inside = np.all(slack >= 0, axis=1)
        outside_dist = np.linalg.norm(pts - self._project(pts), axis=1)
        return np.where(inside, slack.min(axis=1), outside_dist)

    def _normal(self, pts, tol):
        active = np.abs(self._slack(pts)) <= tol
        active |= self._slack(pts) < 0
        n = active.astype(float) @ self.A
        norm = np.linalg.norm(n, axis=1)
        if np.any(norm == 0):
            raise NotOnBoundaryError(
                'Active facet normals cancel; normal is undefined')
        return n / norm[:, None]


# ---------------- #
# MODULE FUNCTIONS #
# ---------------- #

def contains(domain, x, tol=None):
    """True iff ``x`` lies in the closed domain.

    Parameters
    ----------
    domain : `DomainGeometry`

    x : array-like
        Point ``(d,)`` or batch ``(n, d)``.

    tol : float or `None`
        Boundary tolerance. Default is ``conf.boundary_tol`` times the
        domain diameter.

    Returns
    -------
    inside : bool or ndarray of bool

    Raises
    ------
    mvsde_tools.utils.exceptions.DimensionError
        Dimension mismatch.

    """
    return domain.contains(x, tol=tol)


def project(domain, x):
    """Metric projection onto the closed domain.

    Returns
    -------
    y : ndarray
        Nearest point(s) of the closed domain.

    d : float or ndarray
        Distance ``|x - y|``.

    Examples
    --------
    >>> from mvsde_tools.geometry import Box, project
    >>> project(Box([0], [1]), -0.3)
    (array([0.]), 0.3)

    """
    return domain.project(x)


def inward_normal(domain, x, tol=None):
    """Inward unit normal at a boundary point.

    At box and polytope corners the normalized average of the active
    facet normals is returned.

    Raises
    ------
    mvsde_tools.utils.exceptions.NotOnBoundaryError
        ``x`` is farther than ``tol`` from the boundary.

    """
    return domain.inward_normal(x, tol=tol)


def reflect_step(domain, x, delta):
    """Move by ``delta`` and project back onto the closed domain.

    Parameters
    ----------
    domain : `DomainGeometry`

    x : array-like
        Current point(s) in the closed domain.

    delta : array-like
        Displacement(s), same shape as ``x``.

    Returns
    -------
    x_new : ndarray
        ``project(x + delta)``.

    dl : float or ndarray
        Local-time increment ``|x + delta - x_new|``; exactly 0 when
        ``x + delta`` is already in the domain.

    """
    return domain.project(np.asarray(x, dtype=float) +
                          np.asarray(delta, dtype=float))


def domain_from_dict(spec):
    """Build a domain from its tagged-record form.

    Parameters
    ----------
    spec : dict
        For example ``{'kind': 'ball', 'center': [0, 0], 'radius': 1.0}``.
        Half-space polytopes are given as
        ``{'kind': 'polytope', 'halfspaces': [{'a': [1, 0], 'c': 0}, ...]}``.

    Returns
    -------
    domain : `DomainGeometry`

    Raises
    ------
    ValueError
        Unknown kind.

    """
    kind = spec['kind']
    if kind == FullSpace.kind:
        return FullSpace(spec['dim'])
    elif kind == HalfSpace.kind:
        return HalfSpace(spec['a'], spec.get('c', 0.0))
    elif kind == Ball.kind:
        return Ball(spec['center'], spec['radius'])
    elif kind == Box.kind:
        return Box(spec['lower'], spec['upper'])
    elif kind == Polytope.kind:
        hs = spec['halfspaces']
        return Polytope([h['a'] for h in hs], [h.get('c', 0.0) for h in hs])
    raise ValueError(f'Unknown domain kind: {kind}')
