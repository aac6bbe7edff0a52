"""One-dimensional finite-volume solver for the granular media equation

.. math::

    \\partial_t\\rho = D\\,\\partial_{xx}\\rho
    - \\partial_x\\{\\rho\\,(b + W*\\rho)\\}

on ``[a, b]`` with zero flux through both ends. With ``D = 1`` it is the
density equation of the particle system with :math:`\\sigma = \\sqrt{2}`.

The update is conservative: each cell changes by the difference of the
fluxes through its two faces, and the boundary faces carry none. Face
fluxes are plain upwind advection plus central diffusion (default), or
the exponentially fitted upwind flux, which reproduces the stationary
profile of a face-wise constant velocity exactly.

"""
# STDLIB
import math
import warnings
from dataclasses import dataclass, field, replace

# THIRD-PARTY
import numpy as np
from astropy import log
from astropy.table import Table
from astropy.utils.exceptions import AstropyUserWarning

# LOCAL
from .conf import conf
from .model import InteractionKernel, LinearInteraction
from .particle import _observation_steps
from .utils.exceptions import CFLError
from .utils.rng import REFERENCE, NoiseStream, block_slices

__all__ = ['DensityGrid', 'GranularMediaOperator', 'stable_dt', 'gm_step',
           'run', 'SteadyStateResult', 'steady_state', 'l1_decay',
           'L1Comparison', 'l1_against_particles', 'from_model',
           'density_table']

FLUX_SCHEMES = ('exponential', 'upwind')

# Fraction of the explicit stability limit used by the CFL check.
CFL_FACTOR = 0.4


@dataclass(frozen=True)
class DensityGrid:
    """Cell averages of a density on ``[a, b]``.

    Attributes
    ----------
    a, b : float
        Interval ends.

    rho : ndarray
        ``M`` non-negative cell averages.

    time : float

    """
    a: float
    b: float
    rho: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float).reshape(-1)
        if not self.b > self.a:
            raise ValueError(f'Need a < b, got [{self.a}, {self.b}]')
        if rho.size < 2 or not np.all(np.isfinite(rho)):
            raise ValueError('rho must hold at least 2 finite values')
        object.__setattr__(self, 'rho', rho)

    @property
    def M(self):
        return self.rho.size

    @property
    def h(self):
        return (self.b - self.a) / self.M

    @property
    def edges(self):
        return np.linspace(self.a, self.b, self.M + 1)

    @property
    def centers(self):
        return self.a + (np.arange(self.M) + 0.5) * self.h

    def mass(self):
        return float(self.rho.sum() * self.h)

    @classmethod
    def from_function(cls, f, a, b, M, time=0.0, normalize=True):
        """Sample ``f`` at cell centers, normalized to mass 1."""
        grid = cls(a, b, np.zeros(int(M)), time)
        rho = np.asarray(f(grid.centers), dtype=float)
        rho = np.broadcast_to(rho, grid.centers.shape).copy()
        if normalize:
            rho /= rho.sum() * grid.h
        return replace(grid, rho=rho)

    @classmethod
    def uniform(cls, a, b, M):
        return cls(a, b, np.full(int(M), 1.0 / (b - a)))

    def l1(self, other):
        """:math:`\\int|\\rho - \\rho'|` on a shared grid."""
        if (other.M, other.a, other.b) != (self.M, self.a, self.b):
            raise ValueError('Densities live on different grids')
        return float(np.abs(self.rho - other.rho).sum() * self.h)

    def sample(self, n, seed):
        """Draw ``n`` points by inverting the piecewise-linear CDF."""
        cdf = np.concatenate([[0.0], np.cumsum(self.rho) * self.h])
        cdf /= cdf[-1]
        stream = NoiseStream(seed)
        u = np.concatenate([
            stream.uniforms(0, k, sl.stop - sl.start, purpose=REFERENCE)
            for k, sl in enumerate(block_slices(n, conf.block_size))])
        return np.interp(u, cdf, self.edges)


def _bernoulli(z):
    """:math:`B(z) = z/(e^z - 1)`, with :math:`B(0) = 1`."""
    small = np.abs(z) < 1e-8
    with np.errstate(over='ignore'):
        return np.where(small, 1.0 - z / 2,
                        z / np.expm1(np.where(small, 1.0, z)))


class GranularMediaOperator:
    """Right-hand side of the granular media equation on a fixed grid.

    The interaction kernel is evaluated once into a face-by-cell matrix,
    except for `~mvsde_tools.model.LinearInteraction`, whose convolution
    only needs the mass and first moment.

    Parameters
    ----------
    grid : `DensityGrid`
        Only its geometry is used.

    b : callable or `None`
        Confinement drift, vectorized over 1D arrays.

    W : callable, `~mvsde_tools.model.InteractionKernel` or `None`
        Scalar kernel ``W(x, z)``.

    diffusion : float
        Coefficient ``D``.

    flux : {'upwind', 'exponential'}

    """
    def __init__(self, grid, b=None, W=None, diffusion=1.0,
                 flux='upwind'):
        if flux not in FLUX_SCHEMES:
            raise ValueError(f'Unknown flux scheme {flux!r}')
        if not diffusion > 0:
            raise ValueError(f'diffusion must be positive, got {diffusion}')
        self.a, self.b_end, self.M = grid.a, grid.b, grid.M
        self.h = grid.h
        self.diffusion = float(diffusion)
        self.flux = flux
        self.faces = grid.edges[1:-1]
        self.centers = grid.centers

        self.b_faces = (np.zeros_like(self.faces) if b is None else
                        np.broadcast_to(np.asarray(b(self.faces),
                                                   dtype=float),
                                        self.faces.shape).copy())
        self.W = W
        self._wmat = None
        if W is not None and not isinstance(W, LinearInteraction):
            if isinstance(W, InteractionKernel):
                vals = W(self.faces[:, None, None],
                         self.centers[None, :, None])[..., 0]
            else:
                vals = W(self.faces[:, None], self.centers[None, :])
            self._wmat = np.asarray(vals, dtype=float) * self.h

    def velocity(self, rho):
        """Velocity :math:`b + W*\\rho` at interior faces."""
        v = self.b_faces
        if self.W is None:
            return v
        if self._wmat is not None:
            return v + self._wmat @ rho
        mass = rho.sum() * self.h
        first = (self.centers * rho).sum() * self.h
        return v - self.W.beta * self.faces * mass + self.W.eta * first

    def cfl_limit(self, rho):
        """Largest ``dt`` the CFL check accepts."""
        vmax = np.abs(self.velocity(rho)).max()
        limit = self.h ** 2 / (2 * self.diffusion)
        if vmax > 0:
            limit = min(limit, self.h / vmax)
        return CFL_FACTOR * limit

    def stable_dt(self, rho):
        """Step keeping the update monotone (a bit below `cfl_limit`)."""
        vmax = np.abs(self.velocity(rho)).max()
        return CFL_FACTOR / (2 * self.diffusion / self.h ** 2 +
                             2 * vmax / self.h)

    def face_flux(self, rho):
        v = self.velocity(rho)
        left, right = rho[:-1], rho[1:]
        if self.flux == 'upwind':
            return (np.maximum(v, 0) * left + np.minimum(v, 0) * right -
                    self.diffusion * (right - left) / self.h)
        pe = v * self.h / self.diffusion
        return self.diffusion / self.h * (_bernoulli(-pe) * left -
                                          _bernoulli(pe) * right)

    def step(self, rho, dt):
        """One explicit step; raises `CFLError` if ``dt`` is too large."""
        limit = self.cfl_limit(rho)
        if dt > limit * (1 + 1e-12):
            raise CFLError(dt, self.stable_dt(rho))
        F = np.concatenate([[0.0], self.face_flux(rho), [0.0]])
        return rho - dt / self.h * np.diff(F)


def stable_dt(grid, b=None, W=None, diffusion=1.0):
    """Monotone explicit step for ``grid`` under the given coefficients."""
    return GranularMediaOperator(grid, b, W, diffusion).stable_dt(grid.rho)


def gm_step(grid, b, W, dt, diffusion=1.0, flux='upwind'):
    """Advance the density by one explicit step.

    Parameters
    ----------
    grid : `DensityGrid`

    b, W
        Drift and kernel; see `GranularMediaOperator`.

    dt : float

    diffusion : float

    flux : {'upwind', 'exponential'}

    Returns
    -------
    new_grid : `DensityGrid`

    Raises
    ------
    mvsde_tools.utils.exceptions.CFLError
        ``dt > 0.4 min(h^2/(2D), h/max|v|)``; carries ``suggested_dt``.

    """
    op = GranularMediaOperator(grid, b, W, diffusion, flux)
    return replace(grid, rho=op.step(grid.rho, dt), time=grid.time + dt)


def _march(op, rho, dt, n_steps):
    for _ in range(n_steps):
        rho = op.step(rho, dt)
    return rho


def run(grid0, b, W, dt, T, observation_times=None, diffusion=1.0,
        flux='upwind'):
    """Time-march to ``T`` and keep the density at observation times.

    Returns
    -------
    snapshots : list of `DensityGrid`

    """
    op = GranularMediaOperator(grid0, b, W, diffusion, flux)
    n_steps, obs_steps = _observation_steps(dt, T, observation_times)
    rho = grid0.rho
    k = 0
    out = []
    for target in obs_steps:
        rho = _march(op, rho, dt, target - k)
        k = target
        out.append(replace(grid0, rho=rho, time=grid0.time + k * dt))
    log.info(f'PDE run on {grid0.M} cells to t={T} in {n_steps} steps')
    return out


@dataclass
class SteadyStateResult:
    """Outcome of `steady_state`.

    ``history`` holds the L1 change over each unit of time.
    """
    grid: DensityGrid
    converged: bool
    time: float
    history: np.ndarray = field(default_factory=lambda: np.zeros(0))


def steady_state(grid0, b, W, tol=1e-8, T_max=100.0, diffusion=1.0,
                 flux='upwind', safety=0.9):
    """March until the density changes by less than ``tol`` per unit time.

    The step is recomputed at the start of every unit of time as
    ``safety * stable_dt`` and rounded so that it divides the unit.

    Returns
    -------
    result : `SteadyStateResult`
        ``converged`` is false when ``T_max`` was reached.

    """
    op = GranularMediaOperator(grid0, b, W, diffusion, flux)
    rho = grid0.rho
    t = 0.0
    history = []
    converged = False
    while t < T_max:
        n_steps = math.ceil(1.0 / (safety * op.stable_dt(rho)))
        new = _march(op, rho, 1.0 / n_steps, n_steps)
        change = float(np.abs(new - rho).sum() * op.h)
        history.append(change)
        rho = new
        t += 1.0
        log.debug(f'Steady state t={t:g}: L1 change {change:.3e}')
        if change < tol:
            converged = True
            break

    if not converged:
        log.warning(f'PDE steady state not reached by T_max={T_max} '
                    f'(last change {history[-1]:.3e})')
    return SteadyStateResult(grid=replace(grid0, rho=rho,
                                          time=grid0.time + t),
                             converged=converged, time=t,
                             history=np.asarray(history))


def l1_decay(snapshots, reference):
    """L1 distance of each snapshot to ``reference``.

    Returns
    -------
    times, l1 : ndarray

    """
    return (np.array([g.time for g in snapshots]),
            np.array([g.l1(reference) for g in snapshots]))


@dataclass
class L1Comparison:
    """Grid density against binned particles.

    ``l1`` is :math:`\\sum_i|\\rho_i - p_i/h|h`; ``tv`` is half of it.
    ``leaked_fraction`` counts particles outside the interval.
    """
    l1: float
    tv: float
    leaked_fraction: float

    def __float__(self):
        return self.l1


def l1_against_particles(grid, ens):
    """Compare the density with an ensemble binned on the grid's cells.

    Parameters
    ----------
    grid : `DensityGrid`

    ens : `~mvsde_tools.particle.Ensemble` or array-like
        One-dimensional particles.

    Returns
    -------
    cmp : `L1Comparison`

    Warns
    -----
    astropy.utils.exceptions.AstropyUserWarning
        More than ``conf.leakage_warn_fraction`` of the particles lie
        outside ``[a, b]``.

    """
    x = np.asarray(getattr(ens, 'positions', ens), dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValueError('l1_against_particles needs 1D particles')
        x = x[:, 0]
    counts, _ = np.histogram(x, bins=grid.edges)
    leaked = 1.0 - counts.sum() / x.size
    if leaked > conf.leakage_warn_fraction:
        warnings.warn(f'{leaked:.3%} of the particles lie outside '
                      f'[{grid.a}, {grid.b}]', AstropyUserWarning)
    p = counts / x.size
    l1 = float(np.abs(grid.rho * grid.h - p).sum())
    return L1Comparison(l1=l1, tv=l1 / 2, leaked_fraction=float(leaked))


def from_model(model):
    """Drift and kernel of a one-dimensional model, for the solver.

    Returns
    -------
    b : callable
        :math:`b^{(0)} + b^{(1)}` on 1D arrays.

    W : `~mvsde_tools.model.InteractionKernel` or `None`

    """
    if model.dim != 1:
        raise ValueError('The PDE solver is one-dimensional')

    def b(x):
        pts = np.asarray(x, dtype=float)[:, None]
        out = np.asarray(model.b1(pts), dtype=float)
        if model.b0 is not None:
            out = out + model.b0(pts)
        return out[:, 0]

    return b, model.interaction


def density_table(snapshots):
    """Long table with columns ``time``, ``cell_center``, ``density``."""
    return Table([np.concatenate([np.full(g.M, g.time) for g in snapshots]),
                  np.concatenate([g.centers for g in snapshots]),
                  np.concatenate([g.rho for g in snapshots])],
                 names=('time', 'cell_center', 'density'))
