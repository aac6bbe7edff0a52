"""Interacting-particle Euler-Maruyama integrator with reflection.

Each step is explicit: the empirical measure of the ensemble before the
step drives every particle. Particles are processed in fixed blocks of
``conf.block_size``; each block draws its noise from a stream keyed by
``(seed, side, step_index, block)``, so a run is the same whichever
number of workers steps it.

"""
# STDLIB
import contextlib
from dataclasses import dataclass, field, replace
from functools import partial
from multiprocessing.pool import ThreadPool

# THIRD-PARTY
import numpy as np
from astropy import log
from astropy.table import Table

# LOCAL
from .conf import conf
from .geometry import reflect_step
from .metrics import EmpiricalMeasure, as_measure, distance
from .model import PsiProfile
from .utils.exceptions import (BlowUpError, CouplingError, DimensionError,
                               SamplerError)
from .utils.io import read_points
from .utils.rng import INITIAL, REFERENCE, NoiseStream, block_slices

__all__ = ['Ensemble', 'CoupledEnsemble', 'Trajectory', 'Dirac', 'Uniform',
           'Gaussian', 'FromPoints', 'sampler_from_dict', 'init_ensemble',
           'step', 'simulate', 'coupled_step', 'simulate_coupled',
           'coupling_statistics', 'MomentObserver', 'LocalTimeObserver',
           'DistanceObserver', 'SnapshotObserver', 'trajectory_table',
           'snapshot_table', 'empirical_mean_variance']

COUPLING_MODES = ('synchronous', 'reflection')


# --------- #
# ENSEMBLES #
# --------- #

@dataclass(frozen=True)
class Ensemble:
    """Particle positions at one time.

    Ensembles are values: `step` returns a new one and never mutates
    its input.

    Attributes
    ----------
    positions : ndarray
        Shape ``(n, d)``, all in the closed domain.

    time : float

    seed : int
        Seed of the dynamics noise.

    step_index : int
        Steps taken so far; keys the next step's noise.

    side : int
        Noise side, 0 for plain runs and X-sides, 1 for Y-sides.

    local_time : ndarray
        Accumulated boundary local time per particle.

    """
    positions: np.ndarray
    time: float = 0.0
    seed: int = 0
    step_index: int = 0
    side: int = 0
    local_time: np.ndarray = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.ndim != 2 or len(pos) < 1:
            raise ValueError('An ensemble needs at least one particle')
        object.__setattr__(self, 'positions', pos)
        if self.local_time is None:
            object.__setattr__(self, 'local_time', np.zeros(len(pos)))

    @property
    def n(self):
        return len(self.positions)

    @property
    def dim(self):
        return self.positions.shape[1]

    def measure(self):
        """Empirical measure of the positions."""
        return EmpiricalMeasure(self.positions)


@dataclass(frozen=True)
class CoupledEnsemble:
    """Two ensembles driven by coupled noise.

    Attributes
    ----------
    x, y : `Ensemble`
        X-side and Y-side, same size and dimension.

    mode : {'synchronous', 'reflection'}

    coupled : ndarray
        Per-pair flag, true once the pair has met. Defaults to exact
        equality of the starting points.

    meet_tolerance : float
        Pairs closer than ``meet_tolerance * sqrt(dt)`` meet (reflection
        mode only). Default is ``conf.meet_tolerance``.

    """
    x: Ensemble
    y: Ensemble
    mode: str = 'synchronous'
    coupled: np.ndarray = None
    meet_tolerance: float = None

    def __post_init__(self):
        if self.x.positions.shape != self.y.positions.shape:
            raise DimensionError('Coupled sides need equal n and dimension')
        if self.mode not in COUPLING_MODES:
            raise ValueError(f'Unknown coupling mode {self.mode!r}')
        if self.coupled is None:
            object.__setattr__(self, 'coupled', np.all(
                self.x.positions == self.y.positions, axis=1))
        if self.meet_tolerance is None:
            object.__setattr__(self, 'meet_tolerance', conf.meet_tolerance)

    @property
    def n(self):
        return self.x.n

    @property
    def time(self):
        return self.x.time

    def distances(self):
        """Per-pair Euclidean distance."""
        return np.linalg.norm(self.x.positions - self.y.positions, axis=1)


@dataclass
class Trajectory:
    """Observations of a run.

    Attributes
    ----------
    times : ndarray
        Strictly increasing observation times.

    statistics : dict
        Statistic name to array of values, one per time.

    snapshots : list
        Ensembles (or coupled ensembles) at the observation times, when
        kept.

    final : `Ensemble` or `CoupledEnsemble`
        State at the last time.

    """
    times: np.ndarray
    statistics: dict = field(default_factory=dict)
    snapshots: list = None
    final: object = None


# ------------ #
# INITIAL LAWS #
# ------------ #

class Dirac:
    """Point mass."""
    kind = 'dirac'

    def __init__(self, point):
        self.point = np.atleast_1d(np.asarray(point, dtype=float))
        self.dim = self.point.size

    def draw(self, gen, sl):
        return np.tile(self.point, (sl.stop - sl.start, 1))

    def to_dict(self):
        return {'kind': self.kind, 'point': self.point.tolist()}


class Uniform:
    """Uniform law on the box ``[lower, upper]``."""
    kind = 'uniform'

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape or np.any(
                self.upper < self.lower):
            raise ValueError('Need lower <= upper of equal length')
        self.dim = self.lower.size

    def draw(self, gen, sl):
        return gen.uniform(self.lower, self.upper,
                           (sl.stop - sl.start, self.dim))

    def to_dict(self):
        return {'kind': self.kind, 'lower': self.lower.tolist(),
                'upper': self.upper.tolist()}


class Gaussian:
    """Gaussian law, projected onto the domain after drawing."""
    kind = 'gaussian'

    def __init__(self, mean, cov=1.0):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.dim = self.mean.size
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(self.dim)
        elif cov.ndim == 1:
            cov = np.diag(cov)
        self.cov = cov
        self._chol = np.linalg.cholesky(cov)

    def draw(self, gen, sl):
        z = gen.standard_normal((sl.stop - sl.start, self.dim))
        return self.mean + z @ self._chol.T

    def to_dict(self):
        return {'kind': self.kind, 'mean': self.mean.tolist(),
                'cov': self.cov.tolist()}


class FromPoints:
    """Points given directly or read from CSV.

    With as many particles as points the points are used in order;
    otherwise they are resampled with replacement.

    """
    kind = 'file'

    def __init__(self, points=None, path=None):
        if points is None:
            if path is None:
                raise ValueError('Give points or a path')
            points = read_points(path)
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        self.points = points
        self.path = path
        self.dim = points.shape[1]
        self._in_order = False

    def draw(self, gen, sl):
        m = sl.stop - sl.start
        if self._in_order:
            return self.points[sl].copy()
        return self.points[gen.integers(0, len(self.points), m)]

    def to_dict(self):
        return {'kind': self.kind, 'path': self.path}


def sampler_from_dict(spec):
    """Build an initial law from its config record."""
    kind = spec['kind']
    if kind == 'dirac':
        return Dirac(spec['point'])
    elif kind == 'uniform':
        return Uniform(spec['lower'], spec['upper'])
    elif kind == 'gaussian':
        return Gaussian(spec['mean'], spec.get('cov', 1.0))
    elif kind == 'file':
        return FromPoints(path=spec['path'])
    raise ValueError(f'Unknown initial law {kind!r}')


def init_ensemble(n, sampler, domain, seed, side=0):
    """Draw ``n`` i.i.d. particles and project them onto the domain.

    Parameters
    ----------
    n : int

    sampler : `Dirac`, `Uniform`, `Gaussian` or `FromPoints`

    domain : `~mvsde_tools.geometry.DomainGeometry`

    seed : int

    side : int
        Noise side; give the Y-side of a coupling ``side=1`` so the two
        sides draw independently.

    Returns
    -------
    ens : `Ensemble`

    Raises
    ------
    mvsde_tools.utils.exceptions.SamplerError
        The law does not charge the domain.

    Examples
    --------
    >>> from mvsde_tools.geometry import Box
    >>> from mvsde_tools.particle import Dirac, init_ensemble
    >>> init_ensemble(3, Dirac(0.5), Box([0], [1]), seed=0).positions[:, 0]
    array([0.5, 0.5, 0.5])

    """
    if n < 1:
        raise ValueError(f'n must be at least 1, got {n}')
    if sampler.dim != domain.dim:
        raise DimensionError(f'Initial law has dimension {sampler.dim}, '
                             f'domain has {domain.dim}')
    if isinstance(sampler, FromPoints):
        sampler._in_order = len(sampler.points) == n

    stream = NoiseStream(seed, side=side)
    raw = np.vstack([sampler.draw(stream.generator(0, b, purpose=INITIAL), sl)
                     for b, sl in enumerate(block_slices(n,
                                                         conf.block_size))])

    if not isinstance(sampler, Gaussian) and not np.any(domain.contains(raw)):
        trial_slice = slice(0, 1024)
        if isinstance(sampler, FromPoints):
            trial_slice = slice(0, len(sampler.points))
            trial = sampler.points
        else:
            trial = sampler.draw(stream.generator(0, 0, purpose=REFERENCE),
                                 trial_slice)
        if not np.any(domain.contains(trial)):
            raise SamplerError(
                f'Initial law {sampler.kind} does not charge {domain!r}')

    positions, _ = domain.project(raw)
    log.debug(f'Initialized {n} particles from {sampler.kind} law '
              f'(seed={seed}, side={side})')
    return Ensemble(positions=positions, seed=seed, side=side)


# ---------- #
# INTEGRATOR #
# ---------- #

@contextlib.contextmanager
def _block_mapper(n_workers):
    """Yield a ``map`` over blocks, threaded when ``n_workers > 1``."""
    if n_workers is None or n_workers < 2:
        yield map
    else:
        with ThreadPool(n_workers) as pool:
            yield pool.map


def _first_blowup(blocks, results, time):
    for sl, res in zip(blocks, results):
        bad = np.flatnonzero(~np.all(np.isfinite(res[0]), axis=1))
        if bad.size:
            raise BlowUpError(sl.start + int(bad[0]), time)


def _step_block(model, domain, dt, prepared, stream, step_index, positions,
                item):
    b, sl = item
    x = positions[sl]
    xi = stream.normals(step_index, b, (len(x), model.diffusion.noise_dim))
    with np.errstate(over='ignore', invalid='ignore'):
        delta = (model.drift_prepared(x, prepared) * dt +
                 np.sqrt(dt) * model.diffusion.apply(x, xi))
    finite = np.all(np.isfinite(delta), axis=1)
    if not finite.all():
        return x + delta, np.zeros(len(x))
    return reflect_step(domain, x, delta)


def _step(ens, model, domain, dt, mapper):
    stream = NoiseStream(ens.seed, side=ens.side)
    prepared = model.prepare(ens.measure())
    blocks = block_slices(ens.n, conf.block_size)
    func = partial(_step_block, model, domain, dt, prepared, stream,
                   ens.step_index, ens.positions)
    results = list(mapper(func, enumerate(blocks)))
    time = ens.time + dt
    _first_blowup(blocks, results, time)
    return replace(ens, positions=np.vstack([r[0] for r in results]),
                   time=time, step_index=ens.step_index + 1,
                   local_time=ens.local_time + np.concatenate(
                       [r[1] for r in results]))


def step(ens, model, domain, dt, n_workers=1):
    """Advance the ensemble by one reflected Euler-Maruyama step.

    .. math::

        x_i \\leftarrow \\Pi_{\\bar D}\\big(x_i + b(x_i, \\mu^N)\\,dt
        + \\sigma(x_i)\\sqrt{dt}\\,\\xi_i\\big)

    with :math:`\\mu^N` the empirical measure before the step.

    Parameters
    ----------
    ens : `Ensemble`

    model : `~mvsde_tools.model.ModelSpec`

    domain : `~mvsde_tools.geometry.DomainGeometry`

    dt : float
        Positive step.

    n_workers : int
        Threads stepping blocks. Does not change the result.

    Returns
    -------
    new_ens : `Ensemble`

    Raises
    ------
    mvsde_tools.utils.exceptions.BlowUpError
        A position became non-finite.

    """
    if not dt > 0:
        raise ValueError(f'dt must be positive, got {dt}')
    with _block_mapper(n_workers) as mapper:
        return _step(ens, model, domain, dt, mapper)


def _observation_steps(dt, T, observation_times):
    """Step indices of the observation times, validated."""
    if not dt > 0:
        raise ValueError(f'dt must be positive, got {dt}')
    if T < 0:
        raise ValueError(f'T must be non-negative, got {T}')
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f'T={T} is not a multiple of dt={dt}')
    if observation_times is None:
        observation_times = [0.0, T] if n_steps else [0.0]
    times = np.asarray(observation_times, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError('Observation times must be strictly increasing')
    if times[0] < 0 or times[-1] > T + 1e-9 * max(1.0, T):
        raise ValueError(f'Observation times must lie in [0, {T}]')
    steps = np.rint(times / dt).astype(int)
    if np.any(np.abs(steps * dt - times) > 1e-9 * np.maximum(1.0, times)):
        raise ValueError(f'Observation times must be multiples of dt={dt}')
    return n_steps, steps


def _record(statistics, values):
    for key, val in values.items():
        statistics.setdefault(key, []).append(val)


def simulate(ens0, model, domain, dt, T, observation_times=None,
             observers=(), keep_snapshots=False, n_workers=1):
    """Run `step` up to time ``T`` and observe on a grid.

    Parameters
    ----------
    ens0 : `Ensemble`

    model, domain, dt
        As in `step`.

    T : float
        Final time, a multiple of ``dt``. ``T=0`` observes ``ens0`` only.

    observation_times : array-like or `None`
        Strictly increasing multiples of ``dt`` in ``[0, T]``. Default is
        ``[0, T]``.

    observers : sequence
        Callables ``obs(ens) -> dict`` of scalar statistics, such as
        `MomentObserver`, `LocalTimeObserver` or `DistanceObserver`.

    keep_snapshots : bool
        Keep the ensemble at every observation time.

    n_workers : int

    Returns
    -------
    traj : `Trajectory`

    """
    n_steps, obs_steps = _observation_steps(dt, T, observation_times)
    observers = list(observers)
    snap = None
    if keep_snapshots:
        snap = SnapshotObserver()
        observers.append(snap)

    statistics = {}
    times = []
    ens = ens0
    k = 0
    with _block_mapper(n_workers) as mapper:
        for target in obs_steps:
            while k < target:
                ens = _step(ens, model, domain, dt, mapper)
                k += 1
            times.append(ens.time)
            for obs in observers:
                _record(statistics, obs(ens))
        while k < n_steps:
            ens = _step(ens, model, domain, dt, mapper)
            k += 1

    log.info(f'Simulated {ens0.n} particles of {model.name!r} to t={T} '
             f'in {n_steps} steps')
    return Trajectory(times=np.asarray(times),
                      statistics={key: np.asarray(val)
                                  for key, val in statistics.items()},
                      snapshots=None if snap is None else snap.snapshots,
                      final=ens)


# --------- #
# OBSERVERS #
# --------- #

def _coordinate_names(prefix, dim):
    if dim == 1:
        return [prefix]
    return [f'{prefix}_{i}' for i in range(dim)]


class MomentObserver:
    """Per-coordinate mean and variance."""

    def __call__(self, ens):
        mean = ens.positions.mean(axis=0)
        var = ens.positions.var(axis=0)
        out = dict(zip(_coordinate_names('mean', ens.dim), mean))
        out.update(zip(_coordinate_names('variance', ens.dim), var))
        return out


class LocalTimeObserver:
    """Total and mean accumulated boundary local time."""

    def __call__(self, ens):
        return {'local_time_total': float(ens.local_time.sum()),
                'local_time_mean': float(ens.local_time.mean())}


class DistanceObserver:
    """Distance of the ensemble to a fixed reference measure.

    Parameters
    ----------
    reference : `~mvsde_tools.metrics.EmpiricalMeasure` or array-like

    metric : str
        Name accepted by `~mvsde_tools.metrics.distance`.

    name : str or `None`
        Statistic name; default is ``metric``.

    params
        Passed on to `~mvsde_tools.metrics.distance`.

    """

    def __init__(self, reference, metric='w1', name=None, **params):
        self.reference = as_measure(reference)
        self.metric = metric
        self.name = name or metric
        self.params = params

    def __call__(self, ens):
        return {self.name: distance(self.metric, ens, self.reference,
                                    **self.params)}


class SnapshotObserver:
    """Keep every observed state."""

    def __init__(self):
        self.snapshots = []

    def __call__(self, ens):
        self.snapshots.append(ens)
        return {}


# -------- #
# COUPLING #
# -------- #

def _coupled_block(model, domain, dt, prep_x, prep_y, stream, step_index,
                   pair, item):
    b, sl = item
    x = pair.x.positions[sl]
    y = pair.y.positions[sl]
    coupled = pair.coupled[sl]
    d = x.shape[1]

    xi = stream.normals(step_index, b, (len(x), model.diffusion.noise_dim))
    xi_y = xi
    if pair.mode == 'reflection' and not coupled.all():
        diff = x - y
        r = np.linalg.norm(diff, axis=1)
        active = ~coupled & (r > 0)
        u = np.zeros_like(diff)
        u[active] = diff[active] / r[active, None]
        xi_y = xi.copy()
        iso = xi[:, :d]
        xi_y[:, :d] = iso - 2 * np.sum(iso * u, axis=1)[:, None] * u

    with np.errstate(over='ignore', invalid='ignore'):
        dx = (model.drift_prepared(x, prep_x) * dt +
              np.sqrt(dt) * model.diffusion.apply(x, xi))
        dy = (model.drift_prepared(y, prep_y) * dt +
              np.sqrt(dt) * model.diffusion.apply(y, xi_y))
    if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dy))):
        return x + dx, y + dy, np.zeros(len(x)), np.zeros(len(x)), coupled
    new_x, dlx = reflect_step(domain, x, dx)
    new_y, dly = reflect_step(domain, y, dy)

    if pair.mode == 'reflection':
        met = (np.linalg.norm(new_x - new_y, axis=1) <=
               pair.meet_tolerance * np.sqrt(dt))
    else:
        met = np.all(new_x == new_y, axis=1)
    now = coupled | met
    new_y[now] = new_x[now]
    return new_x, new_y, dlx, dly, now


def _coupled_step(pair, model, domain, dt, mapper):
    if pair.mode == 'reflection' and not model.diffusion.has_split:
        raise CouplingError('Reflection coupling needs a diffusion with an '
                            'isotropic part alpha')
    stream = NoiseStream(pair.x.seed, side=pair.x.side)
    prep_x = model.prepare(pair.x.measure())
    prep_y = model.prepare(pair.y.measure())
    blocks = block_slices(pair.n, conf.block_size)
    func = partial(_coupled_block, model, domain, dt, prep_x, prep_y, stream,
                   pair.x.step_index, pair)
    results = list(mapper(func, enumerate(blocks)))
    time = pair.x.time + dt
    _first_blowup(blocks, results, time)
    _first_blowup(blocks, [r[1:] for r in results], time)

    def advance(ens, pos_idx, lt_idx):
        return replace(ens,
                       positions=np.vstack([r[pos_idx] for r in results]),
                       time=time, step_index=ens.step_index + 1,
                       local_time=ens.local_time + np.concatenate(
                           [r[lt_idx] for r in results]))

    return replace(pair, x=advance(pair.x, 0, 2), y=advance(pair.y, 1, 3),
                   coupled=np.concatenate([r[4] for r in results]))


def coupled_step(pair, model, domain, dt, n_workers=1):
    """Advance both sides of a coupling by one step.

    The X-side follows exactly the noise of a plain `step` with its seed.
    In synchronous mode the Y-side reuses that noise. In reflection mode
    the isotropic component is mirrored,
    :math:`\\xi^1 \\mapsto (I - 2uu^*)\\xi^1` with
    :math:`u = (x_i - y_i)/|x_i - y_i|`, while the
    :math:`\\hat\\sigma` component is shared. Once a pair has met, its
    Y-point is copied from its X-point after every step.

    Parameters
    ----------
    pair : `CoupledEnsemble`

    model, domain, dt, n_workers
        As in `step`.

    Returns
    -------
    new_pair : `CoupledEnsemble`

    Raises
    ------
    mvsde_tools.utils.exceptions.CouplingError
        Reflection mode for a diffusion without isotropic part.

    mvsde_tools.utils.exceptions.BlowUpError

    """
    if not dt > 0:
        raise ValueError(f'dt must be positive, got {dt}')
    with _block_mapper(n_workers) as mapper:
        return _coupled_step(pair, model, domain, dt, mapper)


def _coupling_summary(pair):
    return {'fraction_coupled': float(pair.coupled.mean()),
            'mean_distance': float(pair.distances().mean())}


def simulate_coupled(pair0, model, domain, dt, T, observation_times=None,
                     n_workers=1):
    """Run `coupled_step` up to ``T``, keeping a snapshot per observation.

    Returns
    -------
    traj : `Trajectory`
        Snapshots are `CoupledEnsemble`; statistics hold
        ``fraction_coupled`` and ``mean_distance``.

    """
    n_steps, obs_steps = _observation_steps(dt, T, observation_times)
    statistics = {}
    snapshots = []
    times = []
    pair = pair0
    k = 0
    with _block_mapper(n_workers) as mapper:
        for target in obs_steps:
            while k < target:
                pair = _coupled_step(pair, model, domain, dt, mapper)
                k += 1
            times.append(pair.time)
            snapshots.append(pair)
            _record(statistics, _coupling_summary(pair))
        while k < n_steps:
            pair = _coupled_step(pair, model, domain, dt, mapper)
            k += 1

    log.info(f'Coupled run ({pair0.mode}) of {pair0.n} pairs to t={T}: '
             f'{pair.coupled.mean():.3%} coupled')
    return Trajectory(times=np.asarray(times),
                      statistics={key: np.asarray(val)
                                  for key, val in statistics.items()},
                      snapshots=snapshots, final=pair)


def coupling_statistics(run, profile=None):
    """Coupling summaries at each observation time.

    Parameters
    ----------
    run : `Trajectory`
        From `simulate_coupled`.

    profile : `~mvsde_tools.model.PsiProfile` or `None`
        Default is the identity, making ``psi_distance`` equal to
        ``mean_distance``.

    Returns
    -------
    stats : dict
        Arrays ``time``, ``fraction_coupled``, ``mean_distance`` and
        ``psi_distance``. The last one bounds
        :math:`W_\\psi(\\mu_t, \\nu_t)` from above.

    """
    if not run.snapshots or not isinstance(run.snapshots[0],
                                           CoupledEnsemble):
        raise ValueError('coupling_statistics needs a coupled run')
    if profile is None:
        profile = PsiProfile.identity()
    dists = [pair.distances() for pair in run.snapshots]
    return {'time': np.asarray(run.times),
            'fraction_coupled': np.array([p.coupled.mean()
                                          for p in run.snapshots]),
            'mean_distance': np.array([r.mean() for r in dists]),
            'psi_distance': np.array([profile.psi(r).mean() for r in dists])}


# ------ #
# TABLES #
# ------ #

def trajectory_table(traj):
    """Summary table with columns ``time``, ``statistic``, ``value``."""
    rows_t, rows_name, rows_val = [], [], []
    for i, t in enumerate(traj.times):
        for name, values in traj.statistics.items():
            rows_t.append(t)
            rows_name.append(name)
            rows_val.append(float(values[i]))
    return Table([np.asarray(rows_t, dtype=float), rows_name,
                  np.asarray(rows_val, dtype=float)],
                 names=('time', 'statistic', 'value'))


def snapshot_table(traj):
    """Long table of snapshot positions.

    Columns ``time``, ``particle_index``, then ``x0 .. x{d-1}``; coupled
    runs add ``side`` and ``coupled``.

    """
    if not traj.snapshots:
        raise ValueError('Trajectory kept no snapshots')
    coupled = isinstance(traj.snapshots[0], CoupledEnsemble)
    cols = {'time': [], 'particle_index': []}
    if coupled:
        cols['side'] = []
        cols['coupled'] = []
    pos = []
    for snap in traj.snapshots:
        sides = [(0, snap.x), (1, snap.y)] if coupled else [(0, snap)]
        for side, ens in sides:
            cols['time'].append(np.full(ens.n, ens.time))
            cols['particle_index'].append(np.arange(ens.n))
            if coupled:
                cols['side'].append(np.full(ens.n, side))
                cols['coupled'].append(snap.coupled.astype(int))
            pos.append(ens.positions)
    data = {key: np.concatenate(val) for key, val in cols.items()}
    pos = np.vstack(pos)
    for i in range(pos.shape[1]):
        data[f'x{i}'] = pos[:, i]
    return Table(list(data.values()), names=list(data.keys()))


def empirical_mean_variance(model, domain, sampler, n, dt, T, seeds,
                            n_workers=1):
    """Spread of the empirical mean across independent runs.

    For a mean-field model the variance of the N-particle empirical mean
    at time ``T`` should scale like ``1/N``.

    Returns
    -------
    result : dict
        ``means`` (one row per seed) and ``variance`` (per coordinate,
        across seeds).

    """
    means = []
    for seed in seeds:
        ens = init_ensemble(n, sampler, domain, seed)
        traj = simulate(ens, model, domain, dt, T, n_workers=n_workers)
        means.append(traj.final.positions.mean(axis=0))
    means = np.asarray(means)
    return {'means': means, 'variance': means.var(axis=0, ddof=1)}
