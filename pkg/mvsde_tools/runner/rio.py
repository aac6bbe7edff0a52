"""Experiment configuration, manifests and run comparison.

An experiment is one JSON document validated by `ExperimentConfig`.
Unknown keys are rejected and seeds are required; validation errors
are reported with the JSON pointer of the offending field.

"""
# STDLIB
import hashlib
import json
import os
import platform
from typing import List, Literal, Optional

# THIRD-PARTY
import numpy as np
from astropy.table import Table
from pydantic import (BaseModel, ConfigDict, Field, ValidationError,
                      model_validator)

# LOCAL
from ..conf import conf
from ..metrics import METRICS
from ..model import BUILTIN_MODELS
from ..utils.exceptions import ConfigValidationError
from ..utils.io import _get_timestamp, file_sha256, read_csv, read_manifest

__all__ = ['ExperimentConfig', 'load_config', 'config_schema',
           'config_hash', 'build_manifest', 'compare_runs', 'missing_inputs',
           'STAGES']

__taskname__ = 'mvsde'

STAGES = ('simulate', 'couple', 'fixed_point', 'pde', 'metrics', 'fit',
          'check')

# Config blocks each stage reads.
STAGE_INPUTS = {'couple': ('coupling', 'initial_y'), 'pde': ('pde',),
                'fixed_point': ('fixed_point',), 'check': ('checks',),
                'fit': ('rate_fit',), 'metrics': ('reference',)}

Seed = Field(ge=0, lt=2**64)


class _Strict(BaseModel):
    model_config = ConfigDict(extra='forbid')


# ------ #
# DOMAIN #
# ------ #

class HalfSpaceConfig(_Strict):
    a: List[float]
    c: float = 0.0


class DomainConfig(_Strict):
    """Tagged domain record, as read by
    `~mvsde_tools.geometry.domain_from_dict`."""
    kind: Literal['full-space', 'half-space', 'ball', 'box', 'polytope']
    dim: Optional[int] = Field(default=None, ge=1)
    a: Optional[List[float]] = None
    c: float = 0.0
    center: Optional[List[float]] = None
    radius: Optional[float] = Field(default=None, gt=0)
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    halfspaces: Optional[List[HalfSpaceConfig]] = None

    @model_validator(mode='after')
    def _required_fields(self):
        needed = {'full-space': ('dim',), 'half-space': ('a',),
                  'ball': ('center', 'radius'), 'box': ('lower', 'upper'),
                  'polytope': ('halfspaces',)}[self.kind]
        missing = [name for name in needed if getattr(self, name) is None]
        if missing:
            raise ValueError(f'{self.kind} domain needs {", ".join(missing)}')
        return self


# ----- #
# MODEL #
# ----- #

class SingularDriftConfig(_Strict):
    kind: Literal['sign', 'indicator']
    amplitude: float = 1.0
    radius: float = Field(default=1.0, gt=0)


class ModelParams(_Strict):
    sigma: float = Field(default=2 ** 0.5, gt=0)
    theta: float = 1.0
    beta: Optional[float] = None
    eta: Optional[float] = None
    b0: Optional[SingularDriftConfig] = None


class ModelConfig(_Strict):
    """Built-in model by name, or a piecewise-polynomial 1D drift."""
    name: Literal[BUILTIN_MODELS + ('piecewise',)]
    dim: int = Field(default=1, ge=1)
    params: ModelParams = Field(default_factory=ModelParams)
    breakpoints: Optional[List[float]] = None
    coefficients: Optional[List[List[float]]] = None

    @model_validator(mode='after')
    def _piecewise_fields(self):
        if self.name == 'piecewise':
            if self.breakpoints is None or self.coefficients is None:
                raise ValueError('piecewise model needs breakpoints and '
                                 'coefficients')
            if self.dim != 1:
                raise ValueError('piecewise model is one-dimensional')
        return self

    def to_spec(self):
        """Record for `~mvsde_tools.model.model_from_dict`."""
        params = self.params.model_dump(exclude_none=True)
        if self.name == 'piecewise':
            params.pop('theta', None)
            params.pop('b0', None)
            return {'name': self.name, 'breakpoints': self.breakpoints,
                    'coefficients': self.coefficients, 'params': params}
        return {'name': self.name, 'dim': self.dim, 'params': params}


# ----------- #
# INITIAL LAW #
# ----------- #

class InitialLawConfig(_Strict):
    kind: Literal['dirac', 'uniform', 'gaussian', 'file']
    point: Optional[List[float]] = None
    lower: Optional[List[float]] = None
    upper: Optional[List[float]] = None
    mean: Optional[List[float]] = None
    cov: Optional[List[List[float]]] = None
    path: Optional[str] = None

    @model_validator(mode='after')
    def _required_fields(self):
        needed = {'dirac': ('point',), 'uniform': ('lower', 'upper'),
                  'gaussian': ('mean',), 'file': ('path',)}[self.kind]
        missing = [name for name in needed if getattr(self, name) is None]
        if missing:
            raise ValueError(f'{self.kind} law needs {", ".join(missing)}')
        return self

    def to_spec(self):
        spec = self.model_dump(exclude_none=True)
        if self.kind == 'gaussian' and self.cov is None:
            spec['cov'] = 1.0
        return spec


class IntegratorConfig(_Strict):
    dt: float = Field(gt=0)
    T: float = Field(ge=0)
    n: int = Field(ge=1)
    seed: int = Seed
    seed_y: Optional[int] = Field(default=None, ge=0, lt=2**64)
    observe_every: Optional[float] = Field(default=None, gt=0)

    def observation_times(self):
        if self.observe_every is None:
            return None
        k = int(round(self.T / self.observe_every))
        return np.arange(k + 1) * self.observe_every


class ReferenceConfig(_Strict):
    """Sample of a fixed reference law for distance curves."""
    law: InitialLawConfig
    n: int = Field(ge=1)
    seed: int = Seed


class MetricConfig(_Strict):
    name: Literal[METRICS]
    p: Optional[float] = Field(default=None, ge=1)
    reg: Optional[float] = Field(default=None, gt=0)
    bins: Optional[int] = Field(default=None, ge=1)
    psi: Optional[Literal['identity', 'exponential', 'square']] = None
    pseudo_count: Optional[float] = Field(default=None, ge=0)

    @property
    def label(self):
        return self.name if self.p is None else f'{self.name}_p{self.p:g}'


class CouplingConfig(_Strict):
    mode: Literal['synchronous', 'reflection']
    meet_tolerance: Optional[float] = Field(default=None, gt=0)
    psi: Literal['identity', 'exponential', 'square'] = 'identity'
    psi_scale: float = Field(default=1.0, gt=0)


class RateFitConfig(_Strict):
    statistic: str
    burn_in: Optional[float] = Field(default=None, ge=0)
    noise_floor: float = Field(default=0.0, ge=0)
    auto_noise_floor: bool = False


class PDEInitialConfig(_Strict):
    kind: Literal['gaussian', 'uniform']
    mean: float = 0.0
    std: float = Field(default=1.0, gt=0)


class PDEConfig(_Strict):
    a: float
    b: float
    M: int = Field(ge=2)
    T: float = Field(ge=0)
    dt: Optional[float] = Field(default=None, gt=0)
    observe_every: Optional[float] = Field(default=None, gt=0)
    diffusion: float = Field(default=1.0, gt=0)
    flux: Literal['upwind', 'exponential'] = 'upwind'
    initial: List[PDEInitialConfig] = Field(min_length=1, max_length=2)
    steady_state: bool = True
    tol: float = Field(default=1e-8, gt=0)
    T_max: float = Field(default=100.0, gt=0)

    @model_validator(mode='after')
    def _interval(self):
        if not self.b > self.a:
            raise ValueError('PDE interval needs a < b')
        return self


class FixedPointConfig(_Strict):
    n: int = Field(ge=1)
    dt: float = Field(gt=0)
    T_stat: float = Field(gt=0)
    tol: float = Field(default=0.05, gt=0)
    max_iters: int = Field(default=20, ge=1)
    seed: int = Seed


class GridConfig(_Strict):
    """Tensor grid of ``n`` points per axis on ``[lower, upper]``."""
    lower: List[float]
    upper: List[float]
    n: int = Field(default=101, ge=2)

    def points(self):
        axes = [np.linspace(lo, hi, self.n)
                for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing='ij')
        return np.column_stack([m.ravel() for m in mesh])


class B1CheckConfig(_Strict):
    phi: List[float] = Field(default=[1.0, 1.0], min_length=1)
    c1: float
    c2: float
    grid: GridConfig


class LyapunovCheckConfig(_Strict):
    K: float
    Phi: List[float] = Field(default=[0.0, 1.0], min_length=1)
    eps: Optional[float] = Field(default=None, gt=0, lt=1)
    grid: GridConfig


class PsiCheckConfig(_Strict):
    profile: Literal['identity', 'exponential', 'square']
    scale: float = Field(default=1.0, gt=0)
    r_min: float = Field(default=1e-6, gt=0)
    r_max: float = Field(default=100.0, gt=0)
    n: int = Field(default=200, ge=2)


class ChecksConfig(_Strict):
    B1: Optional[B1CheckConfig] = None
    lyapunov: Optional[LyapunovCheckConfig] = None
    psi_class: Optional[PsiCheckConfig] = None


class AcceptanceConfig(_Strict):
    min_rate: Optional[float] = None
    max_rate: Optional[float] = None
    min_r_squared: Optional[float] = Field(default=None, ge=0, le=1)
    max_final_distance: Optional[float] = Field(default=None, ge=0)
    min_fraction_coupled: Optional[float] = Field(default=None, ge=0, le=1)
    max_pde_l1: Optional[float] = Field(default=None, ge=0)
    checks_pass: bool = False


class OutputsConfig(_Strict):
    outdir: Optional[str] = None
    snapshots: bool = False


class ExperimentConfig(_Strict):
    """A complete experiment."""
    name: str = 'experiment'
    pipeline: List[Literal[STAGES]] = Field(
        default=['simulate', 'metrics', 'fit'], min_length=1)
    domain: DomainConfig
    model: ModelConfig
    initial: InitialLawConfig
    initial_y: Optional[InitialLawConfig] = None
    integrator: IntegratorConfig
    reference: Optional[ReferenceConfig] = None
    metrics: List[MetricConfig] = Field(default_factory=list)
    coupling: Optional[CouplingConfig] = None
    rate_fit: Optional[RateFitConfig] = None
    pde: Optional[PDEConfig] = None
    fixed_point: Optional[FixedPointConfig] = None
    checks: Optional[ChecksConfig] = None
    acceptance: Optional[AcceptanceConfig] = None
    outputs: OutputsConfig = Field(default_factory=OutputsConfig)

    @model_validator(mode='after')
    def _stage_inputs(self):
        missing = missing_inputs(self, self.pipeline)
        if missing:
            raise ValueError(missing[0][1])
        if 'metrics' in self.pipeline and 'simulate' not in self.pipeline:
            raise ValueError('stage metrics needs stage simulate')
        return self


def missing_inputs(config, stages):
    """``(pointer, message)`` for every config block a stage needs but
    the config lacks."""
    out = []
    for stage in stages:
        for name in STAGE_INPUTS.get(stage, ()):
            if getattr(config, name) is None:
                out.append((f'/{name}', f'stage {stage} needs {name}'))
    return out


def _pointer(loc):
    """JSON pointer for a pydantic error location."""
    parts = [str(p) for p in loc if not str(p).startswith(('function-',
                                                            'literal['))]
    return '/' + '/'.join(p.replace('~', '~0').replace('/', '~1')
                          for p in parts)


def load_config(source):
    """Read and validate an experiment config.

    Parameters
    ----------
    source : str or dict
        JSON filename or already parsed document.

    Returns
    -------
    config : `ExperimentConfig`

    Raises
    ------
    OSError
        File does not exist.

    mvsde_tools.utils.exceptions.ConfigValidationError
        Invalid document; ``pointer`` locates the first error.

    """
    if isinstance(source, dict):
        doc = source
    else:
        if not os.path.isfile(source):
            raise OSError(f'{source} does not exist')
        with open(source) as fin:
            try:
                doc = json.load(fin)
            except json.JSONDecodeError as e:
                raise ConfigValidationError('', f'not valid JSON: {e}')
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as e:
        errs = e.errors()
        lines = [f'{_pointer(err["loc"])}: {err["msg"]}' for err in errs]
        raise ConfigValidationError(_pointer(errs[0]['loc']),
                                    '; '.join(lines))


def config_schema():
    """Published JSON schema of `ExperimentConfig`."""
    return ExperimentConfig.model_json_schema()


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(',', ':'))


def config_hash(config):
    """SHA-256 of the canonical JSON form of the config."""
    return hashlib.sha256(_canonical(
        config.model_dump(mode='json')).encode('utf-8')).hexdigest()


def _versions():
    import astropy
    import pydantic
    import scipy
    try:
        from ..version import version
    except ImportError:
        version = 'unknown'
    return {__taskname__: version, 'numpy': np.__version__,
            'scipy': scipy.__version__, 'astropy': astropy.__version__,
            'pydantic': pydantic.__version__,
            'python': platform.python_version()}


def build_manifest(config, outdir, files, n_workers=1, extras=None):
    """Manifest of a run: config, its hash, versions, seeds, timestamp
    and the SHA-256 of every written file.

    Parameters
    ----------
    config : `ExperimentConfig`

    outdir : str
        Directory holding ``files``.

    files : list of str
        Basenames of written files.

    """
    seeds = {'integrator': config.integrator.seed}
    if config.integrator.seed_y is not None:
        seeds['integrator_y'] = config.integrator.seed_y
    if config.reference is not None:
        seeds['reference'] = config.reference.seed
    if config.fixed_point is not None:
        seeds['fixed_point'] = config.fixed_point.seed

    manifest = {'name': config.name,
                'config': config.model_dump(mode='json'),
                'config_hash': config_hash(config),
                'versions': _versions(), 'seeds': seeds,
                'n_workers': n_workers,
                'files': {name: file_sha256(os.path.join(outdir, name))
                          for name in sorted(files)}}
    manifest.update(_get_timestamp())
    if extras:
        manifest.update(extras)
    return manifest


# ------- #
# COMPARE #
# ------- #

_GROUP_COLUMNS = ('statistic', 'metric', 'source', 'check')


def _table_diffs(tab_a, tab_b):
    """Yield ``(key, max_abs_diff)`` for the numeric content of two
    tables with the same layout."""
    if tab_a.colnames != tab_b.colnames or len(tab_a) != len(tab_b):
        yield 'layout', np.inf
        return
    group = next((c for c in _GROUP_COLUMNS if c in tab_a.colnames), None)
    numeric = [c for c in tab_a.colnames
               if tab_a[c].dtype.kind in 'fiu' and c != group]
    labels = (np.asarray(tab_a[group]).astype(str) if group
              else np.full(len(tab_a), ''))
    for col in numeric:
        diff = np.abs(np.asarray(tab_a[col], dtype=float) -
                      np.asarray(tab_b[col], dtype=float))
        for label in dict.fromkeys(labels):
            sel = labels == label
            with np.errstate(invalid='ignore'):
                d = diff[sel]
            both_nan = (np.isnan(np.asarray(tab_a[col], dtype=float)[sel]) &
                        np.isnan(np.asarray(tab_b[col], dtype=float)[sel]))
            d = np.where(both_nan, 0.0, d)
            key = f'{label}:{col}' if label else col
            yield key, float(np.nanmax(d)) if d.size else 0.0


def _noise_floors(*runs):
    """Largest recorded noise floor per metric label over ``runs``.

    Each run is a ``(directory, files)`` pair; floors come from its
    ``metrics.csv``.
    """
    floors = {}
    for directory, files in runs:
        if 'metrics.csv' not in files:
            continue
        tab = read_csv(os.path.join(directory, 'metrics.csv'))
        if 'noise_floor' not in tab.colnames:
            continue
        for label, floor in zip(tab['metric'], tab['noise_floor']):
            floor = float(floor)
            if np.isfinite(floor):
                floors[str(label)] = max(floor, floors.get(str(label), 0.0))
    return floors


def compare_runs(manifest_a, manifest_b, tolerances=None):
    """Difference report between two runs.

    Files with equal hashes are skipped. For other CSV files, numeric
    columns are compared row by row (grouped by the ``statistic``,
    ``metric``, ``source`` or ``check`` column when present).

    A metric's ``value`` column (in ``metrics.csv`` and ``distances.csv``)
    is allowed ``conf.compare_floor_factor`` times the larger of the two
    recorded noise floors, so runs that differ only in seed pass on their
    distances. Everything else must match exactly unless a tolerance is
    given.

    Parameters
    ----------
    manifest_a, manifest_b : str
        Manifest filenames; CSV files are read next to them.

    tolerances : dict or `None`
        Key (``'<group>:<column>'`` or ``'<column>'``) to allowed
        absolute difference. Overrides the noise-floor default.

    Returns
    -------
    report : `~astropy.table.Table`
        Columns ``file``, ``key``, ``max_abs_diff``, ``tolerance``,
        ``basis`` (``'given'``, ``'noise_floor'`` or ``'exact'``) and
        ``exceeds``. Empty for identical runs.

    Raises
    ------
    OSError
        A manifest or CSV file is missing.

    """
    tolerances = tolerances or {}
    man_a = read_manifest(manifest_a)
    man_b = read_manifest(manifest_b)
    dir_a = os.path.dirname(os.path.abspath(manifest_a))
    dir_b = os.path.dirname(os.path.abspath(manifest_b))
    floors = _noise_floors((dir_a, man_a['files']), (dir_b, man_b['files']))

    rows = []
    for name in sorted(set(man_a['files']) | set(man_b['files'])):
        if man_a['files'].get(name) == man_b['files'].get(name):
            continue
        if name not in man_a['files'] or name not in man_b['files']:
            rows.append((name, 'missing', np.inf, 0.0, 'exact', True))
            continue
        tab_a = read_csv(os.path.join(dir_a, name))
        tab_b = read_csv(os.path.join(dir_b, name))
        by_metric = 'metric' in tab_a.colnames
        for key, diff in _table_diffs(tab_a, tab_b):
            label, _, col = key.rpartition(':')
            if key in tolerances:
                tol, basis = float(tolerances[key]), 'given'
            elif by_metric and col == 'value' and label in floors:
                tol = conf.compare_floor_factor * floors[label]
                basis = 'noise_floor'
            else:
                tol, basis = 0.0, 'exact'
            rows.append((name, key, diff, tol, basis, bool(diff > tol)))

    return Table(rows=rows if rows else None,
                 names=('file', 'key', 'max_abs_diff', 'tolerance', 'basis',
                        'exceeds'),
                 dtype=(str, str, float, float, str, bool))
