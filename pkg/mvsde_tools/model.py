"""Drift and diffusion models and hypothesis checkers.

A model is ``b(x, mu) = b0(x) + b1(x) + (W * mu)(x)`` with diffusion
``sigma(x)``. ``b0`` is a bounded, possibly discontinuous field; ``b1``
is locally bounded; ``W`` is an interaction kernel averaged over the
empirical measure. When the diffusion splits as
``sigma sigma^* = alpha I + sigma_hat sigma_hat^*`` the noise is always
realized as ``sqrt(alpha) xi1 + sigma_hat xi2``, which is what the
reflection coupling needs.

The ``check_*`` functions evaluate the hypotheses of the ergodicity
results on user grids. They are certificates on those grids, not proofs;
the grid size and tolerance go into every report.

"""
# STDLIB
import warnings
from dataclasses import dataclass, field, replace

# THIRD-PARTY
import numpy as np
from astropy import log
from astropy.utils.exceptions import AstropyUserWarning
from scipy.interpolate import PPoly

# LOCAL
from .conf import conf
from .metrics import as_measure, distance
from .utils.exceptions import DimensionError, ModelEvaluationError
from .utils.rng import REFERENCE, NoiseStream

__all__ = ['PsiProfile', 'LyapunovSpec', 'DiffusionSpec',
           'InteractionKernel', 'LinearInteraction', 'PairwiseInteraction',
           'ModelSpec', 'CheckReport', 'drift', 'check_B1', 'check_lyapunov',
           'check_dissipativity', 'check_psi_class',
           'check_growth_conditions', 'check_compact_function',
           'check_interaction_bound', 'check_decomposition',
           'builtin_model', 'piecewise_polynomial_model', 'model_from_dict',
           'BUILTIN_MODELS']


def _as_batch(x, dim):
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


# -------- #
# PROFILES #
# -------- #

class PsiProfile:
    """Concave distance profile for the transportation cost
    :math:`W_\\psi`.

    Parameters
    ----------
    psi, dpsi, d2psi : callable
        :math:`\\psi` and its first two derivatives, vectorized.

    kappa : float
        Constant of the class :math:`\\Psi_\\kappa`.

    sup_psi_prime : float
        :math:`\\|\\psi'\\|_\\infty`, possibly ``inf``.

    name : str
        Label used in reports and CSV output.

    """
    def __init__(self, psi, dpsi, d2psi, kappa, sup_psi_prime, name=''):
        self.psi = psi
        self.dpsi = dpsi
        self.d2psi = d2psi
        self.kappa = float(kappa)
        self.sup_psi_prime = float(sup_psi_prime)
        self.name = name

    def __repr__(self):
        return f'<PsiProfile {self.name} kappa={self.kappa}>'

    @classmethod
    def identity(cls):
        """:math:`\\psi(r) = r`, which makes :math:`W_\\psi = W_1`."""
        return cls(lambda r: np.asarray(r, dtype=float),
                   lambda r: np.ones_like(r, dtype=float),
                   lambda r: np.zeros_like(r, dtype=float),
                   kappa=1.0, sup_psi_prime=1.0, name='identity')

    @classmethod
    def exponential(cls, scale=1.0):
        """:math:`\\psi(r) = s(1 - e^{-r/s})`, bounded and concave."""
        s = float(scale)
        return cls(lambda r: -s * np.expm1(-np.asarray(r, dtype=float) / s),
                   lambda r: np.exp(-np.asarray(r, dtype=float) / s),
                   lambda r: -np.exp(-np.asarray(r, dtype=float) / s) / s,
                   kappa=1.0, sup_psi_prime=1.0, name='exponential')

    @classmethod
    def square(cls):
        """:math:`\\psi(r) = r^2`; not in any :math:`\\Psi_\\kappa`."""
        return cls(lambda r: np.asarray(r, dtype=float) ** 2,
                   lambda r: 2 * np.asarray(r, dtype=float),
                   lambda r: np.full_like(r, 2.0, dtype=float),
                   kappa=2.0, sup_psi_prime=np.inf, name='square')

    @classmethod
    def from_name(cls, name, **params):
        """Build a built-in profile by name."""
        try:
            return {'identity': cls.identity, 'exponential': cls.exponential,
                    'square': cls.square}[name](**params)
        except KeyError:
            raise ValueError(f'Unknown psi profile: {name}')


class LyapunovSpec:
    """Lyapunov function data for the drift condition.

    Parameters
    ----------
    V : callable
        ``(n, d) -> (n,)``, at least 1.

    grad_V : callable
        ``(n, d) -> (n, d)``.

    hess_V : callable
        ``(n, d) -> (n, d, d)``.

    Phi : callable
        Increasing function on :math:`[1, \\infty)`, at least 1.

    K : float
        Constant on the right-hand side.

    eps : float or `None`
        Epsilon in ``(0, 1)``. Default is ``conf.lyapunov_eps``.

    """
    def __init__(self, V, grad_V, hess_V, Phi, K, eps=None):
        if eps is None:
            eps = conf.lyapunov_eps
        if not 0 < eps < 1:
            raise ValueError(f'eps must be in (0, 1), got {eps}')
        self.V = V
        self.grad_V = grad_V
        self.hess_V = hess_V
        self.Phi = Phi
        self.K = float(K)
        self.eps = float(eps)

    @classmethod
    def quadratic(cls, K, Phi=None, eps=None):
        """:math:`V(x) = 1 + |x|^2`, default :math:`\\Phi(r) = r`."""
        def hess(x):
            return np.broadcast_to(2 * np.eye(x.shape[1]),
                                   (len(x), x.shape[1], x.shape[1]))

        return cls(lambda x: 1 + np.sum(x ** 2, axis=1),
                   lambda x: 2 * x, hess,
                   Phi if Phi is not None else (lambda r: r), K, eps=eps)

    @classmethod
    def constant(cls, K, eps=None):
        """:math:`V = 1`, :math:`\\Phi = 1`; enough on bounded domains."""
        return cls(lambda x: np.ones(len(x)),
                   lambda x: np.zeros_like(x),
                   lambda x: np.zeros((len(x), x.shape[1], x.shape[1])),
                   lambda r: np.ones_like(r), K, eps=eps)


# --------- #
# DIFFUSION #
# --------- #

class DiffusionSpec:
    """Diffusion coefficient :math:`\\sigma(x)`.

    Either a direct matrix (constant ``(d, m)`` array or callable
    ``(n, d) -> (n, d, m)``), or the split
    :math:`\\sigma\\sigma^* = \\alpha I_d + \\hat\\sigma\\hat\\sigma^*`, or
    both. With a split, noise is realized as
    :math:`\\sqrt{\\alpha}\\xi^1 + \\hat\\sigma\\xi^2`.

    Parameters
    ----------
    dim : int

    matrix : array-like, callable or `None`

    alpha : float or `None`
        Isotropic part, positive.

    sigma_hat : array-like, callable or `None`
        Constant ``(d, k)`` array or callable ``(n, d) -> (n, d, k)``.

    Raises
    ------
    ValueError
        Nothing given, ``alpha <= 0``, or a constant split that does not
        reproduce the constant matrix to 1e-10.

    """
    def __init__(self, dim, matrix=None, alpha=None, sigma_hat=None):
        self.dim = int(dim)
        if matrix is None and alpha is None:
            raise ValueError('Give a diffusion matrix or an isotropic part')
        if alpha is not None and not alpha > 0:
            raise ValueError(f'alpha must be positive, got {alpha}')
        self.alpha = None if alpha is None else float(alpha)

        if sigma_hat is not None and not callable(sigma_hat):
            sigma_hat = np.atleast_2d(np.asarray(sigma_hat, dtype=float))
            if sigma_hat.shape[0] != self.dim:
                raise DimensionError('sigma_hat must have d rows')
        self.sigma_hat = sigma_hat

        if matrix is not None and not callable(matrix):
            matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
            if matrix.shape[0] != self.dim:
                raise DimensionError('Diffusion matrix must have d rows')
        self._matrix = matrix

        if (self.has_split and self.constant and matrix is not None):
            x0 = np.zeros((1, self.dim))
            if not check_decomposition(self, x0):
                raise ValueError('alpha I + sigma_hat sigma_hat^* does not '
                                 'match sigma sigma^*')

    @classmethod
    def isotropic(cls, alpha, dim):
        """:math:`\\sigma = \\sqrt{\\alpha} I_d`."""
        return cls(dim, alpha=alpha)

    @property
    def has_split(self):
        return self.alpha is not None

    @property
    def constant(self):
        if self.has_split:
            return not callable(self.sigma_hat)
        return not callable(self._matrix)

    @property
    def hat_dim(self):
        """Columns of :math:`\\hat\\sigma` (0 if absent)."""
        if self.sigma_hat is None:
            return 0
        if callable(self.sigma_hat):
            return self.sigma_hat(np.zeros((1, self.dim))).shape[-1]
        return self.sigma_hat.shape[1]

    @property
    def noise_dim(self):
        """Number of standard normals consumed per particle and step."""
        if self.has_split:
            return self.dim + self.hat_dim
        if callable(self._matrix):
            return self._matrix(np.zeros((1, self.dim))).shape[-1]
        return self._matrix.shape[1]

    def _hat(self, x):
        if callable(self.sigma_hat):
            return self.sigma_hat(x)
        return np.broadcast_to(self.sigma_hat, (len(x),) +
                               self.sigma_hat.shape)

    def matrix(self, x):
        """Matrix realizing the noise, shape ``(n, d, noise_dim)``."""
        x = np.asarray(x, dtype=float)
        if self.has_split:
            iso = np.broadcast_to(np.sqrt(self.alpha) * np.eye(self.dim),
                                  (len(x), self.dim, self.dim))
            if self.sigma_hat is None:
                return iso
            return np.concatenate([iso, self._hat(x)], axis=2)
        if callable(self._matrix):
            return self._matrix(x)
        return np.broadcast_to(self._matrix, (len(x),) + self._matrix.shape)

    def direct_matrix(self, x):
        """The direct matrix if one was given, else `matrix`."""
        if self._matrix is None:
            return self.matrix(x)
        if callable(self._matrix):
            return self._matrix(x)
        return np.broadcast_to(self._matrix, (len(x),) + self._matrix.shape)

    def apply(self, x, xi):
        """Noise displacement per unit :math:`\\sqrt{dt}`.

        Parameters
        ----------
        x : ndarray
            Shape ``(n, d)``.

        xi : ndarray
            Shape ``(n, noise_dim)``; the first ``d`` columns are the
            isotropic component when the split is used.

        """
        if self.has_split:
            out = np.sqrt(self.alpha) * xi[:, :self.dim]
            if self.sigma_hat is not None:
                if callable(self.sigma_hat):
                    out = out + np.einsum('nij,nj->ni', self._hat(x),
                                          xi[:, self.dim:])
                else:
                    out = out + xi[:, self.dim:] @ self.sigma_hat.T
            return out
        if callable(self._matrix):
            return np.einsum('nij,nj->ni', self._matrix(x), xi)
        return xi @ self._matrix.T


# ------------ #
# INTERACTIONS #
# ------------ #

class InteractionKernel:
    """Kernel :math:`W(x, z)` averaged against the empirical measure.

    Evaluation runs in two phases: `prepare` summarizes the measure once
    per step, then `apply` evaluates :math:`(W*\\mu)(x)` for any batch of
    ``x``.

    Parameters
    ----------
    mode : {'variation', 'wasserstein'}
        Which distance controls the kernel's dependence on the measure.
        See `measure_distance`.

    bound : float or `None`
        User bound on :math:`|W|`, checked by `check_interaction_bound`.

    """
    def __init__(self, mode='wasserstein', bound=None):
        if mode not in ('variation', 'wasserstein'):
            raise ValueError(f'Unknown interaction mode: {mode}')
        self.mode = mode
        self.bound = None if bound is None else float(bound)

    def __call__(self, x, z):
        raise NotImplementedError

    def prepare(self, mu):
        raise NotImplementedError

    def apply(self, x, prepared):
        raise NotImplementedError

    def average(self, x, mu):
        """:math:`(1/N)\\sum_z W(x, z)` with the measure's weights."""
        return self.apply(x, self.prepare(mu))

    def measure_distance(self, mu, nu):
        """Distance between measures that controls this kernel: total
        variation (V=1) for ``'variation'``, :math:`W_2` for
        ``'wasserstein'``."""
        return distance('tv' if self.mode == 'variation' else 'w2', mu, nu)


class LinearInteraction(InteractionKernel):
    """Affine kernel :math:`W(x, z) = -\\beta x + \\eta z`.

    With ``eta=beta`` (the default) this is :math:`-\\beta(x - z)`.
    Averaging only needs the barycenter, so each step costs O(N).

    """
    def __init__(self, beta, eta=None, mode='wasserstein', bound=None):
        super().__init__(mode=mode, bound=bound)
        self.beta = float(beta)
        self.eta = self.beta if eta is None else float(eta)

    def __repr__(self):
        return f'<LinearInteraction beta={self.beta} eta={self.eta}>'

    def __call__(self, x, z):
        return -self.beta * np.asarray(x) + self.eta * np.asarray(z)

    def prepare(self, mu):
        return as_measure(mu).mean()

    def apply(self, x, prepared):
        return -self.beta * x + self.eta * prepared


class PairwiseInteraction(InteractionKernel):
    """General kernel, averaged pair by pair in O(N^2).

    Parameters
    ----------
    func : callable
        ``func(x, z)`` broadcasting over leading axes, last axis ``d``.

    chunk : int
        Rows of ``x`` per vectorized chunk.

    """
    def __init__(self, func, mode='variation', bound=None, chunk=256):
        super().__init__(mode=mode, bound=bound)
        self.func = func
        self.chunk = int(chunk)

    def __call__(self, x, z):
        return self.func(np.asarray(x), np.asarray(z))

    def prepare(self, mu):
        mu = as_measure(mu)
        if mu.n > conf.kernel_warn_n:
            warnings.warn(f'Pairwise interaction on N={mu.n} particles costs '
                          'O(N^2) per step', AstropyUserWarning)
        return mu

    def apply(self, x, prepared):
        z = prepared.points
        w = prepared.weights
        out = np.empty_like(x)
        for start in range(0, len(x), self.chunk):
            xb = x[start:start + self.chunk]
            vals = self.func(xb[:, None, :], z[None, :, :])
            out[start:start + self.chunk] = np.einsum('j,bjd->bd', w, vals)
        return out


# ----- #
# MODEL #
# ----- #

def _zero_field(x):
    return np.zeros_like(x)


@dataclass(frozen=True)
class ModelSpec:
    """Drift and diffusion of a (McKean-Vlasov) reflecting SDE.

    Vector fields take and return ``(n, d)`` arrays.

    Attributes
    ----------
    name : str

    dim : int

    b1 : callable
        Locally bounded part of the drift.

    diffusion : `DiffusionSpec`

    b0 : callable or `None`
        Bounded measurable part.

    interaction : `InteractionKernel` or `None`

    frozen : `~mvsde_tools.metrics.EmpiricalMeasure` or `None`
        When set, the interaction is always averaged against this
        measure instead of the current one.

    params : dict
        Parameters the model was built from, for manifests.

    """
    name: str
    dim: int
    b1: object
    diffusion: DiffusionSpec
    b0: object = None
    interaction: InteractionKernel = None
    frozen: object = None
    params: dict = field(default_factory=dict)

    @property
    def distribution_dependent_drift(self):
        return self.interaction is not None and self.frozen is None

    @property
    def constant_sigma(self):
        return self.diffusion.constant

    def freeze(self, gamma):
        """Model with the measure argument of the drift fixed to ``gamma``."""
        return replace(self, frozen=as_measure(gamma))

    def prepare(self, mu):
        """Summarize the measure for `drift_prepared` (serial phase)."""
        if self.interaction is None:
            return None
        target = self.frozen if self.frozen is not None else mu
        if target is None:
            raise ValueError(f'Model {self.name!r} has an interaction and '
                             'needs a measure')
        return self.interaction.prepare(target)

    def drift_prepared(self, x, prepared):
        """Drift on a batch, given the output of `prepare`."""
        out = np.asarray(self.b1(x), dtype=float).reshape(x.shape)
        if self.b0 is not None:
            out = out + np.asarray(self.b0(x), dtype=float).reshape(x.shape)
        if self.interaction is not None:
            out = out + self.interaction.apply(x, prepared)
        return out


def drift(model, x, mu=None):
    """Evaluate :math:`b(x, \\mu)`.

    Parameters
    ----------
    model : `ModelSpec`

    x : array-like
        Point ``(d,)`` or batch ``(n, d)``.

    mu : `~mvsde_tools.metrics.EmpiricalMeasure`, ensemble or `None`
        Needed when the model has an unfrozen interaction.

    Returns
    -------
    b : ndarray
        Same shape as ``x``.

    Raises
    ------
    mvsde_tools.utils.exceptions.ModelEvaluationError
        The drift is not finite somewhere; the first such point is
        attached as ``x``.

    Examples
    --------
    >>> from mvsde_tools.model import builtin_model, drift
    >>> drift(builtin_model('ou'), [2.0])
    array([-2.])

    """
    pts, single = _as_batch(x, model.dim)
    if mu is not None:
        mu = as_measure(mu)
    out = model.drift_prepared(pts, model.prepare(mu))
    bad = ~np.all(np.isfinite(out), axis=1)
    if bad.any():
        xb = pts[np.flatnonzero(bad)[0]]
        raise ModelEvaluationError(
            f'Drift of {model.name!r} is not finite at {xb}', x=xb)
    return out[0] if single else out


# ------------- #
# BUILT-IN ZOO  #
# ------------- #

def _singular_part(spec, dim):
    """Bounded measurable drift from a config record."""
    kind = spec.get('kind')
    amp = float(spec.get('amplitude', 1.0))
    if kind == 'sign':
        return lambda x: -amp * np.sign(x)
    elif kind == 'indicator':
        radius = float(spec.get('radius', 1.0))
        return lambda x: amp * (np.linalg.norm(x, axis=1) <= radius)[
            :, None] * np.ones(dim)
    raise ValueError(f'Unknown bounded drift kind: {kind}')


def _ou_b1(theta):
    return lambda x: -theta * x


def _double_well_b1(x):
    return x - np.sum(x ** 2, axis=1, keepdims=True) * x


def _granular_b1(x):
    # -phi(|x|^2) x with phi(r) = 1 + r
    return -(1 + np.sum(x ** 2, axis=1, keepdims=True)) * x


def _partial_dissipative_b1(x):
    r = np.linalg.norm(x, axis=1, keepdims=True)
    return -x + 2 * (r <= 1) * x * (1 - r)


BUILTIN_MODELS = ('ou', 'double_well', 'granular_media', 'mean_field_ou',
                  'partial_dissipative')


def builtin_model(name, dim=1, sigma=np.sqrt(2), theta=1.0, beta=0.1,
                  eta=None, b0=None):
    """Build one of the named example models.

    ============================  ==========================================
    name                          drift
    ============================  ==========================================
    ``ou``                        :math:`-\\theta x`
    ``double_well``               :math:`x - |x|^2 x`
    ``granular_media``            :math:`-(1+|x|^2)x - \\beta x + \\eta\\,
                                  \\mathrm{mean}(\\mu)`
    ``mean_field_ou``             :math:`-\\theta x - \\beta x + \\eta\\,
                                  \\mathrm{mean}(\\mu)`
    ``partial_dissipative``       :math:`-x + 2\\,1_{|x|\\le 1}\\,x(1-|x|)`
    ============================  ==========================================

    All use :math:`\\sigma = \\mathrm{sigma}\\cdot I_d` as an isotropic split
    with :math:`\\alpha = \\mathrm{sigma}^2`.

    Parameters
    ----------
    name : str
        One of `BUILTIN_MODELS`.

    dim : int

    sigma : float
        Noise level.

    theta : float
        OU confinement.

    beta, eta : float
        Interaction coefficients; ``eta`` defaults to ``beta``.

    b0 : dict or `None`
        Optional bounded part, ``{'kind': 'sign' | 'indicator',
        'amplitude': a, 'radius': r}``.

    Raises
    ------
    ValueError
        Unknown name.

    """
    diffusion = DiffusionSpec.isotropic(sigma ** 2, dim)
    interaction = None
    if name == 'ou':
        b1 = _ou_b1(theta)
    elif name == 'double_well':
        b1 = _double_well_b1
    elif name == 'granular_media':
        b1 = _granular_b1
        interaction = LinearInteraction(beta, eta)
    elif name == 'mean_field_ou':
        b1 = _ou_b1(theta)
        interaction = LinearInteraction(beta, eta)
    elif name == 'partial_dissipative':
        b1 = _partial_dissipative_b1
    else:
        raise ValueError(f'Unknown model {name!r}; valid: '
                         f'{", ".join(BUILTIN_MODELS)}')

    params = {'sigma': float(sigma), 'theta': float(theta),
              'beta': float(beta), 'eta': None if eta is None else float(eta)}
    if b0 is not None:
        params['b0'] = dict(b0)
        b0 = _singular_part(b0, dim)
    return ModelSpec(name=name, dim=dim, b1=b1, diffusion=diffusion, b0=b0,
                     interaction=interaction, params=params)


def piecewise_polynomial_model(breakpoints, coefficients, sigma=np.sqrt(2),
                               beta=None, eta=None, name='piecewise'):
    """One-dimensional model with a piecewise-polynomial drift.

    Parameters
    ----------
    breakpoints : array-like
        Increasing, length ``m + 1``. Outside them the end pieces are
        extrapolated.

    coefficients : list of list
        ``m`` pieces; piece ``k`` lists coefficients in ascending powers
        of ``x - breakpoints[k]``.

    sigma : float

    beta, eta : float or `None`
        Optional linear interaction.

    """
    bp = np.asarray(breakpoints, dtype=float)
    if len(coefficients) != len(bp) - 1:
        raise ValueError('Need one coefficient list per interval')
    order = max(len(c) for c in coefficients)
    c = np.zeros((order, len(coefficients)))
    for k, coef in enumerate(coefficients):
        c[order - len(coef):, k] = coef[::-1]
    poly = PPoly(c, bp, extrapolate=True)

    def b1(x):
        return poly(x[:, 0])[:, None]

    interaction = None if beta is None else LinearInteraction(beta, eta)
    return ModelSpec(name=name, dim=1, b1=b1,
                     diffusion=DiffusionSpec.isotropic(sigma ** 2, 1),
                     interaction=interaction,
                     params={'breakpoints': bp.tolist(),
                             'coefficients': [list(map(float, cf))
                                              for cf in coefficients],
                             'sigma': float(sigma), 'beta': beta, 'eta': eta})


def model_from_dict(spec):
    """Build a model from its config record.

    Either ``{'name': <builtin>, 'dim': d, 'params': {...}}`` or
    ``{'name': 'piecewise', 'breakpoints': [...], 'coefficients': [...],
    'params': {...}}``.

    """
    params = dict(spec.get('params') or {})
    if spec['name'] == 'piecewise':
        return piecewise_polynomial_model(spec['breakpoints'],
                                          spec['coefficients'], **params)
    return builtin_model(spec['name'], dim=spec.get('dim', 1), **params)


# -------- #
# CHECKERS #
# -------- #

@dataclass
class CheckReport:
    """Outcome of a grid-based condition check.

    Attributes
    ----------
    name : str
        Which condition.

    passed : bool

    violations : list of dict
        ``{'point': ..., 'slack': ...}`` for every failing grid point.

    n_points : int
        Grid size.

    tolerance : float

    min_slack : float
        Smallest slack seen (negative means violated).

    details : dict
        Check-specific extras.

    """
    name: str
    passed: bool
    violations: list
    n_points: int
    tolerance: float
    min_slack: float
    details: dict = field(default_factory=dict)


def _report(name, points, slack, tol, **details):
    slack = np.asarray(slack, dtype=float)
    bad = np.flatnonzero(~(slack >= -tol))
    violations = [{'point': np.atleast_1d(points[i]).tolist(),
                   'slack': float(slack[i])} for i in bad]
    report = CheckReport(name=name, passed=not violations,
                         violations=violations, n_points=len(slack),
                         tolerance=tol,
                         min_slack=float(slack.min()) if slack.size else 0.0,
                         details=details)
    log.debug(f'{name}: {len(violations)} of {len(slack)} grid points '
              f'violate (min slack {report.min_slack:.6g})')
    return report


def check_B1(model, phi, c1, c2, grid, tol=1e-12):
    """Check the growth condition on :math:`b^{(1)}`:

    .. math::

        \\langle b^{(1)}(x), x\\rangle \\le c_1 - c_2\\,\\varphi(|x|^2),
        \\qquad |b^{(1)}(x)| \\le c_1\\,\\varphi(|x|^2).

    Parameters
    ----------
    model : `ModelSpec`

    phi : callable
        Increasing scalar function.

    c1, c2 : float

    grid : array-like
        Points, ``(n, d)``.

    tol : float
        Relative tolerance on the slack.

    Returns
    -------
    report : `CheckReport`
        Slack is the smaller of the two inequalities' margins.

    """
    pts, _ = _as_batch(grid, model.dim)
    b = np.asarray(model.b1(pts), dtype=float).reshape(pts.shape)
    ph = phi(np.sum(pts ** 2, axis=1))
    inner = np.sum(b * pts, axis=1)
    slack1 = c1 - c2 * ph - inner
    slack2 = c1 * ph - np.linalg.norm(b, axis=1)
    scale = 1 + np.abs(c1 * ph) + np.abs(inner)
    return _report('B1', pts, np.minimum(slack1, slack2) / scale, tol,
                   phi_c1=float(c1), c2=float(c2))


def check_lyapunov(model, lyap, grid, tol=1e-12):
    """Check the Lyapunov drift condition

    .. math::

        \\langle b^{(1)}, \\nabla V\\rangle(x) + \\varepsilon |b^{(1)}(x)|
        \\sup_{B(x,\\varepsilon)}\\{|\\nabla V| + |\\nabla^2 V|\\}
        \\le K - \\varepsilon\\,\\Phi(V(x)).

    The local supremum is the maximum over the center and the ``2d``
    points :math:`x \\pm \\varepsilon e_i`, times ``conf.stencil_padding``.
    :math:`|\\nabla^2 V|` is the spectral norm.

    Returns
    -------
    report : `CheckReport`

    """
    pts, _ = _as_batch(grid, model.dim)
    eps = lyap.eps
    d = model.dim
    b = np.asarray(model.b1(pts), dtype=float).reshape(pts.shape)

    offsets = np.vstack([np.zeros(d), eps * np.eye(d), -eps * np.eye(d)])
    local = np.zeros(len(pts))
    for off in offsets:
        y = pts + off
        size = (np.linalg.norm(lyap.grad_V(y), axis=1) +
                np.linalg.norm(np.asarray(lyap.hess_V(y)), ord=2,
                               axis=(1, 2)))
        local = np.maximum(local, size)
    local *= conf.stencil_padding

    lhs = (np.sum(b * lyap.grad_V(pts), axis=1) +
           eps * np.linalg.norm(b, axis=1) * local)
    rhs = lyap.K - eps * lyap.Phi(lyap.V(pts))
    return _report('lyapunov', pts, rhs - lhs, tol, eps=eps, K=lyap.K,
                   stencil_points=len(offsets))


def check_dissipativity(model, K1, K2, pairs, tol=1e-10):
    """Check the monotonicity condition on sampled pairs:

    .. math::

        2\\langle b(x,\\mu) - b(y,\\nu), x - y\\rangle
        + \\|\\sigma(x) - \\sigma(y)\\|_{HS}^2
        \\le K_1|x-y|^2 + K_2 d(\\mu,\\nu)^2.

    The measure distance ``d`` is the interaction's
    `InteractionKernel.measure_distance`, or :math:`W_2` for models
    without one.

    Parameters
    ----------
    model : `ModelSpec`

    K1, K2 : float

    pairs : list of tuple
        ``(x, mu, y, nu)`` with measures as
        `~mvsde_tools.metrics.EmpiricalMeasure` (or `None` for models
        without interaction).

    Returns
    -------
    report : `CheckReport`

    """
    slack = []
    points = []
    for x, mu, y, nu in pairs:
        xp, _ = _as_batch(x, model.dim)
        yp, _ = _as_batch(y, model.dim)
        bx = drift(model, xp, mu)
        by = drift(model, yp, nu)
        sx = model.diffusion.direct_matrix(xp)
        sy = model.diffusion.direct_matrix(yp)
        lhs = (2 * np.sum((bx - by) * (xp - yp)) +
               np.sum((np.asarray(sx) - np.asarray(sy)) ** 2))
        if mu is None or nu is None:
            dist = 0.0
        elif model.interaction is not None:
            dist = model.interaction.measure_distance(mu, nu)
        else:
            dist = distance('w2', mu, nu)
        rhs = K1 * np.sum((xp - yp) ** 2) + K2 * dist ** 2
        slack.append((rhs - lhs) / (1 + abs(rhs) + abs(lhs)))
        points.append(np.concatenate([xp[0], yp[0]]))
    return _report('dissipativity', points, slack, tol, K1=float(K1),
                   K2=float(K2))


def check_psi_class(profile, grid, tol=1e-10):
    """Whether ``profile`` belongs to :math:`\\Psi_\\kappa` on ``grid``.

    Conditions: :math:`\\psi(0)=0`; :math:`\\psi' > 0`;
    :math:`\\psi' \\le \\|\\psi'\\|_\\infty < \\infty`; and
    :math:`r\\psi'(r) + r^2(\\psi'')^+(r) \\le \\kappa\\psi(r)`.

    Parameters
    ----------
    profile : `PsiProfile`

    grid : array-like
        Positive radii. Keep them where :math:`\\psi'` does not underflow.

    tol : float

    Returns
    -------
    ok : bool

    """
    r = np.asarray(grid, dtype=float).reshape(-1)
    if np.any(r <= 0):
        raise ValueError('grid must be positive')
    if not (profile.kappa > 0 and np.isfinite(profile.sup_psi_prime)):
        return False
    if abs(float(profile.psi(np.zeros(1))[0])) > tol:
        return False
    dpsi = profile.dpsi(r)
    if not np.all(dpsi > 0):
        return False
    if np.any(dpsi > profile.sup_psi_prime + tol):
        return False
    psi = profile.psi(r)
    lhs = r * dpsi + r ** 2 * np.maximum(profile.d2psi(r), 0)
    rhs = profile.kappa * psi
    return bool(np.all(lhs <= rhs + tol * (1 + np.abs(rhs))))


def check_growth_conditions(phi, profile, r_grid):
    """Estimate the growth exponents attached to the condition on
    :math:`b^{(1)}`.

    Reports :math:`\\alpha = \\min \\log\\varphi(r)/\\log r` over the grid
    (needs > 1/2), :math:`\\min \\psi'\\varphi/\\psi` (needs > 0), and
    :math:`|r\\psi''/\\psi|` at the largest radius (needs to be small).

    Parameters
    ----------
    phi : callable

    profile : `PsiProfile`

    r_grid : array-like
        Large radii, all above 1, increasing.

    Returns
    -------
    report : `CheckReport`
        Slack is the margin of the first condition per radius.

    """
    r = np.asarray(r_grid, dtype=float).reshape(-1)
    if np.any(r <= 1):
        raise ValueError('r_grid must lie above 1')
    alpha = np.log(phi(r)) / np.log(r)
    psi = profile.psi(r)
    lower = profile.dpsi(r) * phi(r) / psi
    tail = abs(float(r[-1] * profile.d2psi(r[-1:])[0] / psi[-1]))
    report = _report('growth', r[:, None], alpha - 0.5, 0.0,
                     alpha=float(alpha.min()),
                     psi_lower=float(lower.min()), psi_tail=tail)
    report.passed = report.passed and lower.min() > 0
    return report


def check_compact_function(lyap, dim, radii=None, n_rays=16, seed=0):
    """Check that :math:`V \\to \\infty` along sampled rays.

    ``V`` must increase strictly along every ray over the given radii.

    Returns
    -------
    report : `CheckReport`
        Slack per ray is the smallest increment of ``V``.

    """
    if radii is None:
        radii = np.logspace(0, 4, 20)
    radii = np.asarray(radii, dtype=float)
    dirs = NoiseStream(seed).normals(0, 0, (n_rays, dim), purpose=REFERENCE)
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    incs = []
    for u in dirs:
        vals = lyap.V(radii[:, None] * u)
        incs.append(np.diff(vals).min())
    incs = np.asarray(incs)
    report = _report('compact', dirs, incs, 0.0, radii=radii.tolist())
    report.passed = bool(np.all(incs > 0))
    return report


def check_interaction_bound(model, grid):
    """Compare sampled :math:`|W(x, z)|` on ``grid x grid`` to the bound.

    Warns with `~astropy.utils.exceptions.AstropyUserWarning` when the
    kernel exceeds its declared bound.

    Returns
    -------
    report : `CheckReport`

    """
    kernel = model.interaction
    if kernel is None or kernel.bound is None:
        raise ValueError('Model has no bounded interaction to check')
    pts, _ = _as_batch(grid, model.dim)
    vals = np.linalg.norm(kernel(pts[:, None, :], pts[None, :, :]), axis=-1)
    worst = vals.max(axis=1)
    report = _report('interaction_bound', pts, kernel.bound - worst, 0.0,
                     bound=kernel.bound, sampled_max=float(worst.max()))
    if not report.passed:
        warnings.warn(f'Sampled |W| reaches {worst.max():.6g}, above the '
                      f'declared bound {kernel.bound:.6g}', AstropyUserWarning)
    return report


def check_decomposition(diffusion, grid, atol=1e-10):
    """Whether :math:`\\alpha I + \\hat\\sigma\\hat\\sigma^*` reproduces
    :math:`\\sigma\\sigma^*` on ``grid``.

    Returns `True` when there is nothing to compare (only one form
    given).

    """
    if not diffusion.has_split or diffusion._matrix is None:
        return True
    pts, _ = _as_batch(grid, diffusion.dim)
    direct = np.asarray(diffusion.direct_matrix(pts))
    split = np.asarray(diffusion.matrix(pts))
    a = np.einsum('nij,nkj->nik', direct, direct)
    b = np.einsum('nij,nkj->nik', split, split)
    return bool(np.allclose(a, b, rtol=0, atol=atol))
