"""Rate constants, the H-transform, rate fits and the invariant-measure
fixed point.

The closed-form calculators are pure functions. `fit_rate` estimates
``(c, lambda)`` in ``value(t) ~ c exp(-lambda t)`` from measured distance
curves, and `fixed_point_invariant` iterates ``gamma -> mu_gamma``,
the invariant law of the dynamics with the measure argument frozen.

"""
# STDLIB
import math
from dataclasses import dataclass, field

# THIRD-PARTY
import numpy as np
from astropy import log
from scipy import integrate, optimize, stats

# LOCAL
from .conf import conf
from .metrics import EmpiricalMeasure, as_measure, distance
from .particle import FromPoints, init_ensemble, simulate
from .utils.exceptions import DivergentIntegralError, RateFitError

__all__ = ['RateCertificate', 'HTransform', 'build_h_transform', 'ex0_bound',
           'harris_rate', 'kappa1', 'Lemma33Constants', 'lemma33_constants',
           'G2Result', 'corollary44_k', 'fit_rate', 'dissipative_rate',
           'FixedPointResult', 'fixed_point_invariant']

RATE_SOURCES = ('fitted', 'harris', 'lemma33', 'corollary44', 'theorem41')

# Tolerances of the scalar solvers.
_QUAD_EPSREL = 1e-11
_QUAD_EPSABS = 1e-15
_ROOT_XTOL = 1e-13


@dataclass
class RateCertificate:
    """Constants ``(c, lam)`` of a bound ``c exp(-lam t)``.

    Attributes
    ----------
    c : float
        Prefactor.

    lam : float
        Rate.

    source : str
        One of ``fitted``, ``harris``, ``lemma33``, ``corollary44``,
        ``theorem41``.

    r_squared : float or `None`
        Fit quality (fitted certificates only).

    window : tuple or `None`
        ``(t_first, t_last)`` of the points used by the fit.

    n_points : int or `None`

    noise_floor : float

    reliable : bool

    extras : dict

    """
    c: float
    lam: float
    source: str
    r_squared: float = None
    window: tuple = None
    n_points: int = None
    noise_floor: float = 0.0
    reliable: bool = True
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in RATE_SOURCES:
            raise ValueError(f'Unknown certificate source {self.source!r}')

    def to_row(self):
        """Flat dict for CSV output."""
        window = self.window or (np.nan, np.nan)
        return {'source': self.source, 'c': float(self.c),
                'lam': float(self.lam),
                'r_squared': (np.nan if self.r_squared is None
                              else float(self.r_squared)),
                't_first': float(window[0]), 't_last': float(window[1]),
                'n_points': -1 if self.n_points is None else self.n_points,
                'noise_floor': float(self.noise_floor),
                'reliable': int(self.reliable)}


# ----------- #
# H-TRANSFORM #
# ----------- #

class HTransform:
    """:math:`H(r) = \\int_0^r ds/\\Phi(s)` and its inverse.

    ``H`` is tabulated on ``[0, r_max]`` by adaptive quadrature per table
    interval; values between nodes add one more quadrature from the node
    below. The inverse solves ``H(r) = s`` by Brent's method inside the
    bracketing table interval, with :math:`H^{-1}(s) = 0` for ``s <= 0``.

    Parameters
    ----------
    Phi : callable
        Increasing, at least 1.

    r_max : float

    table_size : int

    Raises
    ------
    ValueError
        ``Phi < 1`` somewhere on the table.

    """
    def __init__(self, Phi, r_max=100.0, table_size=1001):
        if not r_max > 0 or table_size < 2:
            raise ValueError('Need r_max > 0 and table_size >= 2')
        self.Phi = Phi
        self.r_max = float(r_max)
        self.r_table = np.linspace(0.0, self.r_max, int(table_size))

        phi_vals = np.broadcast_to(np.asarray(Phi(self.r_table), dtype=float),
                                   self.r_table.shape)
        if np.any(phi_vals < 1):
            bad = self.r_table[np.flatnonzero(phi_vals < 1)[0]]
            raise ValueError(f'Phi must be >= 1, got Phi({bad}) < 1')

        pieces = [self._quad(a, b) for a, b in zip(self.r_table[:-1],
                                                   self.r_table[1:])]
        self.h_table = np.concatenate([[0.0], np.cumsum(pieces)])
        self.H_infinity = self._tail()

    def _integrand(self, s):
        return 1.0 / float(self.Phi(s))

    def _quad(self, a, b):
        return integrate.quad(self._integrand, a, b, epsabs=_QUAD_EPSABS,
                              epsrel=_QUAD_EPSREL, limit=200)[0]

    def _tail(self):
        """:math:`H(\\infty)`, finite when Phi grows faster than linearly."""
        R = self.r_max
        growth = math.log(float(self.Phi(4 * R)) /
                          float(self.Phi(2 * R))) / math.log(2)
        if growth <= 1.05:
            return np.inf
        tail = integrate.quad(self._integrand, R, np.inf, epsabs=_QUAD_EPSABS,
                              epsrel=_QUAD_EPSREL, limit=200)[0]
        return float(self.h_table[-1] + tail)

    def _H_scalar(self, r):
        if r <= 0:
            return 0.0
        if r >= self.r_max:
            return float(self.h_table[-1] + self._quad(self.r_max, r))
        i = int(np.searchsorted(self.r_table, r, side='right')) - 1
        return float(self.h_table[i] + self._quad(self.r_table[i], r))

    def H(self, r):
        """Evaluate ``H`` (vectorized)."""
        r = np.asarray(r, dtype=float)
        out = np.vectorize(self._H_scalar, otypes=[float])(r)
        return float(out) if out.ndim == 0 else out

    def _inv_scalar(self, s):
        if s <= 0:
            return 0.0
        if s >= self.H_infinity:
            return np.inf
        if s <= self.h_table[-1]:
            i = int(np.searchsorted(self.h_table, s, side='left'))
            if self.h_table[i] == s:
                return float(self.r_table[i])
            lo, hi = self.r_table[i - 1], self.r_table[i]
        else:
            lo, hi = self.r_max, 2 * self.r_max
            while self._H_scalar(hi) < s:
                lo, hi = hi, 2 * hi
        return optimize.brentq(lambda r: self._H_scalar(r) - s, lo, hi,
                               xtol=_ROOT_XTOL, rtol=4 * np.finfo(float).eps)

    def H_inv(self, s):
        """Evaluate :math:`H^{-1}` (vectorized), 0 for ``s <= 0``."""
        s = np.asarray(s, dtype=float)
        out = np.vectorize(self._inv_scalar, otypes=[float])(s)
        return float(out) if out.ndim == 0 else out


def build_h_transform(Phi, r_max=100.0, table_size=1001):
    """Tabulate the H-transform of ``Phi``.

    Examples
    --------
    >>> from mvsde_tools.rates import build_h_transform
    >>> ht = build_h_transform(lambda r: (1 + r) ** 2)
    >>> round(ht.H_infinity, 8)
    1.0

    """
    ht = HTransform(Phi, r_max=r_max, table_size=table_size)
    log.debug(f'H-transform on [0, {r_max}] with {table_size} nodes, '
              f'H(inf)={ht.H_infinity}')
    return ht


def ex0_bound(ht, V_x, k, lam, t):
    """Bound :math:`k\\{1 + H^{-1}(H(V(x)) - t/k)\\}e^{-\\lambda t}`.

    Returns ``k (1 + V_x)`` exactly at ``t = 0``.

    """
    if t < 0:
        raise ValueError(f't must be non-negative, got {t}')
    if t == 0:
        return k * (1 + V_x)
    return k * (1 + ht.H_inv(ht.H(V_x) - t / k)) * math.exp(-lam * t)


# ------------------ #
# CLOSED-FORM RATES  #
# ------------------ #

def harris_rate(alpha, beta, t0, t1):
    """Rate from the one-step Harris contraction.

    .. math::

        \\lambda = \\frac{1}{t_0+t_1}\\log\\frac{2}{2-\\alpha^2(2-\\beta)},
        \\qquad \\delta = \\frac{2-\\alpha^2(2-\\beta)}{2}.

    Returns
    -------
    lam, delta : float

    Raises
    ------
    ValueError
        ``alpha`` not in (0, 1], ``beta`` not in [0, 2), or non-positive
        times.

    """
    if not 0 < alpha <= 1:
        raise ValueError(f'alpha must be in (0, 1], got {alpha}')
    if not 0 <= beta < 2:
        raise ValueError(f'beta must be in [0, 2), got {beta}')
    if not (t0 > 0 and t1 > 0):
        raise ValueError('t0 and t1 must be positive')
    delta = (2 - alpha ** 2 * (2 - beta)) / 2
    return math.log(1 / delta) / (t0 + t1), delta


def _kappa1_objective(c, lam):
    return lambda t: (1 - c * math.exp(-lam * t)) / math.sqrt(t)


def kappa1(c, lam):
    """:math:`\\kappa_1 = \\sup_{t > \\log(c)/\\lambda}
    (1 - c e^{-\\lambda t})/\\sqrt{t}`.

    The maximizer is bracketed on a doubling grid, then refined by
    bounded scalar minimization.

    Returns
    -------
    kappa, t_star : float

    """
    if not (c > 1 and lam > 0):
        raise ValueError('Need c > 1 and lam > 0')
    g = _kappa1_objective(c, lam)
    t0 = math.log(c) / lam
    span = 1.0 / lam
    grid = [t0 + span * 2.0 ** j for j in range(-20, 30)]
    vals = [g(t) for t in grid]
    i = int(np.argmax(vals))
    lo = grid[i - 1] if i > 0 else t0
    hi = grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda t: -g(t), bounds=(lo, hi),
                                   method='bounded',
                                   options={'xatol': 1e-12 * hi})
    return -float(res.fun), float(res.x)


@dataclass
class Lemma33Constants:
    """Constants of the perturbed contraction.

    ``valid`` is false when ``delta_k >= 1``, that is ``k >= k_q``.
    """
    t_hat: float
    delta_k: float
    lambda_prime: float
    k_q: float
    valid: bool

    def certificate(self, c):
        return RateCertificate(c=c, lam=self.lambda_prime, source='lemma33',
                               reliable=self.valid,
                               extras={'delta_k': self.delta_k,
                                       'k_q': self.k_q})


def _delta_k(c, lam, q, k, t_hat):
    with np.errstate(over='ignore'):
        growth = 2.0 ** (q - 1) * k ** q
        return float(0.5 + 4.0 ** (q - 1) * (c * k) ** q *
                     np.exp(growth * t_hat) / (q * lam + growth))


def lemma33_constants(c, lam, q, k):
    """Evaluate ``t_hat``, ``delta_k``, ``lambda'`` and ``k_q``.

    .. math::

        \\hat t = \\log(2c)/\\lambda, \\quad
        \\delta_k = \\tfrac12 + \\frac{4^{q-1}(ck)^q
        e^{2^{q-1}k^q\\hat t}}{q\\lambda + 2^{q-1}k^q}, \\quad
        \\lambda' = -\\frac{\\lambda}{\\log 2c}\\log\\delta_k.

    ``k_q`` is the root of ``delta_k = 1``.

    Returns
    -------
    consts : `Lemma33Constants`

    """
    if not (c > 0 and lam > 0 and k > 0):
        raise ValueError('c, lam and k must be positive')
    if q < 2:
        raise ValueError(f'q must be at least 2, got {q}')
    if 2 * c <= 1:
        raise ValueError('Need 2c > 1 for a positive t_hat')
    t_hat = math.log(2 * c) / lam
    delta = _delta_k(c, lam, q, k, t_hat)
    lam_prime = -lam / math.log(2 * c) * math.log(delta)

    def excess(kk):
        # log(delta_k - 1/2) - log(1/2), increasing in k and overflow-free
        growth = 2.0 ** (q - 1) * kk ** q
        return ((q - 1) * math.log(4) + q * math.log(c * kk) +
                growth * t_hat - math.log(q * lam + growth) + math.log(2))

    lo, hi = 1.0, 1.0
    while excess(lo) >= 0:
        lo /= 2
    while excess(hi) <= 0:
        hi *= 2
    k_q = optimize.brentq(excess, lo, hi, xtol=_ROOT_XTOL * lo)
    valid = delta < 1
    if not valid:
        log.warning(f'delta_k={delta:.6g} >= 1 for k={k} (k_q={k_q:.6g}); '
                    'no contraction')
    return Lemma33Constants(t_hat=t_hat, delta_k=delta,
                            lambda_prime=lam_prime, k_q=k_q, valid=valid)


@dataclass
class G2Result:
    """Rate of the reflection-coupling bound.

    ``gamma`` evaluates :math:`\\gamma(r)`; ``integral`` is the outer
    integral and ``beta_threshold`` the interaction size below which
    ``k > 0``.
    """
    k: float
    gamma: object
    integral: float
    beta_threshold: float

    def certificate(self):
        return RateCertificate(c=1.0, lam=self.k, source='corollary44',
                               reliable=self.k > 0,
                               extras={'integral': self.integral,
                                       'beta_threshold': self.beta_threshold})


def corollary44_k(alpha, theta0, theta1, theta2, beta, zeta):
    """Contraction rate for the reflection coupling.

    With :math:`\\gamma(r) = (\\theta_1+\\theta_2)\\{(\\zeta/r)\\wedge r\\}
    - (\\theta_2-\\theta_0)r` and
    :math:`I = \\int_0^\\infty t\\,e^{\\frac{1}{2\\alpha}\\int_0^t\\gamma}dt`,

    .. math::

        k = \\frac{2\\alpha}{I}
            - \\frac{\\beta(\\theta_2-\\theta_0)}{2\\alpha}I.

    The inner integral is in closed form, piecewise at
    :math:`\\sqrt{\\zeta}`; the outer one is adaptive quadrature truncated
    where the integrand falls below 1e-16.

    Returns
    -------
    res : `G2Result`

    Raises
    ------
    mvsde_tools.utils.exceptions.DivergentIntegralError
        ``theta2 <= theta0``.

    Examples
    --------
    >>> from mvsde_tools.rates import corollary44_k
    >>> round(corollary44_k(1.0, 0.0, 0.0, 2.0, 0.0, 0.0).k, 8)
    2.0

    """
    if not alpha > 0:
        raise ValueError(f'alpha must be positive, got {alpha}')
    if min(beta, zeta) < 0:
        raise ValueError('beta and zeta must be non-negative')
    a = theta2 - theta0
    if not a > 0:
        raise DivergentIntegralError(
            f'theta2={theta2} <= theta0={theta0}: integral diverges')
    s = theta1 + theta2
    root = math.sqrt(zeta)

    def gamma(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide='ignore'):
            return s * np.minimum(zeta / r, r) - a * r

    def inner(t):
        if t <= root:
            m = t * t / 2
        elif zeta == 0:
            m = 0.0
        else:
            m = zeta / 2 + zeta * math.log(t / root)
        return s * m - a * t * t / 2

    def integrand(t):
        return t * math.exp(inner(t) / (2 * alpha))

    T = max(1.0, 2 * root, math.sqrt(2 * alpha / a))
    while integrand(T) >= 1e-16 or integrand(2 * T) >= integrand(T):
        T *= 2
    breaks = [p for p in (root,) if 0 < p < T]
    integral = 0.0
    for lo, hi in zip([0.0] + breaks, breaks + [T]):
        integral += integrate.quad(integrand, lo, hi, epsabs=_QUAD_EPSABS,
                                   epsrel=_QUAD_EPSREL, limit=200)[0]

    k = 2 * alpha / integral - beta * a / (2 * alpha) * integral
    threshold = 4 * alpha ** 2 / (a * integral ** 2)
    log.debug(f'G2: integral={integral:.12g}, k={k:.12g}, '
              f'beta threshold={threshold:.12g}')
    return G2Result(k=k, gamma=gamma, integral=integral,
                    beta_threshold=threshold)


def dissipative_rate(K1, K2):
    """W2 contraction rate :math:`-(K_1+K_2)/2` from the monotonicity
    condition; reliable only when positive."""
    lam = -(K1 + K2) / 2
    return RateCertificate(c=1.0, lam=lam, source='theorem41',
                           reliable=lam > 0)


# -------- #
# FITTING  #
# -------- #

def fit_rate(times, values, noise_floor=0.0, burn_in=None):
    """Fit ``values ~ c exp(-lam t)`` by least squares on ``log(values)``.

    Parameters
    ----------
    times : array-like
        Increasing.

    values : array-like
        Distances; points at or below ``noise_floor`` are dropped.

    noise_floor : float
        Same-law distance level (see `~mvsde_tools.metrics.noise_floor`).

    burn_in : float or `None`
        Drop points before ``times[0] + burn_in``. Default is
        ``conf.burn_in_fraction`` of the horizon.

    Returns
    -------
    cert : `RateCertificate`
        Unreliable when :math:`R^2` is below ``conf.min_r_squared``.

    Raises
    ------
    mvsde_tools.utils.exceptions.RateFitError
        Fewer than 4 usable points.

    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError('times and values must be 1D of equal length')
    if np.any(np.diff(t) <= 0):
        raise ValueError('times must be increasing')
    if burn_in is None:
        burn_in = conf.burn_in_fraction * (t[-1] - t[0]) if t.size else 0.0

    keep = (t >= t[0] + burn_in) & np.isfinite(v) & (v > noise_floor)
    log.info(f'Rate fit: burn-in {burn_in:.6g}, noise floor '
             f'{noise_floor:.6g}, {keep.sum()} of {t.size} points kept')
    if keep.sum() < 4:
        raise RateFitError(f'Only {keep.sum()} points above the noise floor '
                           'after burn-in; need 4')

    res = stats.linregress(t[keep], np.log(v[keep]))
    r2 = float(res.rvalue ** 2)
    reliable = r2 >= conf.min_r_squared
    if not reliable:
        log.warning(f'Rate fit R^2={r2:.4f} below {conf.min_r_squared}')
    return RateCertificate(c=float(np.exp(res.intercept)),
                           lam=-float(res.slope), source='fitted',
                           r_squared=r2,
                           window=(float(t[keep][0]), float(t[keep][-1])),
                           n_points=int(keep.sum()),
                           noise_floor=float(noise_floor), reliable=reliable)


# ----------- #
# FIXED POINT #
# ----------- #

@dataclass
class FixedPointResult:
    """Outcome of `fixed_point_invariant`.

    ``history`` holds the W1 gap between successive iterates.
    """
    measure: EmpiricalMeasure
    history: np.ndarray
    converged: bool
    iterations: int
    means: np.ndarray = None


def fixed_point_invariant(model_family, domain, initial, n, dt, T_stat,
                          tol=0.05, max_iters=20, seed=0, n_workers=1):
    """Iterate :math:`\\gamma \\mapsto \\mu_\\gamma`.

    Each iteration freezes the measure argument of the drift at the
    current iterate, simulates ``n`` particles started from it to
    ``T_stat`` and takes the terminal empirical measure as the next
    iterate. Every iteration uses a fresh seed.

    Parameters
    ----------
    model_family : `~mvsde_tools.model.ModelSpec` or callable
        A model (frozen with its ``freeze`` method) or ``gamma -> model``.

    domain : `~mvsde_tools.geometry.DomainGeometry`

    initial : `~mvsde_tools.metrics.EmpiricalMeasure`, ensemble or array

    n : int
        Particles per iteration.

    dt, T_stat : float

    tol : float
        Stop once the W1 gap is below this.

    max_iters : int

    seed : int
        Iteration ``i`` uses ``seed + i``.

    Returns
    -------
    result : `FixedPointResult`
        ``converged`` is false when ``max_iters`` ran out.

    """
    family = getattr(model_family, 'freeze', model_family)
    gamma = as_measure(initial)
    history = []
    means = [gamma.mean()]
    converged = False
    for i in range(max_iters):
        frozen = family(gamma)
        ens = init_ensemble(n, FromPoints(gamma.points), domain, seed + i)
        traj = simulate(ens, frozen, domain, dt, T_stat, n_workers=n_workers)
        new = traj.final.measure()
        gap = distance('w1', gamma, new)
        history.append(gap)
        means.append(new.mean())
        log.info(f'Fixed point iteration {i + 1}: W1 gap {gap:.6g}')
        gamma = new
        if gap < tol:
            converged = True
            break

    if not converged:
        log.warning(f'Fixed point not reached in {max_iters} iterations '
                    f'(last gap {history[-1]:.6g})')
    return FixedPointResult(measure=gamma, history=np.asarray(history),
                            converged=converged, iterations=len(history),
                            means=np.asarray(means))
