"""Distances between empirical measures.

Transport distances (:math:`W_p`, :math:`W_\\psi`) are computed exactly
by sorting in 1D and by an assignment solver otherwise; large samples
fall back to debiased Sinkhorn. Weighted variation and relative entropy
are evaluated on a shared histogram of both samples.

"""
# STDLIB
from dataclasses import dataclass

# THIRD-PARTY
import numpy as np
from astropy import log
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.special import logsumexp, rel_entr

# LOCAL
from .conf import conf
from .utils.exceptions import DimensionError, TransportSizeError

__all__ = ['EmpiricalMeasure', 'HistogramPair', 'SinkhornResult',
           'as_measure', 'w1_1d', 'wp_1d', 'wp_exact', 'wp_sinkhorn',
           'w_psi', 'histogram_pair', 'weighted_variation',
           'relative_entropy', 'entropy_sensitivity', 'talagrand_ratio',
           'noise_floor', 'distance', 'bin_count', 'METRICS',
           'BINNED_METRICS']


class EmpiricalMeasure:
    """Weighted point cloud.

    Parameters
    ----------
    points : array-like
        Shape ``(n, d)``; a 1D array is read as ``n`` scalar points.

    weights : array-like or `None`
        Non-negative weights, normalized to sum to 1. Uniform if `None`.

    Raises
    ------
    ValueError
        Empty, non-finite, or badly weighted input.

    """
    def __init__(self, points, weights=None):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or len(points) == 0:
            raise ValueError('points must be a non-empty (n, d) array')
        if not np.all(np.isfinite(points)):
            raise ValueError('points must be finite')
        self.points = points

        if weights is None:
            self.weights = np.full(len(points), 1.0 / len(points))
            self.uniform = True
        else:
            weights = np.asarray(weights, dtype=float).reshape(-1)
            if weights.size != len(points):
                raise ValueError('One weight per point is required')
            total = weights.sum()
            if np.any(weights < 0) or not total > 0:
                raise ValueError('weights must be non-negative with '
                                 'positive sum')
            self.weights = weights / total
            self.uniform = bool(np.all(weights == weights[0]))

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return f'<EmpiricalMeasure n={self.n} dim={self.dim}>'

    @property
    def n(self):
        """Number of atoms."""
        return len(self.points)

    @property
    def dim(self):
        """Dimension of the points."""
        return self.points.shape[1]

    def mean(self):
        """Barycenter."""
        return self.weights @ self.points

    def variance(self):
        """Per-coordinate variance."""
        return self.weights @ (self.points - self.mean()) ** 2


def as_measure(obj):
    """Coerce an ensemble, measure, or point array to `EmpiricalMeasure`."""
    if isinstance(obj, EmpiricalMeasure):
        return obj
    if hasattr(obj, 'positions'):
        return EmpiricalMeasure(obj.positions)
    return EmpiricalMeasure(obj)


def _pair(mu, nu):
    mu = as_measure(mu)
    nu = as_measure(nu)
    if mu.dim != nu.dim:
        raise DimensionError(
            f'Measures live in different dimensions ({mu.dim}, {nu.dim})')
    return mu, nu


def _check_exact(mu, nu):
    if not (mu.uniform and nu.uniform) or mu.n != nu.n:
        raise ValueError('Exact transport needs equal counts with uniform '
                         'weights')
    if mu.n > conf.exact_transport_max_n:
        raise TransportSizeError(
            f'N={mu.n} exceeds the exact solver limit '
            f'({conf.exact_transport_max_n}); use wp_sinkhorn instead')


# ------------------- #
# TRANSPORT DISTANCES #
# ------------------- #

def w1_1d(mu, nu):
    """Exact :math:`W_1` on the line.

    Equal-size uniform samples are matched in sorted order; general
    weights go through the quantile coupling (`wp_1d`).

    Raises
    ------
    mvsde_tools.utils.exceptions.DimensionError
        Measures are not one-dimensional.

    Examples
    --------
    >>> from mvsde_tools.metrics import w1_1d
    >>> float(w1_1d([0., 1.], [2., 5.]))
    3.0

    """
    mu, nu = _pair(mu, nu)
    if mu.dim != 1:
        raise DimensionError('w1_1d needs one-dimensional measures')
    if mu.uniform and nu.uniform and mu.n == nu.n:
        return float(np.mean(np.abs(np.sort(mu.points[:, 0]) -
                                    np.sort(nu.points[:, 0]))))
    return wp_1d(mu, nu, p=1)


def wp_1d(mu, nu, p=1):
    """Exact :math:`W_p` on the line for arbitrary weights.

    Integrates :math:`|F^{-1}(s) - G^{-1}(s)|^p` over the merged
    breakpoints of both quantile functions.

    """
    mu, nu = _pair(mu, nu)
    if mu.dim != 1:
        raise DimensionError('wp_1d needs one-dimensional measures')
    if p < 1:
        raise ValueError(f'p must be >= 1, got {p}')

    qfuncs = []
    for m in (mu, nu):
        order = np.argsort(m.points[:, 0], kind='stable')
        cum = np.cumsum(m.weights[order])
        cum[-1] = 1.0
        qfuncs.append((m.points[order, 0], cum))

    breaks = np.unique(np.concatenate([qfuncs[0][1], qfuncs[1][1]]))
    left = np.concatenate([[0.0], breaks[:-1]])
    mid = 0.5 * (left + breaks)
    q = [x[np.minimum(np.searchsorted(cum, mid), len(x) - 1)]
         for x, cum in qfuncs]
    cost = np.sum((breaks - left) * np.abs(q[0] - q[1]) ** p)
    return float(cost ** (1.0 / p))


def wp_exact(mu, nu, p=2):
    """Exact :math:`W_p` between equal-size uniform samples.

    Solves the assignment problem on the cost matrix
    :math:`|x_i - y_j|^p` with `scipy.optimize.linear_sum_assignment`.

    Parameters
    ----------
    mu, nu : `EmpiricalMeasure` or array-like

    p : float
        Order, at least 1.

    Returns
    -------
    w : float

    Raises
    ------
    mvsde_tools.utils.exceptions.TransportSizeError
        More points than ``conf.exact_transport_max_n``.

    """
    mu, nu = _pair(mu, nu)
    if p < 1:
        raise ValueError(f'p must be >= 1, got {p}')
    _check_exact(mu, nu)
    cost = cdist(mu.points, nu.points) ** p
    row, col = linear_sum_assignment(cost)
    return float(cost[row, col].mean() ** (1.0 / p))


def w_psi(mu, nu, profile):
    """Transportation cost :math:`W_\\psi` between equal-size samples.

    Concave costs have no monotone shortcut, so this is always an exact
    assignment on :math:`\\psi(|x_i - y_j|)`.

    Parameters
    ----------
    mu, nu : `EmpiricalMeasure` or array-like

    profile : `~mvsde_tools.model.PsiProfile`
        Anything with a vectorized ``psi`` method.

    """
    mu, nu = _pair(mu, nu)
    _check_exact(mu, nu)
    cost = profile.psi(cdist(mu.points, nu.points))
    row, col = linear_sum_assignment(cost)
    return float(cost[row, col].mean())


@dataclass
class SinkhornResult:
    """Outcome of `wp_sinkhorn`."""
    value: float
    converged: bool
    n_iter: int
    reg: float

    def __float__(self):
        return self.value


def _sinkhorn_log(a, b, C, reg, f, g, max_iter, tol):
    """Log-domain Sinkhorn iterations with warm-started potentials."""
    log_a = np.log(a)
    log_b = np.log(b)
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        f = -reg * logsumexp((g[None, :] - C) / reg + log_b[None, :],
                             axis=1)
        g = -reg * logsumexp((f[:, None] - C) / reg + log_a[:, None],
                             axis=0)
        if it % 10 == 0 or it == max_iter:
            # Column marginals are exact after the g update.
            log_plan = (f[:, None] + g[None, :] - C) / reg + \
                log_a[:, None] + log_b[None, :]
            err = np.abs(np.exp(logsumexp(log_plan, axis=1)) - a).sum()
            if err < tol:
                break
    return f, g, it, err < tol


def _entropic_cost(a, b, C, reg, max_iter, tol):
    """Entropic transport cost, annealing the regularization down to reg."""
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    n_iter = 0
    eps = max(float(C.max()), reg)
    while eps > reg:
        f, g, it, _ = _sinkhorn_log(a, b, C, eps, f, g, max_iter, 10 * tol)
        n_iter += it
        eps = max(eps / 2, reg)
    f, g, it, converged = _sinkhorn_log(a, b, C, reg, f, g, max_iter, tol)
    return float(a @ f + b @ g), converged, n_iter + it


def wp_sinkhorn(mu, nu, p=2, reg=None, iters=10000, tol=None):
    """Debiased Sinkhorn approximation of :math:`W_p`.

    Returns the ``1/p`` power of the Sinkhorn divergence
    :math:`S = OT_\\varepsilon(\\mu,\\nu) - \\frac12 OT_\\varepsilon(\\mu,\\mu)
    - \\frac12 OT_\\varepsilon(\\nu,\\nu)`, clipped at zero. As ``reg``
    shrinks, the value approaches the exact :math:`W_p`; as it grows, it
    approaches the distance between barycenters (for ``p=2``).

    Parameters
    ----------
    mu, nu : `EmpiricalMeasure` or array-like

    p : float
        Cost exponent.

    reg : float or `None`
        Entropic regularization. Default is ``conf.sinkhorn_reg_factor``
        times the median pairwise cost.

    iters : int
        Iteration cap per annealing stage.

    tol : float or `None`
        Marginal violation at which to stop. Default is
        ``conf.sinkhorn_tol``.

    Returns
    -------
    result : `SinkhornResult`
        ``converged`` is `False` when the cap was hit.

    """
    mu, nu = _pair(mu, nu)
    if tol is None:
        tol = conf.sinkhorn_tol
    keep_mu = mu.weights > 0
    keep_nu = nu.weights > 0
    x, a = mu.points[keep_mu], mu.weights[keep_mu]
    y, b = nu.points[keep_nu], nu.weights[keep_nu]

    C_xy = cdist(x, y) ** p
    if reg is None:
        reg = conf.sinkhorn_reg_factor * float(np.median(C_xy))
    if not reg > 0:
        raise ValueError(f'reg must be positive, got {reg}')

    ot_xy, conv_xy, n_xy = _entropic_cost(a, b, C_xy, reg, iters, tol)
    ot_xx, conv_xx, n_xx = _entropic_cost(a, a, cdist(x, x) ** p, reg,
                                          iters, tol)
    ot_yy, conv_yy, n_yy = _entropic_cost(b, b, cdist(y, y) ** p, reg,
                                          iters, tol)
    converged = conv_xy and conv_xx and conv_yy
    if not converged:
        log.warning('Sinkhorn did not converge. You might want to increase '
                    'the number of iterations or the regularization.')

    div = max(ot_xy - 0.5 * ot_xx - 0.5 * ot_yy, 0.0)
    return SinkhornResult(value=float(div ** (1.0 / p)), converged=converged,
                          n_iter=n_xy + n_xx + n_yy, reg=float(reg))


# --------------------- #
# HISTOGRAM DIVERGENCES #
# --------------------- #

@dataclass
class HistogramPair:
    """Two probability vectors on one shared grid.

    Attributes
    ----------
    edges : tuple of ndarray
        Bin edges per axis.

    p, q : ndarray
        Flattened bin probabilities, each summing to 1.

    representatives : ndarray
        Shape ``(n_bins, d)``. Pooled sample mean of each bin, or the bin
        center for empty bins.

    n_samples : int
        Sample size used for the default entropy smoothing.

    """
    edges: tuple
    p: np.ndarray
    q: np.ndarray
    representatives: np.ndarray
    n_samples: int

    @property
    def n_bins(self):
        return self.p.size

    @property
    def centers(self):
        """Bin centers, shape ``(n_bins, d)``."""
        mids = [0.5 * (e[1:] + e[:-1]) for e in self.edges]
        grids = np.meshgrid(*mids, indexing='ij')
        return np.column_stack([gr.reshape(-1) for gr in grids])

    @classmethod
    def from_probabilities(cls, p, q, edges=None, n_samples=None):
        """Wrap two probability vectors on a 1D grid.

        Parameters
        ----------
        p, q : array-like
            Non-negative, normalized to sum to 1.

        edges : array-like or `None`
            Bin edges; unit bins ``0..B`` by default.

        n_samples : int or `None`
            Defaults to the bin count.

        """
        p = np.asarray(p, dtype=float).reshape(-1)
        q = np.asarray(q, dtype=float).reshape(-1)
        if p.shape != q.shape:
            raise ValueError('p and q must have the same length')
        if np.any(p < 0) or np.any(q < 0):
            raise ValueError('Probabilities must be non-negative')
        p = p / p.sum()
        q = q / q.sum()
        if edges is None:
            edges = np.arange(p.size + 1, dtype=float)
        edges = (np.asarray(edges, dtype=float),)
        hp = cls(edges=edges, p=p, q=q, representatives=None,
                 n_samples=n_samples or p.size)
        hp.representatives = hp.centers
        return hp


def _axis_edges(values, bins, max_bins):
    edges = np.histogram_bin_edges(values, bins=bins)
    if isinstance(bins, str) and len(edges) < 3 and np.ptp(values) > 0:
        # one bin over a non-zero range
        edges = np.histogram_bin_edges(values, bins=2)
    if len(edges) - 1 > max_bins:
        log.debug(f'Bin rule {bins!r} asked for {len(edges) - 1} bins; '
                  f'capped at {max_bins}')
        edges = np.histogram_bin_edges(values, bins=max_bins)
    return edges


def histogram_pair(mu, nu, bins='fd', max_bins=4096):
    """Bin two samples on their joint support.

    Parameters
    ----------
    mu, nu : `EmpiricalMeasure` or array-like
        One- or two-dimensional samples.

    bins : str or int
        Any rule accepted by `numpy.histogram_bin_edges`, applied per axis.
        Freedman-Diaconis (``'fd'``) by default.

    max_bins : int
        Per-axis cap.

    Returns
    -------
    hp : `HistogramPair`

    """
    mu, nu = _pair(mu, nu)
    if mu.dim > 2:
        raise DimensionError('Histogram distances support d <= 2 only')

    pooled = np.vstack([mu.points, nu.points])
    edges = tuple(_axis_edges(pooled[:, k], bins, max_bins)
                  for k in range(mu.dim))
    p = np.histogramdd(mu.points, bins=edges, weights=mu.weights)[0]
    q = np.histogramdd(nu.points, bins=edges, weights=nu.weights)[0]
    p = p.reshape(-1) / p.sum()
    q = q.reshape(-1) / q.sum()

    pooled_w = np.concatenate([mu.weights, nu.weights]) * 0.5
    mass = np.histogramdd(pooled, bins=edges, weights=pooled_w)[0].reshape(-1)
    sums = np.column_stack([
        np.histogramdd(pooled, bins=edges,
                       weights=pooled_w * pooled[:, k])[0].reshape(-1)
        for k in range(mu.dim)])

    hp = HistogramPair(edges=edges, p=p, q=q, representatives=None,
                       n_samples=max(mu.n, nu.n))
    reps = hp.centers
    filled = mass > 0
    reps[filled] = sums[filled] / mass[filled, None]
    hp.representatives = reps
    return hp


def _evaluate_v(V, points):
    if points.shape[1] == 1:
        vals = V(points[:, 0])
    else:
        vals = V(points)
    return np.broadcast_to(np.asarray(vals, dtype=float).reshape(-1),
                           (len(points),))


def weighted_variation(mu, nu, V=None, bins='fd'):
    """Weighted variation :math:`\\|\\mu - \\nu\\|_V` of binned samples.

    The value is :math:`\\sum_i |p_i - q_i| V(r_i)` where ``r_i`` is the
    pooled sample mean of bin ``i``. This is the exact weighted variation
    of the binned measures with atoms at those points, and it keeps
    ``V`` inside the sample range. With ``V=None`` (``V=1``) it is the
    :math:`L^1` distance of the histograms, in ``[0, 2]``.

    Parameters
    ----------
    mu, nu : `EmpiricalMeasure` or array-like

    V : callable or `None`
        Weight function. It receives an array of scalars in 1D and an
        ``(n, 2)`` array in 2D.

    bins : str or int
        Binning rule, see `histogram_pair`.

    Examples
    --------
    >>> from mvsde_tools.metrics import weighted_variation
    >>> weighted_variation([0.], [1.], V=lambda x: 1 + x**2, bins=2)
    3.0

    """
    hp = histogram_pair(mu, nu, bins=bins)
    diff = np.abs(hp.p - hp.q)
    if V is None:
        return float(diff.sum())

    v = _evaluate_v(V, hp.representatives)
    pooled = 0.5 * (hp.p + hp.q)
    top = int(np.argmax(v))
    if np.ptp(v) > 0 and pooled[top] > 0.01:
        log.warning(f'Bin with the largest weight V={v[top]:.6g} carries '
                    f'{pooled[top]:.3%} of the mass; estimate is '
                    'sensitive to the tail')
    return float(diff @ v)


def relative_entropy(hp, pseudo_count=None):
    """Relative entropy :math:`\\mathrm{Ent}(p|q)` of smoothed histograms.

    Both vectors are smoothed as :math:`\\tilde p = (p + \\lambda) /
    (1 + B\\lambda)` with ``B`` bins.

    Parameters
    ----------
    hp : `HistogramPair`

    pseudo_count : float or `None`
        :math:`\\lambda`. Default is ``conf.entropy_pseudo_count / N``.

    Returns
    -------
    ent : float
        Non-negative; infinite if some ``q`` bin is empty where ``p`` is
        not and no smoothing was requested.

    """
    if pseudo_count is None:
        pseudo_count = conf.entropy_pseudo_count / hp.n_samples
    if pseudo_count < 0:
        raise ValueError(f'pseudo_count must be >= 0, got {pseudo_count}')
    norm = 1.0 + hp.n_bins * pseudo_count
    p = (hp.p + pseudo_count) / norm
    q = (hp.q + pseudo_count) / norm
    return float(max(rel_entr(p, q).sum(), 0.0))


def entropy_sensitivity(hp, factors=(0.1, 0.5, 1.0)):
    """Relative entropy recomputed at pseudo counts ``factor / N``.

    Returns
    -------
    values : dict
        Factor to entropy.

    """
    return {f: relative_entropy(hp, pseudo_count=f / hp.n_samples)
            for f in factors}


def talagrand_ratio(hp, variance):
    """Ratio :math:`W_2^2 / (2\\,\\mathrm{Ent}(p|q)\\,\\sigma^2)` on a 1D grid.

    The transport inequality for a Gaussian reference of variance
    :math:`\\sigma^2` says this is at most 1. Atoms sit at bin centers.

    """
    if len(hp.edges) != 1:
        raise DimensionError('talagrand_ratio needs a 1D histogram')
    centers = hp.centers[:, 0]
    w2 = wp_1d(EmpiricalMeasure(centers, hp.p),
               EmpiricalMeasure(centers, hp.q), p=2)
    ent = relative_entropy(hp, pseudo_count=0.0)
    return w2 ** 2 / (2.0 * ent * variance)


# ----------- #
# NOISE FLOOR #
# ----------- #

def noise_floor(draw, metric, seeds=(0, 1)):
    """Same-law distance between two independent draws.

    Parameters
    ----------
    draw : callable
        ``draw(seed)`` returns a measure (or ensemble, or points).

    metric : callable
        ``metric(mu, nu)`` returns a float.

    seeds : tuple of int
        Seeds of the two draws.

    """
    return float(metric(draw(seeds[0]), draw(seeds[1])))


METRICS = ('w1', 'w2', 'wp', 'sinkhorn', 'w_psi', 'tv',
           'weighted_variation', 'relative_entropy')
BINNED_METRICS = ('tv', 'weighted_variation', 'relative_entropy')


def distance(name, mu, nu, p=None, reg=None, profile=None, V=None,
             bins='fd', pseudo_count=None):
    """Evaluate a metric by name.

    ``'w1'`` and ``'w2'`` use the exact 1D formula on the line and the
    assignment solver (Sinkhorn above the size limit) otherwise.

    Parameters
    ----------
    name : str
        One of `METRICS`.

    mu, nu : `EmpiricalMeasure`, ensemble or array-like

    p, reg, profile, V, bins, pseudo_count
        Metric parameters, ignored where they do not apply.

    Returns
    -------
    value : float

    """
    mu, nu = _pair(mu, nu)
    if name in ('w1', 'w2', 'wp'):
        order = {'w1': 1, 'w2': 2}.get(name, p if p is not None else 2)
        if mu.dim == 1:
            return wp_1d(mu, nu, p=order)
        if (mu.n == nu.n and mu.uniform and nu.uniform and
                mu.n <= conf.exact_transport_max_n):
            return wp_exact(mu, nu, p=order)
        return wp_sinkhorn(mu, nu, p=order, reg=reg).value
    elif name == 'sinkhorn':
        return wp_sinkhorn(mu, nu, p=p if p is not None else 2,
                           reg=reg).value
    elif name == 'w_psi':
        if profile is None:
            raise ValueError('w_psi needs a PsiProfile')
        return w_psi(mu, nu, profile)
    elif name == 'tv':
        return weighted_variation(mu, nu, bins=bins)
    elif name == 'weighted_variation':
        return weighted_variation(mu, nu, V=V, bins=bins)
    elif name == 'relative_entropy':
        return relative_entropy(histogram_pair(mu, nu, bins=bins),
                                pseudo_count=pseudo_count)
    raise ValueError(f'Unknown metric {name!r}; valid: {", ".join(METRICS)}')


def bin_count(name, mu, nu, bins='fd'):
    """Number of histogram bins metric ``name`` uses on this pair.

    Returns 0 for metrics that do not bin.
    """
    if name not in BINNED_METRICS:
        return 0
    return histogram_pair(mu, nu, bins=bins).n_bins
