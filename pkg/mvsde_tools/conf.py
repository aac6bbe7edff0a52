"""Package-wide numerical defaults.

Values can be overridden for a session::

    >>> from mvsde_tools import conf
    >>> with conf.set_temp('meet_tolerance', 0.25):
    ...     pass

or permanently in the ``mvsde_tools.cfg`` file of the astropy
configuration directory.

"""
# THIRD-PARTY
from astropy import config as _config

__all__ = ['Conf', 'conf']


class Conf(_config.ConfigNamespace):
    """Configuration parameters for `mvsde_tools`."""

    meet_tolerance = _config.ConfigItem(
        0.5, 'Reflection-coupled pairs meet at distance '
        'meet_tolerance * sqrt(dt).')
    boundary_tol = _config.ConfigItem(
        1e-9, 'Boundary tolerance, relative to the domain diameter.')
    block_size = _config.ConfigItem(
        4096, 'Particles per noise block. Changing this changes results.')
    kernel_warn_n = _config.ConfigItem(
        20000, 'Warn when a pairwise interaction kernel is evaluated on '
        'more particles than this.')
    exact_transport_max_n = _config.ConfigItem(
        2048, 'Largest sample size for the exact assignment solver.')
    sinkhorn_reg_factor = _config.ConfigItem(
        0.05, 'Default Sinkhorn regularization, relative to the median '
        'pairwise cost.')
    sinkhorn_tol = _config.ConfigItem(
        1e-9, 'Marginal violation at which Sinkhorn stops.')
    entropy_pseudo_count = _config.ConfigItem(
        0.5, 'Histogram smoothing for relative entropy, per sample.')
    lyapunov_eps = _config.ConfigItem(
        0.01, 'Default epsilon of the Lyapunov drift condition.')
    stencil_padding = _config.ConfigItem(
        1.1, 'Padding applied to stencil maxima in the Lyapunov check.')
    burn_in_fraction = _config.ConfigItem(
        0.1, 'Fraction of the horizon dropped before fitting a rate.')
    min_r_squared = _config.ConfigItem(
        0.9, 'Fitted rates below this R^2 are marked unreliable.')
    leakage_warn_fraction = _config.ConfigItem(
        1e-3, 'Warn when this fraction of particles falls outside a PDE '
        'grid.')
    compare_floor_factor = _config.ConfigItem(
        3.0, 'Default compare_runs tolerance on a metric value, in units of '
        'its recorded noise floor.')


conf = Conf()
