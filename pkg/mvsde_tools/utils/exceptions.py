"""Exceptions raised by ``mvsde_tools``.

All of them derive from `MVSDEError` and, where it makes sense, from the
matching built-in exception so that callers catching ``ValueError`` keep
working.

"""

__all__ = ['MVSDEError', 'DimensionError', 'NotOnBoundaryError',
           'SamplerError', 'ModelEvaluationError', 'BlowUpError',
           'CouplingError', 'TransportSizeError', 'RateFitError',
           'DivergentIntegralError', 'CFLError', 'ConfigValidationError',
           'AcceptanceError']


class MVSDEError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(MVSDEError, ValueError):
    """Point dimension does not match the domain or model."""


class NotOnBoundaryError(MVSDEError, ValueError):
    """Point is farther than the tolerance from the domain boundary."""


class SamplerError(MVSDEError, ValueError):
    """Initial law puts no mass on the closed domain."""


class ModelEvaluationError(MVSDEError, ArithmeticError):
    """Drift or diffusion evaluated to a non-finite value.

    Parameters
    ----------
    msg : str
        Error message.

    x : array-like
        Offending point(s).

    """
    def __init__(self, msg, x=None):
        super().__init__(msg)
        self.x = x


class BlowUpError(MVSDEError, ArithmeticError):
    """A particle position became non-finite.

    Parameters
    ----------
    index : int
        Particle index.

    time : float
        Simulation time at which it happened.

    """
    def __init__(self, index, time):
        super().__init__(f'Particle {index} blew up at t={time:.17g}')
        self.index = index
        self.time = time


class CouplingError(MVSDEError, ValueError):
    """Coupling mode cannot be realized for the given model."""


class TransportSizeError(MVSDEError, ValueError):
    """Sample too large for the exact assignment solver."""


class RateFitError(MVSDEError, ValueError):
    """Not enough usable points to fit an exponential rate."""


class DivergentIntegralError(MVSDEError, ValueError):
    """Integral defining a rate constant diverges."""


class CFLError(MVSDEError, ValueError):
    """Explicit PDE step violates the stability condition.

    Parameters
    ----------
    dt : float
        Requested step.

    suggested_dt : float
        Largest stable step.

    """
    def __init__(self, dt, suggested_dt):
        super().__init__(f'dt={dt:.6g} violates the CFL condition; '
                         f'use dt <= {suggested_dt:.6g}')
        self.dt = dt
        self.suggested_dt = suggested_dt


class ConfigValidationError(MVSDEError, ValueError):
    """Experiment configuration fails validation.

    Parameters
    ----------
    pointer : str
        JSON pointer to the offending field, e.g. ``/model/name``.

    msg : str
        What is wrong with it.

    """
    def __init__(self, pointer, msg):
        super().__init__(f'{pointer}: {msg}')
        self.pointer = pointer


class AcceptanceError(MVSDEError):
    """A declared acceptance threshold was not met."""
