# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""
Particle simulator and verification harness for reflecting
McKean-Vlasov SDEs.
"""

# Packages may add whatever they like to this file, but
# should keep this content at the top.
# ----------------------------------------------------------------------------
try:
    from .version import version as __version__
except ImportError:
    __version__ = 'unknown'
# ----------------------------------------------------------------------------

from .conf import conf  # noqa
from . import utils  # noqa
