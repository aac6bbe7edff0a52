# Licensed under a 3-clause BSD style license - see LICENSE.rst
"""Utilities shared by the simulation modules."""
