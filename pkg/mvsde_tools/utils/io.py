"""Module to handle I/O for result files."""

# STDLIB
import datetime
import hashlib
import json
import os

# THIRD-PARTY
import numpy as np
from astropy.table import Table

__all__ = ['output_csv', 'read_csv', 'read_points', 'output_manifest',
           'read_manifest', 'file_sha256']

# 17 significant digits round-trip every float64.
FLOAT_FORMAT = '%.17g'


# ----------- #
# CSV RESULTS #
# ----------- #

def output_csv(columns, filename, overwrite=False):
    """Write columns to CSV with a fixed column order.

    Floating-point columns are written with 17 significant digits
    so that identical arrays always produce identical bytes.

    Parameters
    ----------
    columns : dict or `~astropy.table.Table`
        Column name to values. Order is preserved.

    filename : str
        Output CSV file.

    overwrite : bool
        Replace an existing file.

    Returns
    -------
    tab : `~astropy.table.Table`
        The table written.

    Raises
    ------
    OSError
        Output file exists and ``overwrite`` is `False`.

    """
    if os.path.exists(filename) and not overwrite:
        raise OSError(f'{filename} exists')

    if isinstance(columns, Table):
        tab = columns
    else:
        tab = Table(list(columns.values()), names=list(columns.keys()))

    formats = {name: FLOAT_FORMAT for name in tab.colnames
               if tab[name].dtype.kind == 'f'}
    tab.write(filename, format='ascii.csv', formats=formats, overwrite=True)
    return tab


def read_csv(filename):
    """Read a CSV written by `output_csv` (or any plain CSV).

    Raises
    ------
    OSError
        Input file does not exist.

    """
    if not os.path.isfile(filename):
        raise OSError(f'{filename} does not exist')
    return Table.read(filename, format='ascii.csv')


def read_points(filename):
    """Read a point cloud from CSV.

    Every numeric column except ``particle_index`` and ``time`` is taken as
    a coordinate, in file order.

    Returns
    -------
    points : ndarray
        Shape ``(n, d)``.

    """
    tab = read_csv(filename)
    names = [name for name in tab.colnames
             if name not in ('particle_index', 'time')
             and tab[name].dtype.kind in 'fiu']
    if not names:
        raise ValueError(f'{filename} has no coordinate columns')
    return np.column_stack([np.asarray(tab[name], dtype=float)
                            for name in names])


# --------- #
# MANIFESTS #
# --------- #

def output_manifest(manifest, filename, overwrite=False):
    """Write a run manifest as JSON.

    Keys are sorted so the same manifest always serializes the same way.

    Raises
    ------
    OSError
        Output file exists and ``overwrite`` is `False`.

    """
    if os.path.exists(filename) and not overwrite:
        raise OSError(f'{filename} exists')

    with open(filename, 'w') as fout:
        json.dump(manifest, fout, indent=2, sort_keys=True)
        fout.write('\n')


def read_manifest(filename):
    """Read a run manifest written by `output_manifest`.

    Raises
    ------
    OSError
        Input file does not exist.

    """
    if not os.path.isfile(filename):
        raise OSError(f'{filename} does not exist')
    with open(filename) as fin:
        return json.load(fin)


def file_sha256(filename):
    """Return the hex SHA-256 digest of a file."""
    h = hashlib.sha256()
    with open(filename, 'rb') as fin:
        for chunk in iter(lambda: fin.read(65536), b''):
            h.update(chunk)
    return h.hexdigest()


def _get_timestamp():
    """Return dictionary with UTC timestamp metadata."""
    d = datetime.datetime.now(datetime.timezone.utc)
    return {'date': d.strftime('%Y-%m-%dZ'),
            'time': d.strftime('%H:%M:%S.%fZ')}
