import numpy as np
import pytest
from astropy.table import Table
from astropy.utils.data import get_pkg_data_filename
from numpy.testing import assert_array_equal

from mvsde_tools.utils.io import (
    file_sha256, output_csv, output_manifest, read_csv, read_manifest,
    read_points)


def test_output_csv(tmpdir):
    filename = str(tmpdir.join('simple.csv'))
    output_csv({'time': [0.0, 0.1], 'value': [1 / 3, 2.0]}, filename)

    with open(filename) as f:
        lines = f.readlines()

    assert len(lines) == 3
    assert lines[0] == 'time,value\n'
    assert lines[1] == '0,0.33333333333333331\n'

    tab = read_csv(filename)
    assert tab.colnames == ['time', 'value']
    assert tab['value'][0] == 1 / 3


def test_output_csv_table_and_overwrite(tmpdir):
    filename = str(tmpdir.join('table.csv'))
    tab = Table([[1, 2], ['a', 'b']], names=('n', 'label'))
    output_csv(tab, filename)
    with pytest.raises(OSError, match='exists'):
        output_csv(tab, filename)
    output_csv({'n': [3]}, filename, overwrite=True)
    assert len(read_csv(filename)) == 1


def test_same_data_same_bytes(tmpdir):
    values = np.random.default_rng(0).normal(size=50)
    a = str(tmpdir.join('a.csv'))
    b = str(tmpdir.join('b.csv'))
    output_csv({'value': values}, a)
    output_csv({'value': values.copy()}, b)
    assert file_sha256(a) == file_sha256(b)
    assert_array_equal(read_csv(a)['value'], values)


def test_read_points():
    pts = read_points(get_pkg_data_filename('data/points_2d.csv'))
    assert pts.shape == (4, 2)
    assert_array_equal(pts[3], [1, 1])


def test_read_missing(tmpdir):
    with pytest.raises(OSError, match='does not exist'):
        read_csv(str(tmpdir.join('nope.csv')))
    with pytest.raises(OSError, match='does not exist'):
        read_manifest(str(tmpdir.join('nope.json')))


def test_read_points_no_coordinates(tmpdir):
    filename = str(tmpdir.join('labels.csv'))
    output_csv({'particle_index': [0, 1], 'name': ['a', 'b']}, filename)
    with pytest.raises(ValueError, match='no coordinate columns'):
        read_points(filename)


def test_manifest(tmpdir):
    filename = str(tmpdir.join('manifest.json'))
    manifest = {'name': 'run', 'seeds': {'integrator': 1}}
    output_manifest(manifest, filename)
    assert read_manifest(filename) == manifest
    with pytest.raises(OSError):
        output_manifest(manifest, filename)
