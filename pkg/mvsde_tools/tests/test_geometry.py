import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mvsde_tools.geometry import (
    Ball, Box, FullSpace, HalfSpace, Polytope, contains, domain_from_dict,
    inward_normal, project, reflect_step)
from mvsde_tools.utils.exceptions import DimensionError, NotOnBoundaryError


def _quadrant():
    return Polytope([[1, 0], [0, 1]], [0, 0])


def test_contains():
    assert contains(FullSpace(2), [5, 5])
    assert contains(Ball([0, 0], 1), [1, 0])
    assert not contains(Box([0, 0], [1, 1]), [1.5, 0.5])
    assert contains(HalfSpace([1]), [0.0])
    assert not contains(HalfSpace([1]), [-1e-3])
    assert_array_equal(contains(Box([0], [1]), [[-0.5], [0.5], [1.0]]),
                       [False, True, True])


def test_contains_dimension_mismatch():
    with pytest.raises(DimensionError):
        contains(Ball([0, 0], 1), [0, 0, 0])


@pytest.mark.parametrize(
    ('domain', 'x', 'y', 'd'),
    [(Box([0], [1]), [-0.3], [0], 0.3),
     (Ball([0, 0], 1), [2, 0], [1, 0], 1),
     (_quadrant(), [-1, -1], [0, 0], np.sqrt(2)),
     (HalfSpace([0, 2], 2), [3, -1], [3, 1], 2),
     (FullSpace(1), [7.0], [7.0], 0)])
def test_project(domain, x, y, d):
    yy, dd = project(domain, x)
    assert_allclose(yy, y, atol=1e-12)
    assert_allclose(dd, d, atol=1e-12)


@pytest.mark.parametrize('domain', [Box([0, 0], [1, 2]), Ball([1, 1], 0.5),
                                    _quadrant(), HalfSpace([1, 1], 1)])
def test_project_properties(domain):
    rng = np.random.default_rng(0)
    x = rng.normal(scale=3, size=(200, 2))
    y, d = project(domain, x)
    assert np.all(contains(domain, y, tol=1e-9))

    # Idempotent.
    y2, d2 = project(domain, y)
    assert_allclose(y2, y, atol=1e-9)
    assert_allclose(d2, 0, atol=1e-9)

    # Inside points do not move.
    inside = contains(domain, x, tol=0)
    assert_array_equal(d[inside], 0)

    # Nearest point: no point of the domain on the segment to a random
    # inside point is closer.
    z, _ = project(domain, rng.normal(scale=3, size=(200, 2)))
    for s in (0.1, 0.5, 0.9):
        w = y + s * (z - y)
        assert np.all(np.linalg.norm(x - w, axis=1) >= d - 1e-9)


def test_inward_normal():
    assert_allclose(inward_normal(Box([0], [1]), [0]), [1])
    assert_allclose(inward_normal(Box([0], [1]), [1]), [-1])
    assert_allclose(inward_normal(Ball([0, 0], 1), [0, 1]), [0, -1])
    assert_allclose(inward_normal(Box([0, 0], [1, 1]), [0, 0]),
                    [1 / np.sqrt(2), 1 / np.sqrt(2)])
    assert_allclose(inward_normal(_quadrant(), [0, 3]), [1, 0])
    assert_allclose(inward_normal(HalfSpace([3, 4]), [4, -3]), [0.6, 0.8])


def test_inward_normal_off_boundary():
    with pytest.raises(NotOnBoundaryError):
        inward_normal(Ball([0, 0], 1), [0.5, 0])
    with pytest.raises(NotOnBoundaryError):
        inward_normal(FullSpace(1), [0.0])


def test_reflect_step():
    x, dl = reflect_step(Box([0], [1]), [0.9], [0.3])
    assert_allclose(x, [1])
    assert_allclose(dl, 0.2)

    x, dl = reflect_step(Ball([0, 0], 1), [0.8, 0], [0.5, 0])
    assert_allclose(x, [1, 0])
    assert_allclose(dl, 0.3)

    x, dl = reflect_step(Box([0], [1]), [0.5], [0.25])
    assert_array_equal(x, [0.75])
    assert dl == 0


def test_domain_from_dict():
    for dom in (FullSpace(3), HalfSpace([0, 1], 0.5), Ball([1, 2], 3),
                Box([0, 0], [1, 2]), _quadrant()):
        again = domain_from_dict(dom.to_dict())
        assert type(again) is type(dom)
        assert again.dim == dom.dim
        assert again.to_dict() == dom.to_dict()

    with pytest.raises(ValueError, match='Unknown domain kind'):
        domain_from_dict({'kind': 'torus'})


def test_bad_domains():
    with pytest.raises(ValueError):
        Ball([0], 0)
    with pytest.raises(ValueError):
        Box([1], [0])
    with pytest.raises(ValueError):
        HalfSpace([0, 0])
    with pytest.raises(DimensionError):
        Polytope([[1, 0]], [0, 1])
