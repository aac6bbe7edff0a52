import numpy as np
import pytest
from numpy.testing import assert_array_equal

from mvsde_tools.utils.rng import INITIAL, NoiseStream, block_slices


def test_block_slices():
    slices = block_slices(10, 4)
    assert [(s.start, s.stop) for s in slices] == [(0, 4), (4, 8), (8, 10)]
    assert block_slices(0, 4) == []
    with pytest.raises(ValueError):
        block_slices(10, 0)


def test_keys_are_independent():
    s = NoiseStream(42)
    base = s.normals(3, 0, (5, 2))
    assert_array_equal(base, NoiseStream(42).normals(3, 0, (5, 2)))
    others = [NoiseStream(43).normals(3, 0, (5, 2)),
              NoiseStream(42, side=1).normals(3, 0, (5, 2)),
              s.normals(4, 0, (5, 2)),
              s.normals(3, 1, (5, 2)),
              s.normals(3, 0, (5, 2), purpose=INITIAL)]
    for other in others:
        assert not np.array_equal(base, other)


def test_order_does_not_matter():
    s = NoiseStream(7)
    first = [s.uniforms(k, 0, 3) for k in range(4)]
    second = [s.uniforms(k, 0, 3) for k in reversed(range(4))][::-1]
    assert_array_equal(first, second)


def test_seed_range():
    NoiseStream(2**64 - 1)
    with pytest.raises(ValueError):
        NoiseStream(-1)
    with pytest.raises(ValueError):
        NoiseStream(2**64)
