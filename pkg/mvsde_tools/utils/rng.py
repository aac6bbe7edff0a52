"""Counter-keyed random streams.

Every draw is addressed by a key rather than by the state of a shared
generator: ``(seed, purpose, side, step_index, block)``. The same key
always yields the same numbers, whichever worker asks for it and in
whatever order, which is what makes particle runs independent of the
worker count.

"""
# THIRD-PARTY
import numpy as np

__all__ = ['DYNAMICS', 'INITIAL', 'REFERENCE', 'NoiseStream',
           'block_slices']

# Stream purposes, kept apart so initial draws never reuse dynamics noise.
DYNAMICS = 0
INITIAL = 1
REFERENCE = 2


def block_slices(n, block_size):
    """Partition ``range(n)`` into consecutive blocks.

    Parameters
    ----------
    n : int
        Number of particles.

    block_size : int
        Particles per block. The last block may be shorter.

    Returns
    -------
    slices : list of slice

    """
    if block_size < 1:
        raise ValueError(f'block_size must be positive, got {block_size}')
    return [slice(start, min(start + block_size, n))
            for start in range(0, n, block_size)]


class NoiseStream:
    """Keyed Philox streams for one simulation side.

    Parameters
    ----------
    seed : int
        Non-negative 64-bit seed.

    side : int
        0 for a plain run or the X-side of a coupling, 1 for the Y-side.

    Examples
    --------
    >>> from mvsde_tools.utils.rng import NoiseStream
    >>> s = NoiseStream(42)
    >>> a = s.normals(step_index=3, block=0, shape=(4, 2))
    >>> b = NoiseStream(42).normals(step_index=3, block=0, shape=(4, 2))
    >>> bool((a == b).all())
    True

    """
    def __init__(self, seed, side=0):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError(f'seed must be in [0, 2**64), got {seed}')
        self.seed = seed
        self.side = int(side)

    def generator(self, step_index, block, purpose=DYNAMICS):
        """Return the `numpy.random.Generator` addressed by the key."""
        ss = np.random.SeedSequence(
            [self.seed, purpose, self.side, int(step_index), int(block)])
        return np.random.Generator(np.random.Philox(ss))

    def normals(self, step_index, block, shape, purpose=DYNAMICS):
        """Standard normal draws for one block."""
        return self.generator(step_index, block,
                              purpose=purpose).standard_normal(shape)

    def uniforms(self, step_index, block, shape, purpose=DYNAMICS):
        """Uniform draws on ``[0, 1)`` for one block."""
        return self.generator(step_index, block, purpose=purpose).random(shape)
