"""Seeded random streams.

All randomness of a run flows from one integer seed. Each purpose gets its
own stream, keyed by a fixed label, so that e.g. turning dropout on does not
shift the neighborhood samples drawn for the same seed.
"""
import zlib

import numpy as np

INIT = 'init'
DROPOUT = 'dropout'
SAMPLING = 'sampling'
SPLIT = 'split'
DATA = 'data'

PURPOSES = (INIT, DROPOUT, SAMPLING, SPLIT, DATA)


def derive(seed, purpose):
    """Return a :class:`numpy.random.Generator` for ``purpose`` under ``seed``.

    :param int seed: The run's root seed.
    :param str purpose: One of :data:`PURPOSES` (any label works; the
        constants exist so call sites agree on spelling).
    """
    label = zlib.crc32(purpose.encode('utf-8')) & 0xffffffff
    return np.random.default_rng([int(seed) & 0xffffffff, label])


def streams(seed):
    """All streams of :data:`PURPOSES` for ``seed``, keyed by purpose."""
    return dict((purpose, derive(seed, purpose)) for purpose in PURPOSES)
