"""Deterministic random-stream derivation.

Every sampling operation draws from a generator derived from the user
seed plus a fixed per-operation stream code (and optional extra integer
coordinates such as a quadrature-node index). Single-threaded runs are
bit-identical for a given seed; chunk-parallel sampling would derive one
stream per chunk through the same mechanism.
"""

import numpy as np

STREAM_CODES = {
    "target": 1,
    "noise": 2,
    "interpolant": 3,
    "integrate": 4,
    "sde": 5,
    "lip": 6,
    "kinetic": 7,
    "kl": 8,
    "jacobian": 9,
    "gfunction": 10,
    "em": 11,
    "pca": 12,
    "bench": 13,
}


def stream_rng(seed, stream, *extra):
    """Generator for a named stream derived from the user seed.

    Args:
        seed: user-facing integer seed.
        stream: one of the names in STREAM_CODES.
        *extra: optional extra integers distinguishing sub-streams.

    Returns:
        numpy.random.Generator seeded from (seed, code, *extra).
    """
    code = STREAM_CODES[stream]
    return np.random.default_rng([int(seed), code, *map(int, extra)])
