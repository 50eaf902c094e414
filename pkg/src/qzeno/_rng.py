"""Counter-based random streams.

Draw ``n`` of trajectory ``i`` is ``mix64(key(seed, i) + (n + 1) * GOLDEN)``
with ``mix64`` the SplitMix64 finalizer, so any draw of any stream can be
produced independently of thread scheduling.  Scalar versions are numba
kernels; the ``*_vec`` versions operate on uint64 arrays for the numpy path.
"""
import numpy as np

from ._accel import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
TO_UNIT = 2.0**-53
TWO_PI = 2.0 * np.pi

# draws consumed per time step: 4 for two Box-Muller pairs, 1 for the readout
DRAWS_PER_STEP = 5


@njit(inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always")
def stream_key(seed, index):
    seed = np.uint64(seed)
    index = np.uint64(index)
    return mix64(mix64(seed + GOLDEN) ^ mix64(index * GOLDEN + _ONE))


@njit(inline="always")
def uniform(key, counter):
    """Float in [0, 1) with 53 random bits."""
    key = np.uint64(key)
    counter = np.uint64(counter)
    return float(mix64(key + (counter + _ONE) * GOLDEN) >> _S11) * TO_UNIT


def mix64_vec(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def stream_keys(seed, indices):
    indices = np.asarray(indices, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = mix64_vec(np.array([seed], dtype=np.uint64) + GOLDEN)
        return mix64_vec(base ^ mix64_vec(indices * GOLDEN + _ONE))


def uniform_vec(keys, counter):
    offset = np.array([counter], dtype=np.uint64) + _ONE
    with np.errstate(over="ignore"):
        return (mix64_vec(keys + offset * GOLDEN) >> _S11).astype(np.float64) * TO_UNIT
