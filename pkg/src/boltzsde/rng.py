"""Counter-based random streams.

Every particle owns an independent stream keyed by ``(seed, sense, index)``.
The ``n``-th uniform of a stream is a pure function of the key and ``n``
(a SplitMix64 finalizer applied to ``key + (n + 1) * GAMMA``), so results do
not depend on execution order, chunking or worker count.  Three bit-identical
implementations exist: a numba scalar, a numpy vectorized one and a plain
Python reference.
"""

import numpy as np

from ._backend import USE_NUMBA, jit

MASK64 = (1 << 64) - 1

_GAMMA_INT = 0x9E3779B97F4A7C15
_M1_INT = 0xBF58476D1CE4E5B9
_M2_INT = 0x94D049BB133111EB
_PARTICLE_INT = 0xD1B54A32D192ED03
_SENSE_SALT = {1: 0x243F6A8885A308D3, -1: 0x13198A2E03707344}

GAMMA = np.uint64(_GAMMA_INT)
M1 = np.uint64(_M1_INT)
M2 = np.uint64(_M2_INT)
S27 = np.uint64(27)
S30 = np.uint64(30)
S31 = np.uint64(31)
S11 = np.uint64(11)
ONE = np.uint64(1)
INV53 = 1.0 / 9007199254740992.0


# -- plain Python reference -------------------------------------------------

def mix64_py(z):
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1_INT) & MASK64
    z = ((z ^ (z >> 27)) * _M2_INT) & MASK64
    return z ^ (z >> 31)


def stream_key_py(seed, sense, index):
    if sense not in _SENSE_SALT:
        raise ValueError("sense must be +1 or -1")
    base = mix64_py(int(seed) * _GAMMA_INT + _SENSE_SALT[sense])
    return mix64_py(base + int(index) * _PARTICLE_INT)


def uniform_py(key, counter):
    z = mix64_py(int(key) + (int(counter) + 1) * _GAMMA_INT)
    return (z >> 11) * INV53


# -- numba scalar -------------------------------------------------------------

@jit
def mix64(z):
    z = (z ^ (z >> S30)) * M1
    z = (z ^ (z >> S27)) * M2
    return z ^ (z >> S31)


@jit
def uniform(key, counter):
    """Uniform on [0, 1) for draw ``counter`` of stream ``key``."""
    z = mix64(key + (np.uint64(counter) + ONE) * GAMMA)
    return np.float64(z >> S11) * INV53


if not USE_NUMBA:
    # the uint64 scalar version would overflow-warn when interpreted
    def uniform(key, counter):  # noqa: F811
        return uniform_py(key, counter)


# -- numpy vectorized ---------------------------------------------------------

def mix64_np(z):
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> S30)) * M1
    z = (z ^ (z >> S27)) * M2
    return z ^ (z >> S31)


def uniform_np(keys, counters):
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters).astype(np.uint64)
    z = mix64_np(keys + (counters + ONE) * GAMMA)
    return (z >> S11).astype(np.float64) * INV53


def stream_keys(seed, sense, indices):
    """Vectorized ``stream_key_py`` over particle indices."""
    base = np.uint64(mix64_py(int(seed) * _GAMMA_INT + _SENSE_SALT[sense]))
    idx = np.asarray(indices, dtype=np.uint64)
    return mix64_np(base + idx * np.uint64(_PARTICLE_INT))


class ParticleStream:
    """Stateful handle on one particle's counter-based stream."""

    def __init__(self, seed, index=0, sense=1):
        self.seed = int(seed)
        self.index = int(index)
        self.sense = sense
        self.key = stream_key_py(seed, sense, index)
        self.counter = 0

    def uniform(self):
        u = uniform_py(self.key, self.counter)
        self.counter += 1
        return u

    def uniforms(self, n):
        ctr = np.arange(self.counter, self.counter + n)
        self.counter += n
        return uniform_np(np.full(n, self.key, dtype=np.uint64), ctr)

    def __repr__(self):
        return f"ParticleStream(seed={self.seed}, index={self.index}, counter={self.counter})"
