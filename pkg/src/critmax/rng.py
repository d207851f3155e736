"""Counter-based random streams.

Every random quantity in the package is a pure function of a 64-bit key.
Keys are derived with the splitmix64 finalizer:

    mix64(z) = splitmix64 output for state z
    replica_key(seed, i) = mix64(mix64(seed) + mix64(i ^ REPLICA_SALT))
    child_key(key, i)    = mix64(key ^ ((i + 1) * CHILD_MUL))
    draw(key, j)         = u01(mix64(key + (j + 1) * DRAW_MUL))

Because a vertex's draws depend on its key only, a tree realization does
not depend on traversal order, on the depth limit or on how replicas are
distributed over workers.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
REPLICA_SALT = 0x6A09E667F3BCC909
CHILD_MUL = 0xD1B54A32D192ED03
DRAW_MUL = 0xA0761D6478BD642F
INV_2_53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    z = (z + GOLDEN) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def replica_key(seed: int, index: int) -> int:
    return mix64((mix64(seed & MASK) + mix64((index ^ REPLICA_SALT) & MASK)) & MASK)


def child_key(key: int, i: int) -> int:
    return mix64(key ^ (((i + 1) * CHILD_MUL) & MASK))


def u01(z: int) -> float:
    """Map 64 bits to the open interval (0, 1)."""
    return ((z >> 11) + 0.5) * INV_2_53


def draw(key: int, j: int) -> float:
    return u01(mix64((key + (j + 1) * DRAW_MUL) & MASK))


def generator(seed: int, *labels: int) -> np.random.Generator:
    """A numpy Generator keyed by the seed and integer labels."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & MASK, *labels])))


# numba twins, bit-identical to the Python versions above

_GOLDEN = np.uint64(GOLDEN)
_CHILD_MUL = np.uint64(CHILD_MUL)
_DRAW_MUL = np.uint64(DRAW_MUL)
_REPLICA_SALT = np.uint64(REPLICA_SALT)


@nb.njit(inline="always", cache=True)
def nb_mix64(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always", cache=True)
def nb_child_key(key, i):
    return nb_mix64(key ^ (np.uint64(i + 1) * _CHILD_MUL))


@nb.njit(inline="always", cache=True)
def nb_draw(key, j):
    z = nb_mix64(key + np.uint64(j + 1) * _DRAW_MUL)
    return (np.float64(z >> np.uint64(11)) + 0.5) * INV_2_53


@nb.njit(cache=True)
def nb_replica_key(seed, index):
    return nb_mix64(nb_mix64(seed) + nb_mix64(index ^ _REPLICA_SALT))
