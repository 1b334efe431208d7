"""Counter-based seed derivation.

Every random word used by the coordinate-noise sampler is a pure function of
``(master_seed, replica, step, coordinate, draw)``, so a replica block can be
generated by any worker in any order and still reproduce the sequential result
bit for bit.  The mixer is the SplitMix64 finaliser.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
# one odd constant per draw slot inside a (replica, step, coordinate) cell
_DRAW_SALT = np.array(
    [0xD6E8FEB86659FD93, 0xA0761D6478BD642F, 0xE7037ED1A0B428DB, 0x8EBC6AF09C88C6E3],
    dtype=np.uint64,
)
_MASK64 = (1 << 64) - 1


def mix64(x):
    """SplitMix64 step applied elementwise to uint64 data."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _u64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.uint64)


def child_seed(master: int, *counters: int) -> int:
    """Mix a master seed with an ordered tuple of counters into one 64-bit seed."""
    h = mix64(_u64(int(master) & _MASK64))
    for c in counters:
        h = mix64(h ^ _u64(int(c) & _MASK64))
    return int(h)


def cell_keys(master: int, replicas: np.ndarray, steps: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Keys for the full grid ``replicas x steps x coords`` (broadcast, shape R x M x d)."""
    h = mix64(_u64(int(master) & _MASK64))
    h = mix64(h ^ _u64(replicas)[:, None, None])
    h = mix64(h ^ _u64(steps)[None, :, None])
    return mix64(h ^ _u64(coords)[None, None, :])


def draw_words(keys: np.ndarray, slot: int) -> np.ndarray:
    return mix64(keys ^ _DRAW_SALT[slot])


def words_to_unit(words: np.ndarray) -> np.ndarray:
    """Map 64-bit words to doubles strictly inside (0, 1)."""
    top = (words >> np.uint64(11)).astype(np.float64)
    return (top + 0.5) * (1.0 / 9007199254740992.0)


def generator(master: int, *counters: int) -> np.random.Generator:
    """A Philox generator keyed by the derived child seed."""
    return np.random.Generator(np.random.Philox(key=child_seed(master, *counters)))


def unit_from_generator(rng: np.random.Generator, shape) -> np.ndarray:
    """Open-interval uniforms from a generator, via the same word mapping as the panel."""
    words = rng.integers(0, np.iinfo(np.uint64).max, size=shape, dtype=np.uint64, endpoint=True)
    return words_to_unit(words)
