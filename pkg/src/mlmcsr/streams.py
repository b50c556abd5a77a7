"""Deterministic counter-based random streams.

Every random quantity used by the estimator is a pure function of a
64-bit key and a counter.  That buys three properties that ordinary
stateful generators do not give us:

* a sample set can be extended without disturbing earlier draws,
* work can be split across threads in any chunking without changing
  a single bit of the output,
* any individual draw can be reproduced in isolation for debugging.

Keys are derived by walking salted steps of the splitmix64 generator;
values are produced by applying its finalizer to ``key + (counter+1) *
GOLDEN``, which is exactly the splitmix64 output sequence seeded at the
key.  Uniforms keep the top 53 bits and are strictly inside (0, 1), so
the inverse normal CDF below never sees 0 or 1.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB

_N_GOLDEN = np.uint64(_GOLDEN)
_N_MIX_A = np.uint64(_MIX_A)
_N_MIX_B = np.uint64(_MIX_B)
_U53 = 2.0 ** -53


def mix64(z: int) -> int:
    """splitmix64 finalizer: a bijective avalanche on 64-bit integers."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK
    return z ^ (z >> 31)


def derive_key(seed: int, *salts: int) -> int:
    """Derive an independent stream key from a seed and a salt path.

    Each salt advances the key by one salted splitmix64 step, so keys
    with different salt paths are unrelated for all practical purposes.
    """
    key = mix64(seed)
    for s in salts:
        key = mix64((key + (int(s) + 1) * _GOLDEN) & _MASK)
    return key


def raw_at(key: int, counters: np.ndarray) -> np.ndarray:
    """64-bit words of the stream ``key`` at the given counter positions."""
    z = np.asarray(counters, dtype=np.uint64) + np.uint64(1)
    z = z * _N_GOLDEN
    z += np.uint64(key)
    t = np.empty_like(z)
    np.right_shift(z, np.uint64(30), out=t)
    np.bitwise_xor(z, t, out=z)
    np.multiply(z, _N_MIX_A, out=z)
    np.right_shift(z, np.uint64(27), out=t)
    np.bitwise_xor(z, t, out=z)
    np.multiply(z, _N_MIX_B, out=z)
    np.right_shift(z, np.uint64(31), out=t)
    np.bitwise_xor(z, t, out=z)
    return z


def uniform_at(key: int, counters: np.ndarray) -> np.ndarray:
    """Uniforms in the open interval (0, 1) at the given counters."""
    z = raw_at(key, counters)
    np.right_shift(z, np.uint64(11), out=z)
    u = z.astype(np.float64)
    u += 0.5
    u *= _U53
    return u


def normal_at(key: int, counters: np.ndarray) -> np.ndarray:
    """Standard normals at the given counters (inverse-CDF transform)."""
    return ndtri(uniform_at(key, counters))


def uniform_scalar(key: int, counter: int) -> float:
    """Single uniform draw; bit-identical to ``uniform_at`` at the same spot."""
    return float(uniform_at(key, np.array([counter], dtype=np.uint64))[0])


def normal_scalar(key: int, counter: int) -> float:
    """Single standard normal draw, bit-identical to the vector path."""
    return float(normal_at(key, np.array([counter], dtype=np.uint64))[0])
