"""Seed derivation.

Every random stream in a run is a named child of the run seed, so that the
order in which components draw randomness never changes what they draw.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def substream(seed: int, *labels) -> np.random.Generator:
    """Independent generator for ``(seed, *labels)``; labels are str or int."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in labels))
    return np.random.Generator(np.random.PCG64(ss))


def subseed(seed: int, *labels) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in labels))
    return int(ss.generate_state(2, dtype=np.uint64)[0])


_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)


def _mix(z):
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def coin(seed: int, uid, rnd) -> np.ndarray:
    """Counter-based uniform in [0, 1) for each (uid, round).

    Works the same on scalars and arrays, which lets the onion-level engine and
    the array kernels make identical per-onion adversary decisions.
    """
    with np.errstate(over="ignore"):
        s = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GOLD)
        u = np.asarray(uid, dtype=np.uint64)
        r = np.asarray(rnd, dtype=np.uint64)
        z = _mix(s ^ _mix(u * _GOLD + r + np.uint64(1)))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
