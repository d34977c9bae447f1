"""Input vectors: per-party multisets of (message, recipient) pairs."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class InputError(ValueError):
    pass


@dataclass(frozen=True)
class InputVector:
    parties: tuple  # parties[i] = tuple of (message, recipient)

    @classmethod
    def from_lists(cls, data: Sequence[Sequence]) -> "InputVector":
        return cls(tuple(tuple((m, int(j)) for m, j in row) for row in data))

    @property
    def N(self) -> int:
        return len(self.parties)

    def __getitem__(self, i):
        return self.parties[i]

    def messages(self) -> Counter:
        """M(sigma): multiset of all message pairs."""
        return Counter(pair for row in self.parties for pair in row)

    def expected_outputs(self) -> dict[int, Counter]:
        out = {j: Counter() for j in range(self.N)}
        for row in self.parties:
            for m, j in row:
                out.setdefault(j, Counter())[m] += 1
        return out

    def total(self) -> int:
        return sum(len(row) for row in self.parties)

    def validate(self, n_parties: int, message_size: int) -> None:
        if self.N != n_parties:
            raise InputError(f"input has {self.N} parties, network has {n_parties}")
        for i, row in enumerate(self.parties):
            for m, j in row:
                if not 0 <= j < n_parties:
                    raise InputError(f"party {i}: recipient {j} not in [0, {n_parties})")
                if m is not None and (not isinstance(m, (bytes, bytearray)) or len(m) > message_size):
                    raise InputError(f"party {i}: message not in the message space")

    def is_simple(self) -> bool:
        """True when every party sends one message and receives one (a permutation input)."""
        if any(len(row) != 1 for row in self.parties):
            return False
        return sorted(row[0][1] for row in self.parties) == list(range(self.N))

    def to_json(self) -> list:
        return [[[None if m is None else m.hex(), j] for m, j in row] for row in self.parties]

    @classmethod
    def from_json(cls, data) -> "InputVector":
        return cls.from_lists([[(None if m is None else bytes.fromhex(m), j) for m, j in row]
                               for row in data])


def default_message(i: int) -> bytes:
    return b"m%05d" % i


def permutation_input(perm: Sequence[int], messages: Sequence | None = None) -> InputVector:
    perm = [int(p) for p in perm]
    if sorted(perm) != list(range(len(perm))):
        raise InputError("not a permutation")
    if messages is None:
        messages = [default_message(i) for i in range(len(perm))]
    return InputVector(tuple(((messages[i], perm[i]),) for i in range(len(perm))))


def random_permutation_input(N: int, rng: np.random.Generator) -> InputVector:
    return permutation_input(rng.permutation(N))


def swap_recipients(sigma: InputVector, a: int, b: int) -> InputVector:
    """Swap the (single-pair) inputs' recipients of users a and b."""
    rows = list(sigma.parties)
    (ma, ja), (mb, jb) = rows[a][0], rows[b][0]
    rows[a] = ((ma, jb),)
    rows[b] = ((mb, ja),)
    return InputVector(tuple(rows))


def add_message(sigma: InputVector, sender: int, recipient: int, message: bytes) -> InputVector:
    rows = list(sigma.parties)
    rows[sender] = rows[sender] + ((message, recipient),)
    return InputVector(tuple(rows))


def random_multiset_input(N: int, max_per_party: int, rng: np.random.Generator) -> InputVector:
    rows = []
    for i in range(N):
        k = int(rng.integers(0, max_per_party + 1))
        rows.append(tuple((b"p%03dm%02d" % (i, s), int(rng.integers(0, N))) for s in range(k)))
    return InputVector(tuple(rows))


def distance(sigma0: InputVector, sigma1: InputVector, literal: bool = False) -> int:
    """Per-party multiset difference, summed over parties.

    By default a replaced pair counts once (max of the two one-sided
    differences), so swapping two users' recipients is at distance 2 and
    adding one message at distance 1. ``literal=True`` counts the full
    symmetric difference instead, where a swap costs 4.
    """
    if sigma0.N != sigma1.N:
        raise InputError("inputs have different party counts")
    total = 0
    for a, b in zip(sigma0.parties, sigma1.parties):
        ca, cb = Counter(a), Counter(b)
        only_a, only_b = sum((ca - cb).values()), sum((cb - ca).values())
        total += only_a + only_b if literal else max(only_a, only_b)
    return total
