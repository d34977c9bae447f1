"""Pairwise PRF keys and checkpoint scheduling.

Keys come either from Diffie-Hellman over a prime-order subgroup of a safe
prime group (``derive_shared_key``) or from a truly random function table
(``RandomFunctionKey``), which stands in for the PRF when experiments assume a
random function. Both expose ``prf(a, final) -> bytes``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .onion import Nonce

WORD_BITS = 64


class InvalidKeyError(ValueError):
    pass


@dataclass(frozen=True)
class GroupParams:
    """Order-``q`` subgroup of Z_p^* with p = 2q + 1 and generator ``g``."""

    name: str
    p: int
    q: int
    g: int

    def validate(self) -> None:
        if self.p != 2 * self.q + 1:
            raise InvalidKeyError("p is not a safe prime of the form 2q+1")
        if pow(self.g, self.q, self.p) != 1 or self.g in (0, 1, self.p - 1):
            raise InvalidKeyError("generator does not have order q")

    def element_bytes(self, y: int) -> bytes:
        return y.to_bytes((self.p.bit_length() + 7) // 8, "big")


_MODP_2048 = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1"
    "29024E088A67CC74020BBEA63B139B22514A08798E3404DD"
    "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245"
    "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3D"
    "C2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F"
    "83655D23DCA3AD961C62F356208552BB9ED529077096966D"
    "670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9"
    "DE2BCBF6955817183995497CEA956AE515D2261898FA0510"
    "15728E5A8AACAA68FFFFFFFFFFFFFFFF", 16)

# RFC 3526 group 14; 2 is a quadratic residue mod p, so it generates the order-q subgroup.
MODP_2048 = GroupParams("modp2048", _MODP_2048, (_MODP_2048 - 1) // 2, 2)

# 256-bit safe prime for fast tests. Not a security-level group.
_P256 = 0x911243102FD74430D730BA32477C4FD4C7C4548E0D6F1AE972CD6B52F91525AB
TEST_GROUP = GroupParams("safe256", _P256, (_P256 - 1) // 2, 4)

GROUPS = {g.name: g for g in (MODP_2048, TEST_GROUP)}


@dataclass(frozen=True)
class DhKeyPair:
    x: int = field(repr=False)
    Y: int

    def check(self, group: GroupParams) -> bool:
        return pow(group.g, self.x, group.p) == self.Y


def generate_dh_keypair(group: GroupParams, rng: np.random.Generator) -> DhKeyPair:
    nbytes = (group.q.bit_length() + 7) // 8 + 8
    x = int.from_bytes(rng.bytes(nbytes), "big") % (group.q - 1) + 1
    return DhKeyPair(x, pow(group.g, x, group.p))


def _encode(a: int, final: int) -> bytes:
    return int(a).to_bytes(16, "big", signed=True) + bytes([final])


@dataclass(frozen=True)
class SharedKey:
    prf_seed: bytes = field(repr=False)

    def prf(self, a: int, final: int) -> bytes:
        h = hashlib.blake2b(key=self.prf_seed, digest_size=32, person=b"ckpt-prf")
        h.update(_encode(a, final))
        return h.digest()


class RandomFunctionKey:
    """Lazily sampled truly random function with the ``SharedKey`` interface."""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng
        self._table: dict[tuple[int, int], bytes] = {}

    def prf(self, a: int, final: int) -> bytes:
        k = (int(a), int(final))
        if k not in self._table:
            self._table[k] = self._rng.bytes(32)
        return self._table[k]


def extract(group: GroupParams, z: int) -> bytes:
    return hashlib.blake2b(group.element_bytes(z), digest_size=32, person=b"ckpt-extract").digest()


def derive_shared_key(my_dh_secret: int, partner_dh_public: int, group: GroupParams) -> SharedKey:
    """Seed ``H(Y_partner ^ x_mine)``; equal for both ends of a pair."""
    if not 1 <= my_dh_secret < group.q:
        raise InvalidKeyError("secret exponent out of range")
    y = partner_dh_public
    if not 1 < y < group.p - 1 or pow(y, group.q, group.p) != 1:
        raise InvalidKeyError("public element is not in the prime-order subgroup")
    return SharedKey(extract(group, pow(y, my_dh_secret, group.p)))


def threshold(frequency: float) -> int:
    if not 0.0 <= frequency <= 1.0:
        raise ValueError(f"frequency {frequency} outside [0, 1]")
    return int(frequency * 2.0 ** WORD_BITS)


def checkpoint_decision(key, session: int, rnd: int, frequency: float) -> int:
    word = int.from_bytes(key.prf(session + rnd, 0)[: WORD_BITS // 8], "big")
    return int(word < threshold(frequency))


def checkpoint_nonce(key, session: int, rnd: int) -> Nonce:
    return Nonce("checkpt", key.prf(session + rnd, 1))


def checkpoint_frequency(alpha: float, log2_lambda: float, n_parties: int) -> float:
    """Per (round, partner) checkpoint probability ``alpha * log^2(lambda) / N``."""
    f = alpha * log2_lambda / n_parties
    if f > 1.0:
        raise ValueError(f"checkpoint frequency {f:.3f} exceeds 1; lower alpha*log2_lambda or raise N")
    return f


@dataclass(frozen=True)
class CheckpointSpec:
    round: int
    partner: int
    nonce: Nonce


def build_checkpoint_schedule(party: int, shared_keys: Mapping[int, object], session: int,
                              L: int, frequency: float) -> list[CheckpointSpec]:
    """Every (round, partner) in [1..L] x partners whose decision bit is 1."""
    specs = []
    for r in range(1, L + 1):
        for k in sorted(shared_keys):
            key = shared_keys[k]
            if checkpoint_decision(key, session, r, frequency):
                specs.append(CheckpointSpec(r, k, checkpoint_nonce(key, session, r)))
    return specs


def dh_shared_keys(party: int, dh_secret: int, public_elements: Mapping[int, int],
                   group: GroupParams) -> dict[int, SharedKey]:
    return {k: derive_shared_key(dh_secret, y, group) for k, y in public_elements.items()}


def build_checkpoint_schedule_dh(party: int, public_elements: Mapping[int, int], dh_secret: int,
                                 session: int, L: int, N: int, alpha: float, log2_lambda: float,
                                 group: GroupParams = MODP_2048) -> list[CheckpointSpec]:
    keys = dh_shared_keys(party, dh_secret, public_elements, group)
    return build_checkpoint_schedule(party, keys, session, L,
                                     checkpoint_frequency(alpha, log2_lambda, N))
