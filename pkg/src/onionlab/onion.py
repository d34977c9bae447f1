"""Onion routing scheme: key generation, onion formation and onion processing.

Two interchangeable schemes are provided.

``IdealScheme``
    Onions are fresh 128-bit random handles. A per-run oracle table resolves a
    handle to its layer contents, and only the holder of the layer's secret key
    gets an answer. Handles carry no information about the message, path or
    nonces.

``RealScheme``
    Fixed-size layered public-key authenticated encryption (X25519 +
    ChaCha20-Poly1305). The header is a stack of equally sized slots; peeling
    consumes the first slot, shifts the rest forward and appends a
    deterministic filler so the onion never shrinks.

Layer numbering: for a path ``P_1 .. P_{h}`` with nonces ``s_1 .. s_{h-1}``,
peeling ``O_r`` with ``P_r``'s key yields ``Relay(P_{r+1}, O_{r+1}, s_r)`` for
``r < h`` and ``Deliver(m)`` for ``r = h``.
"""

from __future__ import annotations

import hashlib
import struct
import threading
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives import serialization


class OnionError(ValueError):
    pass


class ParameterError(OnionError):
    """Path, key and nonce lists do not line up."""


class SizeError(OnionError):
    """Message or path does not fit the scheme's size class."""


class UnsupportedError(OnionError):
    pass


class Nonce(NamedTuple):
    tag: str
    value: bytes = b""


NONCE_TAGS = {"checkpt": 1, "dummy": 2}
_TAG_NAMES = {v: k for k, v in NONCE_TAGS.items()}


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    secret_key: bytes = field(repr=False)
    party: int


@dataclass(frozen=True)
class RoutingPath:
    hops: tuple

    def __post_init__(self):
        if len(self.hops) < 1:
            raise ParameterError("routing path needs at least the recipient")

    @property
    def recipient(self):
        return self.hops[-1]

    def __len__(self):
        return len(self.hops)


@dataclass(frozen=True)
class Onion:
    backend: str
    payload: object
    size_class: int

    def key(self):
        """Hashable identity of the onion's bits (what a peer can see)."""
        return self.payload

    def digest(self) -> str:
        if isinstance(self.payload, int):
            return format(self.payload, "032x")
        return hashlib.blake2b(self.payload, digest_size=16).hexdigest()


@dataclass(frozen=True)
class Relay:
    next: int
    inner: Onion
    nonce: Nonce | None


@dataclass(frozen=True)
class Deliver:
    message: bytes | None


@dataclass(frozen=True)
class Fail:
    reason: str = ""


PeelResult = Relay | Deliver | Fail


def _check_lengths(path, public_keys, nonces):
    if len(path) < 1:
        raise ParameterError("empty routing path")
    if len(public_keys) != len(path):
        raise ParameterError(f"{len(public_keys)} public keys for a path of {len(path)} hops")
    if len(nonces) != len(path) - 1:
        raise ParameterError(f"{len(nonces)} nonces for a path of {len(path)} hops")


class IdealScheme:
    """Oracle-backed idealized onions. One instance per simulated run."""

    backend = "ideal"

    def __init__(self, max_hops: int = 64, message_size: int = 64):
        self.max_hops = max_hops
        self.message_size = message_size
        self.size_class = max_hops
        self._table: dict[int, tuple[bytes, PeelResult]] = {}
        self._secret_owner: dict[bytes, bytes] = {}
        self._lock = threading.Lock()

    def gen(self, party: int, rng: np.random.Generator, security_param: int = 128) -> KeyPair:
        if security_param < 1:
            raise ParameterError("security parameter must be positive")
        nbytes = max(16, (security_param + 7) // 8)
        kp = KeyPair(rng.bytes(nbytes), rng.bytes(nbytes), party)
        with self._lock:
            self._secret_owner[kp.secret_key] = kp.public_key
        return kp

    def form_onion(self, message, path: Sequence[int], public_keys, nonces, rng) -> list[Onion]:
        _check_lengths(path, public_keys, nonces)
        if len(path) > self.max_hops:
            raise SizeError(f"path of {len(path)} hops exceeds {self.max_hops}")
        if message is not None and len(message) > self.message_size:
            raise SizeError(f"message of {len(message)} bytes exceeds {self.message_size}")
        h = len(path)
        handles = [int.from_bytes(rng.bytes(16), "big") for _ in range(h)]
        onions = [Onion("ideal", x, self.size_class) for x in handles]
        entries = {}
        for r in range(h - 1):
            entries[handles[r]] = (public_keys[r], Relay(int(path[r + 1]), onions[r + 1], nonces[r]))
        entries[handles[-1]] = (public_keys[-1], Deliver(message))
        with self._lock:
            self._table.update(entries)
        return onions

    def proc_onion(self, secret_key: bytes, onion: Onion) -> PeelResult:
        if onion.backend != "ideal" or not isinstance(onion.payload, int):
            return Fail("malformed")
        entry = self._table.get(onion.payload)
        if entry is None:
            return Fail("unknown handle")
        if self._secret_owner.get(secret_key) != entry[0]:
            return Fail("wrong key")
        return entry[1]


# -- real backend -------------------------------------------------------------

_INFO = struct.Struct(">BIBB32s")  # role, next hop, nonce tag, nonce length, nonce value
_TAG = 16
_SLOT = 32 + _INFO.size + _TAG
_ROLE_RELAY, _ROLE_DELIVER = 1, 2
_ZERO_NONCE = b"\x00" * 12


def _kdf(shared: bytes, label: bytes) -> bytes:
    return hashlib.blake2b(shared, digest_size=32, person=label).digest()


def _keystream(key: bytes, n: int) -> bytes:
    enc = Cipher(algorithms.ChaCha20(key, b"\x00" * 16), mode=None).encryptor()
    return enc.update(b"\x00" * n)


def _xor(a: bytes, b: bytes) -> bytes:
    return (np.frombuffer(a, np.uint8) ^ np.frombuffer(b, np.uint8)).tobytes()


class RealScheme:
    """Layered X25519 / ChaCha20-Poly1305 onions of one fixed byte length."""

    backend = "real"

    def __init__(self, max_hops: int = 12, message_size: int = 64):
        self.max_hops = max_hops
        self.message_size = message_size
        self.size_class = max_hops
        self.header_len = max_hops * _SLOT
        self.payload_len = 1 + 2 + message_size + _TAG
        self.onion_len = self.header_len + self.payload_len

    def gen(self, party: int, rng: np.random.Generator, security_param: int = 128) -> KeyPair:
        if security_param < 1:
            raise ParameterError("security parameter must be positive")
        sk = X25519PrivateKey.from_private_bytes(rng.bytes(32))
        pk = sk.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
        raw = sk.private_bytes(serialization.Encoding.Raw, serialization.PrivateFormat.Raw,
                               serialization.NoEncryption())
        return KeyPair(pk, raw, party)

    def _encode_info(self, role, nxt, nonce):
        if nonce is None:
            tag, value = 0, b""
        else:
            tag, value = NONCE_TAGS[nonce.tag], nonce.value
            if len(value) > 32:
                raise SizeError("nonce value longer than 32 bytes")
        return _INFO.pack(role, nxt, tag, len(value), value.ljust(32, b"\x00"))

    def _encode_message(self, message):
        if message is None:
            body = b"\x00\x00\x00"
        else:
            body = b"\x01" + struct.pack(">H", len(message)) + message
        return body.ljust(self.payload_len - _TAG, b"\x00")

    def form_onion(self, message, path: Sequence[int], public_keys, nonces, rng) -> list[Onion]:
        _check_lengths(path, public_keys, nonces)
        h = len(path)
        if h > self.max_hops:
            raise SizeError(f"path of {h} hops exceeds {self.max_hops}")
        if message is not None and len(message) > self.message_size:
            raise SizeError(f"message of {len(message)} bytes exceeds {self.message_size}")
        total = self.header_len + self.payload_len
        epks, secrets = [], []
        for pk in public_keys:
            esk = X25519PrivateKey.from_private_bytes(rng.bytes(32))
            epks.append(esk.public_key().public_bytes(serialization.Encoding.Raw,
                                                      serialization.PublicFormat.Raw))
            secrets.append(esk.exchange(X25519PublicKey.from_public_bytes(pk)))
        streams = [_keystream(_kdf(s, b"onion-stream"), total) for s in secrets[:-1]]

        filler = b""
        for r, ks in enumerate(streams, start=1):
            lo = (self.max_hops - r) * _SLOT
            filler = _xor(filler + b"\x00" * _SLOT, ks[lo:self.header_len])

        def slot(r, role, nxt, nonce):
            info = self._encode_info(role, nxt, nonce)
            ct = ChaCha20Poly1305(_kdf(secrets[r], b"onion-aead")).encrypt(_ZERO_NONCE, info, None)
            return epks[r] + ct

        pad = rng.bytes((self.max_hops - h) * _SLOT)
        header = slot(h - 1, _ROLE_DELIVER, int(path[-1]), None) + pad + filler
        payload = ChaCha20Poly1305(_kdf(secrets[-1], b"onion-body")).encrypt(
            _ZERO_NONCE, self._encode_message(message), None)
        layers = [header + payload]
        for r in range(h - 2, -1, -1):
            ks = streams[r]
            tail = _xor(header, ks[:self.header_len])[: self.header_len - _SLOT]
            header = slot(r, _ROLE_RELAY, int(path[r + 1]), nonces[r]) + tail
            payload = _xor(payload, ks[self.header_len:])
            layers.append(header + payload)
        layers.reverse()
        return [Onion("real", x, self.size_class) for x in layers]

    def proc_onion(self, secret_key: bytes, onion: Onion) -> PeelResult:
        data = onion.payload
        if onion.backend != "real" or not isinstance(data, bytes) or len(data) != self.onion_len:
            return Fail("malformed")
        try:
            sk = X25519PrivateKey.from_private_bytes(secret_key)
            shared = sk.exchange(X25519PublicKey.from_public_bytes(data[:32]))
            info = ChaCha20Poly1305(_kdf(shared, b"onion-aead")).decrypt(
                _ZERO_NONCE, data[32:_SLOT], None)
        except (InvalidTag, ValueError):
            return Fail("authentication failed")
        role, nxt, tag, vlen, value = _INFO.unpack(info)
        header, payload = data[: self.header_len], data[self.header_len:]
        if role == _ROLE_DELIVER:
            try:
                body = ChaCha20Poly1305(_kdf(shared, b"onion-body")).decrypt(_ZERO_NONCE, payload, None)
            except InvalidTag:
                return Fail("payload authentication failed")
            if body[0] == 0:
                return Deliver(None)
            (n,) = struct.unpack(">H", body[1:3])
            return Deliver(body[3:3 + n])
        if role != _ROLE_RELAY:
            return Fail("malformed")
        ks = _keystream(_kdf(shared, b"onion-stream"), self.onion_len)
        new_header = _xor(header[_SLOT:] + b"\x00" * _SLOT, ks[: self.header_len])
        new_payload = _xor(payload, ks[self.header_len:])
        nonce = None if tag == 0 else Nonce(_TAG_NAMES.get(tag, str(tag)), value[:vlen])
        return Relay(nxt, Onion("real", new_header + new_payload, onion.size_class), nonce)


def make_scheme(backend: str, max_hops: int = 64, message_size: int = 64):
    if backend == "ideal":
        return IdealScheme(max_hops=max_hops, message_size=message_size)
    if backend == "real":
        return RealScheme(max_hops=max_hops, message_size=message_size)
    raise ParameterError(f"unknown backend {backend!r}")


def peel_chain(scheme, onion: Onion, path, secret_keys) -> list[PeelResult]:
    """Peel ``onion`` along ``path`` with the given keys (for round-trip checks)."""
    results = []
    cur = onion
    for hop in path:
        res = scheme.proc_onion(secret_keys[hop], cur)
        results.append(res)
        if not isinstance(res, Relay):
            break
        cur = res.inner
    return results


def unlinkability_probe(scheme, input_a: dict, input_b: dict, trials: int, rng) -> dict:
    """Compare handle byte distributions of onions formed from two inputs.

    ``input_a``/``input_b`` are keyword sets for ``form_onion`` (message, path,
    public_keys, nonces). Returns the chi-square statistic and p-value of the
    byte-value histograms of the transmissible onions, and the same for every
    layer pooled.
    """
    from scipy.stats import chi2_contingency

    if scheme.backend != "ideal":
        raise UnsupportedError("unlinkability is computational for the real backend")
    hist = np.zeros((2, 256), dtype=np.int64)
    first_byte = np.zeros((2, 256), dtype=np.int64)
    for b, spec in enumerate((input_a, input_b)):
        for _ in range(trials):
            onions = scheme.form_onion(rng=rng, **spec)
            raw = onions[0].payload.to_bytes(16, "big")
            arr = np.frombuffer(raw, np.uint8)
            hist[b] += np.bincount(arr, minlength=256)
            first_byte[b, arr[0]] += 1
    chi2, pval, _, _ = chi2_contingency(hist)
    chi2_first, pval_first, _, _ = chi2_contingency(first_byte + 0)
    return {
        "trials": trials,
        "chi2": float(chi2),
        "p_value": float(pval),
        "chi2_first_byte": float(chi2_first),
        "p_value_first_byte": float(pval_first),
    }
