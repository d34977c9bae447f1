"""Mixing with checkpoint dummies, secure against an active adversary.

Every pair of parties decides, round by round, through a shared pseudorandom
function whether to exchange a pair of checkpoint dummies. The dummy formed by
``i`` for ``(r, k)`` passes through ``k`` in round ``r`` and reveals a nonce
there; ``k`` formed the mirror image. A party that finds more than ``t`` of
its expected nonces missing in a round stops sending for the rest of the run.
"""

from __future__ import annotations

from collections import Counter

import numpy as np

from .. import rng as rngmod
from ..checkpoint import (GROUPS, RandomFunctionKey, SharedKey, checkpoint_decision,
                          checkpoint_frequency, checkpoint_nonce, derive_shared_key,
                          generate_dh_keypair)
from ..inputs import InputError
from ..onion import Relay
from .base import DUMMY, MESSAGE, ForwardingParty, Plan, Protocol, check_positive_int, form_planned
from .params import ConfigError


def _pair_key_table(params, seed):
    """Per-ordered-pair key objects for the hash and dh PRF modes."""
    N = params.N
    keys = {}
    if params.prf == "hash":
        for i in range(N):
            for k in range(i, N):
                key = SharedKey(rngmod.substream(seed, "pi_a", "pairkey", i, k).bytes(32))
                keys[i, k] = keys[k, i] = key
    elif params.prf == "dh":
        group = GROUPS[params.group]
        dh = [generate_dh_keypair(group, rngmod.substream(seed, "pi_a", "dh", i)) for i in range(N)]
        for i in range(N):
            for k in range(N):
                keys[i, k] = derive_shared_key(dh[i].x, dh[k].Y, group)
    return keys


def checkpoint_tables(params, seed):
    """Return ``bits[r-1, i, k]`` (party i's decision for partner k in round r) and a nonce function."""
    N, L, session = params.N, params.path_length, params.session
    freq = checkpoint_frequency(params.alpha, params.log2_lambda, N)
    if params.prf == "random":
        # truly random function: one fair draw per unordered pair and round
        iu, ku = np.triu_indices(N)
        draws = rngmod.substream(seed, "pi_a", "bits").random((L, len(iu))) < freq
        bits = np.zeros((L, N, N), dtype=bool)
        bits[:, iu, ku] = draws
        bits[:, ku, iu] = draws
        funcs: dict = {}

        def nonce_fn(i, k, r):
            lo, hi = min(i, k), max(i, k)
            if (lo, hi) not in funcs:
                funcs[lo, hi] = RandomFunctionKey(rngmod.substream(seed, "pi_a", "nonce", lo, hi))
            return checkpoint_nonce(funcs[lo, hi], session, r)

        return bits, nonce_fn
    keys = _pair_key_table(params, seed)
    bits = np.zeros((L, N, N), dtype=bool)
    for (i, k), key in keys.items():
        for r in range(1, L + 1):
            bits[r - 1, i, k] = checkpoint_decision(key, session, r, freq)

    def nonce_fn(i, k, r):
        return checkpoint_nonce(keys[i, k], session, r)

    return bits, nonce_fn


class ActiveMix(Protocol):
    name = "pi_a"

    def check_params(self):
        p = self.params
        check_positive_int("L", p.path_length)
        try:
            checkpoint_frequency(p.alpha, p.log2_lambda, p.N)
        except ValueError as exc:
            raise ConfigError("alpha", str(exc)) from None
        if p.prf == "dh" and p.group not in GROUPS:
            raise ConfigError("group", f"unknown group {p.group!r}")

    def validate_input(self, sigma):
        super().validate_input(sigma)
        for i, row in enumerate(sigma.parties):
            if any(m is None for m, _ in row):
                raise InputError(f"party {i}: the empty message is reserved for dummies")

    def plan(self, sigma, seed) -> Plan:
        p = self.params
        N, L = p.N, p.path_length
        bits, nonce_fn = checkpoint_tables(p, seed)
        rng = rngmod.substream(seed, "pi_a", "paths")

        senders = [i for i, row in enumerate(sigma.parties) for _ in row]
        msgs = [m for row in sigma.parties for m, _ in row]
        recips = np.array([j for row in sigma.parties for _, j in row], dtype=np.int64)
        mpaths = np.concatenate([rng.integers(0, N, size=(len(msgs), L), dtype=np.int64),
                                 recips.reshape(-1, 1)], axis=1)

        # dummies ordered by (creator, round, partner)
        i_idx, r_idx, k_idx = np.nonzero(bits.transpose(1, 0, 2))
        D = len(i_idx)
        dpaths = rng.integers(0, N, size=(D, L + 1), dtype=np.int64)
        dpaths[np.arange(D), r_idx] = k_idx

        M = len(msgs)
        creator = np.concatenate([np.array(senders, dtype=np.int64), i_idx.astype(np.int64)])
        ckpt = np.concatenate([np.zeros(M, dtype=np.int64), r_idx.astype(np.int64) + 1])
        partner = np.concatenate([np.full(M, -1, dtype=np.int64), k_idx.astype(np.int64)])
        kind = np.concatenate([np.full(M, MESSAGE, np.int8), np.full(D, DUMMY, np.int8)])
        return Plan(N, N, L + 1, creator, np.concatenate([mpaths, dpaths]), kind,
                    msgs + [None] * D, servers=tuple(range(N)), load_rounds=tuple(range(1, L + 1)),
                    ckpt_round=ckpt, partner=partner, nonce_fn=nonce_fn,
                    extra={"bits": bits, "threshold": p.threshold, "missing_mode": p.missing_mode})

    def make_parties(self, plan, ctx):
        bits = plan.extra["bits"]
        parties = {v: CheckpointParty(v, ctx, plan, bits[:, v, :]) for v in range(plan.n_nodes)}
        form_planned(plan, ctx, parties)
        return parties


class CheckpointParty(ForwardingParty):
    def __init__(self, node, ctx, plan, my_bits):
        super().__init__(node, ctx, plan)
        self.t = plan.extra["threshold"]
        self.cumulative = plan.extra["missing_mode"] == "cumulative"
        self.expected = {}
        for r0, k in zip(*np.nonzero(my_bits)):
            nonce = plan.nonce_fn(node, int(k), int(r0) + 1)
            self.expected.setdefault(int(r0) + 1, Counter())[nonce.value] += 1
        self.missing_total = 0
        self.missing_log: dict[int, int] = {}

    def deliver(self, rnd, arrival, res):
        if res.message is None:
            self.ctx.log(rnd, arrival.sender, self.node, "discard", arrival.onion)
        elif self.aborted is None:
            super().deliver(rnd, arrival, res)

    def process(self, rnd, arrivals):
        if self.aborted is not None:
            for a in arrivals:
                self.ctx.peel(self.node, a, rnd)
                self.ctx.log(rnd, a.sender, self.node, "stuck", a.onion)
            return []
        pending = Counter(self.expected.get(rnd, {}))
        need = sum(pending.values())
        matched = 0
        out = []
        for a in arrivals:
            res = self.ctx.peel(self.node, a, rnd)
            nonce = res.nonce if isinstance(res, Relay) else None
            is_ckpt = nonce is not None and nonce.tag == "checkpt"
            if self.ctx.drop(self.node, a, res, rnd):
                continue
            if is_ckpt:
                if pending[nonce.value] > 0:
                    pending[nonce.value] -= 1
                    matched += 1
                else:
                    self.ctx.log(rnd, a.sender, self.node, "anomaly", a.onion)
            self.handle(rnd, a, res, out)
        if rnd <= self.plan.rounds - 1:
            missing = need - matched
            self.missing_total += missing
            self.missing_log[rnd] = missing
            count = self.missing_total if self.cumulative else missing
            if count > self.t and not self.ctx.is_corrupted(self.node):
                self.aborted = rnd
                self.ctx.log(rnd, self.node, self.node, "abort", None)
                return []
        return out
