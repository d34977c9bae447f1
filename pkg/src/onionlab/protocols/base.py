"""Shared protocol machinery: routing plans and the forwarding party."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from ..inputs import InputError, InputVector
from ..onion import Deliver, Fail, Nonce, Relay
from .params import ConfigError, ProtocolParams, validate

MESSAGE, DUMMY = 0, 1
DUMMY_MARK = Nonce("dummy", b"")


class Arrival(NamedTuple):
    onion: object
    sender: int


@dataclass
class Plan:
    """Everything a protocol decides during setup, as arrays.

    Row ``u`` describes onion ``u``: who forms it, its full routing path
    (recipient last, right-padded with -1 when onions differ in length),
    whether it is a message or a dummy, the round it is first sent in, and for
    checkpoint dummies the round and partner of the checkpoint. The onion-level
    engine and the array kernels both consume the same plan.
    """

    n_nodes: int
    n_users: int
    rounds: int
    creator: np.ndarray
    paths: np.ndarray
    kind: np.ndarray
    messages: list
    servers: tuple
    load_rounds: tuple
    ckpt_round: np.ndarray | None = None
    partner: np.ndarray | None = None
    nonce_fn: Callable | None = None
    start: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.start is None:
            self.start = np.ones(len(self.creator), dtype=np.int64)

    @property
    def size(self) -> int:
        return len(self.creator)

    @property
    def hops(self) -> int:
        return self.paths.shape[1]

    def path(self, uid: int) -> list:
        return [int(x) for x in self.paths[uid] if x >= 0]

    def path_lengths(self) -> np.ndarray:
        return (self.paths >= 0).sum(axis=1)

    def nonces(self, uid: int) -> list:
        nonces = [None] * (len(self.path(uid)) - 1)
        if self.ckpt_round is not None and self.ckpt_round[uid] > 0:
            r = int(self.ckpt_round[uid])
            nonces[r - 1] = self.nonce_fn(int(self.creator[uid]), int(self.partner[uid]), r)
        elif self.kind[uid] == DUMMY and nonces:
            # padding dummy: the first hop sees the mark and discards it
            nonces[0] = DUMMY_MARK
        return nonces


class Protocol:
    name = "base"

    def __init__(self, params: ProtocolParams):
        validate(params)
        self.params = params
        self.check_params()

    def check_params(self) -> None:
        pass

    def validate_input(self, sigma: InputVector) -> None:
        sigma.validate(self.params.N, self.params.message_size)

    def plan(self, sigma: InputVector, seed: int) -> Plan:
        raise NotImplementedError

    def make_parties(self, plan: Plan, ctx) -> dict:
        return {v: ForwardingParty(v, ctx, plan) for v in range(plan.n_nodes)}

    def require_simple(self, sigma: InputVector) -> None:
        if not sigma.is_simple():
            raise InputError(f"{self.name} needs a permutation input (one message per party)")


class ForwardingParty:
    """Peel everything received, forward relays, record deliveries in the final round."""

    def __init__(self, node: int, ctx, plan: Plan):
        self.node = node
        self.ctx = ctx
        self.plan = plan
        self.outputs: list = []
        self.aborted: int | None = None
        self.scheduled: dict[int, list] = {}

    def injections(self, rnd: int) -> list:
        """Onions this party formed during setup and sends for the first time in ``rnd``."""
        return self.scheduled.get(rnd, [])

    def handle(self, rnd, arrival, res, out) -> None:
        if isinstance(res, Relay):
            if res.nonce is not None and res.nonce.tag == "dummy":
                self.ctx.log(rnd, arrival.sender, self.node, "discard", arrival.onion)
            else:
                out.append((res.next, res.inner))
        elif isinstance(res, Deliver):
            self.deliver(rnd, arrival, res)
        else:
            self.ctx.log(rnd, arrival.sender, self.node, "fail", arrival.onion)

    def deliver(self, rnd, arrival, res) -> None:
        if rnd == self.plan.rounds:
            self.outputs.append(res.message)
            self.ctx.delivered(rnd, self.node, arrival)
            self.ctx.log(rnd, arrival.sender, self.node, "deliver", arrival.onion)
        else:
            self.ctx.log(rnd, arrival.sender, self.node, "anomaly", arrival.onion)

    def process(self, rnd: int, arrivals: list) -> list:
        out = []
        for a in arrivals:
            res = self.ctx.peel(self.node, a, rnd)
            if self.ctx.drop(self.node, a, res, rnd):
                continue
            self.handle(rnd, a, res, out)
        return out


def form_planned(plan: Plan, ctx, parties: dict) -> None:
    """Form every planned onion and queue it in its creator's outbox for its start round."""
    for u in range(plan.size):
        path = plan.path(u)
        onion = ctx.form(int(plan.creator[u]), u, plan.messages[u], path, plan.nonces(u))
        party = parties[int(plan.creator[u])]
        party.scheduled.setdefault(int(plan.start[u]), []).append((path[0], onion))


class Direct(Protocol):
    """Baseline: every message goes straight to its recipient in one round."""

    name = "direct"

    def plan(self, sigma, seed):
        creator, paths, msgs = [], [], []
        for i, row in enumerate(sigma.parties):
            for m, j in row:
                creator.append(i)
                paths.append([j])
                msgs.append(m)
        N = self.params.N
        return Plan(N, N, 1, np.array(creator, dtype=np.int64),
                    np.array(paths, dtype=np.int64).reshape(-1, 1),
                    np.zeros(len(creator), dtype=np.int8), msgs,
                    servers=tuple(range(N)), load_rounds=(1,))

    def make_parties(self, plan, ctx):
        parties = super().make_parties(plan, ctx)
        form_planned(plan, ctx, parties)
        return parties


def uniform_hops(rng: np.random.Generator, pool: np.ndarray, shape) -> np.ndarray:
    return pool[rng.integers(0, len(pool), size=shape)]


def check_positive_int(name, value, minimum=1):
    if value is None or int(value) != value or value < minimum:
        raise ConfigError(name, f"expected an integer >= {minimum}, got {value!r}")


__all__ = ["Arrival", "Plan", "Protocol", "ForwardingParty", "Direct", "MESSAGE", "DUMMY", "DUMMY_MARK",
           "form_planned", "uniform_hops", "Nonce", "Fail", "check_positive_int"]
