"""Mixing through uniformly random servers, secure against a passive adversary.

Each user wraps its single message in an onion routed through L servers chosen
independently and uniformly, then to the recipient. Servers peel what they
receive each round and send the results on in random order.
"""

from __future__ import annotations

import numpy as np

from .. import rng as rngmod
from .base import MESSAGE, Plan, Protocol, check_positive_int, form_planned, uniform_hops
from .params import ConfigError


class PassiveMix(Protocol):
    name = "pi_p"

    def check_params(self):
        p = self.params
        check_positive_int("L", p.path_length)
        check_positive_int("n", p.n)
        if self.servers_tuple is not None and len(self.servers_tuple) != p.n:
            raise ConfigError("servers", "length must equal n")
        if p.n > p.N:
            raise ConfigError("n", "more servers than parties")

    @property
    def servers_tuple(self):
        return self.params.servers

    def servers(self) -> np.ndarray:
        if self.params.servers is not None:
            return np.asarray(self.params.servers, dtype=np.int64)
        return np.arange(self.params.n, dtype=np.int64)

    def validate_input(self, sigma):
        super().validate_input(sigma)
        self.require_simple(sigma)

    def plan(self, sigma, seed) -> Plan:
        p = self.params
        N, L = p.N, p.path_length
        servers = self.servers()
        hops = uniform_hops(rngmod.substream(seed, "pi_p", "paths"), servers, (N, L))
        recipients = np.array([row[0][1] for row in sigma.parties], dtype=np.int64)
        paths = np.concatenate([hops, recipients[:, None]], axis=1)
        return Plan(N, N, L + 1, np.arange(N, dtype=np.int64), paths,
                    np.full(N, MESSAGE, dtype=np.int8), [row[0][0] for row in sigma.parties],
                    servers=tuple(int(s) for s in servers), load_rounds=tuple(range(1, L + 1)))

    def make_parties(self, plan, ctx):
        parties = super().make_parties(plan, ctx)
        form_planned(plan, ctx, parties)
        return parties
