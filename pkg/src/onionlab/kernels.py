"""Array simulation of a plan.

Onions are idealized here: an onion is just its row in the plan, and peeling
is reading the next column. The round loop makes the same sender-abort,
drop and checkpoint decisions as the onion-level engine (same plan, same
adversary coins), which the test suite checks run by run. Use this for
Monte Carlo batches; use the engine when key material, views with handles or
event logs matter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adversary import Adversary, AdversaryConfig, NoDrop
from .analysis.metrics import Metrics, metrics_from_volumes
from .engine import sparse_volumes
from .protocols.base import DUMMY, MESSAGE, Plan

NEVER = np.iinfo(np.int64).max


@dataclass
class KernelResult:
    plan: Plan
    volumes: list
    aborted: np.ndarray          # round of abort per node, NEVER if none
    dropped_round: np.ndarray    # per onion, 0 if not dropped
    delivered_round: np.ndarray  # per onion, 0 if not delivered as a message
    missing: np.ndarray          # missing[r-1, v] for checkpoint protocols
    corrupted: np.ndarray
    metrics: Metrics | None = None
    extra: dict = field(default_factory=dict)

    def aborted_list(self) -> list:
        return [None if a == NEVER else int(a) for a in self.aborted]

    def outputs(self) -> list:
        """Delivered messages per user, as sorted lists."""
        out = [[] for _ in range(self.plan.n_users)]
        lens = self.plan.path_lengths()
        for u in np.nonzero(self.delivered_round)[0]:
            out[int(self.plan.paths[u, lens[u] - 1])].append(self.plan.messages[u])
        return [sorted(x) for x in out]

    def volume(self, rnd: int, frm=None, to=None) -> int:
        v = self.volumes[rnd - 1]
        mask = np.ones(len(v), dtype=bool)
        if frm is not None:
            mask &= v[:, 0] == frm
        if to is not None:
            mask &= v[:, 1] == to
        return int(v[mask, 2].sum())


def simulate(plan: Plan, adversary: Adversary | None = None, seed: int = 0,
             n_messages: int | None = None, keep_volumes: bool = True,
             watch: tuple = ()) -> KernelResult:
    """Run ``plan`` round by round.

    ``watch`` lists (round, from, to) links whose volumes are wanted even when
    ``keep_volumes`` is off; ``from`` or ``to`` may be None for "any". The
    counts land in ``result.extra["watch"]`` in the same order.
    """
    n_nodes, rounds = plan.n_nodes, plan.rounds
    if adversary is None:
        adversary = Adversary(AdversaryConfig(), n_nodes, seed, servers=plan.servers)
    U = plan.size
    paths, creator, kind = plan.paths, plan.creator, plan.kind
    lens = plan.path_lengths()
    start = plan.start
    ckpt = plan.ckpt_round if plan.ckpt_round is not None else np.zeros(U, dtype=np.int64)
    marked = (kind == DUMMY) & (ckpt == 0) & (lens > 1)
    corrupted = adversary.corrupted_mask(n_nodes)
    strategy = adversary.config.strategy
    active_drops = not isinstance(strategy, NoDrop) and bool(corrupted.any())

    bits = plan.extra.get("bits")
    expected = bits.sum(axis=2) if bits is not None else None  # (L, n_nodes)
    t = plan.extra.get("threshold", np.inf)
    cumulative = plan.extra.get("missing_mode") == "cumulative"
    missing = np.zeros((rounds, n_nodes), dtype=np.int64)
    missing_total = np.zeros(n_nodes, dtype=np.int64)

    alive = np.ones(U, dtype=bool)
    aborted = np.full(n_nodes, NEVER, dtype=np.int64)
    dropped_round = np.zeros(U, dtype=np.int64)
    delivered = np.zeros(U, dtype=np.int64)
    volumes = []
    watched = [0] * len(watch)
    by_round = {}
    for i, (wr, wf, wt) in enumerate(watch):
        by_round.setdefault(wr, []).append((i, wf, wt))

    # every onion starts in round 1 with the same length: work on whole columns
    dense = U > 0 and bool((start == 1).all()) and bool((lens == lens[0]).all())
    if dense:
        cols = np.ascontiguousarray(paths[:, :lens[0]].T)
        ck_order = np.argsort(ckpt, kind="stable")
        ck_bounds = np.searchsorted(ckpt[ck_order], np.arange(rounds + 2))

    for rnd in range(1, rounds + 1):
        if dense:
            h = rnd - 1
            if h >= lens[0]:
                break
            idx = np.nonzero(alive)[0]
            recv_all = cols[h]
            prev_all = creator if h == 0 else cols[h - 1]
            prev, recv = prev_all[idx], recv_all[idx]
            hh = np.full(len(idx), h, dtype=np.int64)
        else:
            hop = rnd - start
            idx = np.nonzero(alive & (hop >= 0) & (hop < lens))[0]
            hh = hop[idx]
            prev = np.where(hh == 0, creator[idx], paths[idx, np.maximum(hh - 1, 0)])
            recv = paths[idx, hh]
        # aborted parties stop sending
        quiet = aborted[prev] < rnd
        if quiet.any():
            alive[idx[quiet]] = False
            keep = ~quiet
            idx, hh, prev, recv = idx[keep], hh[keep], prev[keep], recv[keep]
        if keep_volumes:
            volumes.append(sparse_volumes(prev, recv, n_nodes))
        for i, wf, wt in by_round.get(rnd, ()):
            m = np.ones(len(prev), dtype=bool)
            if wf is not None:
                m &= prev == wf
            if wt is not None:
                m &= recv == wt
            watched[i] = int(m.sum())

        ok = aborted[recv] >= rnd  # arrivals at an aborted party go nowhere
        if active_drops:
            cm = np.nonzero(corrupted[recv] & ok)[0]
            if len(cm):
                sub = idx[cm]
                nh = hh[cm] + 1
                nxt = np.where(nh < lens[sub], paths[sub, np.minimum(nh, paths.shape[1] - 1)], -1)
                dm = strategy.drop_mask(rnd, prev[cm], nxt, ckpt[sub] == rnd, adversary.coins(sub, rnd))
                dropped_round[sub[dm]] = rnd
                ok[cm[dm]] = False

        if expected is not None and rnd <= rounds - 1:
            if dense:
                # checkpoint dummies of this round, still in flight and not dropped
                cand = ck_order[ck_bounds[rnd]:ck_bounds[rnd + 1]]
                okfull = np.zeros(U, dtype=bool)
                okfull[idx[ok]] = True
                hitters = recv_all[cand[okfull[cand]]]
            else:
                hitters = recv[ok & (ckpt[idx] == rnd)]
            matched = np.bincount(hitters, minlength=n_nodes)
            miss = expected[rnd - 1] - matched
            missing[rnd - 1] = miss
            missing_total += miss
            count = missing_total if cumulative else miss
            fire = (count > t) & ~corrupted & (aborted == NEVER)
            aborted[fire] = rnd

        final = ok & (hh == lens[idx] - 1)
        msg = final & (kind[idx] == MESSAGE) & (rnd == rounds)
        delivered[idx[msg]] = rnd
        gone = ~ok | final | marked[idx]
        alive[idx[gone]] = False

    if n_messages is None:
        n_messages = int((kind == MESSAGE).sum())
    latency = int(delivered.max()) if U else 0
    if latency == 0:
        latency = int(aborted[aborted != NEVER].max(initial=0))
    metrics = None
    if keep_volumes:
        while len(volumes) < rounds:
            volumes.append(np.zeros((0, 3), dtype=np.int64))
        metrics = metrics_from_volumes(volumes, n_messages, plan.servers, plan.load_rounds,
                                       n_nodes, latency)
    return KernelResult(plan, volumes, aborted, dropped_round, delivered, missing, corrupted,
                        metrics, {"watch": watched})


def run_kernel(protocol, sigma, adversary: AdversaryConfig | None = None, seed: int = 0,
               keep_volumes: bool = True, watch: tuple = ()) -> KernelResult:
    """Plan and simulate one run, with the same seed derivation as the engine."""
    protocol.validate_input(sigma)
    plan = protocol.plan(sigma, seed)
    adv = Adversary(adversary or AdversaryConfig(), plan.n_nodes, seed, servers=plan.servers)
    return simulate(plan, adv, seed, n_messages=sigma.total(), keep_volumes=keep_volumes,
                    watch=watch)
