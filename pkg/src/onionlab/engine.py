"""Round-synchronous onion-level simulator.

Every party holds real key material for the chosen backend; onions are formed
and peeled through the scheme, so the engine exercises the same code paths a
deployment would. Ground-truth lineage (which planned onion a handle belongs
to) is kept on the side for analysis and never enters a view.
"""

from __future__ import annotations

import hashlib
import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .adversary import Adversary, AdversaryConfig
from .inputs import InputVector
from .onion import Deliver, Fail, Relay, make_scheme
from .protocols.base import Arrival, Plan, Protocol

EVENT_FIELDS = ("round", "from", "to", "size_class", "kind")
DEFAULT_NODE_CAP = 1 << 20


class TruncationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    N: int
    servers: tuple = ()
    rounds: int | None = None
    seed: int = 0
    backend: str = "ideal"
    node_cap: int = DEFAULT_NODE_CAP

    def __post_init__(self):
        if not 1 <= self.N <= self.node_cap:
            raise ValueError(f"N={self.N} outside [1, {self.node_cap}]")
        if any(not 0 <= s < self.N for s in self.servers):
            raise ValueError("servers must be a subset of the parties")


def sparse_volumes(frm: np.ndarray, to: np.ndarray, n_nodes: int | None = None) -> np.ndarray:
    """Rows (from, to, count) sorted by (from, to) for one round of sends."""
    frm = np.asarray(frm, np.int64)
    to = np.asarray(to, np.int64)
    if len(frm) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    n = int(max(frm.max(), to.max())) + 1 if n_nodes is None else n_nodes
    keys = frm * n + to
    if n * n <= 1 << 22:
        counts = np.bincount(keys, minlength=n * n)
        uniq = np.nonzero(counts)[0]
        counts = counts[uniq]
    else:
        uniq, counts = np.unique(keys, return_counts=True)
    return np.stack([uniq // n, uniq % n, counts], axis=1)


@dataclass
class ViewRecord:
    """What an adversary observes. ``link_volumes[r-1]`` holds round r as (from, to, count) rows."""

    link_volumes: list
    monitored_internals: dict = field(default_factory=dict)
    adversary_randomness: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "link_volumes": [v.tolist() for v in self.link_volumes],
            "monitored_internals": {str(k): v for k, v in sorted(self.monitored_internals.items())},
            "adversary_randomness": self.adversary_randomness,
        }

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    def volume_matrix(self, rnd: int, n_nodes: int) -> np.ndarray:
        m = np.zeros((n_nodes, n_nodes), dtype=np.int64)
        v = self.link_volumes[rnd - 1]
        if len(v):
            m[v[:, 0], v[:, 1]] = v[:, 2]
        return m


@dataclass
class RunReport:
    outputs: list
    aborted: list
    metrics: object
    view: ViewRecord
    plan: Plan
    adversary: Adversary
    events: list
    delivered_round: np.ndarray
    dropped: list
    truncated: bool = False
    error: str | None = None
    missing: dict = field(default_factory=dict)


class Context:
    """The engine services a party may call while forming, peeling and dropping onions."""

    def __init__(self, scheme, adversary: Adversary, seed: int, n_nodes: int, record_events=True):
        self.scheme = scheme
        self.adversary = adversary
        self.seed = seed
        self.record_events = record_events
        self.keys = [scheme.gen(v, rngmod.substream(seed, "keys", v)) for v in range(n_nodes)]
        self.lineage: dict = {}
        self.events: list = []
        self.dropped: list = []
        self.internals: dict = defaultdict(list)
        self.deliveries: list = []
        self._watch = {v for v in range(n_nodes) if adversary.monitors(v)}

    def form(self, creator, uid, message, path, nonces):
        onions = self.scheme.form_onion(message, path, [self.keys[v].public_key for v in path],
                                        nonces, rngmod.substream(self.seed, "form", uid))
        for hop, o in enumerate(onions):
            self.lineage[o.key()] = (uid, hop)
        return onions[0]

    def uid(self, onion) -> int:
        return self.lineage.get(onion.key(), (-1, -1))[0]

    def peel(self, node, arrival: Arrival, rnd):
        res = self.scheme.proc_onion(self.keys[node].secret_key, arrival.onion)
        if node in self._watch:
            self.internals[node].append(self._summary(rnd, arrival, res))
        return res

    def delivered(self, rnd, node, arrival: Arrival) -> None:
        self.deliveries.append((rnd, node, self.uid(arrival.onion)))

    @staticmethod
    def _summary(rnd, arrival, res):
        entry = {"round": rnd, "in": arrival.onion.digest(), "from": arrival.sender}
        if isinstance(res, Relay):
            entry.update(result="relay", next=res.next, out=res.inner.digest(),
                         nonce=None if res.nonce is None else [res.nonce.tag, res.nonce.value.hex()])
        elif isinstance(res, Deliver):
            entry.update(result="deliver", message=None if res.message is None else res.message.hex())
        else:
            entry.update(result="fail", reason=res.reason)
        return entry

    def is_corrupted(self, node) -> bool:
        return self.adversary.corrupts(node)

    def drop(self, node, arrival: Arrival, res, rnd) -> bool:
        if not self.adversary.corrupts(node) or isinstance(res, Fail):
            return False
        relay = isinstance(res, Relay)
        ckpt = relay and res.nonce is not None and res.nonce.tag == "checkpt"
        uid = self.uid(arrival.onion)
        nxt = res.next if relay else None
        if self.adversary.on_relay(node, uid, rnd, arrival.sender, nxt, ckpt, arrival.onion.digest()):
            self.dropped.append((rnd, node, uid))
            self.log(rnd, arrival.sender, node, "drop", arrival.onion)
            return True
        return False

    def log(self, rnd, frm, to, kind, onion):
        if self.record_events:
            self.events.append({"round": rnd, "from": int(frm), "to": int(to),
                                "size_class": None if onion is None else onion.size_class,
                                "kind": kind})


def _shuffle(items: list, seed: int, node: int, rnd: int) -> None:
    # Fisher-Yates with a per-(party, round) seed
    random.Random(f"{seed}:{node}:{rnd}").shuffle(items)


def run(protocol: Protocol, sigma: InputVector, adversary: AdversaryConfig | None = None,
        seed: int = 0, backend: str = "ideal", rounds: int | None = None,
        record_events: bool = True) -> RunReport:
    """Execute one seeded run and return its report.

    ``rounds`` caps the round budget; a run that still has onions in flight
    when the budget runs out is reported as truncated.
    """
    from .analysis.metrics import compute_metrics

    protocol.validate_input(sigma)
    plan = protocol.plan(sigma, seed)
    adv = Adversary(adversary or AdversaryConfig(), plan.n_nodes, seed, servers=plan.servers)
    scheme = make_scheme(backend, max_hops=max(plan.hops, 1),
                         message_size=protocol.params.message_size)
    ctx = Context(scheme, adv, seed, plan.n_nodes, record_events)
    parties = protocol.make_parties(plan, ctx)

    budget = plan.rounds if rounds is None else min(rounds, plan.rounds)
    pending = {v: [] for v in parties}
    volumes = []
    for rnd in range(1, budget + 1):
        arrivals = defaultdict(list)
        frm, to = [], []
        for v in sorted(parties):
            p = parties[v]
            if p.aborted is not None and p.aborted < rnd:
                continue
            items = pending[v] + list(p.injections(rnd))
            _shuffle(items, seed, v, rnd)
            for dest, onion in items:
                arrivals[dest].append(Arrival(onion, v))
                frm.append(v)
                to.append(dest)
                ctx.log(rnd, v, dest, "send", onion)
        volumes.append(sparse_volumes(np.array(frm, np.int64), np.array(to, np.int64), plan.n_nodes))
        for v in sorted(parties):
            pending[v] = parties[v].process(rnd, arrivals.get(v, []))

    truncated = budget < plan.rounds or any(pending[v] for v in parties)
    delivered = np.zeros(plan.size, dtype=np.int64)
    for rnd, node, uid in ctx.deliveries:
        if uid >= 0:
            delivered[uid] = rnd
    internals = {v: ctx.internals.get(v, []) for v in sorted(ctx._watch)}
    view = ViewRecord(volumes, internals, list(adv.log))
    report = RunReport(
        outputs=[Counter(parties[v].outputs) for v in range(plan.n_users)],
        aborted=[parties[v].aborted for v in range(plan.n_nodes)],
        metrics=None, view=view, plan=plan, adversary=adv, events=ctx.events,
        delivered_round=delivered, dropped=ctx.dropped, truncated=truncated,
        error="round budget exhausted" if truncated else None,
        missing={v: dict(getattr(parties[v], "missing_log", {})) for v in parties
                 if hasattr(parties[v], "missing_log")},
    )
    report.metrics = compute_metrics(report, n_messages=sigma.total())
    return report


def extract_view(report: RunReport, adversary_class: str) -> ViewRecord:
    """Project a full view onto what the given adversary class observes."""
    view = report.view
    if adversary_class == "network":
        return ViewRecord(view.link_volumes)
    if adversary_class == "passive":
        return ViewRecord(view.link_volumes, dict(view.monitored_internals))
    if adversary_class == "active":
        return ViewRecord(view.link_volumes, dict(view.monitored_internals),
                          list(view.adversary_randomness))
    raise ValueError(f"unknown adversary class {adversary_class!r}")


def missing_pairs(report: RunReport, sigma: InputVector) -> dict:
    """Per recipient: (expected but not delivered, delivered but not expected)."""
    expected = sigma.expected_outputs()
    diff = {}
    for j, want in expected.items():
        got = report.outputs[j] if j < len(report.outputs) else Counter()
        lost, extra = want - got, got - want
        if lost or extra:
            diff[j] = (lost, extra)
    return diff


def correctness_check(report: RunReport, sigma: InputVector) -> bool:
    return not missing_pairs(report, sigma)


def export_events(report: RunReport, path) -> int:
    """Write the event log as JSON lines with fields round, from, to, size_class, kind."""
    with open(path, "w") as fh:
        for ev in report.events:
            fh.write(json.dumps({k: ev[k] for k in EVENT_FIELDS}) + "\n")
    return len(report.events)
