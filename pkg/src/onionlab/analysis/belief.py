"""Adversary belief about where a target onion is.

``belief_update`` is the network adversary's exact posterior over servers
given one round of link volumes: mass at a server spreads over its outgoing
onions in proportion to the link counts. ``onion_posterior`` tracks the same
belief per onion when some servers are monitored, where the adversary sees
which outgoing onion each incoming one became.
"""

from __future__ import annotations

import numpy as np

from ..engine import ViewRecord
from ..protocols.base import Plan

GAP_FLOOR = 1e-12


def belief_update(X: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """X'_j = sum_i X_i * counts[i, j] / outflow_i; mass at a bin with no outflow stays put."""
    X = np.asarray(X, dtype=float)
    counts = np.asarray(counts, dtype=float)
    out = counts.sum(axis=1)
    moving = out > 0
    share = np.zeros_like(X)
    share[moving] = X[moving] / out[moving]
    new = share @ counts
    new[~moving] += X[~moving]
    return new


def stuck_bins(X: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Bins holding belief but sending nothing (an onion cannot vanish there)."""
    return np.nonzero((np.asarray(X) > 0) & (np.asarray(counts).sum(axis=1) == 0))[0]


def gap(X: np.ndarray) -> float:
    return float(np.max(X) - np.min(X)) if len(X) else 0.0


def server_counts(volumes: np.ndarray, servers) -> np.ndarray:
    """Server-to-server count matrix of one round, indexed by position in ``servers``."""
    servers = np.asarray(servers, dtype=np.int64)
    pos = np.full(int(max(servers.max(), volumes[:, :2].max(initial=0))) + 1, -1, dtype=np.int64)
    pos[servers] = np.arange(len(servers))
    m = np.zeros((len(servers), len(servers)), dtype=np.int64)
    if len(volumes):
        a, b = pos[volumes[:, 0]], pos[volumes[:, 1]]
        keep = (a >= 0) & (b >= 0)
        np.add.at(m, (a[keep], b[keep]), volumes[keep, 2])
    return m


def mixing_gap_trace(volumes: list, servers, target: int, through_round: int,
                     normalize: str = "load") -> list[float]:
    """Gap between the most and least likely server after rounds 1..through_round.

    Round 1 reveals the target's entry server (point mass); each later round
    applies ``belief_update`` with that round's server-to-server volumes.

    ``normalize="none"`` returns max(X) - min(X). That quantity settles at the
    spread of server loads divided by N rather than at 0, because the belief
    converges to the load profile. ``normalize="load"`` (default) compares
    per-onion likelihoods X_i / load_i instead, rescaled by the mean load so
    the two agree whenever all loads are equal.
    """
    if normalize not in ("load", "none"):
        raise ValueError(f"unknown normalization {normalize!r}")
    servers = np.sort(np.asarray(servers, dtype=np.int64))
    if len(servers) <= 1:
        return [0.0] * through_round
    first = volumes[0]
    row = first[first[:, 0] == target]
    X = np.zeros(len(servers))
    X[np.searchsorted(servers, row[:, 1])] = row[:, 2] / row[:, 2].sum()
    load = _inflow(first, servers)
    trace = [_gap(X, load, normalize)]
    for rnd in range(2, through_round + 1):
        counts = server_counts(volumes[rnd - 1], servers)
        X = belief_update(X, counts)
        trace.append(_gap(X, counts.sum(axis=0), normalize))
    return trace


def _inflow(volumes: np.ndarray, servers: np.ndarray) -> np.ndarray:
    load = np.zeros(len(servers))
    hit = np.isin(volumes[:, 1], servers)
    np.add.at(load, np.searchsorted(servers, volumes[hit, 1]), volumes[hit, 2])
    return load


def _gap(X, load, normalize) -> float:
    if normalize == "none":
        return gap(X)
    busy = load > 0
    per_onion = X[busy] / load[busy]
    return float(load[busy].mean() * (per_onion.max() - per_onion.min()))


def gap_ratios(trace, floor: float = GAP_FLOOR) -> list[float]:
    """g^{r+1}/g^r for consecutive rounds while g^r is above the numerical floor."""
    return [b / a for a, b in zip(trace, trace[1:]) if a > floor]


def trace_from_view(view: ViewRecord, plan: Plan, target: int, normalize: str = "load") -> list[float]:
    return mixing_gap_trace(view.link_volumes, plan.servers, target, max(plan.load_rounds), normalize)


def onion_posterior(plan: Plan, monitored: np.ndarray, target_uid: int) -> np.ndarray:
    """Posterior over onions (by plan row) of which one carries the target's message at the end.

    Every onion starts in round 1 and keeps to its plan. At an unmonitored
    relay the mass of everything it received is pooled and split evenly over
    what it sends; at a monitored relay the mass follows its own onion.
    """
    paths = plan.paths
    U, hops = paths.shape
    mass = np.zeros(U)
    mass[target_uid] = 1.0
    monitored = np.asarray(monitored, dtype=bool)
    for h in range(1, hops):
        relay = paths[:, h - 1]
        pooled = np.bincount(relay, weights=mass, minlength=plan.n_nodes)
        count = np.bincount(relay, minlength=plan.n_nodes)
        spread = np.divide(pooled, count, out=np.zeros_like(pooled), where=count > 0)
        mixed = ~monitored[relay]
        mass = np.where(mixed, spread[relay], mass)
    return mass


def recipient_weight(plan: Plan, mass: np.ndarray, recipient: int) -> float:
    last = plan.paths[:, -1]
    return float(mass[last == recipient].sum())


def posterior_share(plan: Plan, monitored: np.ndarray, a: int, b: int, recipient: int) -> float:
    """w(a) / (w(a) + w(b)): the adversary's odds that ``recipient`` got a's message rather than b's."""
    wa = recipient_weight(plan, onion_posterior(plan, monitored, a), recipient)
    wb = recipient_weight(plan, onion_posterior(plan, monitored, b), recipient)
    total = wa + wb
    return 0.5 if total == 0 else wa / total
