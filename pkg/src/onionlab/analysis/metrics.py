"""Efficiency metrics: blow-up, server load and latency."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    blowup: float
    server_load: float
    latency: float
    onions_sent: int
    messages: int

    def to_dict(self) -> dict:
        return asdict(self)


def receipts_per_round(volumes: list, n_nodes: int) -> np.ndarray:
    """``out[r-1, v]`` = onions received by v in round r."""
    out = np.zeros((len(volumes), n_nodes), dtype=np.int64)
    for i, v in enumerate(volumes):
        if len(v):
            np.add.at(out[i], v[:, 1], v[:, 2])
    return out


def server_load(volumes: list, servers, load_rounds, n_nodes: int) -> float:
    """Mean over load rounds of the mean number of onions a server receives."""
    rows = [r for r in load_rounds if r <= len(volumes)]
    if not rows or not len(servers):
        return 0.0
    rec = receipts_per_round(volumes, n_nodes)
    idx = np.asarray(servers, dtype=np.int64)
    return float(np.mean([rec[r - 1, idx].mean() for r in rows]))


def metrics_from_volumes(volumes, n_messages, servers, load_rounds, n_nodes, latency) -> Metrics:
    sent = int(sum(int(v[:, 2].sum()) for v in volumes if len(v)))
    blowup = sent / n_messages if n_messages else math.nan
    return Metrics(blowup, server_load(volumes, servers, load_rounds, n_nodes),
                   float(latency), sent, int(n_messages))


def compute_metrics(report, n_messages: int | None = None) -> Metrics:
    """Metrics of one run; latency is the last delivery round, else the last abort round."""
    plan = report.plan
    if n_messages is None:
        n_messages = int((plan.kind == 0).sum())
    latency = int(report.delivered_round.max()) if len(report.delivered_round) else 0
    if latency == 0:
        aborts = [a for a in report.aborted if a is not None]
        latency = max(aborts, default=0)
    return metrics_from_volumes(report.view.link_volumes, n_messages, plan.servers,
                                plan.load_rounds, plan.n_nodes, latency)


def aggregate(metrics: list) -> Metrics:
    """Average per-run metrics over trials (blow-up is the mean of per-run ratios)."""
    if not metrics:
        raise ValueError("no runs to aggregate")
    mean = lambda f: float(np.mean([getattr(m, f) for m in metrics]))
    return Metrics(mean("blowup"), mean("server_load"), mean("latency"),
                   int(round(mean("onions_sent"))), int(round(mean("messages"))))
