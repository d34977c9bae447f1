"""View features for privacy estimates.

Each extractor reduces one run to a short tuple of numbers an adversary of
the stated class can compute from its view (plus the seeded corruption
set, which it chose).
"""

from __future__ import annotations

import numpy as np

from .belief import posterior_share


def final_delivery_pattern(result, recipients) -> tuple:
    """For each recipient: the server that handed it a message in the last round (-1 if none)."""
    last = result.volumes[-1]
    out = []
    for j in recipients:
        rows = last[last[:, 1] == j]
        out.append(int(rows[0, 0]) if len(rows) else -1)
    return tuple(out)


def receipt_indicators(result, recipients) -> tuple:
    """1 if the recipient got a message in the final round, else 0."""
    last = result.volumes[-1]
    return tuple(int(last[last[:, 1] == j, 2].sum() > 0) for j in recipients)


def sender_recipient_volume(result, sender: int, recipient: int) -> tuple:
    """(onions the sender emits in round 1, onions the recipient receives in the last round).

    Reads the kernel's watch counters when present, so volumes need not be kept.
    """
    watched = result.extra.get("watch")
    if watched and len(watched) == 2:
        return tuple(watched)
    return (result.volume(1, frm=sender), result.volume(len(result.volumes), to=recipient))


def sender_recipient_watch(plan_rounds: int, sender: int, recipient: int) -> tuple:
    return ((1, sender, None), (plan_rounds, None, recipient))


def posterior_feature(result, a: int, b: int, recipient: int, monitored) -> tuple:
    """The passive adversary's odds share w(a) / (w(a) + w(b)) that ``recipient`` got a's message."""
    mask = np.zeros(result.plan.n_nodes, dtype=bool)
    mask[list(monitored)] = True
    return (posterior_share(result.plan, mask, a, b, recipient),)


FEATURES = ("delivery_pattern", "receipts", "sender_recipient", "posterior")
